#include "pdstream/policy.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

#include "json.hpp"
#include "pdstream/errors.h"

namespace pdstream {
namespace {

constexpr int kCheckpointVersion = 1;

Eigen::VectorXd LeakyRelu(const Eigen::VectorXd& z, double leak) {
  return z.unaryExpr([leak](double v) { return v > 0.0 ? v : leak * v; });
}

Eigen::VectorXd Softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

void CheckState(const Eigen::VectorXd& state) {
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    if (!std::isfinite(state[i])) {
      throw std::domain_error(fmt::format("non-finite state entry at index {}", i));
    }
  }
}

}  // namespace

Mlp::Mlp(int input, std::vector<int> hidden, int output, uint64_t seed,
         double leak)
    : input_(input), output_(output), hidden_(std::move(hidden)), leak_(leak) {
  std::mt19937_64 rng(seed);
  int fan_in = input_;
  std::vector<int> sizes = hidden_;
  sizes.push_back(output_);
  for (int fan_out : sizes) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    }
    Eigen::VectorXd b(fan_out);
    for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = u(rng);
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
    fan_in = fan_out;
  }
}

Eigen::VectorXd Mlp::Forward(const Eigen::VectorXd& x) const {
  Eigen::VectorXd a = x;
  for (size_t l = 0; l < weights_.size(); ++l) {
    Eigen::VectorXd z = weights_[l] * a + biases_[l];
    a = l + 1 < weights_.size() ? LeakyRelu(z, leak_) : z;
  }
  return a;
}

Eigen::VectorXd Mlp::Backward(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& dout) const {
  const size_t n = weights_.size();
  std::vector<Eigen::VectorXd> acts{x};
  std::vector<Eigen::VectorXd> pre;
  for (size_t l = 0; l < n; ++l) {
    Eigen::VectorXd z = weights_[l] * acts.back() + biases_[l];
    pre.push_back(z);
    acts.push_back(l + 1 < n ? LeakyRelu(z, leak_) : z);
  }

  std::vector<Eigen::MatrixXd> dw(n);
  std::vector<Eigen::VectorXd> db(n);
  Eigen::VectorXd delta = dout;
  for (size_t l = n; l-- > 0;) {
    if (l + 1 < n) {
      const double leak = leak_;
      delta = delta.cwiseProduct(
          pre[l].unaryExpr([leak](double v) { return v > 0.0 ? 1.0 : leak; }));
    }
    dw[l] = delta * acts[l].transpose();
    db[l] = delta;
    if (l > 0) delta = weights_[l].transpose() * delta;
  }

  Eigen::VectorXd flat(num_params());
  Eigen::Index k = 0;
  for (size_t l = 0; l < n; ++l) {
    flat.segment(k, dw[l].size()) = Eigen::Map<const Eigen::VectorXd>(dw[l].data(), dw[l].size());
    k += dw[l].size();
    flat.segment(k, db[l].size()) = db[l];
    k += db[l].size();
  }
  return flat;
}

Eigen::Index Mlp::num_params() const {
  Eigen::Index n = 0;
  for (size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

Eigen::VectorXd Mlp::Flatten() const {
  Eigen::VectorXd flat(num_params());
  Eigen::Index k = 0;
  for (size_t l = 0; l < weights_.size(); ++l) {
    flat.segment(k, weights_[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), weights_[l].size());
    k += weights_[l].size();
    flat.segment(k, biases_[l].size()) = biases_[l];
    k += biases_[l].size();
  }
  return flat;
}

void Mlp::Unflatten(const Eigen::VectorXd& params) {
  if (params.size() != num_params()) {
    throw std::invalid_argument("parameter vector size mismatch");
  }
  Eigen::Index k = 0;
  for (size_t l = 0; l < weights_.size(); ++l) {
    Eigen::Map<Eigen::VectorXd>(weights_[l].data(), weights_[l].size()) =
        params.segment(k, weights_[l].size());
    k += weights_[l].size();
    biases_[l] = params.segment(k, biases_[l].size());
    k += biases_[l].size();
  }
}

void Mlp::Apply(const Eigen::VectorXd& direction, double step) {
  Unflatten(Flatten() + step * direction);
}

void Mlp::ScaleLastLayer(double factor) {
  weights_.back() *= factor;
  biases_.back() *= factor;
}

PolicyNet::PolicyNet(int input_dim, std::vector<double> grid,
                     PolicyNetConfig config)
    : actor_(input_dim, config.hidden, static_cast<int>(grid.size()), config.seed, config.leak),
      critic_(input_dim, config.hidden, 1, config.seed ^ 0x9e3779b97f4a7c15ULL, config.leak),
      grid_(std::move(grid)) {
  // Start close to a uniform policy.
  actor_.ScaleLastLayer(0.01);
}

Eigen::VectorXd PolicyNet::Probabilities(const Eigen::VectorXd& state) const {
  CheckState(state);
  return Softmax(actor_.Forward(state));
}

double PolicyNet::LogProb(const Eigen::VectorXd& state, int action) const {
  CheckState(state);
  const Eigen::VectorXd logits = actor_.Forward(state);
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits[action] - lse;
}

Eigen::VectorXd PolicyNet::LogProbGradient(const Eigen::VectorXd& state,
                                           int action) const {
  Eigen::VectorXd dout = -Probabilities(state);
  dout[action] += 1.0;
  return actor_.Backward(state, dout);
}

double PolicyNet::Value(const Eigen::VectorXd& state) const {
  CheckState(state);
  return critic_.Forward(state)[0];
}

Eigen::VectorXd PolicyNet::ValueGradient(const Eigen::VectorXd& state) const {
  return critic_.Backward(state, Eigen::VectorXd::Ones(1));
}

int PolicyNet::Sample(const Eigen::VectorXd& state, std::mt19937_64& rng) const {
  const Eigen::VectorXd p = Probabilities(state);
  std::discrete_distribution<int> dist(p.data(), p.data() + p.size());
  return dist(rng);
}

int PolicyNet::Argmax(const Eigen::VectorXd& state) const {
  Eigen::Index best = 0;
  Probabilities(state).maxCoeff(&best);
  return static_cast<int>(best);
}

bool PolicyNet::AllFinite() const {
  return actor_.Flatten().allFinite() && critic_.Flatten().allFinite();
}

double ClippedSurrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double SurrogateObjective(const PolicyNet& net, std::span<const Transition> batch,
                          std::span<const double> advantages, double epsilon) {
  double sum = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const double ratio = std::exp(net.LogProb(batch[i].state, batch[i].action)) / batch[i].old_prob;
    sum += ClippedSurrogate(ratio, advantages[i], epsilon);
  }
  return batch.empty() ? 0.0 : sum / batch.size();
}

UpdateStats PpoUpdate(PolicyNet& net, std::span<const Transition> batch,
                      const PpoConfig& config) {
  UpdateStats stats;
  if (batch.size() < 2) {
    stats.skipped = true;
    return stats;
  }
  std::vector<double> adv(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) adv[i] = batch[i].ret - net.Value(batch[i].state);

  stats.surrogate_before = SurrogateObjective(net, batch, adv, config.epsilon);
  stats.critic_loss_before = CriticLoss(net, batch, config.gamma);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.actor().num_params());
    for (size_t i = 0; i < batch.size(); ++i) {
      const auto& tr = batch[i];
      const double ratio = std::exp(net.LogProb(tr.state, tr.action)) / tr.old_prob;
      const double lo = 1.0 - config.epsilon;
      const double hi = 1.0 + config.epsilon;
      // The clipped branch is flat in theta.
      const bool clipped = (adv[i] > 0.0 && ratio > hi) || (adv[i] < 0.0 && ratio < lo);
      if (clipped) continue;
      grad += adv[i] * ratio * net.LogProbGradient(tr.state, tr.action);
    }
    net.actor().Apply(grad / static_cast<double>(batch.size()), config.actor_lr);
  }
  CriticUpdate(net, batch, config.gamma, config.critic_lr);
  stats.surrogate_after = SurrogateObjective(net, batch, adv, config.epsilon);
  stats.critic_loss_after = CriticLoss(net, batch, config.gamma);
  return stats;
}

double CriticLoss(const PolicyNet& net, std::span<const Transition> batch,
                  double gamma) {
  double sum = 0.0;
  for (const auto& tr : batch) {
    const double next = tr.terminal ? 0.0 : net.Value(tr.next_state);
    const double td = tr.reward + gamma * next - net.Value(tr.state);
    sum += td * td;
  }
  return batch.empty() ? 0.0 : sum / batch.size();
}

double CriticUpdate(PolicyNet& net, std::span<const Transition> batch,
                    double gamma, double learning_rate) {
  if (batch.empty()) return 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.critic().num_params());
  double loss = 0.0;
  for (const auto& tr : batch) {
    const double next = tr.terminal ? 0.0 : net.Value(tr.next_state);
    const double td = tr.reward + gamma * next - net.Value(tr.state);
    loss += td * td;
    if (td == 0.0) continue;
    Eigen::VectorXd g = -net.ValueGradient(tr.state);
    if (!tr.terminal) g += gamma * net.ValueGradient(tr.next_state);
    grad += 2.0 * td * g;
  }
  const double n = static_cast<double>(batch.size());
  net.critic().Apply(grad / n, -learning_rate);
  return loss / n;
}

namespace {

std::vector<double> ToStd(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace

void SavePolicy(const std::string& path, const PolicyNet& net,
                const CheckpointMeta& meta) {
  nlohmann::json j;
  j["format"] = "pdstream-policy";
  j["version"] = kCheckpointVersion;
  j["input_dim"] = net.actor().input_dim();
  j["hidden"] = net.actor().hidden();
  j["output_dim"] = net.actor().output_dim();
  j["leak"] = net.actor().leak();
  j["grid_bps"] = net.grid();
  j["state_samples"] = meta.state_samples;
  j["feature_divisors"] = std::vector<double>(meta.scales.divisor.begin(), meta.scales.divisor.end());
  j["episode"] = meta.episode;
  j["actor"] = ToStd(net.actor().Flatten());
  j["critic"] = ToStd(net.critic().Flatten());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint '{}'", path));
    out << j.dump() << "\n";
  }
  std::rename(tmp.c_str(), path.c_str());
}

PolicyNet LoadPolicy(const std::string& path, int expected_input_dim,
                     const std::vector<int>& expected_hidden,
                     const std::vector<double>& expected_grid,
                     CheckpointMeta* meta) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open checkpoint '{}'", path), 0);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("checkpoint '{}': {}", path, e.what()), 0);
  }
  if (j.value("format", "") != "pdstream-policy" || j.value("version", 0) != kCheckpointVersion) {
    throw SchemaError(fmt::format("'{}' is not a version {} policy checkpoint", path,
                                  kCheckpointVersion));
  }
  const int input = j.at("input_dim").get<int>();
  const auto hidden = j.at("hidden").get<std::vector<int>>();
  const auto grid = j.at("grid_bps").get<std::vector<double>>();
  if (input != expected_input_dim || hidden != expected_hidden ||
      grid.size() != expected_grid.size()) {
    throw SchemaError(fmt::format(
        "checkpoint dims (input {}, {} hidden layers, {} actions) do not match the "
        "configured network (input {}, {} hidden layers, {} actions)",
        input, hidden.size(), grid.size(), expected_input_dim, expected_hidden.size(),
        expected_grid.size()));
  }
  for (size_t i = 0; i < grid.size(); ++i) {
    if (std::abs(grid[i] - expected_grid[i]) > 1e-6 * expected_grid[i]) {
      throw SchemaError("checkpoint bitrate grid differs from the configured grid");
    }
  }
  PolicyNetConfig cfg;
  cfg.hidden = hidden;
  cfg.leak = j.at("leak").get<double>();
  PolicyNet net(input, grid, cfg);
  const auto actor = j.at("actor").get<std::vector<double>>();
  const auto critic = j.at("critic").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(actor.size()) != net.actor().num_params() ||
      static_cast<Eigen::Index>(critic.size()) != net.critic().num_params()) {
    throw SchemaError("checkpoint parameter count does not match its layer dims");
  }
  net.actor().Unflatten(Eigen::Map<const Eigen::VectorXd>(actor.data(), actor.size()));
  net.critic().Unflatten(Eigen::Map<const Eigen::VectorXd>(critic.data(), critic.size()));
  if (meta) {
    meta->episode = j.value("episode", int64_t{0});
    meta->state_samples = j.value("state_samples", size_t{20});
    const auto div = j.at("feature_divisors").get<std::vector<double>>();
    if (div.size() != meta->scales.divisor.size()) {
      throw SchemaError("checkpoint feature layout differs from this build");
    }
    std::copy(div.begin(), div.end(), meta->scales.divisor.begin());
  }
  return net;
}

}  // namespace pdstream
