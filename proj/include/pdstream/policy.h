#ifndef PDSTREAM_POLICY_H_
#define PDSTREAM_POLICY_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdstream/rate_control.h"

namespace pdstream {

// Fully connected network with leaky-rectifier hidden layers and a linear
// output layer. Parameters are addressable as one flat vector (weights then
// bias, layer by layer) for updates and gradient checks.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int input, std::vector<int> hidden, int output, uint64_t seed,
      double leak = 0.01);

  Eigen::VectorXd Forward(const Eigen::VectorXd& x) const;
  // Gradient of <dout, Forward(x)> with respect to the flat parameters.
  Eigen::VectorXd Backward(const Eigen::VectorXd& x,
                           const Eigen::VectorXd& dout) const;

  Eigen::Index num_params() const;
  Eigen::VectorXd Flatten() const;
  void Unflatten(const Eigen::VectorXd& params);
  // params += step * direction
  void Apply(const Eigen::VectorXd& direction, double step);
  void ScaleLastLayer(double factor);

  int input_dim() const { return input_; }
  int output_dim() const { return output_; }
  const std::vector<int>& hidden() const { return hidden_; }
  double leak() const { return leak_; }

 private:
  int input_ = 0;
  int output_ = 0;
  std::vector<int> hidden_;
  double leak_ = 0.01;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

struct PolicyNetConfig {
  std::vector<int> hidden = {128, 64, 32};
  double leak = 0.01;
  uint64_t seed = 1;
};

// Actor (softmax over the bitrate grid) and critic (scalar value) sharing
// the trunk shape but not the parameters.
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(int input_dim, std::vector<double> grid, PolicyNetConfig config = {});

  // Throws std::domain_error on a non-finite state entry.
  Eigen::VectorXd Probabilities(const Eigen::VectorXd& state) const;
  double LogProb(const Eigen::VectorXd& state, int action) const;
  Eigen::VectorXd LogProbGradient(const Eigen::VectorXd& state, int action) const;
  double Value(const Eigen::VectorXd& state) const;
  Eigen::VectorXd ValueGradient(const Eigen::VectorXd& state) const;

  int Sample(const Eigen::VectorXd& state, std::mt19937_64& rng) const;
  int Argmax(const Eigen::VectorXd& state) const;

  Mlp& actor() { return actor_; }
  Mlp& critic() { return critic_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  const std::vector<double>& grid() const { return grid_; }
  int input_dim() const { return actor_.input_dim(); }
  bool AllFinite() const;

 private:
  Mlp actor_;
  Mlp critic_;
  std::vector<double> grid_;
};

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd next_state;
  int action = 0;
  double old_prob = 0.0;  // behaviour policy probability of `action`
  double reward = 0.0;
  double ret = 0.0;  // truncated discounted return
  bool terminal = false;
};

struct PpoConfig {
  double epsilon = 0.1;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double gamma = 0.98;
  size_t horizon = 20;
  int epochs = 4;
};

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)
double ClippedSurrogate(double ratio, double advantage, double epsilon);

// Batch mean of the clipped surrogate with fixed advantages.
double SurrogateObjective(const PolicyNet& net, std::span<const Transition> batch,
                          std::span<const double> advantages, double epsilon);

struct UpdateStats {
  bool skipped = false;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double critic_loss_before = 0.0;
  double critic_loss_after = 0.0;
};

// Advantages A = R_t - V(s_t) fixed from the current critic, then
// `epochs` ascent steps on the batch-mean clipped surrogate. Batches with
// fewer than two samples are skipped.
UpdateStats PpoUpdate(PolicyNet& net, std::span<const Transition> batch,
                      const PpoConfig& config);

// Mean squared one-step TD error r + gamma V(s') - V(s).
double CriticLoss(const PolicyNet& net, std::span<const Transition> batch,
                  double gamma);
// One descent step on CriticLoss, differentiating both value terms. Returns
// the loss before the step.
double CriticUpdate(PolicyNet& net, std::span<const Transition> batch,
                    double gamma, double learning_rate);

struct CheckpointMeta {
  int64_t episode = 0;
  size_t state_samples = 20;
  FeatureScales scales;
};

// Versioned JSON checkpoint. Load throws SchemaError when the stored layer
// dimensions or grid differ from the expected ones.
void SavePolicy(const std::string& path, const PolicyNet& net,
                const CheckpointMeta& meta);
PolicyNet LoadPolicy(const std::string& path, int expected_input_dim,
                     const std::vector<int>& expected_hidden,
                     const std::vector<double>& expected_grid,
                     CheckpointMeta* meta = nullptr);

}  // namespace pdstream

#endif  // PDSTREAM_POLICY_H_
