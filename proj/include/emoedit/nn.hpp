#pragma once

// Small fully connected networks with hand-written backpropagation.
// Batches are column-major: one sample per column.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace emoedit {

class Archive;

inline constexpr double kLeakySlope = 0.2;

struct Linear {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out

  int in() const { return static_cast<int>(w.cols()); }
  int out() const { return static_cast<int>(w.rows()); }
};

using Layers = std::vector<Linear>;

/// Gaussian weights with std sqrt(2 / ((1 + slope^2) * fan_in)), zero bias.
Linear make_linear(int in, int out, std::mt19937_64& rng);
Linear zeros_like(const Linear& l);
Layers zeros_like(const Layers& layers);

/// Cache of a leaky-activated trunk: h[0] is the input, z[i] / h[i+1] the
/// pre- and post-activation of layer i.
struct TrunkCache {
  std::vector<Eigen::MatrixXd> z;
  std::vector<Eigen::MatrixXd> h;
};

Eigen::MatrixXd linear_forward(const Linear& l, const Eigen::MatrixXd& x);
/// Accumulates parameter gradients into `grad` (if non-null), returns dL/dx.
Eigen::MatrixXd linear_backward(const Linear& l, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& dy, Linear* grad);

/// Every layer is followed by a leaky rectifier. An empty trunk is the identity.
Eigen::MatrixXd trunk_forward(std::span<const Linear> layers, const Eigen::MatrixXd& x,
                              TrunkCache* cache = nullptr);
/// `grads`, when non-null, points at one accumulator per layer.
Eigen::MatrixXd trunk_backward(std::span<const Linear> layers, const TrunkCache& cache,
                               Eigen::MatrixXd dh, Linear* grads);

/// Leaky-rectifier derivative mask of a pre-activation.
Eigen::MatrixXd leaky_mask(const Eigen::MatrixXd& z);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, const Layers& shape);
  void step(Layers& params, const Layers& grads);
  long steps() const { return t_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  Layers m_, v_;
  long t_ = 0;
};

/// Stores layers as "<prefix><i>.w" / "<prefix><i>.b".
void put_layers(Archive& a, const std::string& prefix, const Layers& layers);
Layers get_layers(const Archive& a, const std::string& prefix);

std::size_t parameter_count(const Layers& layers);

}  // namespace emoedit
