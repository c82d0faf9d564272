#include "emoedit/nn.hpp"

#include <cmath>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"

namespace emoedit {

Linear make_linear(int in, int out, std::mt19937_64& rng) {
  const double std_dev = std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * in));
  std::normal_distribution<double> n01;
  Linear l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
  for (Eigen::Index j = 0; j < l.w.cols(); ++j)
    for (Eigen::Index i = 0; i < l.w.rows(); ++i) l.w(i, j) = std_dev * n01(rng);
  return l;
}

Linear zeros_like(const Linear& l) {
  return {Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()), Eigen::VectorXd::Zero(l.b.size())};
}

Layers zeros_like(const Layers& layers) {
  Layers out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(zeros_like(l));
  return out;
}

Eigen::MatrixXd linear_forward(const Linear& l, const Eigen::MatrixXd& x) {
  if (x.rows() != l.w.cols())
    throw DimensionError("linear layer expects " + std::to_string(l.w.cols()) + " inputs, got " +
                         std::to_string(x.rows()));
  Eigen::MatrixXd y = l.w * x;
  y.colwise() += l.b;
  return y;
}

Eigen::MatrixXd linear_backward(const Linear& l, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& dy, Linear* grad) {
  if (grad) {
    grad->w.noalias() += dy * x.transpose();
    grad->b += dy.rowwise().sum();
  }
  return l.w.transpose() * dy;
}

Eigen::MatrixXd leaky_mask(const Eigen::MatrixXd& z) {
  return (z.array() > 0.0).select(Eigen::MatrixXd::Ones(z.rows(), z.cols()), kLeakySlope);
}

Eigen::MatrixXd trunk_forward(std::span<const Linear> layers, const Eigen::MatrixXd& x, TrunkCache* cache) {
  if (cache) {
    cache->z.clear();
    cache->h.assign(1, x);
  }
  Eigen::MatrixXd h = x;
  for (const auto& l : layers) {
    Eigen::MatrixXd z = linear_forward(l, h);
    h = (z.array() > 0.0).select(z, kLeakySlope * z);
    if (cache) {
      cache->z.push_back(std::move(z));
      cache->h.push_back(h);
    }
  }
  return h;
}

Eigen::MatrixXd trunk_backward(std::span<const Linear> layers, const TrunkCache& cache,
                               Eigen::MatrixXd dh, Linear* grads) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    const Eigen::MatrixXd dz = (dh.array() * leaky_mask(cache.z[i]).array()).matrix();
    dh = linear_backward(layers[i], cache.h[i], dz, grads ? grads + i : nullptr);
  }
  return dh;
}

Adam::Adam(AdamConfig cfg, const Layers& shape)
    : cfg_(cfg), m_(zeros_like(shape)), v_(zeros_like(shape)) {}

void Adam::step(Layers& params, const Layers& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw DimensionError("adam: parameter layout changed");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i].w, grads[i].w, m_[i].w, v_[i].w);
    update(params[i].b, grads[i].b, m_[i].b, v_[i].b);
  }
}

void put_layers(Archive& a, const std::string& prefix, const Layers& layers) {
  a.meta["layers"][prefix] = layers.size();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    a.put(prefix + std::to_string(i) + ".w", layers[i].w);
    a.put(prefix + std::to_string(i) + ".b", layers[i].b);
  }
}

Layers get_layers(const Archive& a, const std::string& prefix) {
  if (!a.meta.contains("layers") || !a.meta["layers"].contains(prefix))
    throw DataError("archive has no layer group '" + prefix + "'");
  const std::size_t n = a.meta["layers"][prefix];
  Layers out;
  for (std::size_t i = 0; i < n; ++i) {
    Linear l{a.matrix(prefix + std::to_string(i) + ".w"), a.vector(prefix + std::to_string(i) + ".b")};
    if (l.b.size() != l.w.rows()) throw DataError("layer " + prefix + std::to_string(i) + ": bias size");
    out.push_back(std::move(l));
  }
  return out;
}

std::size_t parameter_count(const Layers& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

}  // namespace emoedit
