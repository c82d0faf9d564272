#pragma once

// Loop-based reference implementations shared by the unit and acceptance
// tests. Written against the loss definitions directly, without the
// library's matrix forms.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "emoedit/morphable.hpp"
#include "emoedit/nn.hpp"
#include "emoedit/shape_gan.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline Vec dense(const emoedit::Linear& l, const Vec& x, bool leaky) {
  Vec out(static_cast<std::size_t>(l.w.rows()));
  for (Eigen::Index j = 0; j < l.w.rows(); ++j) {
    double s = l.b[j];
    for (Eigen::Index i = 0; i < l.w.cols(); ++i) s += l.w(j, i) * x[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(j)] = leaky && s < 0.0 ? 0.2 * s : s;
  }
  return out;
}

inline Vec to_vec(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

inline Vec generator(const emoedit::GeneratorParams& g, const Vec& c, const Vec& e) {
  Vec x = c;
  x.insert(x.end(), e.begin(), e.end());
  for (std::size_t k = 0; k + 1 < g.layers.size(); ++k) x = dense(g.layers[k], x, true);
  return dense(g.layers.back(), x, false);
}

inline Vec critic_trunk(const emoedit::DiscriminatorParams& d, Vec x) {
  for (std::size_t k = 0; k + 2 < d.layers.size(); ++k) x = dense(d.layers[k], x, true);
  return x;
}

inline double critic_rf(const emoedit::DiscriminatorParams& d, const Vec& x) {
  return dense(d.layers[d.layers.size() - 2], critic_trunk(d, x), false)[0];
}

inline Vec critic_reg(const emoedit::DiscriminatorParams& d, const Vec& x) {
  return dense(d.layers.back(), critic_trunk(d, x), false);
}

/// Flattened V(c) = mean + sum_k c_k * column_k.
inline Vec shape(const emoedit::MorphableBasis& b, const Vec& c) {
  Vec v(static_cast<std::size_t>(b.mean_shape.size()));
  for (Eigen::Index r = 0; r < b.mean_shape.size(); ++r) {
    double s = b.mean_shape[r];
    for (int k = 0; k < b.n_alpha(); ++k) s += b.shape_basis(r, k) * c[static_cast<std::size_t>(k)];
    for (int k = 0; k < b.n_beta(); ++k) s += b.exp_basis(r, k) * c[static_cast<std::size_t>(b.n_alpha() + k)];
    v[static_cast<std::size_t>(r)] = s;
  }
  return v;
}

inline double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline Vec row(const Eigen::MatrixXd& m, Eigen::Index i) { return to_vec(m.row(i).transpose()); }

inline double reg_d(const emoedit::DiscriminatorParams& d, const Eigen::MatrixXd& c, const Eigen::MatrixXd& et) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) s += sq_dist(critic_reg(d, row(c, i)), row(et, i));
  return s / static_cast<double>(c.rows());
}

inline double reg_g(const emoedit::DiscriminatorParams& d, const emoedit::GeneratorParams& g,
                    const Eigen::MatrixXd& c, const Eigen::MatrixXd& e) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    s += sq_dist(critic_reg(d, generator(g, row(c, i), row(e, i))), row(e, i));
  return s / static_cast<double>(c.rows());
}

inline Vec zeros(std::size_t n) { return Vec(n, 0.0); }

inline double rec(const emoedit::GeneratorParams& g, const emoedit::MorphableBasis& b,
                  const emoedit::GeneratorBatch& batch) {
  const std::size_t n_e = static_cast<std::size_t>(g.n_e());
  double total = 0.0;
  if (batch.neutral.rows() > 0) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < batch.neutral.rows(); ++i) {
      const Vec c = row(batch.neutral, i);
      const Vec back = generator(g, generator(g, c, row(batch.targets, i)), zeros(n_e));
      s += sq_dist(shape(b, c), shape(b, back));
    }
    total += s / static_cast<double>(batch.neutral.rows());
  }
  if (batch.starred.rows() > 0) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < batch.starred.rows(); ++i) {
      const Vec c = row(batch.starred, i);
      const Vec back = generator(g, generator(g, c, zeros(n_e)), row(batch.starred_labels, i));
      s += sq_dist(shape(b, c), shape(b, back));
    }
    total += s / static_cast<double>(batch.starred.rows());
  }
  return total;
}

/// Sum over lip pairs of |(u - d)(c) - (u - d)(c')|^2.
inline double lip_change(const emoedit::MorphableBasis& b, const Vec& c, const Vec& c2) {
  const Vec v = shape(b, c), w = shape(b, c2);
  double s = 0.0;
  for (std::size_t k = 0; k < b.lip_upper.size(); ++k)
    for (int a = 0; a < 3; ++a) {
      const auto u = static_cast<std::size_t>(3 * b.lip_upper[k] + a);
      const auto l = static_cast<std::size_t>(3 * b.lip_lower[k] + a);
      const double diff = (v[u] - v[l]) - (w[u] - w[l]);
      s += diff * diff;
    }
  return s;
}

inline double mouth(const emoedit::GeneratorParams& g, const emoedit::MorphableBasis& b,
                    const emoedit::GeneratorBatch& batch) {
  const std::size_t n_e = static_cast<std::size_t>(g.n_e());
  double total = 0.0;
  if (batch.neutral.rows() > 0) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < batch.neutral.rows(); ++i) {
      const Vec c = row(batch.neutral, i);
      s += lip_change(b, c, generator(g, c, row(batch.targets, i)));
    }
    total += s / static_cast<double>(batch.neutral.rows());
  }
  if (batch.starred.rows() > 0) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < batch.starred.rows(); ++i) {
      const Vec c = row(batch.starred, i);
      s += lip_change(b, c, generator(g, c, zeros(n_e)));
    }
    total += s / static_cast<double>(batch.starred.rows());
  }
  return total;
}

inline double r(const emoedit::GeneratorParams& g, const emoedit::MorphableBasis& b, const Eigen::MatrixXd& c,
                const Eigen::MatrixXd& e) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    Vec a = row(c, i);
    Vec a2 = generator(g, a, row(e, i));
    for (int k = b.n_alpha(); k < b.n_coeffs(); ++k) a[static_cast<std::size_t>(k)] = a2[static_cast<std::size_t>(k)] = 0.0;
    s += sq_dist(shape(b, a), shape(b, a2));
  }
  return s / static_cast<double>(c.rows());
}

/// Central-difference gradient of D_rf at x.
inline Vec rf_gradient_fd(const emoedit::DiscriminatorParams& d, const Vec& x, double h) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec p = x, m = x;
    p[i] += h;
    m[i] -= h;
    g[i] = (critic_rf(d, p) - critic_rf(d, m)) / (2.0 * h);
  }
  return g;
}

inline double norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace oracle
