#include "emoedit/shape_gan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"

namespace emoedit {
namespace {

constexpr int kCheckpointVersion = 1;

using Mat = Eigen::MatrixXd;

std::span<const Linear> head_span(const Layers& layers, std::size_t count) {
  return {layers.data(), count};
}

void require_rows_match(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows())
    throw DimensionError(std::string(what) + ": " + std::to_string(a.rows()) + " samples vs " +
                         std::to_string(b.rows()) + " labels");
}

// Generator input, one sample per column.
Mat stack_input(const Mat& c_rows, const Mat& e_rows) {
  require_rows_match(c_rows, e_rows, "generator input");
  Mat x(c_rows.cols() + e_rows.cols(), c_rows.rows());
  x.topRows(c_rows.cols()) = c_rows.transpose();
  x.bottomRows(e_rows.cols()) = e_rows.transpose();
  return x;
}

struct GenPass {
  TrunkCache cache;
  Mat out;
};

GenPass gen_forward(const GeneratorParams& g, const Mat& x) {
  if (g.empty()) throw ConfigError("generator is not initialized");
  GenPass p;
  const std::size_t k = g.layers.size() - 1;
  const Mat h = trunk_forward(head_span(g.layers, k), x, &p.cache);
  p.out = linear_forward(g.layers[k], h);
  return p;
}

Mat gen_backward(const GeneratorParams& g, const GenPass& p, const Mat& d_out, Linear* grads) {
  const std::size_t k = g.layers.size() - 1;
  const Mat dh = linear_backward(g.layers[k], p.cache.h.back(), d_out, grads ? grads + k : nullptr);
  Mat dx = trunk_backward(head_span(g.layers, k), p.cache, dh, grads);
  return dx;
}

struct CriticPass {
  TrunkCache cache;
  Eigen::RowVectorXd rf;
  Mat reg;  // n_e x N
};

CriticPass critic_forward(const DiscriminatorParams& d, const Mat& x) {
  if (d.empty()) throw ConfigError("discriminator is not initialized");
  CriticPass p;
  const Mat h = trunk_forward(head_span(d.layers, d.trunk_depth()), x, &p.cache);
  p.rf = linear_forward(d.rf_head(), h).row(0);
  p.reg = linear_forward(d.reg_head(), h);
  return p;
}

Mat critic_backward(const DiscriminatorParams& d, const CriticPass& p, const Eigen::RowVectorXd& d_rf,
                    const Mat& d_reg, Linear* grads) {
  const auto k = static_cast<std::size_t>(d.trunk_depth());
  const Mat& h = p.cache.h.back();
  Mat dh = linear_backward(d.rf_head(), h, d_rf, grads ? grads + k : nullptr);
  dh += linear_backward(d.reg_head(), h, d_reg, grads ? grads + k + 1 : nullptr);
  return trunk_backward(head_span(d.layers, k), p.cache, dh, grads);
}

// Per-column x_i^T q x_i.
Eigen::VectorXd quad_forms(const Mat& q, const Mat& x) {
  return (q * x).cwiseProduct(x).colwise().sum().transpose();
}

// 1/Nn for neutral columns, 1/Ns for starred ones (each half is its own mean).
Eigen::VectorXd half_weights(Eigen::Index nn, Eigen::Index ns) {
  Eigen::VectorXd w(nn + ns);
  if (nn) w.head(nn).setConstant(1.0 / static_cast<double>(nn));
  if (ns) w.tail(ns).setConstant(1.0 / static_cast<double>(ns));
  return w;
}

struct BatchLayout {
  Mat sources;   // n_c x N, neutral then starred
  Mat forward;   // n_e x N, target emotions of the first pass
  Mat backward;  // n_e x N, target emotions of the cycle pass
  Eigen::VectorXd weights;
};

BatchLayout layout(const GeneratorBatch& b, int n_c, int n_e) {
  const Eigen::Index nn = b.neutral.rows(), ns = b.starred.rows();
  if ((nn && b.neutral.cols() != n_c) || (ns && b.starred.cols() != n_c))
    throw DimensionError("generator batch: coefficient width differs from n_c");
  if (b.targets.rows() != nn || b.starred_labels.rows() != ns ||
      (nn && b.targets.cols() != n_e) || (ns && b.starred_labels.cols() != n_e))
    throw DimensionError("generator batch: emotion labels misaligned");
  BatchLayout l;
  l.sources.resize(n_c, nn + ns);
  l.forward = Mat::Zero(n_e, nn + ns);
  l.backward = Mat::Zero(n_e, nn + ns);
  if (nn) {
    l.sources.leftCols(nn) = b.neutral.transpose();
    l.forward.leftCols(nn) = b.targets.transpose();
  }
  if (ns) {
    l.sources.rightCols(ns) = b.starred.transpose();
    l.backward.rightCols(ns) = b.starred_labels.transpose();
  }
  l.weights = half_weights(nn, ns);
  return l;
}

Mat stack_cols(const Mat& top, const Mat& bottom) {
  Mat x(top.rows() + bottom.rows(), top.cols());
  x << top, bottom;
  return x;
}

}  // namespace

// ---------------------------------------------------------------- config

ShapeGanConfig ShapeGanConfig::full_size() {
  ShapeGanConfig c;
  c.n_h = 512;
  c.iterations = 80000;
  return c;
}

void ShapeGanConfig::validate() const {
  if (n_c <= 0 || n_e <= 0 || n_h <= 0 || hidden_layers < 0)
    throw ConfigError("shape_gan: dimensions must be positive");
  for (double w : {lambda_gp, lambda_reg, lambda_rec, lambda_mouth, lambda_r})
    if (!(w >= 0.0)) throw ConfigError("shape_gan: loss weights must be non-negative");
  if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("shape_gan: invalid optimizer settings");
  if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0))
    throw ConfigError("shape_gan: lr_final_fraction must be in (0, 1]");
  if (iterations < 0 || batch_size < 2 || critic_steps < 1 || eval_every < 1)
    throw ConfigError("shape_gan: iterations >= 0, batch_size >= 2, critic_steps >= 1 required");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("shape_gan: validation_fraction must be in [0, 1)");
}

#define EMOEDIT_SHAPE_FIELDS(X)                                                            \
  X(n_c) X(n_e) X(n_h) X(hidden_layers) X(lambda_gp) X(lambda_reg) X(lambda_rec)           \
      X(lambda_mouth) X(lambda_r) X(lr) X(beta1) X(beta2) X(lr_final_fraction) X(iterations) X(batch_size)      \
          X(critic_steps) X(eval_every) X(validation_fraction)

void to_json(nlohmann::json& j, const ShapeGanConfig& c) {
  j = nlohmann::json::object();
#define X(f) j[#f] = c.f;
  EMOEDIT_SHAPE_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, ShapeGanConfig& c) {
  static const std::set<std::string> known{
#define X(f) #f,
      EMOEDIT_SHAPE_FIELDS(X)
#undef X
  };
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("shape_gan config: unknown key '" + key + "'");
  try {
#define X(f) if (j.contains(#f)) j.at(#f).get_to(c.f);
    EMOEDIT_SHAPE_FIELDS(X)
#undef X
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("shape_gan config: ") + e.what());
  }
}

#undef EMOEDIT_SHAPE_FIELDS

// ---------------------------------------------------------------- networks

int GeneratorParams::n_c() const { return empty() ? 0 : layers.back().out(); }
int GeneratorParams::n_e() const { return empty() ? 0 : layers.front().in() - n_c(); }
int DiscriminatorParams::n_c() const { return empty() ? 0 : layers.front().in(); }
int DiscriminatorParams::n_e() const { return empty() ? 0 : reg_head().out(); }

GeneratorParams init_generator(const ShapeGanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  GeneratorParams g;
  int in = cfg.n_c + cfg.n_e;
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    g.layers.push_back(make_linear(in, cfg.n_h, rng));
    in = cfg.n_h;
  }
  g.layers.push_back(make_linear(in, cfg.n_c, rng));
  return g;
}

DiscriminatorParams init_discriminator(const ShapeGanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  DiscriminatorParams d;
  int in = cfg.n_c;
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    d.layers.push_back(make_linear(in, cfg.n_h, rng));
    in = cfg.n_h;
  }
  d.layers.push_back(make_linear(in, 1, rng));
  d.layers.push_back(make_linear(in, cfg.n_e, rng));
  return d;
}

Eigen::MatrixXd generator_forward(const GeneratorParams& g, const Eigen::MatrixXd& c,
                                  const Eigen::MatrixXd& e) {
  if (g.empty()) throw ConfigError("generator is not initialized");
  if (c.cols() != g.n_c() || e.cols() != g.n_e())
    throw DimensionError("generator_forward: expected " + std::to_string(g.n_c()) + " + " +
                         std::to_string(g.n_e()) + " inputs, got " + std::to_string(c.cols()) +
                         " + " + std::to_string(e.cols()));
  return gen_forward(g, stack_input(c, e)).out.transpose();
}

Eigen::VectorXd generator_forward(const GeneratorParams& g, const Eigen::VectorXd& c,
                                  const EmotionVector& e) {
  return generator_forward(g, Mat(c.transpose()), Mat(e.values().transpose())).row(0).transpose();
}

CriticOutput discriminator_forward(const DiscriminatorParams& d, const Eigen::MatrixXd& x) {
  if (d.empty()) throw ConfigError("discriminator is not initialized");
  if (x.cols() != d.n_c())
    throw DimensionError("discriminator_forward: expected " + std::to_string(d.n_c()) + " inputs");
  const CriticPass p = critic_forward(d, x.transpose());
  return {p.rf.transpose(), p.reg.transpose()};
}

Eigen::MatrixXd critic_input_gradients(const DiscriminatorParams& d, const Eigen::MatrixXd& x) {
  const CriticPass p = critic_forward(d, x.transpose());
  const Eigen::Index n = x.rows();
  return critic_backward(d, p, Eigen::RowVectorXd::Ones(n), Mat::Zero(d.n_e(), n), nullptr)
      .transpose();
}

// ---------------------------------------------------------------- losses

double loss_adv(const DiscriminatorParams& d, const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake) {
  if (real.rows() == 0 || fake.rows() == 0) throw DataError("loss_adv: empty batch");
  return discriminator_forward(d, real).rf.mean() - discriminator_forward(d, fake).rf.mean();
}

GradientPenalty gradient_penalty(const DiscriminatorParams& d, const Eigen::MatrixXd& real,
                                 const Eigen::MatrixXd& fake, const Eigen::VectorXd& u,
                                 bool with_param_grads) {
  if (real.rows() != fake.rows() || real.rows() != u.size() || real.rows() == 0)
    throw DimensionError("gradient_penalty: real, fake and u must have the same non-zero length");
  if (real.cols() != d.n_c() || fake.cols() != d.n_c())
    throw DimensionError("gradient_penalty: sample width differs from critic input");
  GradientPenalty gp;
  gp.interpolates = u.asDiagonal() * real + (Eigen::VectorXd::Ones(u.size()) - u).asDiagonal() * fake;
  const Mat x = gp.interpolates.transpose();
  const auto n = x.cols();
  const int depth = d.trunk_depth();

  TrunkCache cache;
  trunk_forward(head_span(d.layers, depth), x, &cache);
  // Backward chain of the score head: u_l = dD/dz_l, a = dD/dh_{l-1}.
  std::vector<Mat> du(static_cast<std::size_t>(depth));
  Mat a = d.rf_head().w.transpose() * Eigen::RowVectorXd::Ones(n);
  for (int l = depth - 1; l >= 0; --l) {
    du[l] = a.cwiseProduct(leaky_mask(cache.z[l]));
    a = d.layers[l].w.transpose() * du[l];
  }
  gp.grad_norms = a.colwise().norm().transpose();
  gp.value = (gp.grad_norms.array() - 1.0).square().mean();
  if (!with_param_grads) return gp;

  // d value / d g_i, then forward-mode pass through the same chain. The
  // activation masks are piecewise constant, so biases get no gradient.
  Mat q(a.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = gp.grad_norms[i];
    const double scale = norm > 0.0 ? 2.0 * (norm - 1.0) / (norm * static_cast<double>(n)) : 0.0;
    q.col(i) = scale * a.col(i);
  }
  gp.param_grads = zeros_like(d.layers);
  for (int l = 0; l < depth; ++l) {
    gp.param_grads[l].w.noalias() = du[l] * q.transpose();
    q = (d.layers[l].w * q).cwiseProduct(leaky_mask(cache.z[l]));
  }
  gp.param_grads[depth].w = q.rowwise().sum().transpose();
  return gp;
}

double loss_gp(const DiscriminatorParams& d, const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd u(real.rows());
  for (auto& v : u) v = unif(rng);
  return gradient_penalty(d, real, fake, u).value;
}

double loss_reg_d(const DiscriminatorParams& d, const Eigen::MatrixXd& c, const Eigen::MatrixXd& e_tilde) {
  require_rows_match(c, e_tilde, "loss_reg_d");
  if (c.rows() == 0) return 0.0;
  return (discriminator_forward(d, c).reg - e_tilde).rowwise().squaredNorm().mean();
}

double loss_reg_g(const DiscriminatorParams& d, const GeneratorParams& g, const Eigen::MatrixXd& c,
                  const Eigen::MatrixXd& e) {
  if (c.rows() == 0) return 0.0;
  return (discriminator_forward(d, generator_forward(g, c, e)).reg - e).rowwise().squaredNorm().mean();
}

ShapeLossGeometry ShapeLossGeometry::from_basis(const MorphableBasis& basis) {
  ShapeLossGeometry geo;
  const Mat b = basis.combined_basis();
  geo.full = b.transpose() * b;
  const int n_c = basis.n_coeffs();
  Mat lip(3 * static_cast<Eigen::Index>(basis.lip_upper.size()), n_c);
  for (std::size_t k = 0; k < basis.lip_upper.size(); ++k)
    lip.middleRows<3>(3 * static_cast<Eigen::Index>(k)) =
        b.middleRows<3>(3 * basis.lip_upper[k]) - b.middleRows<3>(3 * basis.lip_lower[k]);
  geo.mouth = lip.transpose() * lip;
  geo.shape = Mat::Zero(n_c, n_c);
  geo.shape.topLeftCorner(basis.n_alpha(), basis.n_alpha()) =
      basis.shape_basis.transpose() * basis.shape_basis;
  return geo;
}

double loss_rec(const GeneratorParams& g, const MorphableBasis& basis, const GeneratorBatch& batch) {
  const BatchLayout l = layout(batch, g.n_c(), g.n_e());
  if (l.sources.cols() == 0) return 0.0;
  const Mat f = gen_forward(g, stack_cols(l.sources, l.forward)).out;
  const Mat r = gen_forward(g, stack_cols(f, l.backward)).out;
  return quad_forms(ShapeLossGeometry::from_basis(basis).full, l.sources - r).dot(l.weights);
}

double loss_mouth(const GeneratorParams& g, const MorphableBasis& basis, const GeneratorBatch& batch) {
  const BatchLayout l = layout(batch, g.n_c(), g.n_e());
  if (l.sources.cols() == 0) return 0.0;
  const Mat f = gen_forward(g, stack_cols(l.sources, l.forward)).out;
  return quad_forms(ShapeLossGeometry::from_basis(basis).mouth, l.sources - f).dot(l.weights);
}

double loss_r(const GeneratorParams& g, const MorphableBasis& basis, const Eigen::MatrixXd& c,
              const Eigen::MatrixXd& e) {
  if (c.rows() == 0) return 0.0;
  const Mat diff = (c - generator_forward(g, c, e)).transpose();
  return quad_forms(ShapeLossGeometry::from_basis(basis).shape, diff).mean();
}

std::pair<double, double> total_losses(const LossComponents& c, const ShapeGanConfig& cfg) {
  const double l_d = -c.adv + cfg.lambda_gp * c.gp + cfg.lambda_reg * c.reg_d;
  const double l_g = c.adv + cfg.lambda_reg * c.reg_g + cfg.lambda_rec * c.rec +
                     cfg.lambda_mouth * c.mouth + cfg.lambda_r * c.r;
  return {l_d, l_g};
}

// ---------------------------------------------------------------- objectives

CriticObjective critic_objective(const DiscriminatorParams& d, const Eigen::MatrixXd& real,
                                 const Eigen::MatrixXd& real_labels, const Eigen::MatrixXd& fake,
                                 const Eigen::VectorXd& u, const ShapeGanConfig& cfg) {
  require_rows_match(real, real_labels, "critic_objective");
  const auto n = static_cast<double>(real.rows());
  const auto m = static_cast<double>(fake.rows());
  CriticObjective obj;
  obj.grads = zeros_like(d.layers);

  const CriticPass pr = critic_forward(d, real.transpose());
  const CriticPass pf = critic_forward(d, fake.transpose());
  const Mat reg_err = pr.reg - real_labels.transpose();
  obj.parts.adv = pr.rf.mean() - pf.rf.mean();
  obj.parts.reg_d = reg_err.colwise().squaredNorm().mean();

  critic_backward(d, pr, Eigen::RowVectorXd::Constant(real.rows(), -1.0 / n),
                  (2.0 * cfg.lambda_reg / n) * reg_err, obj.grads.data());
  critic_backward(d, pf, Eigen::RowVectorXd::Constant(fake.rows(), 1.0 / m),
                  Mat::Zero(d.n_e(), fake.rows()), obj.grads.data());

  const GradientPenalty gp = gradient_penalty(d, real, fake, u, true);
  obj.parts.gp = gp.value;
  for (std::size_t i = 0; i < obj.grads.size(); ++i) {
    obj.grads[i].w += cfg.lambda_gp * gp.param_grads[i].w;
    obj.grads[i].b += cfg.lambda_gp * gp.param_grads[i].b;
  }
  obj.loss = total_losses(obj.parts, cfg).first;
  return obj;
}

GeneratorObjective generator_objective(const GeneratorParams& g, const DiscriminatorParams& d,
                                       const ShapeLossGeometry& geo, const GeneratorBatch& batch,
                                       const Eigen::MatrixXd& real, const ShapeGanConfig& cfg) {
  const BatchLayout l = layout(batch, g.n_c(), g.n_e());
  const Eigen::Index cols = l.sources.cols();
  if (cols == 0) throw DataError("generator_objective: empty batch");
  const auto n = static_cast<double>(cols);
  GeneratorObjective obj;
  obj.grads = zeros_like(g.layers);

  const GenPass p1 = gen_forward(g, stack_cols(l.sources, l.forward));
  const Mat& f = p1.out;
  const GenPass p2 = gen_forward(g, stack_cols(f, l.backward));
  const Mat& r = p2.out;
  const CriticPass pf = critic_forward(d, f);
  const double real_score = real.rows() ? discriminator_forward(d, real).rf.mean() : 0.0;

  const Mat reg_err = pf.reg - l.forward;
  const Mat d_first = f - l.sources;   // G(c,e) - c
  const Mat d_cycle = r - l.sources;   // G(G(c,e),e') - c
  obj.parts.adv = real_score - pf.rf.mean();
  obj.parts.reg_g = reg_err.colwise().squaredNorm().mean();
  obj.parts.mouth = quad_forms(geo.mouth, d_first).dot(l.weights);
  obj.parts.r = quad_forms(geo.shape, d_first).mean();
  obj.parts.rec = quad_forms(geo.full, d_cycle).dot(l.weights);
  obj.loss = total_losses(obj.parts, cfg).second;

  Mat df = critic_backward(d, pf, Eigen::RowVectorXd::Constant(cols, -1.0 / n),
                           (2.0 * cfg.lambda_reg / n) * reg_err, nullptr);
  df += (2.0 * cfg.lambda_mouth) * (geo.mouth * d_first) * l.weights.asDiagonal();
  df += (2.0 * cfg.lambda_r / n) * (geo.shape * d_first);
  const Mat dr = (2.0 * cfg.lambda_rec) * (geo.full * d_cycle) * l.weights.asDiagonal();
  const Mat dx2 = gen_backward(g, p2, dr, obj.grads.data());
  df += dx2.topRows(f.rows());
  gen_backward(g, p1, df, obj.grads.data());
  return obj;
}

// ---------------------------------------------------------------- training

namespace {

struct Pools {
  std::vector<std::size_t> neutral;
  std::vector<std::size_t> emotional;
  std::vector<std::size_t> all;
};

class BatchSampler {
 public:
  BatchSampler(const EmotionDataset& ds, const Mat& coeffs, Pools pools, std::mt19937_64& rng)
      : ds_(ds), coeffs_(coeffs), pools_(std::move(pools)), rng_(rng) {}

  GeneratorBatch generator_batch(int size) {
    const int nn = size / 2, ns = size - nn;
    GeneratorBatch b;
    b.neutral.resize(nn, coeffs_.cols());
    b.targets = Mat::Zero(nn, ds_.n_emotions);
    std::uniform_int_distribution<int> emotion(0, ds_.n_emotions - 1);
    std::uniform_int_distribution<int> level(1, ds_.intensity_levels);
    for (int i = 0; i < nn; ++i) {
      b.neutral.row(i) = coeffs_.row(static_cast<Eigen::Index>(pick(pools_.neutral)));
      b.targets(i, emotion(rng_)) = intensity_from_level(level(rng_), ds_.intensity_levels);
    }
    b.starred.resize(ns, coeffs_.cols());
    b.starred_labels.resize(ns, ds_.n_emotions);
    for (int i = 0; i < ns; ++i) {
      const std::size_t s = pick(pools_.emotional);
      b.starred.row(i) = coeffs_.row(static_cast<Eigen::Index>(s));
      b.starred_labels.row(i) = ds_.samples[s].emotion.values().transpose();
    }
    return b;
  }

  std::pair<Mat, Mat> real_batch(int size) {
    Mat c(size, coeffs_.cols()), e(size, ds_.n_emotions);
    for (int i = 0; i < size; ++i) {
      const std::size_t s = pick(pools_.all);
      c.row(i) = coeffs_.row(static_cast<Eigen::Index>(s));
      e.row(i) = ds_.samples[s].emotion.values().transpose();
    }
    return {c, e};
  }

  Eigen::VectorXd uniforms(int size) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd u(size);
    for (auto& v : u) v = unif(rng_);
    return u;
  }

 private:
  std::size_t pick(const std::vector<std::size_t>& pool) {
    std::uniform_int_distribution<std::size_t> idx(0, pool.size() - 1);
    return pool[idx(rng_)];
  }

  const EmotionDataset& ds_;
  const Mat& coeffs_;
  Pools pools_;
  std::mt19937_64& rng_;
};

Mat fake_batch(const GeneratorParams& g, const GeneratorBatch& b) {
  const BatchLayout l = layout(b, g.n_c(), g.n_e());
  return gen_forward(g, stack_cols(l.sources, l.forward)).out.transpose();
}

}  // namespace

ShapeGanResult train_shape_gan(const EmotionDataset& dataset, const MorphableBasis& basis,
                               const ShapeGanConfig& cfg, std::uint64_t seed,
                               const ProgressFn& progress) {
  cfg.validate();
  basis.validate();
  if (cfg.n_c != basis.n_coeffs())
    throw ModelMismatch("shape_gan: n_c = " + std::to_string(cfg.n_c) + " but the basis has " +
                        std::to_string(basis.n_coeffs()) + " coefficients");
  if (dataset.n_emotions != cfg.n_e)
    throw ModelMismatch("shape_gan: dataset has " + std::to_string(dataset.n_emotions) +
                        " emotions, config n_e = " + std::to_string(cfg.n_e));
  if (dataset.samples.empty()) throw DataError("shape_gan: empty dataset");
  const Mat coeffs = dataset.coefficient_matrix();
  if (coeffs.cols() != cfg.n_c) throw ModelMismatch("shape_gan: dataset coefficient width differs from n_c");

  std::mt19937_64 rng(seed);
  ShapeGanResult result;
  result.generator = init_generator(cfg, rng());
  result.discriminator = init_discriminator(cfg, rng());

  std::vector<std::size_t> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(order.size()));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());

  Pools pools;
  std::set<int> present;
  for (std::size_t s : train) {
    const int label = dataset.samples[s].label();
    present.insert(label);
    (label == 0 ? pools.neutral : pools.emotional).push_back(s);
    pools.all.push_back(s);
  }
  std::string missing;
  for (int y = 0; y <= cfg.n_e; ++y)
    if (!present.count(y)) missing += (missing.empty() ? "" : ", ") + (y == 0 ? std::string("neutral") : std::to_string(y - 1));
  if (!missing.empty()) throw DataError("shape_gan: training set lacks labels: " + missing);

  Mat val_c(static_cast<Eigen::Index>(val.size()), cfg.n_c), val_e(static_cast<Eigen::Index>(val.size()), cfg.n_e);
  for (std::size_t i = 0; i < val.size(); ++i) {
    val_c.row(static_cast<Eigen::Index>(i)) = coeffs.row(static_cast<Eigen::Index>(val[i]));
    val_e.row(static_cast<Eigen::Index>(i)) = dataset.samples[val[i]].emotion.values().transpose();
  }

  const ShapeLossGeometry geo = ShapeLossGeometry::from_basis(basis);
  const AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2};
  Adam opt_g(adam, result.generator.layers), opt_d(adam, result.discriminator.layers);
  BatchSampler sampler(dataset, coeffs, pools, rng);
  const auto start = std::chrono::steady_clock::now();
  auto& g = result.generator;
  auto& d = result.discriminator;

  for (int it = 1; it <= cfg.iterations; ++it) {
    const double progress_frac = cfg.iterations > 1 ? (it - 1.0) / (cfg.iterations - 1.0) : 0.0;
    const double lr = cfg.lr * (cfg.lr_final_fraction + (1.0 - cfg.lr_final_fraction) * 0.5 *
                                                          (1.0 + std::cos(std::numbers::pi * progress_frac)));
    opt_g.set_lr(lr);
    opt_d.set_lr(lr);
    CriticObjective critic;
    for (int k = 0; k < cfg.critic_steps; ++k) {
      const auto [real, labels] = sampler.real_batch(cfg.batch_size);
      const Mat fake = fake_batch(g, sampler.generator_batch(cfg.batch_size));
      const Eigen::VectorXd u = sampler.uniforms(cfg.batch_size);
      critic = critic_objective(d, real, labels, fake, u, cfg);
      opt_d.step(d.layers, critic.grads);
    }
    const GeneratorBatch gb = sampler.generator_batch(cfg.batch_size);
    const Mat real = sampler.real_batch(cfg.batch_size).first;
    const GeneratorObjective gen = generator_objective(g, d, geo, gb, real, cfg);
    opt_g.step(g.layers, gen.grads);

    ShapeGanLogRow row;
    row.iteration = it;
    row.parts = gen.parts;
    row.parts.gp = critic.parts.gp;
    row.parts.reg_d = critic.parts.reg_d;
    row.loss_d = critic.loss;
    row.loss_g = gen.loss;
    row.val_reg_mse = std::numeric_limits<double>::quiet_NaN();
    if ((it % cfg.eval_every == 0 || it == cfg.iterations) && val_c.rows() > 0)
      row.val_reg_mse = loss_reg_d(d, val_c, val_e);
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(row.loss_d) || !std::isfinite(row.loss_g))
      throw NumericalError("shape_gan: non-finite loss at iteration " + std::to_string(it));
    if (progress) progress(row);
    result.log.push_back(row);
  }
  return result;
}

void write_training_log(const std::vector<ShapeGanLogRow>& log, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "iteration,loss_d,loss_g,adv,gp,reg_d,reg_g,rec,mouth,r,val_reg_mse,wall_s\n";
  out << std::setprecision(10);
  for (const auto& r : log) {
    out << r.iteration << ',' << r.loss_d << ',' << r.loss_g << ',' << r.parts.adv << ','
        << r.parts.gp << ',' << r.parts.reg_d << ',' << r.parts.reg_g << ',' << r.parts.rec << ','
        << r.parts.mouth << ',' << r.parts.r << ',';
    if (std::isfinite(r.val_reg_mse)) out << r.val_reg_mse;
    out << ',' << r.wall_seconds << '\n';
  }
}

FaceCoefficients edit_shape(const GeneratorParams& g, const FaceCoefficients& coeffs,
                            const EmotionVector& e) {
  if (g.empty()) throw ConfigError("edit_shape: generator is not initialized");
  if (e.size() != g.n_e())
    throw DimensionError("edit_shape: emotion vector has " + std::to_string(e.size()) +
                         " components, generator expects " + std::to_string(g.n_e()));
  const Eigen::VectorXd c = coeffs.shape_expression();
  if (c.size() != g.n_c())
    throw DimensionError("edit_shape: coefficient vector has " + std::to_string(c.size()) +
                         " entries, generator expects " + std::to_string(g.n_c()));
  FaceCoefficients out = coeffs;
  out.set_shape_expression(generator_forward(g, c, e));
  return out;
}

ShapeEditReport evaluate_shape_edits(const GeneratorParams& g, const MorphableBasis& basis,
                                     const SoftmaxClassifier& judge,
                                     const Eigen::MatrixXd& neutral_coeffs) {
  const int n_e = g.n_e();
  const Eigen::Index n = neutral_coeffs.rows();
  if (n == 0) throw DataError("evaluate_shape_edits: no neutral samples");
  if (judge.n_classes() != n_e + 1)
    throw DimensionError("evaluate_shape_edits: judge must have 1 + n_e classes");
  const Mat b = basis.combined_basis();
  const auto mean_vertex_displacement = [&](const Mat& from, const Mat& to) {
    const Mat diff = b * (to - from).transpose();  // 3V x N
    double total = 0.0;
    for (Eigen::Index i = 0; i < diff.cols(); ++i)
      total += diff.col(i).reshaped(3, diff.rows() / 3).colwise().norm().mean();
    return total / static_cast<double>(diff.cols());
  };

  ShapeEditReport rep;
  const Mat zero = Mat::Zero(n, n_e);
  rep.neutral_displacement_ratio =
      mean_vertex_displacement(neutral_coeffs, generator_forward(g, neutral_coeffs, zero)) /
      basis.inter_ocular_distance();

  Mat lip(3 * static_cast<Eigen::Index>(basis.lip_upper.size()), basis.n_coeffs());
  for (std::size_t k = 0; k < basis.lip_upper.size(); ++k)
    lip.middleRows<3>(3 * static_cast<Eigen::Index>(k)) =
        b.middleRows<3>(3 * basis.lip_upper[k]) - b.middleRows<3>(3 * basis.lip_lower[k]);

  std::size_t hits = 0;
  double lip_total = 0.0;
  rep.monotone = true;
  for (int y = 0; y < n_e; ++y) {
    std::array<double, 3> disp{};
    for (int k = 0; k <= 2; ++k) {
      Mat e = Mat::Zero(n, n_e);
      e.col(y).setConstant(0.5 * k);
      const Mat edited = generator_forward(g, neutral_coeffs, e);
      disp[static_cast<std::size_t>(k)] = mean_vertex_displacement(neutral_coeffs, edited);
      if (k == 2) {
        for (int p : judge.predict(edited)) hits += p == y + 1;
        const Mat dl = lip * (edited - neutral_coeffs).transpose();
        for (Eigen::Index i = 0; i < dl.cols(); ++i)
          lip_total += std::sqrt(dl.col(i).squaredNorm() / static_cast<double>(basis.lip_upper.size()));
      }
    }
    rep.monotone = rep.monotone && disp[0] <= disp[1] && disp[1] <= disp[2];
    rep.displacement_by_intensity.push_back(disp);
  }
  rep.target_accuracy = static_cast<double>(hits) / static_cast<double>(n * n_e);
  rep.lip_deviation = lip_total / static_cast<double>(n * n_e);
  return rep;
}

void save_shape_checkpoint(const ShapeGanCheckpoint& ckpt, const MorphableBasis& basis,
                           const std::filesystem::path& path) {
  Archive a;
  a.meta["kind"] = "shape_gan";
  a.meta["version"] = kCheckpointVersion;
  a.meta["config"] = ckpt.config;
  a.meta["n_alpha"] = basis.n_alpha();
  a.meta["n_beta"] = basis.n_beta();
  a.meta["basis_fingerprint"] = basis_fingerprint(basis);
  put_layers(a, "g", ckpt.generator.layers);
  put_layers(a, "d", ckpt.discriminator.layers);
  a.save(path);
}

ShapeGanCheckpoint load_shape_checkpoint(const std::filesystem::path& path, const MorphableBasis& basis) {
  const Archive a = Archive::load(path);
  require_kind(a, "shape_gan", kCheckpointVersion);
  const int n_alpha = a.meta.at("n_alpha"), n_beta = a.meta.at("n_beta");
  if (n_alpha != basis.n_alpha() || n_beta != basis.n_beta())
    throw ModelMismatch("shape checkpoint " + path.string() + " was trained with n_alpha=" +
                        std::to_string(n_alpha) + ", n_beta=" + std::to_string(n_beta) +
                        " but the basis has n_alpha=" + std::to_string(basis.n_alpha()) +
                        ", n_beta=" + std::to_string(basis.n_beta()));
  ShapeGanCheckpoint ckpt;
  ckpt.basis_fingerprint = a.meta.at("basis_fingerprint");
  if (ckpt.basis_fingerprint != basis_fingerprint(basis))
    throw ModelMismatch("shape checkpoint " + path.string() + " was trained on a different basis");
  ckpt.config = a.meta.at("config").get<ShapeGanConfig>();
  ckpt.generator.layers = get_layers(a, "g");
  ckpt.discriminator.layers = get_layers(a, "d");
  if (ckpt.generator.n_c() != basis.n_coeffs() || ckpt.discriminator.n_c() != basis.n_coeffs())
    throw ModelMismatch("shape checkpoint " + path.string() + ": network width differs from basis");
  return ckpt;
}

}  // namespace emoedit
