#include "emoedit/synthetic_face.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"

namespace emoedit {
namespace {

constexpr int kDatasetVersion = 1;

int grid_index(int r, int c, int cols) { return r * cols + c; }

struct MouthLayout {
  int upper_row, lower_row, first_col, last_col, eye_row, eye_col;
};

MouthLayout mouth_layout(int rows, int cols) {
  MouthLayout m{};
  m.upper_row = static_cast<int>(std::lround(0.76 * (rows - 1)));
  m.lower_row = m.upper_row + 1;
  m.first_col = cols / 2 - 4;
  m.last_col = m.first_col + 7;
  m.eye_row = static_cast<int>(std::lround(0.32 * (rows - 1)));
  m.eye_col = static_cast<int>(std::lround(0.22 * (cols - 1)));
  return m;
}

// Smooth random displacement field: random combination of separable cosines
// over the (u, v) chart with 1/(1+a+b) amplitude decay, independently per axis.
Eigen::VectorXd smooth_random_field(const Eigen::MatrixX2d& uv, std::mt19937_64& rng) {
  constexpr int kFreq = 9;
  std::normal_distribution<double> n01;
  const auto v_count = uv.rows();
  Eigen::VectorXd field = Eigen::VectorXd::Zero(3 * v_count);
  for (int axis = 0; axis < 3; ++axis)
    for (int a = 0; a < kFreq; ++a)
      for (int b = 0; b < kFreq; ++b) {
        const double g = n01(rng) / (1.0 + a + b);
        for (Eigen::Index v = 0; v < v_count; ++v)
          field[3 * v + axis] += g * std::cos(std::numbers::pi * a * uv(v, 0)) *
                                 std::cos(std::numbers::pi * b * uv(v, 1));
      }
  return field;
}

}  // namespace

MorphableBasis make_synthetic_basis(const SyntheticBasisConfig& cfg) {
  if (cfg.rows < 12 || cfg.cols < 12)
    throw ConfigError("synthetic basis: grid must be at least 12 x 12");
  const int rows = cfg.rows, cols = cfg.cols, v_count = rows * cols;
  if (cfg.n_alpha + cfg.n_beta > 3 * v_count || cfg.n_beta < 1)
    throw ConfigError("synthetic basis: too many basis columns for the grid");
  const double s = cfg.unit_scale;
  const MouthLayout m = mouth_layout(rows, cols);

  MorphableBasis basis;
  basis.mean_shape.resize(3 * v_count);
  basis.uv.resize(v_count, 2);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int i = grid_index(r, c, cols);
      const double u = static_cast<double>(c) / (cols - 1);
      const double v = static_cast<double>(r) / (rows - 1);
      const double xn = 2.0 * u - 1.0;
      const double yn = (2.0 * v - 1.0) * 1.3;
      const double cap = std::sqrt(std::max(0.05, 1.0 - std::pow(xn / 1.3, 2) -
                                                     std::pow(yn / 1.7, 2)));
      const double nose = 0.25 * std::exp(-(xn * xn + (yn - 0.15) * (yn - 0.15)) / 0.04);
      basis.uv(i, 0) = u;
      basis.uv(i, 1) = v;
      basis.mean_shape.segment<3>(3 * i) << s * xn, s * yn, -s * (0.8 * cap + nose);
    }

  // Two triangles per cell, positive screen-space winding when viewed from -z
  // with y pointing down. Cells between the lips are left open.
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c) {
      if (r == m.upper_row && c >= m.first_col && c < m.last_col) continue;
      const int v00 = grid_index(r, c, cols), v01 = grid_index(r, c + 1, cols);
      const int v10 = grid_index(r + 1, c, cols), v11 = grid_index(r + 1, c + 1, cols);
      basis.faces.push_back({v00, v01, v11});
      basis.faces.push_back({v00, v11, v10});
    }

  for (int c = m.first_col; c <= m.last_col; ++c) {
    basis.lip_upper.push_back(grid_index(m.upper_row, c, cols));
    basis.lip_lower.push_back(grid_index(m.lower_row, c, cols));
  }

  // Landmarks: eye centres first, then the lips, a ring around the mouth and
  // an even subsample of the remaining even grid points.
  std::vector<int> lms{grid_index(m.eye_row, m.eye_col, cols),
                       grid_index(m.eye_row, cols - 1 - m.eye_col, cols)};
  lms.insert(lms.end(), basis.lip_upper.begin(), basis.lip_upper.end());
  lms.insert(lms.end(), basis.lip_lower.begin(), basis.lip_lower.end());
  const std::vector<int> ring{grid_index(m.upper_row - 2, m.first_col + 1, cols),
                              grid_index(m.upper_row - 2, m.last_col - 1, cols),
                              grid_index(m.lower_row + 2, m.first_col + 1, cols),
                              grid_index(m.lower_row + 2, m.last_col - 1, cols)};
  lms.insert(lms.end(), ring.begin(), ring.end());
  basis.mouth_landmarks.assign(lms.begin() + 2, lms.end());
  std::vector<int> candidates;
  for (int r = 0; r < rows; r += 2)
    for (int c = 0; c < cols; c += 2) {
      const int i = grid_index(r, c, cols);
      if (std::find(lms.begin(), lms.end(), i) == lms.end()) candidates.push_back(i);
    }
  const int need = cfg.n_landmarks - static_cast<int>(lms.size());
  if (need < 0 || need > static_cast<int>(candidates.size()))
    throw ConfigError("synthetic basis: n_landmarks out of range for this grid");
  for (int k = 0; k < need; ++k)
    lms.push_back(candidates[static_cast<std::size_t>(
        static_cast<long>(k) * static_cast<long>(candidates.size()) / need)]);
  basis.landmarks = std::move(lms);

  // Basis columns: jaw field, random expression fields, random shape fields.
  std::mt19937_64 rng(cfg.seed);
  const int n_total = cfg.n_alpha + cfg.n_beta;
  Eigen::MatrixXd raw(3 * v_count, n_total);
  raw.col(0).setZero();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int i = grid_index(r, c, cols);
      const double xn = basis.mean_shape[3 * i] / s;
      const double lateral = std::exp(-std::pow(xn / 0.8, 2));
      double dy = 0.0;
      if (r >= m.lower_row)
        dy = lateral;
      else if (r <= m.upper_row)
        dy = -0.15 * lateral * std::exp(-(m.upper_row - r) / 2.0);
      raw(3 * i + 1, 0) = dy;
    }
  for (int k = 1; k < n_total; ++k) raw.col(k) = smooth_random_field(basis.uv, rng);

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(3 * v_count, n_total);
  // Fix signs so each column keeps the orientation of its raw field.
  for (int k = 0; k < n_total; ++k)
    if (q.col(k).dot(raw.col(k)) < 0) q.col(k) *= -1.0;

  basis.exp_basis.resize(3 * v_count, cfg.n_beta);
  for (int k = 0; k < cfg.n_beta; ++k)
    basis.exp_basis.col(k) = q.col(k) * (0.5 * s * std::exp(-k / 20.0));
  basis.shape_basis.resize(3 * v_count, cfg.n_alpha);
  for (int k = 0; k < cfg.n_alpha; ++k)
    basis.shape_basis.col(k) = q.col(cfg.n_beta + k) * (0.4 * s * std::exp(-k / 25.0));

  basis.validate();
  return basis;
}

SyntheticActor make_actor(const MorphableBasis& basis, const SynthesisConfig& cfg) {
  static constexpr double kMouthEffect[] = {0.35, -0.3, -0.25, 0.3, 0.6, -0.15, 0.1};
  std::mt19937_64 rng(cfg.actor_seed * 0x9E3779B97F4A7C15ULL + 17);
  std::normal_distribution<double> n01;
  SyntheticActor actor;
  actor.alpha0.resize(basis.n_alpha());
  for (auto& a : actor.alpha0) a = n01(rng);
  const int span = std::min(24, basis.n_beta() - 1);
  for (int y = 0; y < cfg.n_emotions; ++y) {
    Eigen::VectorXd offset = Eigen::VectorXd::Zero(basis.n_beta());
    for (int k = 1; k <= span; ++k) offset[k] = n01(rng) * std::exp(-k / 12.0);
    if (span > 0) offset.segment(1, span) *= cfg.emotion_offset_norm / offset.segment(1, span).norm();
    offset[0] = y < 7 ? kMouthEffect[y] : 0.3 * n01(rng);
    actor.emotion_offsets.push_back(std::move(offset));
  }
  return actor;
}

int LabeledSample::label() const {
  const auto d = emotion.dominant();
  return d ? *d + 1 : 0;
}

Eigen::MatrixXd EmotionDataset::coefficient_matrix() const {
  if (samples.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()),
                    samples.front().coeffs.alpha.size() + samples.front().coeffs.beta.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = samples[i].coeffs.shape_expression().transpose();
  return m;
}

std::vector<int> EmotionDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label());
  return out;
}

FaceCoefficients synth_sample(const MorphableBasis& basis, const SyntheticActor& actor,
                              const SynthesisConfig& cfg, const Eigen::VectorXd& emotion,
                              double speech, std::uint64_t noise_seed) {
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> n01;
  FaceCoefficients c = FaceCoefficients::zeros(basis);
  c.alpha = actor.alpha0;
  for (int k = 0; k < std::min(10, basis.n_alpha()); ++k) c.alpha[k] += cfg.identity_jitter * n01(rng);
  c.beta[0] = speech;
  for (int y = 0; y < emotion.size(); ++y)
    if (emotion[y] != 0.0) c.beta += emotion[y] * actor.emotion_offsets[static_cast<std::size_t>(y)];
  for (int k = 1; k < std::min(16, basis.n_beta()); ++k) c.beta[k] += cfg.noise_sigma * n01(rng);
  return c;
}

EmotionDataset synth_emotion_dataset(const MorphableBasis& basis, std::uint64_t seed,
                                     const SynthesisConfig& cfg) {
  if (cfg.samples_per_emotion <= 0 || cfg.neutral_samples <= 0)
    throw DataError("synth_emotion_dataset: sample counts must be positive");
  if (cfg.intensity_levels <= 0 || cfg.n_emotions <= 0)
    throw ConfigError("synth_emotion_dataset: need at least one emotion and one level");
  const SyntheticActor actor = make_actor(basis, cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> speech(cfg.speech_low, cfg.speech_high);

  EmotionDataset ds;
  ds.n_emotions = cfg.n_emotions;
  ds.intensity_levels = cfg.intensity_levels;
  auto add = [&](int emotion, int level) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(cfg.n_emotions);
    if (emotion >= 0) e[emotion] = intensity_from_level(level, cfg.intensity_levels);
    const double sp = speech(rng);
    LabeledSample s{synth_sample(basis, actor, cfg, e, sp, rng()), EmotionVector(e), level};
    ds.samples.push_back(std::move(s));
  };
  for (int i = 0; i < cfg.neutral_samples; ++i) add(-1, 0);
  for (int y = 0; y < cfg.n_emotions; ++y)
    for (int level = 1; level <= cfg.intensity_levels; ++level) {
      const int count = cfg.samples_per_emotion / cfg.intensity_levels +
                        (level <= cfg.samples_per_emotion % cfg.intensity_levels ? 1 : 0);
      for (int i = 0; i < count; ++i) add(y, level);
    }
  return ds;
}

void save_dataset(const EmotionDataset& ds, const std::filesystem::path& path) {
  Archive a;
  a.meta["kind"] = "emotion_dataset";
  a.meta["version"] = kDatasetVersion;
  a.meta["n_emotions"] = ds.n_emotions;
  a.meta["intensity_levels"] = ds.intensity_levels;
  const auto n = static_cast<Eigen::Index>(ds.samples.size());
  if (n == 0) throw DataError("save_dataset: empty dataset");
  const auto& first = ds.samples.front().coeffs;
  Eigen::MatrixXd alpha(n, first.alpha.size()), beta(n, first.beta.size()), pose(n, 6),
      emotion(n, ds.n_emotions);
  std::vector<std::int64_t> levels;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = ds.samples[static_cast<std::size_t>(i)];
    alpha.row(i) = s.coeffs.alpha.transpose();
    beta.row(i) = s.coeffs.beta.transpose();
    pose.row(i) = s.coeffs.pose.transpose();
    emotion.row(i) = s.emotion.values().transpose();
    levels.push_back(s.level);
  }
  a.put("alpha", alpha);
  a.put("beta", beta);
  a.put("pose", pose);
  a.put("emotion", emotion);
  a.put("level", levels);
  a.save(path);
}

EmotionDataset load_dataset(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  require_kind(a, "emotion_dataset", kDatasetVersion);
  EmotionDataset ds;
  ds.n_emotions = a.meta.at("n_emotions");
  ds.intensity_levels = a.meta.at("intensity_levels");
  const auto alpha = a.matrix("alpha"), beta = a.matrix("beta"), pose = a.matrix("pose"),
             emotion = a.matrix("emotion");
  const auto levels = a.ints("level");
  for (Eigen::Index i = 0; i < alpha.rows(); ++i) {
    LabeledSample s;
    s.coeffs.alpha = alpha.row(i).transpose();
    s.coeffs.beta = beta.row(i).transpose();
    s.coeffs.pose = pose.row(i).transpose();
    s.emotion = EmotionVector(emotion.row(i).transpose());
    s.level = static_cast<int>(levels[static_cast<std::size_t>(i)]);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace emoedit
