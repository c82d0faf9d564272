#include "emoedit/morphable.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"
#include "emoedit/hash.hpp"

namespace emoedit {
namespace {

void check_indices(const std::vector<int>& idx, int n_vertices, const char* what) {
  for (int i : idx)
    if (i < 0 || i >= n_vertices)
      throw DataError(std::string("basis: ") + what + " index " + std::to_string(i) +
                      " out of range [0, " + std::to_string(n_vertices) + ")");
}

std::vector<std::int64_t> widen(const std::vector<int>& v) {
  return {v.begin(), v.end()};
}

std::vector<int> narrow(const std::vector<std::int64_t>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

Eigen::MatrixXd MorphableBasis::combined_basis() const {
  Eigen::MatrixXd b(shape_basis.rows(), n_coeffs());
  b << shape_basis, exp_basis;
  return b;
}

void MorphableBasis::validate() const {
  if (mean_shape.size() == 0 || mean_shape.size() % 3 != 0)
    throw DimensionError("basis: mean_shape length must be a positive multiple of 3");
  const int v = n_vertices();
  if (shape_basis.rows() != 3 * v || exp_basis.rows() != 3 * v)
    throw DimensionError("basis: basis matrices must have 3V = " + std::to_string(3 * v) +
                         " rows");
  if (uv.rows() != v)
    throw DimensionError("basis: uv must have one row per vertex");
  if ((uv.array() < 0.0).any() || (uv.array() > 1.0).any())
    throw DataError("basis: uv coordinates must lie in [0,1]^2");
  for (const auto& f : faces)
    for (int i : f)
      if (i < 0 || i >= v) throw DataError("basis: face index out of range");
  check_indices(lip_upper, v, "lip_upper");
  check_indices(lip_lower, v, "lip_lower");
  check_indices(landmarks, v, "landmark");
  check_indices(mouth_landmarks, v, "mouth_landmark");
  if (lip_upper.size() != lip_lower.size())
    throw DataError("basis: lip_upper and lip_lower must have equal length");
  std::set<int> upper(lip_upper.begin(), lip_upper.end());
  for (int i : lip_lower)
    if (upper.count(i)) throw DataError("basis: lip_upper and lip_lower must be disjoint");
  std::set<int> lm(landmarks.begin(), landmarks.end());
  for (int i : mouth_landmarks)
    if (!lm.count(i)) throw DataError("basis: mouth_landmarks must be a subset of landmarks");
  if (landmarks.size() < 2)
    throw DataError("basis: need at least the two eye-centre landmarks");
}

std::vector<int> MorphableBasis::lip_loop() const {
  std::vector<int> loop(lip_upper.begin(), lip_upper.end());
  loop.insert(loop.end(), lip_lower.rbegin(), lip_lower.rend());
  return loop;
}

double MorphableBasis::inter_ocular_distance() const {
  const Eigen::Vector3d a = mean_shape.segment<3>(3 * landmarks[0]);
  const Eigen::Vector3d b = mean_shape.segment<3>(3 * landmarks[1]);
  return (a - b).norm();
}

void save_basis(const MorphableBasis& basis, const std::filesystem::path& path) {
  basis.validate();
  Archive a;
  a.meta["kind"] = "basis";
  a.meta["version"] = kBasisVersion;
  a.meta["n_vertices"] = basis.n_vertices();
  a.meta["n_alpha"] = basis.n_alpha();
  a.meta["n_beta"] = basis.n_beta();
  a.put("mean_shape", basis.mean_shape);
  a.put("shape_basis", basis.shape_basis);
  a.put("exp_basis", basis.exp_basis);
  std::vector<std::int64_t> faces;
  for (const auto& f : basis.faces) faces.insert(faces.end(), f.begin(), f.end());
  a.put("faces", faces);
  a.put("uv", Eigen::MatrixXd(basis.uv));
  a.put("lip_upper", widen(basis.lip_upper));
  a.put("lip_lower", widen(basis.lip_lower));
  a.put("landmarks", widen(basis.landmarks));
  a.put("mouth_landmarks", widen(basis.mouth_landmarks));
  a.save(path);
}

std::string basis_fingerprint(const MorphableBasis& basis) {
  Sha256 h;
  h.update(Eigen::MatrixXd(basis.mean_shape)).update(basis.shape_basis).update(basis.exp_basis);
  Eigen::MatrixXd faces(static_cast<Eigen::Index>(basis.faces.size()), 3);
  for (std::size_t i = 0; i < basis.faces.size(); ++i)
    for (int k = 0; k < 3; ++k) faces(static_cast<Eigen::Index>(i), k) = basis.faces[i][k];
  h.update(faces).update(Eigen::MatrixXd(basis.uv));
  for (const auto* idx : {&basis.lip_upper, &basis.lip_lower, &basis.landmarks, &basis.mouth_landmarks}) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(idx->size()), 1);
    for (std::size_t i = 0; i < idx->size(); ++i) m(static_cast<Eigen::Index>(i), 0) = (*idx)[i];
    h.update(m);
  }
  return h.hex();
}

MorphableBasis load_basis(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  require_kind(a, "basis", kBasisVersion);
  MorphableBasis b;
  b.mean_shape = a.vector("mean_shape");
  b.shape_basis = a.matrix("shape_basis");
  b.exp_basis = a.matrix("exp_basis");
  const auto faces = a.ints("faces");
  if (faces.size() % 3 != 0) throw DataError("basis: faces array length not divisible by 3");
  for (std::size_t i = 0; i < faces.size(); i += 3)
    b.faces.push_back({static_cast<int>(faces[i]), static_cast<int>(faces[i + 1]),
                       static_cast<int>(faces[i + 2])});
  b.uv = a.matrix("uv");
  b.lip_upper = narrow(a.ints("lip_upper"));
  b.lip_lower = narrow(a.ints("lip_lower"));
  b.landmarks = narrow(a.ints("landmarks"));
  b.mouth_landmarks = narrow(a.ints("mouth_landmarks"));
  b.validate();
  return b;
}

FaceCoefficients FaceCoefficients::zeros(const MorphableBasis& basis) {
  FaceCoefficients c;
  c.alpha = Eigen::VectorXd::Zero(basis.n_alpha());
  c.beta = Eigen::VectorXd::Zero(basis.n_beta());
  return c;
}

Eigen::VectorXd FaceCoefficients::shape_expression() const {
  Eigen::VectorXd c(alpha.size() + beta.size());
  c << alpha, beta;
  return c;
}

void FaceCoefficients::set_shape_expression(const Eigen::VectorXd& c) {
  if (c.size() != alpha.size() + beta.size())
    throw DimensionError("coefficients: concatenated vector has length " +
                         std::to_string(c.size()) + ", expected " +
                         std::to_string(alpha.size() + beta.size()));
  alpha = c.head(alpha.size());
  beta = c.tail(beta.size());
}

void FaceCoefficients::check_against(const MorphableBasis& basis) const {
  if (alpha.size() != basis.n_alpha() || beta.size() != basis.n_beta())
    throw DimensionError("coefficients (alpha " + std::to_string(alpha.size()) + ", beta " +
                         std::to_string(beta.size()) + ") do not match basis (alpha " +
                         std::to_string(basis.n_alpha()) + ", beta " +
                         std::to_string(basis.n_beta()) + ")");
  if (!alpha.allFinite() || !beta.allFinite() || !pose.allFinite())
    throw DataError("coefficients contain non-finite values");
}

EmotionVector::EmotionVector(Eigen::VectorXd values, EmotionMode mode, double max_intensity)
    : values_(std::move(values)) {
  validate(values_, mode, max_intensity);
}

EmotionVector EmotionVector::neutral(int n_emotions) {
  return EmotionVector(Eigen::VectorXd::Zero(n_emotions));
}

EmotionVector EmotionVector::single(int n_emotions, int emotion, double intensity) {
  if (emotion < 0 || emotion >= n_emotions)
    throw ConfigError("emotion index " + std::to_string(emotion) + " out of range");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n_emotions);
  v[emotion] = intensity;
  return EmotionVector(std::move(v), EmotionMode::strict, std::max(1.0, intensity));
}

bool EmotionVector::is_neutral() const { return (values_.array() == 0.0).all(); }

std::optional<int> EmotionVector::dominant() const {
  if (values_.size() == 0 || is_neutral()) return std::nullopt;
  Eigen::Index i;
  values_.maxCoeff(&i);
  return static_cast<int>(i);
}

void EmotionVector::validate(const Eigen::VectorXd& values, EmotionMode mode,
                             double max_intensity) {
  if (!values.allFinite()) throw ConfigError("emotion vector has non-finite entries");
  if ((values.array() < 0.0).any())
    throw ConfigError("emotion vector components must be non-negative");
  if ((values.array() > max_intensity).any())
    throw ConfigError("emotion intensity exceeds " + std::to_string(max_intensity));
  if (mode == EmotionMode::strict && (values.array() != 0.0).count() > 1)
    throw ConfigError("strict emotion mode allows at most one non-zero component");
}

const std::vector<std::string>& default_emotion_names() {
  static const std::vector<std::string> names{"happy",     "sad",       "angry",       "fearful",
                                              "surprised", "disgusted", "contemptuous"};
  return names;
}

int emotion_index(const std::vector<std::string>& names, const std::string& name) {
  if (name == "neutral") return -1;
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DataError("unknown emotion '" + name + "'");
  return static_cast<int>(it - names.begin());
}

double intensity_from_level(int level, int n_levels) {
  if (n_levels <= 0 || level < 0 || level > n_levels)
    throw DataError("intensity level " + std::to_string(level) + " outside 0.." +
                    std::to_string(n_levels));
  return static_cast<double>(level) / n_levels;
}

Eigen::VectorXd reconstruct_flat(const MorphableBasis& basis, const Eigen::VectorXd& c) {
  if (c.size() != basis.n_coeffs())
    throw DimensionError("coefficient vector length " + std::to_string(c.size()) +
                         " does not match basis n_coeffs " + std::to_string(basis.n_coeffs()));
  Eigen::VectorXd s = basis.mean_shape;
  s.noalias() += basis.shape_basis * c.head(basis.n_alpha());
  s.noalias() += basis.exp_basis * c.tail(basis.n_beta());
  return s;
}

Vertices to_vertices(const Eigen::VectorXd& flat) {
  return Eigen::Map<const Vertices>(flat.data(), flat.size() / 3, 3);
}

Vertices reconstruct_shape(const MorphableBasis& basis, const FaceCoefficients& coeffs) {
  coeffs.check_against(basis);
  return to_vertices(reconstruct_flat(basis, coeffs.shape_expression()));
}

Eigen::Matrix3d rotation_matrix(double rx, double ry, double rz) {
  // Intrinsic X, then Y, then Z: R = Rx * Ry * Rz.
  const Eigen::Matrix3d r = (Eigen::AngleAxisd(rx, Eigen::Vector3d::UnitX()) *
                             Eigen::AngleAxisd(ry, Eigen::Vector3d::UnitY()) *
                             Eigen::AngleAxisd(rz, Eigen::Vector3d::UnitZ()))
                                .toRotationMatrix();
  return r;
}

Vertices apply_pose(const Vertices& vertices, const Pose& pose) {
  if (!pose.allFinite()) throw DataError("apply_pose: non-finite pose");
  if (!vertices.allFinite()) throw DataError("apply_pose: non-finite vertices");
  const Eigen::Matrix3d r = rotation_matrix(pose[0], pose[1], pose[2]);
  const Eigen::RowVector3d t = pose.tail<3>().transpose();
  Vertices out = vertices * r.transpose();
  out.rowwise() += t;
  return out;
}

Points2d project_landmarks(const MorphableBasis& basis, const FaceCoefficients& coeffs) {
  const Vertices posed = apply_pose(reconstruct_shape(basis, coeffs), coeffs.pose);
  Points2d out(basis.landmarks.size(), 2);
  for (std::size_t i = 0; i < basis.landmarks.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = posed.row(basis.landmarks[i]).head<2>();
  return out;
}

CoefficientFit fit_coefficients(const Points2d& landmarks_2d, const MorphableBasis& basis,
                                const Pose& pose, double ridge) {
  const auto n_lm = static_cast<Eigen::Index>(basis.landmarks.size());
  if (landmarks_2d.rows() != n_lm)
    throw DimensionError("fit_coefficients: got " + std::to_string(landmarks_2d.rows()) +
                         " landmarks, basis defines " + std::to_string(n_lm));
  if (!(ridge >= 0.0)) throw ConfigError("fit_coefficients: ridge must be non-negative");
  if (!landmarks_2d.allFinite() || !pose.allFinite())
    throw DataError("fit_coefficients: non-finite input");

  const int n = basis.n_coeffs();
  const Eigen::Matrix3d r = rotation_matrix(pose[0], pose[1], pose[2]);
  const Eigen::Matrix<double, 2, 3> pr = r.topRows<2>();
  const Eigen::MatrixXd full = basis.combined_basis();

  Eigen::MatrixXd a(2 * n_lm, n);
  Eigen::VectorXd b(2 * n_lm);
  for (Eigen::Index l = 0; l < n_lm; ++l) {
    const int v = basis.landmarks[static_cast<std::size_t>(l)];
    a.middleRows<2>(2 * l).noalias() = pr * full.middleRows<3>(3 * v);
    const Eigen::Vector2d base =
        pr * basis.mean_shape.segment<3>(3 * v) + pose.segment<2>(3);
    b.segment<2>(2 * l) = landmarks_2d.row(l).transpose() - base;
  }

  Eigen::VectorXd c;
  if (ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < n)
      throw NumericalError("fit_coefficients: normal equations are rank deficient (rank " +
                           std::to_string(qr.rank()) + " < " + std::to_string(n) +
                           "); use a positive ridge");
    c = qr.solve(b);
  } else {
    Eigen::MatrixXd normal = a.transpose() * a;
    normal.diagonal().array() += ridge;
    c = normal.ldlt().solve(a.transpose() * b);
  }

  CoefficientFit fit;
  fit.alpha = c.head(basis.n_alpha());
  fit.beta = c.tail(basis.n_beta());
  fit.rms_residual = std::sqrt((a * c - b).squaredNorm() / static_cast<double>(b.size()));
  return fit;
}

}  // namespace emoedit
