#pragma once

// Linear morphable face model: bases, coefficient containers, emotion
// vectors, shape reconstruction, rigid pose and landmark fitting.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace emoedit {

/// V x 3 vertex positions, one vertex per row.
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
/// L x 2 image-plane points, one point per row.
using Points2d = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
/// Three rotation angles (radians, intrinsic X then Y then Z) followed by a
/// translation in model units.
using Pose = Eigen::Matrix<double, 6, 1>;
using Triangle = std::array<int, 3>;

inline constexpr int kBasisVersion = 1;

struct MorphableBasis {
  Eigen::VectorXd mean_shape;    // 3V, xyz interleaved per vertex
  Eigen::MatrixXd shape_basis;   // 3V x n_alpha
  Eigen::MatrixXd exp_basis;     // 3V x n_beta
  std::vector<Triangle> faces;
  Eigen::MatrixX2d uv;           // V x 2 in [0,1]^2, top-left origin
  std::vector<int> lip_upper;    // ordered left to right
  std::vector<int> lip_lower;    // ordered left to right, paired with lip_upper
  /// By convention the first two entries are the left and right eye centres.
  std::vector<int> landmarks;
  std::vector<int> mouth_landmarks;  // subset of `landmarks`

  int n_vertices() const { return static_cast<int>(mean_shape.size() / 3); }
  int n_alpha() const { return static_cast<int>(shape_basis.cols()); }
  int n_beta() const { return static_cast<int>(exp_basis.cols()); }
  int n_coeffs() const { return n_alpha() + n_beta(); }

  /// [shape_basis | exp_basis], 3V x n_coeffs.
  Eigen::MatrixXd combined_basis() const;

  /// Throws DimensionError / DataError describing the first violated invariant.
  void validate() const;

  /// Vertices of the lip loop: upper lip left to right, then lower lip right
  /// to left. Encloses the mouth cavity.
  std::vector<int> lip_loop() const;

  /// Distance between the two eye-centre landmarks of the mean shape.
  double inter_ocular_distance() const;
};

void save_basis(const MorphableBasis& basis, const std::filesystem::path& path);
/// SHA-256 over the basis arrays; stored in checkpoints to detect mismatches.
std::string basis_fingerprint(const MorphableBasis& basis);
MorphableBasis load_basis(const std::filesystem::path& path);

struct FaceCoefficients {
  Eigen::VectorXd alpha;                 // shape
  Eigen::VectorXd beta;                  // expression
  std::optional<Eigen::VectorXd> delta;  // texture, carried unchanged
  std::optional<Eigen::VectorXd> gamma;  // lighting, carried unchanged
  Pose pose = Pose::Zero();

  static FaceCoefficients zeros(const MorphableBasis& basis);

  /// (alpha, beta) concatenated.
  Eigen::VectorXd shape_expression() const;
  void set_shape_expression(const Eigen::VectorXd& c);

  void check_against(const MorphableBasis& basis) const;
};

enum class EmotionMode { strict, multi_label };

/// Non-negative per-emotion intensities; the zero vector is neutral.
class EmotionVector {
 public:
  EmotionVector() = default;
  explicit EmotionVector(Eigen::VectorXd values,
                         EmotionMode mode = EmotionMode::strict,
                         double max_intensity = 1.0);

  static EmotionVector neutral(int n_emotions);
  static EmotionVector single(int n_emotions, int emotion, double intensity);

  const Eigen::VectorXd& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  bool is_neutral() const;
  /// Index of the largest component, or nullopt when neutral.
  std::optional<int> dominant() const;

  /// Throws ConfigError unless the vector is valid under `mode`.
  static void validate(const Eigen::VectorXd& values, EmotionMode mode,
                       double max_intensity = 1.0);

 private:
  Eigen::VectorXd values_;
};

/// Non-neutral emotion names in vector order.
const std::vector<std::string>& default_emotion_names();
/// Index into `names`, or -1 for "neutral"; throws DataError for unknown names.
int emotion_index(const std::vector<std::string>& names, const std::string& name);

/// Normalized intensity of a discrete level (1..n_levels) -> level / n_levels.
double intensity_from_level(int level, int n_levels);

/// S = mean + B_shape alpha + B_exp beta as V x 3 (pose not applied).
Vertices reconstruct_shape(const MorphableBasis& basis, const FaceCoefficients& coeffs);
/// Same, from the concatenated (alpha, beta) vector, flattened to 3V.
Eigen::VectorXd reconstruct_flat(const MorphableBasis& basis, const Eigen::VectorXd& c);

Vertices to_vertices(const Eigen::VectorXd& flat);

Eigen::Matrix3d rotation_matrix(double rx, double ry, double rz);
Vertices apply_pose(const Vertices& vertices, const Pose& pose);

/// Orthographic (x, y) of the posed landmark vertices, L x 2, model units.
Points2d project_landmarks(const MorphableBasis& basis, const FaceCoefficients& coeffs);

struct CoefficientFit {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  double rms_residual = 0.0;  // model units, over all 2L coordinates
};

/// Ridge-regularized linear least squares for (alpha, beta) from orthographic
/// landmarks under a known pose. The ridge term penalizes the whole
/// concatenated coefficient vector.
CoefficientFit fit_coefficients(const Points2d& landmarks_2d,
                                const MorphableBasis& basis, const Pose& pose,
                                double ridge);

}  // namespace emoedit
