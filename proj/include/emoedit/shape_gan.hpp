#pragma once

// Coefficient-space emotion editing: a generator G(c, e) -> c' and a critic
// with a real/fake score head and an emotion regression head, trained with a
// Wasserstein objective, gradient penalty, regression, vertex-space cycle,
// mouth-preservation and shape-regularization losses.
//
// Batches passed to the public functions hold one sample per row.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "emoedit/classifier.hpp"
#include "emoedit/morphable.hpp"
#include "emoedit/nn.hpp"
#include "emoedit/synthetic_face.hpp"

namespace emoedit {

struct ShapeGanConfig {
  int n_c = 144;
  int n_e = 7;
  int n_h = 128;
  int hidden_layers = 4;
  double lambda_gp = 10.0;
  double lambda_reg = 20.0;
  double lambda_rec = 5e3;
  double lambda_mouth = 1.0;
  double lambda_r = 1e3;
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  /// Cosine decay of the step size to lr * lr_final_fraction at the last
  /// iteration; 1 keeps it constant.
  double lr_final_fraction = 1.0;
  int iterations = 5000;
  int batch_size = 64;
  int critic_steps = 5;
  int eval_every = 100;               // iterations between validation passes
  double validation_fraction = 0.1;   // held out from the training set

  /// Full-size settings (hidden width 512, 80k iterations).
  static ShapeGanConfig full_size();
  void validate() const;
};

void to_json(nlohmann::json& j, const ShapeGanConfig& c);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, ShapeGanConfig& c);

/// layers[0..k-1]: leaky trunk, layers[k]: linear output.
struct GeneratorParams {
  Layers layers;

  bool empty() const { return layers.empty(); }
  int n_c() const;
  int n_e() const;
};

/// layers[0..k-1]: leaky trunk, then the score head (1 output) and the
/// emotion regression head (n_e outputs).
struct DiscriminatorParams {
  Layers layers;

  bool empty() const { return layers.size() < 2; }
  int trunk_depth() const { return static_cast<int>(layers.size()) - 2; }
  const Linear& rf_head() const { return layers[layers.size() - 2]; }
  const Linear& reg_head() const { return layers.back(); }
  int n_c() const;
  int n_e() const;
};

GeneratorParams init_generator(const ShapeGanConfig& cfg, std::uint64_t seed);
DiscriminatorParams init_discriminator(const ShapeGanConfig& cfg, std::uint64_t seed);

Eigen::VectorXd generator_forward(const GeneratorParams& g, const Eigen::VectorXd& c,
                                  const EmotionVector& e);
/// c: N x n_c, e: N x n_e -> N x n_c.
Eigen::MatrixXd generator_forward(const GeneratorParams& g, const Eigen::MatrixXd& c,
                                  const Eigen::MatrixXd& e);

struct CriticOutput {
  Eigen::VectorXd rf;   // N
  Eigen::MatrixXd reg;  // N x n_e
};
CriticOutput discriminator_forward(const DiscriminatorParams& d, const Eigen::MatrixXd& x);

/// Per-sample gradient of the score head with respect to the input, N x n_c.
Eigen::MatrixXd critic_input_gradients(const DiscriminatorParams& d, const Eigen::MatrixXd& x);

/// E[D_rf(real)] - E[D_rf(fake)].
double loss_adv(const DiscriminatorParams& d, const Eigen::MatrixXd& real,
                const Eigen::MatrixXd& fake);

struct GradientPenalty {
  double value = 0.0;
  Eigen::VectorXd grad_norms;    // |grad_x D_rf| at each interpolate
  Eigen::MatrixXd interpolates;  // N x n_c
  Layers param_grads;            // d value / d parameters, same layout as D
};

/// Gradient penalty at x = u * real + (1 - u) * fake with the given per-sample u.
GradientPenalty gradient_penalty(const DiscriminatorParams& d, const Eigen::MatrixXd& real,
                                 const Eigen::MatrixXd& fake, const Eigen::VectorXd& u,
                                 bool with_param_grads = false);
/// Same, drawing u ~ U(0,1) per sample from a stream seeded with `seed`.
double loss_gp(const DiscriminatorParams& d, const Eigen::MatrixXd& real,
               const Eigen::MatrixXd& fake, std::uint64_t seed);

/// E|e~ - D_reg(c)|^2.
double loss_reg_d(const DiscriminatorParams& d, const Eigen::MatrixXd& c,
                  const Eigen::MatrixXd& e_tilde);
/// E|e - D_reg(G(c, e))|^2.
double loss_reg_g(const DiscriminatorParams& d, const GeneratorParams& g,
                  const Eigen::MatrixXd& c, const Eigen::MatrixXd& e);

/// The two halves of a generator batch: neutral sources with target
/// emotions, and emotional ("starred") sources with their own labels.
/// Either half may be empty.
struct GeneratorBatch {
  Eigen::MatrixXd neutral;         // Nn x n_c
  Eigen::MatrixXd targets;         // Nn x n_e
  Eigen::MatrixXd starred;         // Ns x n_c
  Eigen::MatrixXd starred_labels;  // Ns x n_e
};

/// Vertex-space quadratic forms used by the shape losses.
struct ShapeLossGeometry {
  Eigen::MatrixXd full;   // B^T B
  Eigen::MatrixXd mouth;  // sum over lip pairs of (B_u - B_d)^T (B_u - B_d)
  Eigen::MatrixXd shape;  // B_shape^T B_shape padded to n_c x n_c

  static ShapeLossGeometry from_basis(const MorphableBasis& basis);
};

/// E|V(c) - V(G(G(c,e),0))|^2 + E|V(c*) - V(G(G(c*,0),e*))|^2.
double loss_rec(const GeneratorParams& g, const MorphableBasis& basis, const GeneratorBatch& batch);
/// Change of upper-minus-lower lip vectors between c and G(c,e), plus the
/// starred term with target 0.
double loss_mouth(const GeneratorParams& g, const MorphableBasis& basis, const GeneratorBatch& batch);
/// E|V((alpha,0)) - V((alpha',0))|^2 with alpha' from G(c,e).
double loss_r(const GeneratorParams& g, const MorphableBasis& basis, const Eigen::MatrixXd& c,
              const Eigen::MatrixXd& e);

struct LossComponents {
  double adv = 0.0;
  double gp = 0.0;
  double reg_d = 0.0;
  double reg_g = 0.0;
  double rec = 0.0;
  double mouth = 0.0;
  double r = 0.0;
};

/// (L_D, L_G) = (-adv + l_gp gp + l_reg reg_d,
///               adv + l_reg reg_g + l_rec rec + l_mouth mouth + l_r r).
std::pair<double, double> total_losses(const LossComponents& c, const ShapeGanConfig& cfg);

/// Critic loss L_D with its parameter gradient. Real and fake batches must
/// have equal size (one interpolation weight u per pair).
struct CriticObjective {
  LossComponents parts;  // adv, gp, reg_d
  double loss = 0.0;
  Layers grads;
};
CriticObjective critic_objective(const DiscriminatorParams& d, const Eigen::MatrixXd& real,
                                 const Eigen::MatrixXd& real_labels, const Eigen::MatrixXd& fake,
                                 const Eigen::VectorXd& u, const ShapeGanConfig& cfg);

/// Generator loss L_G with its parameter gradient. The fake batch is
/// G(batch); `real` only contributes the constant half of adv.
struct GeneratorObjective {
  LossComponents parts;  // adv, reg_g, rec, mouth, r
  double loss = 0.0;
  Layers grads;
};
GeneratorObjective generator_objective(const GeneratorParams& g, const DiscriminatorParams& d,
                                       const ShapeLossGeometry& geo, const GeneratorBatch& batch,
                                       const Eigen::MatrixXd& real, const ShapeGanConfig& cfg);

struct ShapeGanLogRow {
  int iteration = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  LossComponents parts;
  double val_reg_mse = 0.0;  // NaN when not evaluated at this iteration
  double wall_seconds = 0.0;
};

struct ShapeGanResult {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  std::vector<ShapeGanLogRow> log;
};

using ProgressFn = std::function<void(const ShapeGanLogRow&)>;

/// Deterministic for a fixed (dataset, basis, config, seed).
ShapeGanResult train_shape_gan(const EmotionDataset& dataset, const MorphableBasis& basis,
                               const ShapeGanConfig& cfg, std::uint64_t seed,
                               const ProgressFn& progress = {});

void write_training_log(const std::vector<ShapeGanLogRow>& log, const std::filesystem::path& path);

/// (alpha', beta') = G((alpha, beta), e); pose, delta and gamma copied.
FaceCoefficients edit_shape(const GeneratorParams& g, const FaceCoefficients& coeffs,
                            const EmotionVector& e);

/// Held-out evaluation of a trained generator on neutral source coefficients.
struct ShapeEditReport {
  /// Fraction of G(c, e_y at intensity 1) the judge labels as emotion y.
  double target_accuracy = 0.0;
  /// Mean per-vertex displacement of G(c, 0) from c, over the inter-ocular distance.
  double neutral_displacement_ratio = 0.0;
  /// [emotion][k]: mean per-vertex displacement at intensity k / 2, k = 0, 1, 2.
  std::vector<std::array<double, 3>> displacement_by_intensity;
  bool monotone = false;
  /// Mean RMS (over lip pairs) change of the upper-minus-lower lip vectors
  /// between c and G(c, e_y at intensity 1), model units.
  double lip_deviation = 0.0;
};

/// `judge` must classify coefficient vectors into 1 + n_e classes
/// (0 = neutral, 1 + y = emotion y).
ShapeEditReport evaluate_shape_edits(const GeneratorParams& g, const MorphableBasis& basis,
                                     const SoftmaxClassifier& judge,
                                     const Eigen::MatrixXd& neutral_coeffs);

struct ShapeGanCheckpoint {
  ShapeGanConfig config;
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  std::string basis_fingerprint;
};

void save_shape_checkpoint(const ShapeGanCheckpoint& ckpt, const MorphableBasis& basis,
                           const std::filesystem::path& path);
/// Throws ModelMismatch when the checkpoint was trained on a different basis.
ShapeGanCheckpoint load_shape_checkpoint(const std::filesystem::path& path,
                                         const MorphableBasis& basis);

}  // namespace emoedit
