#pragma once

// Stacked-latent texture autoencoder and latent-space emotion editing.
//
// The decoder is a sum of n layers. Layer i maps its own code w_i through an
// affine map to an image at resolution work / 2^(n-1-i); the layer images are
// bilinearly upsampled to the working resolution, summed, and upsampled again
// to the texture size. The encoder area-averages the texture to the working
// resolution and regresses all n codes with one affine map, optionally after
// a leaky hidden layer.
//
// Working-resolution images are stored channel-major: index c*r*r + y*r + x.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "emoedit/image.hpp"
#include "emoedit/morphable.hpp"
#include "emoedit/nn.hpp"

namespace emoedit {

class Archive;

/// n per-layer codes, one per row (n x d).
struct LatentStack {
  Eigen::MatrixXd codes;

  int n_layers() const { return static_cast<int>(codes.rows()); }
  int dim() const { return static_cast<int>(codes.cols()); }
  /// Row-major flattening: w_1 then w_2 ...
  Eigen::VectorXd flat() const;
  static LatentStack from_flat(const Eigen::VectorXd& v, int n_layers, int dim);
  bool operator==(const LatentStack& o) const { return codes == o.codes; }
};

/// Fixed random 3x3 convolution (zero padding) followed by a leaky rectifier.
/// Serves as the perceptual feature map in training and as a perceptual
/// distance for the metrics.
class RandomConvFeatures {
 public:
  RandomConvFeatures() = default;
  RandomConvFeatures(int in_channels, int out_channels, std::uint64_t seed);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  std::uint64_t seed() const { return seed_; }

  /// x: channel-major image of h x w planes (in_channels of them).
  Eigen::VectorXd forward(const Eigen::VectorXd& x, int h, int w, Eigen::VectorXd* pre = nullptr) const;
  /// Gradient with respect to x given dL/dfeatures and the cached pre-activation.
  Eigen::VectorXd backward(const Eigen::VectorXd& d_feat, const Eigen::VectorXd& pre, int h, int w) const;

  /// Root mean squared feature difference of two equally sized images.
  double distance(const Image& a, const Image& b) const;

 private:
  int in_ = 0, out_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> w_;  // [out][in][3][3]
};

struct TextureModelConfig {
  int tex_size = 256;
  int work_size = 64;
  int n_layers = 4;
  int latent_dim = 64;
  int encoder_hidden = 0;  // width of the encoder's hidden layer, 0 = affine encoder
  int channels = 3;
  int feature_channels = 8;
  std::uint64_t feature_seed = 1234;
  double perceptual_weight = 1.0;
  int joint_epochs = 30;    // phase 1: decoder and encoder together
  int encoder_epochs = 15;  // phase 2: decoder frozen
  int batch_size = 16;
  double lr = 1e-3;
  double validation_fraction = 0.1;

  /// Resolution of layer i's image.
  int layer_size(int i) const { return work_size >> (n_layers - 1 - i); }
  void validate() const;
};

void to_json(nlohmann::json& j, const TextureModelConfig& c);
void from_json(const nlohmann::json& j, TextureModelConfig& c);

struct TextureModel {
  TextureModelConfig config;
  Layers decoder;  // n affine maps, layer i: latent_dim -> channels * layer_size(i)^2
  Layers encoder;  // optional leaky hidden layer, then affine to n * latent_dim

  bool empty() const { return decoder.empty(); }
  /// SHA-256 over config and parameters.
  std::string id() const;
};

/// Randomly initialized model (encoder and decoder weights small Gaussian).
TextureModel init_texture_model(const TextureModelConfig& cfg, std::uint64_t seed);

/// Decoder output at working resolution, before clamping.
Eigen::VectorXd decode_work(const TextureModel& model, const LatentStack& w);
/// Channel-major copy of an image, and back (values clamped to [0,1]).
Eigen::VectorXd planar(const Image& img);
Image from_planar(const Eigen::VectorXd& v, int width, int height, int channels);

/// Texture in [0,1] at tex_size.
Image decode(const TextureModel& model, const LatentStack& w);

/// Area-averaged working-resolution vector of a texture at tex_size.
Eigen::VectorXd texture_to_work(const TextureModelConfig& cfg, const Image& texture);
/// Bilinear upsampling of a working-resolution vector to a tex_size image (no clamping
/// beyond the image container's own).
Image work_to_texture(const TextureModelConfig& cfg, const Eigen::VectorXd& work);

/// Invalid texels (valid <= 0.5) are filled from the nearest valid texel first.
LatentStack encode(const TextureModel& model, const Image& texture, const Image* valid = nullptr);

struct LabeledTexture {
  Image texture;
  Image valid;       // empty = all valid
  int emotion = -1;  // -1 neutral, else emotion index
  int level = 0;     // intensity level, 0 for neutral
};

struct TextureTrainLogRow {
  int phase = 1;
  int epoch = 0;
  double train_loss = 0.0;  // pixel + weighted perceptual, training split
  double val_mae = 0.0;     // mean abs reconstruction error at working resolution
};

struct TextureTrainResult {
  TextureModel model;
  std::vector<TextureTrainLogRow> log;
};

/// Phase 1 trains decoder and encoder on reconstruction; phase 2 fine-tunes
/// the encoder with the decoder frozen. Needs neutral and at least one emotion.
TextureTrainResult train_texture_model(const std::vector<LabeledTexture>& textures,
                                       const TextureModelConfig& cfg, std::uint64_t seed);

/// Same two phases on paired data: the decoder learns the targets, then the
/// encoder learns to map each input to the latent of its target. With
/// change_weight k > 0 the pixel loss is weighted by 1 + k * c / max(c), c
/// the mean |target - input| per pixel.
TextureTrainResult train_translator(const std::vector<Image>& inputs, const std::vector<Image>& targets,
                                    const TextureModelConfig& cfg, std::uint64_t seed,
                                    double change_weight = 0.0);

/// Largest ratio |enc(a) - enc(b)| / |a - b| over consecutive pairs.
double empirical_lipschitz(const TextureModel& model, const std::vector<Image>& textures);

/// Linear decoder with smooth random layer responses around `base` and an
/// encoder that is its exact least-squares inverse (encode(decode(w)) = w
/// while no pixel clips).
TextureModel make_fixture_model(const TextureModelConfig& cfg, std::uint64_t seed, double amplitude,
                                const Eigen::VectorXd& base_work);

/// decode(w0 + delta) - decode(w0) before clamping, at tex_size, channel-major.
Eigen::VectorXd linear_response(const TextureModel& model, const LatentStack& delta);

struct EditingDirectionSet {
  std::map<int, LatentStack> directions;  // emotion index -> d_y
  std::string source_hash;
  std::string model_id;
  std::map<int, int> counts;  // emotion index (-1 = neutral) -> textures averaged
};

/// d_y = mean latent of the highest-level textures of emotion y minus the mean
/// latent of the neutral textures. Means use sorted pairwise summation, so the
/// result does not depend on the input order.
EditingDirectionSet compute_editing_directions(const TextureModel& model,
                                               const std::vector<LabeledTexture>& textures,
                                               int n_emotions);

/// Order-independent mean: vectors sorted lexicographically, then summed pairwise.
Eigen::VectorXd stable_mean(std::vector<Eigen::VectorXd> vs);

struct TextureEditOptions {
  bool allow_extrapolation = false;  // permit intensities up to 2
};

/// enc(t0) + sum_y e_y d_y.
LatentStack edit_latent(const EditingDirectionSet& dirs, const LatentStack& w0, const EmotionVector& e,
                        const TextureEditOptions& opts = {});
Image edit_texture(const TextureModel& model, const EditingDirectionSet& dirs, const Image& t0,
                   const EmotionVector& e, const Image* valid = nullptr,
                   const TextureEditOptions& opts = {});

/// Parameters and config under the given layer prefix, for embedding in other archives.
void put_texture_model(Archive& a, const TextureModel& model, const std::string& prefix);
TextureModel get_texture_model(const Archive& a, const std::string& prefix);

void save_texture_model(const TextureModel& model, const std::filesystem::path& path,
                        const std::string& kind = "texture_model");
TextureModel load_texture_model(const std::filesystem::path& path,
                                const std::string& kind = "texture_model");
void save_directions(const EditingDirectionSet& dirs, const std::filesystem::path& path);
EditingDirectionSet load_directions(const std::filesystem::path& path);

}  // namespace emoedit
