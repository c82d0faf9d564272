#pragma once

// Evaluation: linearity of intensity editing (LIE), Fréchet distance between
// fitted feature Gaussians, identity similarity, and the desk-scale feature
// extractors behind them.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "emoedit/classifier.hpp"
#include "emoedit/image.hpp"
#include "emoedit/texture_space.hpp"

namespace emoedit {

struct FeatureSet {
  Eigen::MatrixXd features;  // N x D
  std::string extractor_id;
};

using DistanceFn = std::function<double(const Image&, const Image&)>;

/// Euclidean distance between the pixel vectors.
double pixel_l2(const Image& a, const Image& b);

/// Population standard deviation over mean; 0 when the mean is 0.
double coefficient_of_variation(const std::vector<double>& values);

/// CV of the distances between consecutive images (n + 1 images, n >= 2).
double lie_metric(const std::vector<Image>& images, const DistanceFn& distance);

inline constexpr double kFrechetEpsilon = 1e-6;

/// |mu_A - mu_B|^2 + tr(S_A + S_B - 2 (S_A^1/2 S_B S_A^1/2)^1/2), with
/// unbiased covariances regularized by eps * I.
double frechet_distance(const FeatureSet& a, const FeatureSet& b, double eps = kFrechetEpsilon);

/// Cosine of the mean feature vectors.
double identity_similarity(const FeatureSet& a, const FeatureSet& b);

/// Gray thumbnail of an image, flattened (size x size values).
Eigen::VectorXd thumbnail(const Image& img, int size);

/// Softmax classifier over image thumbnails; features are its logits.
struct ImageEmbedder {
  int thumb_size = 16;
  SoftmaxClassifier head;

  std::string id() const;
  FeatureSet embed(const std::vector<Image>& images) const;
  int predict(const Image& img) const;
};

ImageEmbedder train_image_embedder(const std::vector<Image>& images, const std::vector<int>& labels,
                                   int n_classes, int thumb_size = 16, const ClassifierConfig& cfg = {});

/// Generic features: random-conv responses average-pooled on a grid x grid layout.
struct ConvEmbedder {
  RandomConvFeatures conv;
  int grid = 4;

  std::string id() const;
  FeatureSet embed(const std::vector<Image>& images) const;
};

void save_image_embedder(const ImageEmbedder& e, const std::filesystem::path& path);
ImageEmbedder load_image_embedder(const std::filesystem::path& path);

void save_feature_set(const FeatureSet& fs, const std::filesystem::path& path);
/// Throws ModelMismatch when the cached features came from another extractor.
FeatureSet load_feature_set(const std::filesystem::path& path, const std::string& expected_extractor_id);

/// Two-column CSV (metric, value).
void write_metrics_csv(const std::vector<std::pair<std::string, double>>& rows,
                       const std::filesystem::path& path);

}  // namespace emoedit
