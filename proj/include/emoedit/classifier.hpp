#pragma once

// Multinomial logistic regression on standardized features. Used as the
// held-out emotion judge for coefficient edits and as the emotion / identity
// feature extractor behind the Fréchet and identity metrics.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace emoedit {

struct ClassifierConfig {
  double l2 = 1e-4;
  int iterations = 400;
  double lr = 0.05;  // Adam step size, full batch
};

struct SoftmaxClassifier {
  Eigen::RowVectorXd mean;   // D, feature standardization
  Eigen::RowVectorXd scale;  // D
  Eigen::MatrixXd w;         // D x K
  Eigen::RowVectorXd b;      // K

  int n_features() const { return static_cast<int>(w.rows()); }
  int n_classes() const { return static_cast<int>(w.cols()); }

  /// Class logits for each row of x (N x D -> N x K).
  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd probabilities(const Eigen::MatrixXd& x) const;
  std::vector<int> predict(const Eigen::MatrixXd& x) const;
  int predict(const Eigen::VectorXd& x) const;

  /// SHA-256 of the parameters; identifies the extractor in feature caches.
  std::string id() const;
};

/// Deterministic full-batch training; labels in [0, n_classes).
SoftmaxClassifier train_softmax(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                                int n_classes, const ClassifierConfig& cfg = {});

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

void save_classifier(const SoftmaxClassifier& c, const std::filesystem::path& path);
SoftmaxClassifier load_classifier(const std::filesystem::path& path);

}  // namespace emoedit
