#include "emoedit/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"
#include "emoedit/hash.hpp"

namespace emoedit {
namespace {

void check_pair(const FeatureSet& a, const FeatureSet& b) {
  if (a.features.cols() != b.features.cols())
    throw DimensionError("feature sets have different dimensions (" + std::to_string(a.features.cols()) + " vs " +
                         std::to_string(b.features.cols()) + ")");
  if (!a.extractor_id.empty() && !b.extractor_id.empty() && a.extractor_id != b.extractor_id)
    throw ModelMismatch("feature sets come from different extractors");
}

Eigen::MatrixXd regularized_covariance(const Eigen::MatrixXd& x, double eps) {
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows() - 1);
  cov.diagonal().array() += eps;
  return cov;
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double pixel_l2(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("pixel_l2: image shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double coefficient_of_variation(const std::vector<double>& values) {
  if (values.empty()) throw DataError("coefficient_of_variation: no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (mean == 0.0) {
    spdlog::info("coefficient_of_variation: zero mean, reporting 0");
    return 0.0;
  }
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return std::sqrt(var) / std::abs(mean);
}

double lie_metric(const std::vector<Image>& images, const DistanceFn& distance) {
  if (images.size() < 3) throw DataError("lie_metric: need at least 3 images (2 steps)");
  std::vector<double> d;
  for (std::size_t i = 0; i + 1 < images.size(); ++i) d.push_back(distance(images[i], images[i + 1]));
  return coefficient_of_variation(d);
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b, double eps) {
  check_pair(a, b);
  if (a.features.rows() < 2 || b.features.rows() < 2)
    throw DataError("frechet_distance: need at least 2 samples per set");
  const Eigen::VectorXd mu_a = a.features.colwise().mean().transpose();
  const Eigen::VectorXd mu_b = b.features.colwise().mean().transpose();
  const Eigen::MatrixXd sa = regularized_covariance(a.features, eps);
  const Eigen::MatrixXd sb = regularized_covariance(b.features, eps);
  const Eigen::MatrixXd ra = symmetric_sqrt(sa);
  const Eigen::MatrixXd inner = ra * sb * ra;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * cross;
  if (!std::isfinite(d)) throw NumericalError("frechet_distance: non-finite result");
  return std::max(d, 0.0);  // rounding can leave a tiny negative value for equal fits
}

double identity_similarity(const FeatureSet& a, const FeatureSet& b) {
  check_pair(a, b);
  if (a.features.rows() == 0 || b.features.rows() == 0) throw DataError("identity_similarity: empty feature set");
  const Eigen::VectorXd ma = a.features.colwise().mean().transpose();
  const Eigen::VectorXd mb = b.features.colwise().mean().transpose();
  const double na = ma.norm(), nb = mb.norm();
  if (na == 0.0 || nb == 0.0) throw NumericalError("identity_similarity: zero-norm mean feature");
  return std::clamp(ma.dot(mb) / (na * nb), -1.0, 1.0);
}

Eigen::VectorXd thumbnail(const Image& img, int size) {
  const Image small = resize_bilinear(to_gray(img), size, size);
  return small.to_vector();
}

std::string ImageEmbedder::id() const {
  return sha256_hex("thumb" + std::to_string(thumb_size) + ":" + head.id());
}

FeatureSet ImageEmbedder::embed(const std::vector<Image>& images) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(images.size()), thumb_size * thumb_size);
  for (std::size_t i = 0; i < images.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = thumbnail(images[i], thumb_size).transpose();
  return {images.empty() ? Eigen::MatrixXd(0, head.n_classes()) : head.logits(x), id()};
}

int ImageEmbedder::predict(const Image& img) const { return head.predict(thumbnail(img, thumb_size)); }

ImageEmbedder train_image_embedder(const std::vector<Image>& images, const std::vector<int>& labels,
                                   int n_classes, int thumb_size, const ClassifierConfig& cfg) {
  if (images.empty()) throw DataError("train_image_embedder: no images");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(images.size()), thumb_size * thumb_size);
  for (std::size_t i = 0; i < images.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = thumbnail(images[i], thumb_size).transpose();
  return {thumb_size, train_softmax(x, labels, n_classes, cfg)};
}

std::string ConvEmbedder::id() const {
  return sha256_hex("conv:" + std::to_string(conv.in_channels()) + ":" + std::to_string(conv.out_channels()) + ":" +
                    std::to_string(conv.seed()) + ":" + std::to_string(grid));
}

FeatureSet ConvEmbedder::embed(const std::vector<Image>& images) const {
  const int k = conv.out_channels();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), k * grid * grid);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    const int h = img.height(), w = img.width();
    if (h < grid || w < grid) throw DimensionError("conv embedder: image smaller than the pooling grid");
    const Eigen::VectorXd f = conv.forward(planar(img), h, w);
    for (int c = 0; c < k; ++c)
      for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
          const int y0 = gy * h / grid, y1 = (gy + 1) * h / grid, x0 = gx * w / grid, x1 = (gx + 1) * w / grid;
          double acc = 0.0;
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) acc += f[(static_cast<Eigen::Index>(c) * h + y) * w + x];
          out(static_cast<Eigen::Index>(n), (c * grid + gy) * grid + gx) = acc / ((y1 - y0) * (x1 - x0));
        }
  }
  return {out, id()};
}

void save_image_embedder(const ImageEmbedder& e, const std::filesystem::path& path) {
  Archive a;
  a.meta["kind"] = "image_embedder";
  a.meta["version"] = 1;
  a.meta["thumb_size"] = e.thumb_size;
  a.meta["id"] = e.id();
  a.put("mean", Eigen::VectorXd(e.head.mean.transpose()));
  a.put("scale", Eigen::VectorXd(e.head.scale.transpose()));
  a.put("w", e.head.w);
  a.put("b", Eigen::VectorXd(e.head.b.transpose()));
  a.save(path);
}

ImageEmbedder load_image_embedder(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  require_kind(a, "image_embedder", 1);
  ImageEmbedder e;
  e.thumb_size = a.meta.at("thumb_size").get<int>();
  e.head.mean = a.vector("mean").transpose();
  e.head.scale = a.vector("scale").transpose();
  e.head.w = a.matrix("w");
  e.head.b = a.vector("b").transpose();
  if (e.head.w.rows() != e.thumb_size * e.thumb_size || e.head.mean.size() != e.head.w.rows() ||
      e.head.scale.size() != e.head.w.rows() || e.head.b.size() != e.head.w.cols())
    throw DataError(path.string() + ": inconsistent embedder shapes");
  if (a.meta.value("id", std::string()) != e.id())
    throw ModelMismatch(path.string() + ": stored id does not match the parameters");
  return e;
}

void save_feature_set(const FeatureSet& fs, const std::filesystem::path& path) {
  Archive a;
  a.meta["kind"] = "feature_set";
  a.meta["version"] = 1;
  a.meta["extractor_id"] = fs.extractor_id;
  a.put("features", fs.features);
  a.save(path);
}

FeatureSet load_feature_set(const std::filesystem::path& path, const std::string& expected_extractor_id) {
  const Archive a = Archive::load(path);
  require_kind(a, "feature_set", 1);
  FeatureSet fs{a.matrix("features"), a.meta.value("extractor_id", std::string())};
  if (fs.extractor_id != expected_extractor_id)
    throw ModelMismatch(path.string() + ": cached features were computed by extractor " + fs.extractor_id +
                        ", expected " + expected_extractor_id);
  return fs;
}

void write_metrics_csv(const std::vector<std::pair<std::string, double>>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "metric,value\n";
  for (const auto& [name, value] : rows) out << name << ',' << value << '\n';
}

}  // namespace emoedit
