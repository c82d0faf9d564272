#include "emoedit/classifier.hpp"

#include <cmath>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"
#include "emoedit/hash.hpp"

namespace emoedit {

Eigen::MatrixXd SoftmaxClassifier::logits(const Eigen::MatrixXd& x) const {
  if (x.cols() != n_features())
    throw DimensionError("classifier expects " + std::to_string(n_features()) + " features, got " +
                         std::to_string(x.cols()));
  const Eigen::MatrixXd z = (x.rowwise() - mean).array().rowwise() / scale.array();
  return (z * w).rowwise() + b;
}

Eigen::MatrixXd SoftmaxClassifier::probabilities(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd p = logits(x);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() -= p.row(i).maxCoeff();
    p.row(i) = p.row(i).array().exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

std::vector<int> SoftmaxClassifier::predict(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd z = logits(x);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i).maxCoeff(&out[static_cast<std::size_t>(i)]);
  return out;
}

int SoftmaxClassifier::predict(const Eigen::VectorXd& x) const {
  return predict(Eigen::MatrixXd(x.transpose())).front();
}

std::string SoftmaxClassifier::id() const {
  Sha256 h;
  h.update(Eigen::MatrixXd(mean)).update(Eigen::MatrixXd(scale)).update(w).update(Eigen::MatrixXd(b));
  return h.hex();
}

SoftmaxClassifier train_softmax(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                                int n_classes, const ClassifierConfig& cfg) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n == 0 || static_cast<std::size_t>(n) != labels.size())
    throw DataError("train_softmax: need one label per sample and at least one sample");
  if (n_classes < 2) throw ConfigError("train_softmax: need at least two classes");
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, n_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= n_classes) throw DataError("train_softmax: label out of range");
    y(i, l) = 1.0;
  }

  SoftmaxClassifier c;
  c.mean = x.colwise().mean();
  c.scale = ((x.rowwise() - c.mean).colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
  for (auto& s : c.scale) s = s > 1e-12 ? s : 1.0;
  c.w = Eigen::MatrixXd::Zero(d, n_classes);
  c.b = Eigen::RowVectorXd::Zero(n_classes);
  const Eigen::MatrixXd z = (x.rowwise() - c.mean).array().rowwise() / c.scale.array();

  Eigen::MatrixXd mw = Eigen::MatrixXd::Zero(d, n_classes), vw = mw;
  Eigen::RowVectorXd mb = Eigen::RowVectorXd::Zero(n_classes), vb = mb;
  constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
  for (int t = 1; t <= cfg.iterations; ++t) {
    Eigen::MatrixXd p = (z * c.w).rowwise() + c.b;
    for (Eigen::Index i = 0; i < n; ++i) {
      p.row(i).array() -= p.row(i).maxCoeff();
      p.row(i) = p.row(i).array().exp();
      p.row(i) /= p.row(i).sum();
    }
    const Eigen::MatrixXd err = (p - y) / static_cast<double>(n);
    const Eigen::MatrixXd gw = z.transpose() * err + cfg.l2 * c.w;
    const Eigen::RowVectorXd gb = err.colwise().sum();
    mw = kB1 * mw + (1 - kB1) * gw;
    vw = kB2 * vw + (1 - kB2) * gw.cwiseProduct(gw);
    mb = kB1 * mb + (1 - kB1) * gb;
    vb = kB2 * vb + (1 - kB2) * gb.cwiseProduct(gb);
    const double c1 = 1 - std::pow(kB1, t), c2 = 1 - std::pow(kB2, t);
    c.w.array() -= cfg.lr * (mw.array() / c1) / ((vw.array() / c2).sqrt() + kEps);
    c.b.array() -= cfg.lr * (mb.array() / c1) / ((vb.array() / c2).sqrt() + kEps);
  }
  return c;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw DimensionError("accuracy: label lists differ in length or are empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

void save_classifier(const SoftmaxClassifier& c, const std::filesystem::path& path) {
  Archive a;
  a.meta["kind"] = "classifier";
  a.meta["version"] = 1;
  a.meta["id"] = c.id();
  a.put("mean", Eigen::VectorXd(c.mean.transpose()));
  a.put("scale", Eigen::VectorXd(c.scale.transpose()));
  a.put("w", c.w);
  a.put("b", Eigen::VectorXd(c.b.transpose()));
  a.save(path);
}

SoftmaxClassifier load_classifier(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  require_kind(a, "classifier", 1);
  SoftmaxClassifier c;
  c.mean = a.vector("mean").transpose();
  c.scale = a.vector("scale").transpose();
  c.w = a.matrix("w");
  c.b = a.vector("b").transpose();
  if (c.mean.size() != c.w.rows() || c.scale.size() != c.w.rows() || c.b.size() != c.w.cols())
    throw DataError("classifier " + path.string() + ": inconsistent shapes");
  if (a.meta.value("id", std::string()) != c.id())
    throw ModelMismatch("classifier " + path.string() + ": stored id does not match parameters");
  return c;
}

}  // namespace emoedit
