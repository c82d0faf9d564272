#include <doctest.h>

#include <random>

#include "emoedit/error.hpp"
#include "emoedit/metrics.hpp"
#include "helpers.hpp"

using namespace emoedit;

namespace {

FeatureSet gaussian_set(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng, const std::string& id = "x") {
  return {testing::gaussian(n, d, rng), id};
}

Eigen::MatrixXd random_orthogonal(Eigen::Index d, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(testing::gaussian(d, d, rng));
  return qr.householderQ();
}

/// Closed form for diagonal covariances.
double frechet_diag(const Eigen::VectorXd& ma, const Eigen::VectorXd& va, const Eigen::VectorXd& mb,
                    const Eigen::VectorXd& vb) {
  double s = (ma - mb).squaredNorm();
  for (Eigen::Index i = 0; i < va.size(); ++i) s += va[i] + vb[i] - 2.0 * std::sqrt(va[i] * vb[i]);
  return s;
}

/// Dyadic steps, so every pixel value is exact in float.
std::vector<Image> ramp(int n, float scale) {
  std::vector<Image> out;
  for (int k = 0; k <= n; ++k) out.emplace_back(6, 4, 3, scale * static_cast<float>(k) / static_cast<float>(n));
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("coefficient of variation uses the population deviation") {
    CHECK(coefficient_of_variation({1.0, 2.0, 3.0}) == doctest::Approx(0.408248290463863).epsilon(1e-12));
    CHECK(coefficient_of_variation({2.0, 2.0, 2.0}) == 0.0);
    CHECK(coefficient_of_variation({0.0, 0.0}) == 0.0);
    CHECK(coefficient_of_variation({-1.0, 1.0}) == 0.0);  // mean 0
  }

  TEST_CASE("LIE of an exactly linear sweep is zero") {
    const auto imgs = ramp(8, 1.0f);
    CHECK(lie_metric(imgs, pixel_l2) == doctest::Approx(0.0).epsilon(1e-9));
  }

  TEST_CASE("LIE is invariant to rescaling the distance") {
    std::vector<Image> imgs;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int k = 0; k < 6; ++k) {
      Image i(5, 5, 1);
      for (float& v : i.data()) v = u(rng);
      imgs.push_back(i);
    }
    const double base = lie_metric(imgs, pixel_l2);
    const double scaled = lie_metric(imgs, [](const Image& a, const Image& b) { return 7.5 * pixel_l2(a, b); });
    CHECK(base > 0.0);
    CHECK(scaled == doctest::Approx(base).epsilon(1e-14));
    CHECK_THROWS(lie_metric({imgs[0], imgs[1]}, pixel_l2));
  }

  TEST_CASE("LIE on a hand-made sequence") {
    // steps of 1, 2, 3 in one pixel -> CV([1, 2, 3])
    std::vector<Image> imgs;
    for (float v : {0.0f, 0.125f, 0.375f, 0.75f}) imgs.emplace_back(1, 1, 1, v);
    CHECK(lie_metric(imgs, pixel_l2) == doctest::Approx(0.408248290463863).epsilon(1e-9));
  }

  TEST_CASE("Frechet distance of identical sets vanishes") {
    std::mt19937_64 rng(2);
    const FeatureSet a = gaussian_set(50, 6, rng);
    CHECK(std::abs(frechet_distance(a, a)) < 1e-6);
  }

  TEST_CASE("Frechet distance of unit-variance fits one apart") {
    // Two 1-D sets with sample mean 0 / 1 and unbiased variance exactly 1.
    Eigen::MatrixXd x(4, 1);
    x << -1.5, -0.5, 0.5, 1.5;
    x *= std::sqrt(3.0 / 5.0);  // unbiased variance of {-1.5,...,1.5} is 5/3
    const FeatureSet a{x, "f"}, b{(x.array() + 1.0).matrix(), "f"};
    CHECK(frechet_distance(a, b, 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(frechet_distance(a, b) - 1.0) < 1e-6);
  }

  TEST_CASE("Frechet distance matches the diagonal closed form") {
    Eigen::MatrixXd a(4, 2), b(4, 2);
    a << 1, 0, -1, 0, 0, 2, 0, -2;
    b << 3, 1, 1, 1, 2, 1.5, 2, 0.5;
    // both sets have zero off-diagonal covariance by construction
    const Eigen::VectorXd ma = a.colwise().mean().transpose(), mb = b.colwise().mean().transpose();
    const Eigen::VectorXd va = (a.rowwise() - ma.transpose()).colwise().squaredNorm().transpose() / 3.0;
    const Eigen::VectorXd vb = (b.rowwise() - mb.transpose()).colwise().squaredNorm().transpose() / 3.0;
    CHECK(frechet_distance({a, ""}, {b, ""}, 0.0) == doctest::Approx(frechet_diag(ma, va, mb, vb)).epsilon(1e-9));
  }

  TEST_CASE("Frechet distance is invariant under a common orthogonal map") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 5; ++t) {
      const FeatureSet a = gaussian_set(40, 5, rng), b{testing::gaussian(40, 5, rng, 2.0).array() + 0.5, "x"};
      const Eigen::MatrixXd q = random_orthogonal(5, rng);
      const FeatureSet qa{a.features * q, "x"}, qb{b.features * q, "x"};
      CHECK(std::abs(frechet_distance(a, b) - frechet_distance(qa, qb)) < 1e-6);
    }
  }

  TEST_CASE("Frechet distance checks its inputs") {
    std::mt19937_64 rng(4);
    CHECK_THROWS_AS(frechet_distance(gaussian_set(5, 3, rng), gaussian_set(5, 4, rng)), DimensionError);
    CHECK_THROWS_AS(frechet_distance(gaussian_set(5, 3, rng, "a"), gaussian_set(5, 3, rng, "b")), ModelMismatch);
  }

  TEST_CASE("identity similarity") {
    std::mt19937_64 rng(5);
    const FeatureSet a = gaussian_set(10, 4, rng);
    CHECK(identity_similarity(a, a) == doctest::Approx(1.0));
    FeatureSet neg{-a.features, a.extractor_id};
    CHECK(identity_similarity(a, neg) == doctest::Approx(-1.0));
    const FeatureSet zero{Eigen::MatrixXd::Zero(3, 4), "x"};
    CHECK_THROWS_AS(identity_similarity(a, zero), NumericalError);
  }

  TEST_CASE("image embedders learn labelled brightness") {
    std::vector<Image> imgs;
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) {
      Image img(20, 20, 3, i % 2 ? 0.8f : 0.2f);
      img.set(i % 20, 3, 0, 0.5f);
      imgs.push_back(img);
      labels.push_back(i % 2);
    }
    const ImageEmbedder e = train_image_embedder(imgs, labels, 2, 8);
    int right = 0;
    for (int i = 0; i < 30; ++i) right += e.predict(imgs[static_cast<std::size_t>(i)]) == labels[static_cast<std::size_t>(i)];
    CHECK(right == 30);
    const FeatureSet f = e.embed(imgs);
    CHECK(f.features.rows() == 30);
    CHECK(f.features.cols() == 2);
    CHECK(f.extractor_id == e.id());
  }

  TEST_CASE("conv embedder features have a fixed layout") {
    const ConvEmbedder g{RandomConvFeatures(3, 4, 9), 4};
    const FeatureSet f = g.embed(ramp(3, 1.0f));
    CHECK(f.features.rows() == 4);
    CHECK(f.features.cols() == 4 * 4 * 4);
    const ConvEmbedder other{RandomConvFeatures(3, 4, 10), 4};
    CHECK(g.id() != other.id());
  }

  TEST_CASE("feature caches are tied to their extractor") {
    testing::TempDir tmp("features");
    std::mt19937_64 rng(6);
    const FeatureSet f = gaussian_set(3, 2, rng, "model-a");
    save_feature_set(f, tmp.path / "f.emo");
    CHECK(load_feature_set(tmp.path / "f.emo", "model-a").features == f.features);
    CHECK_THROWS_AS(load_feature_set(tmp.path / "f.emo", "model-b"), ModelMismatch);
  }

  TEST_CASE("thumbnails are gray and sized") {
    const Eigen::VectorXd t = thumbnail(Image(32, 16, 3, 0.5f), 8);
    CHECK(t.size() == 64);
    CHECK((t.array() - 0.5).abs().maxCoeff() < 1e-6);
  }
}
