#include <doctest.h>

#include <random>

#include "emoedit/error.hpp"
#include "emoedit/mouth_inpaint.hpp"
#include "emoedit/synthetic_face.hpp"
#include "helpers.hpp"

using namespace emoedit;

namespace {

Eigen::Matrix3d random_homography(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix3d h;
  h << 1.0 + 0.3 * u(rng), 0.3 * u(rng), 20.0 * u(rng), 0.3 * u(rng), 1.0 + 0.3 * u(rng), 20.0 * u(rng),
      1e-3 * u(rng), 1e-3 * u(rng), 1.0;
  return h;
}

Points2d random_points(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 100.0);
  Points2d p(n, 2);
  for (int i = 0; i < n; ++i) p.row(i) << u(rng), u(rng);
  return p;
}

MouthModel tiny_mouth_model(int crop) {
  TextureModelConfig c;
  c.tex_size = crop;
  c.work_size = crop / 2;
  c.n_layers = 2;
  c.latent_dim = 4;
  return {init_texture_model(c, 1), {60.0, 90.0, 40.0}, 2};
}

}  // namespace

TEST_SUITE("mouth_inpaint") {
  TEST_CASE("homographies are recovered from synthetic correspondences") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
      const Eigen::Matrix3d h = random_homography(rng);
      const Points2d src = random_points(8, rng);
      const Points2d dst = apply_homography(h, src);
      const Eigen::Matrix3d est = estimate_homography(src, dst);
      CHECK(max_reprojection_error(est, src, dst) < 1e-6);
      CHECK(est(2, 2) == doctest::Approx(1.0));
    }
  }

  TEST_CASE("apply_homography divides by the projective coordinate") {
    Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
    h(2, 0) = 1.0;
    Points2d p(1, 2);
    p << 1.0, 4.0;
    const Points2d q = apply_homography(h, p);
    CHECK(q(0, 0) == doctest::Approx(0.5));
    CHECK(q(0, 1) == doctest::Approx(2.0));
  }

  TEST_CASE("degenerate correspondences are rejected") {
    std::mt19937_64 rng(2);
    const Points2d three = random_points(3, rng);
    CHECK_THROWS_AS(estimate_homography(three, three), DataError);
    Points2d line(6, 2);
    for (int i = 0; i < 5; ++i) line.row(i) << i, 2.0 * i;
    line.row(5) << 3.0, -1.0;  // five of six collinear
    CHECK_THROWS_AS(estimate_homography(line, line), DataError);
  }

  TEST_CASE("crop boxes are square and expanded") {
    Points2d p(3, 2);
    p << 10, 20, 30, 25, 20, 22;
    const CropBox b = crop_box(p, 0.25);
    CHECK(b.size == doctest::Approx(25.0));
    CHECK(b.x0 + 0.5 * b.size == doctest::Approx(20.0));
    CHECK(b.y0 + 0.5 * b.size == doctest::Approx(22.5));
  }

  TEST_CASE("identity crops resample the box") {
    Image frame(40, 40, 1);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) frame.set(x, y, 0, static_cast<float>(x) / 40.0f);
    const Image c = crop_frontal(frame, Eigen::Matrix3d::Identity(), {10.0, 10.0, 20.0}, 20);
    for (int i = 0; i < 20; ++i) CHECK(c.at(i, 5) == doctest::Approx(frame.at(10 + i, 15)));
  }

  TEST_CASE("paste weights feather linearly outside the mask") {
    Image m(15, 15, 1);
    m.set(7, 7, 0, 1.0f);
    const Image w = paste_weights(m, 2);
    CHECK(w.at(7, 7) == 1.0f);
    CHECK(w.at(8, 7) == doctest::Approx(1.0 - 1.0 / 3.0));
    CHECK(w.at(9, 7) == doctest::Approx(1.0 - 2.0 / 3.0));
    CHECK(w.at(10, 7) == 0.0f);
  }

  TEST_CASE("frontalized landmarks drop the pose") {
    const MorphableBasis b = make_synthetic_basis();
    const Camera cam{Camera::Mode::orthographic, 500.0, 80.0, 80.0};
    FaceCoefficients c = FaceCoefficients::zeros(b);
    c.pose << 0.0, 0.0, 0.1, 0.01, 0.0, 0.0;
    const FrontalLandmarks fl = frontalize_landmarks(b, c, cam);
    FaceCoefficients z = c;
    z.pose.setZero();
    CHECK((fl.frontal - frontalize_landmarks(b, z, cam).observed).norm() < 1e-9);
    // an in-plane pose is a similarity: the homography maps observed onto frontal exactly
    const Eigen::Matrix3d h = estimate_homography(fl.observed, fl.frontal);
    CHECK(max_reprojection_error(h, fl.observed, fl.frontal) < 1e-6);
  }

  TEST_CASE("teeth filling only touches the mouth band") {
    const MorphableBasis b = make_synthetic_basis();
    const Camera cam{Camera::Mode::orthographic, 500.0, 80.0, 80.0};
    FaceCoefficients c = FaceCoefficients::zeros(b);
    c.beta[0] = 1.0;  // open jaw
    Image frame(160, 160, 3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : frame.data()) v = u(rng);
    const MouthModel model = tiny_mouth_model(16);
    const Image out = fill_teeth(frame, b, c, cam, model);
    const Image w = paste_weights(inner_mouth_mask(b, apply_pose(reconstruct_shape(b, c), c.pose), cam, 160, 160), 2);
    int changed = 0;
    for (int y = 0; y < 160; ++y)
      for (int x = 0; x < 160; ++x)
        for (int k = 0; k < 3; ++k) {
          if (w.at(x, y) == 0.0f) CHECK(out.at(x, y, k) == frame.at(x, y, k));
          changed += out.at(x, y, k) != frame.at(x, y, k);
        }
    CHECK(changed > 0);
  }

  TEST_CASE("mouth models persist") {
    testing::TempDir tmp("mouth");
    const MouthModel m = tiny_mouth_model(16);
    save_mouth_model(m, tmp.path / "m.emo");
    const MouthModel back = load_mouth_model(tmp.path / "m.emo");
    CHECK(back.translator.id() == m.translator.id());
    CHECK(back.box.size == m.box.size);
    CHECK(back.feather == 2);
    const Image crop(16, 16, 3, 0.3f);
    CHECK(translate_patch(back, crop) == translate_patch(m, crop));
  }

  TEST_CASE("config validation") {
    MouthConfig c;
    CHECK_NOTHROW(c.validate());
    c.change_weight = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = MouthConfig{};
    c.box_expand = -0.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
