#include <doctest.h>

#include <random>

#include "emoedit/classifier.hpp"
#include "emoedit/error.hpp"
#include "emoedit/shape_gan.hpp"
#include "emoedit/synthetic_face.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace emoedit;

namespace {

ShapeGanConfig tiny_config(const MorphableBasis& b, int n_e = 3) {
  ShapeGanConfig c;
  c.n_c = b.n_coeffs();
  c.n_e = n_e;
  c.n_h = 7;
  c.hidden_layers = 2;
  return c;
}

void randomize_biases(Layers& layers, std::mt19937_64& rng) {
  for (auto& l : layers) l.b = testing::gaussian(l.b.size(), 1, rng, 0.3);
}

Eigen::MatrixXd emotions(Eigen::Index n, int n_e, std::mt19937_64& rng) {
  return testing::gaussian(n, n_e, rng).cwiseAbs();
}

/// G(c, e) = c, ignoring e.
GeneratorParams identity_generator(int n_c, int n_e) {
  Linear l;
  l.w = Eigen::MatrixXd::Zero(n_c, n_c + n_e);
  l.w.leftCols(n_c).setIdentity();
  l.b = Eigen::VectorXd::Zero(n_c);
  return {{l}};
}

/// One vertex at the origin and one shape column (1, 0, 0).
MorphableBasis one_vertex_basis() {
  MorphableBasis b;
  b.mean_shape = Eigen::VectorXd::Zero(3);
  b.shape_basis = Eigen::MatrixXd::Zero(3, 1);
  b.shape_basis(0, 0) = 1.0;
  b.exp_basis = Eigen::MatrixXd::Zero(3, 0);
  return b;
}

/// G(c, e) = c + 2 sum(e) on a one-coefficient model.
GeneratorParams shift_generator() {
  Linear l;
  l.w = Eigen::MatrixXd(1, 2);
  l.w << 1.0, 2.0;
  l.b = Eigen::VectorXd::Zero(1);
  return {{l}};
}

GeneratorBatch random_batch(int n_c, int n_e, std::mt19937_64& rng) {
  GeneratorBatch b;
  b.neutral = testing::gaussian(4, n_c, rng);
  b.targets = emotions(4, n_e, rng);
  b.starred = testing::gaussian(3, n_c, rng);
  b.starred_labels = emotions(3, n_e, rng);
  return b;
}

}  // namespace

TEST_SUITE("shape_gan") {
  TEST_CASE("generator forward matches the loop oracle") {
    const MorphableBasis b = testing::tiny_basis();
    std::mt19937_64 rng(1);
    auto g = init_generator(tiny_config(b), 2);
    randomize_biases(g.layers, rng);
    const Eigen::MatrixXd c = testing::gaussian(5, b.n_coeffs(), rng), e = emotions(5, 3, rng);
    const Eigen::MatrixXd out = generator_forward(g, c, e);
    for (Eigen::Index i = 0; i < 5; ++i) {
      const auto o = oracle::generator(g, oracle::row(c, i), oracle::row(e, i));
      for (int k = 0; k < b.n_coeffs(); ++k) CHECK(out(i, k) == doctest::Approx(o[static_cast<std::size_t>(k)]).epsilon(1e-12));
    }
  }

  TEST_CASE("generator shapes and contracts") {
    ShapeGanConfig cfg;
    const auto g = init_generator(cfg, 1);
    CHECK(g.n_c() == 144);
    CHECK(g.n_e() == 7);
    CHECK(g.layers.size() == 5);  // four hidden layers and the output
    const auto d = init_discriminator(cfg, 1);
    CHECK(d.n_c() == 144);
    CHECK(d.n_e() == 7);
    auto z = g;
    for (auto& l : z.layers) {
      l.w.setZero();
      l.b.setZero();
    }
    CHECK(generator_forward(z, Eigen::VectorXd::Ones(144), EmotionVector::single(7, 1, 1.0)).norm() == 0.0);
    const Eigen::VectorXd c = Eigen::VectorXd::LinSpaced(144, -1, 1);
    CHECK(generator_forward(g, c, EmotionVector::neutral(7)) == generator_forward(g, c, EmotionVector::neutral(7)));
    CHECK_THROWS_AS(generator_forward(g, Eigen::VectorXd::Ones(10), EmotionVector::neutral(7)), DimensionError);
  }

  TEST_CASE("regression losses match loop oracles") {
    const MorphableBasis b = testing::tiny_basis();
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      auto g = init_generator(tiny_config(b), rng());
      auto d = init_discriminator(tiny_config(b), rng());
      randomize_biases(g.layers, rng);
      randomize_biases(d.layers, rng);
      const Eigen::MatrixXd c = testing::gaussian(6, b.n_coeffs(), rng), e = emotions(6, 3, rng);
      CHECK(testing::rel_err(loss_reg_d(d, c, e), oracle::reg_d(d, c, e)) < 1e-9);
      CHECK(testing::rel_err(loss_reg_g(d, g, c, e), oracle::reg_g(d, g, c, e)) < 1e-9);
    }
  }

  TEST_CASE("regression loss trivial values") {
    const MorphableBasis b = testing::tiny_basis();
    auto d = init_discriminator(tiny_config(b), 1);
    d.layers.back().w.setZero();
    d.layers.back().b.setZero();
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(2, 3);
    e(0, 1) = 1.0;
    e(1, 2) = 1.0;
    CHECK(loss_reg_d(d, Eigen::MatrixXd::Ones(2, b.n_coeffs()), e) == doctest::Approx(1.0));
    d.layers.back().b << 0.0, 1.0, 0.0;
    e.row(1) = e.row(0);
    CHECK(loss_reg_d(d, Eigen::MatrixXd::Ones(2, b.n_coeffs()), e) == 0.0);
  }

  TEST_CASE("shape losses match vertex-space loop oracles") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const MorphableBasis b = testing::tiny_basis(100 + trial);
      auto g = init_generator(tiny_config(b), rng());
      randomize_biases(g.layers, rng);
      const GeneratorBatch batch = random_batch(b.n_coeffs(), 3, rng);
      CHECK(testing::rel_err(loss_rec(g, b, batch), oracle::rec(g, b, batch)) < 1e-9);
      CHECK(testing::rel_err(loss_mouth(g, b, batch), oracle::mouth(g, b, batch)) < 1e-9);
      CHECK(testing::rel_err(loss_r(g, b, batch.neutral, batch.targets), oracle::r(g, b, batch.neutral, batch.targets)) <
            1e-9);
    }
  }

  TEST_CASE("identity generator zeroes the shape losses") {
    const MorphableBasis b = testing::tiny_basis();
    std::mt19937_64 rng(6);
    const auto g = identity_generator(b.n_coeffs(), 3);
    const GeneratorBatch batch = random_batch(b.n_coeffs(), 3, rng);
    CHECK(loss_rec(g, b, batch) == 0.0);
    CHECK(loss_mouth(g, b, batch) == 0.0);
    CHECK(loss_r(g, b, batch.neutral, batch.targets) == 0.0);
  }

  TEST_CASE("hand-computed one-vertex cases") {
    const MorphableBasis b = one_vertex_basis();
    const auto g = shift_generator();
    GeneratorBatch batch;
    batch.neutral = Eigen::MatrixXd::Ones(1, 1);
    batch.targets = Eigen::MatrixXd::Ones(1, 1);
    batch.starred = Eigen::MatrixXd(0, 1);
    batch.starred_labels = Eigen::MatrixXd(0, 1);
    // alpha 1 -> G(1, 1) = 3 -> G(3, 0) = 3
    CHECK(loss_rec(g, b, batch) == doctest::Approx(4.0));
    CHECK(loss_r(g, b, batch.neutral, batch.targets) == doctest::Approx(4.0));
  }

  TEST_CASE("hand-computed two-keypoint mouth case") {
    MorphableBasis b;
    b.mean_shape = Eigen::VectorXd::Zero(6);
    b.mean_shape[1] = 1.0;  // upper lip at (0, 1, 0), lower at the origin
    b.shape_basis = Eigen::MatrixXd::Zero(6, 1);
    b.shape_basis(1, 0) = 1.0;  // moves the upper lip along y
    b.exp_basis = Eigen::MatrixXd::Zero(6, 0);
    b.lip_upper = {0};
    b.lip_lower = {1};
    Linear l;
    l.w = Eigen::MatrixXd(1, 2);
    l.w << 1.0, 1.0;
    l.b = Eigen::VectorXd::Zero(1);
    const GeneratorParams g{{l}};
    GeneratorBatch batch;
    batch.neutral = Eigen::MatrixXd::Zero(1, 1);
    batch.targets = Eigen::MatrixXd::Ones(1, 1);
    batch.starred = Eigen::MatrixXd(0, 1);
    batch.starred_labels = Eigen::MatrixXd(0, 1);
    CHECK(loss_mouth(g, b, batch) == doctest::Approx(1.0));
  }

  TEST_CASE("mouth loss ignores a common lip translation") {
    const MorphableBasis base = testing::tiny_basis();
    MorphableBasis moved = base;
    // An extra coefficient direction that shifts every lip vertex identically.
    std::mt19937_64 rng(7);
    auto g = init_generator(tiny_config(base), 8);
    const GeneratorBatch batch = random_batch(base.n_coeffs(), 3, rng);
    for (int v : base.lip_upper) moved.mean_shape.segment<3>(3 * v) += Eigen::Vector3d(0.3, -0.2, 0.1);
    for (int v : base.lip_lower) moved.mean_shape.segment<3>(3 * v) += Eigen::Vector3d(0.3, -0.2, 0.1);
    CHECK(loss_mouth(g, moved, batch) == doctest::Approx(loss_mouth(g, base, batch)).epsilon(1e-12));
  }

  TEST_CASE("loss_r ignores expression changes") {
    const MorphableBasis b = testing::tiny_basis();
    // G changes only beta.
    Linear l;
    l.w = Eigen::MatrixXd::Zero(b.n_coeffs(), b.n_coeffs() + 3);
    l.w.leftCols(b.n_coeffs()).setIdentity();
    l.w.block(b.n_alpha(), b.n_coeffs(), b.n_beta(), 3).setOnes();
    l.b = Eigen::VectorXd::Zero(b.n_coeffs());
    const GeneratorParams g{{l}};
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd c = testing::gaussian(3, b.n_coeffs(), rng), e = emotions(3, 3, rng);
    CHECK(loss_r(g, b, c, e) == 0.0);
    CHECK(loss_rec(g, b, {c, e, Eigen::MatrixXd(0, b.n_coeffs()), Eigen::MatrixXd(0, 3)}) > 0.0);
  }

  TEST_CASE("adversarial loss") {
    const MorphableBasis b = testing::tiny_basis();
    ShapeGanConfig cfg = tiny_config(b);
    cfg.hidden_layers = 0;
    auto d = init_discriminator(cfg, 1);
    // D_rf(x) = <w, x>
    std::mt19937_64 rng(9);
    d.layers[0].w = testing::gaussian(1, b.n_coeffs(), rng);
    d.layers[0].b.setZero();
    const Eigen::MatrixXd real = testing::gaussian(4, b.n_coeffs(), rng), fake = testing::gaussian(5, b.n_coeffs(), rng);
    const double expect = (real.colwise().mean() - fake.colwise().mean()).dot(d.layers[0].w.row(0));
    CHECK(loss_adv(d, real, fake) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(loss_adv(d, fake, real) == doctest::Approx(-expect).epsilon(1e-12));
    d.layers[0].w.setZero();
    CHECK(loss_adv(d, real, fake) == 0.0);
  }

  TEST_CASE("gradient penalty analytic cases") {
    const MorphableBasis b = testing::tiny_basis();
    ShapeGanConfig cfg = tiny_config(b);
    cfg.hidden_layers = 0;
    auto d = init_discriminator(cfg, 1);
    std::mt19937_64 rng(10);
    const Eigen::MatrixXd real = testing::gaussian(6, b.n_coeffs(), rng), fake = testing::gaussian(6, b.n_coeffs(), rng);
    d.layers[0].w = testing::gaussian(1, b.n_coeffs(), rng);
    d.layers[0].w /= d.layers[0].w.norm();
    CHECK(loss_gp(d, real, fake, 3) == doctest::Approx(0.0).epsilon(1e-12));
    d.layers[0].w.setZero();
    d.layers[0].w(0, 0) = 2.0;
    CHECK(loss_gp(d, real, fake, 3) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("gradient penalty matches finite differences") {
    const MorphableBasis b = testing::tiny_basis();
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
      ShapeGanConfig cfg = tiny_config(b);
      cfg.hidden_layers = 2;
      auto d = init_discriminator(cfg, rng());
      randomize_biases(d.layers, rng);
      const Eigen::MatrixXd real = testing::gaussian(5, b.n_coeffs(), rng), fake = testing::gaussian(5, b.n_coeffs(), rng);
      const Eigen::VectorXd u = testing::gaussian(5, 1, rng).cwiseAbs().cwiseMin(1.0);
      const GradientPenalty gp = gradient_penalty(d, real, fake, u);
      double value = 0.0;
      for (Eigen::Index i = 0; i < 5; ++i) {
        const Eigen::VectorXd x = u[i] * real.row(i).transpose() + (1.0 - u[i]) * fake.row(i).transpose();
        const double n = oracle::norm(oracle::rf_gradient_fd(d, oracle::to_vec(x), 1e-4));
        CHECK(testing::rel_err(gp.grad_norms[i], n) < 1e-3);
        value += (n - 1.0) * (n - 1.0) / 5.0;
      }
      CHECK(testing::rel_err(gp.value, value) < 1e-3);
    }
  }

  TEST_CASE("objective gradients match finite differences") {
    const MorphableBasis b = testing::tiny_basis();
    std::mt19937_64 rng(12);
    ShapeGanConfig cfg = tiny_config(b);
    cfg.n_h = 5;
    auto g = init_generator(cfg, 1);
    auto d = init_discriminator(cfg, 2);
    randomize_biases(g.layers, rng);
    randomize_biases(d.layers, rng);
    const GeneratorBatch batch = random_batch(b.n_coeffs(), 3, rng);
    const Eigen::MatrixXd real = testing::gaussian(4, b.n_coeffs(), rng), labels = emotions(4, 3, rng);
    const Eigen::MatrixXd fake = testing::gaussian(4, b.n_coeffs(), rng);
    const Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(4, 0.1, 0.9);
    const auto geo = ShapeLossGeometry::from_basis(b);
    const double h = 1e-6;

    const auto go = generator_objective(g, d, geo, batch, real, cfg);
    double worst = 0.0;
    for (std::size_t li = 0; li < g.layers.size(); ++li)
      for (Eigen::Index k = 0; k < g.layers[li].w.size(); k += 3) {
        auto gp = g, gm = g;
        gp.layers[li].w.data()[k] += h;
        gm.layers[li].w.data()[k] -= h;
        const double fd = (generator_objective(gp, d, geo, batch, real, cfg).loss -
                           generator_objective(gm, d, geo, batch, real, cfg).loss) /
                          (2 * h);
        worst = std::max(worst, std::abs(fd - go.grads[li].w.data()[k]) / (std::abs(fd) + 1e-4));
      }
    CHECK(worst < 1e-4);

    const auto co = critic_objective(d, real, labels, fake, u, cfg);
    worst = 0.0;
    for (std::size_t li = 0; li < d.layers.size(); ++li)
      for (Eigen::Index k = 0; k < d.layers[li].w.size(); k += 2) {
        auto dp = d, dm = d;
        dp.layers[li].w.data()[k] += h;
        dm.layers[li].w.data()[k] -= h;
        const double fd = (critic_objective(dp, real, labels, fake, u, cfg).loss -
                           critic_objective(dm, real, labels, fake, u, cfg).loss) /
                          (2 * h);
        worst = std::max(worst, std::abs(fd - co.grads[li].w.data()[k]) / (std::abs(fd) + 1e-4));
      }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("total losses are the weighted sums") {
    ShapeGanConfig cfg;
    LossComponents c{1, 1, 1, 1, 1, 1, 1};
    auto [ld, lg] = total_losses(c, cfg);
    CHECK(ld == doctest::Approx(-1 + 10 + 20));
    CHECK(lg == doctest::Approx(1 + 20 + 5e3 + 1 + 1e3));
    CHECK(total_losses(LossComponents{}, cfg) == std::pair<double, double>{0.0, 0.0});
    std::mt19937_64 rng(13);
    for (int t = 0; t < 20; ++t) {
      const Eigen::VectorXd v = testing::gaussian(7, 1, rng);
      const LossComponents r{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
      auto [d2, g2] = total_losses(r, cfg);
      CHECK(d2 == doctest::Approx(-v[0] + 10 * v[1] + 20 * v[2]));
      CHECK(g2 == doctest::Approx(v[0] + 20 * v[3] + 5e3 * v[4] + v[5] + 1e3 * v[6]));
    }
  }

  TEST_CASE("full-size settings") {
    const ShapeGanConfig c = ShapeGanConfig::full_size();
    CHECK(c.n_h == 512);
    CHECK(c.iterations == 80000);
    CHECK(c.batch_size == 64);
    CHECK(c.lr == 1e-3);
    CHECK(c.beta1 == 0.5);
    CHECK(c.beta2 == 0.999);
    CHECK(c.lambda_mouth == 1.0);
  }

  TEST_CASE("edit_shape keeps pose and carried coefficients") {
    const MorphableBasis b = testing::tiny_basis();
    const auto g = init_generator(tiny_config(b), 4);
    FaceCoefficients c = FaceCoefficients::zeros(b);
    c.pose << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
    c.delta = Eigen::VectorXd::Ones(4);
    c.gamma = Eigen::VectorXd::Constant(2, 7.0);
    const auto out = edit_shape(g, c, EmotionVector::single(3, 1, 1.0));
    CHECK(out.pose == c.pose);
    CHECK(*out.delta == *c.delta);
    CHECK(*out.gamma == *c.gamma);
    CHECK_THROWS_AS(edit_shape(GeneratorParams{}, c, EmotionVector::neutral(3)), ConfigError);
  }

  TEST_CASE("training is deterministic and checkpoints round trip") {
    testing::TempDir tmp("gan");
    const MorphableBasis b = testing::tiny_basis();
    SynthesisConfig sc;
    sc.n_emotions = 3;
    sc.samples_per_emotion = 30;
    sc.neutral_samples = 30;
    const auto ds = synth_emotion_dataset(b, 1, sc);
    ShapeGanConfig cfg = tiny_config(b);
    cfg.iterations = 20;
    cfg.batch_size = 8;
    cfg.eval_every = 10;
    const auto r1 = train_shape_gan(ds, b, cfg, 42);
    const auto r2 = train_shape_gan(ds, b, cfg, 42);
    for (std::size_t i = 0; i < r1.generator.layers.size(); ++i) CHECK(r1.generator.layers[i].w == r2.generator.layers[i].w);
    CHECK(r1.log.size() == 20);
    save_shape_checkpoint({cfg, r1.generator, r1.discriminator, basis_fingerprint(b)}, b, tmp.path / "g.emo");
    const auto ck = load_shape_checkpoint(tmp.path / "g.emo", b);
    CHECK(ck.generator.layers.back().w == r1.generator.layers.back().w);
    CHECK_THROWS_AS(load_shape_checkpoint(tmp.path / "g.emo", testing::tiny_basis(99)), ModelMismatch);
  }

  TEST_CASE("training rejects datasets missing an emotion") {
    const MorphableBasis b = testing::tiny_basis();
    SynthesisConfig sc;
    sc.n_emotions = 3;
    sc.samples_per_emotion = 9;
    sc.neutral_samples = 9;
    auto ds = synth_emotion_dataset(b, 1, sc);
    std::erase_if(ds.samples, [](const LabeledSample& s) { return s.label() == 2; });
    ShapeGanConfig cfg = tiny_config(b);
    cfg.iterations = 2;
    cfg.batch_size = 4;
    CHECK_THROWS_WITH_AS(train_shape_gan(ds, b, cfg, 1), doctest::Contains("1"), DataError);
  }

  TEST_CASE("config json rejects unknown keys") {
    ShapeGanConfig c;
    nlohmann::json j = c;
    j["n_h"] = 64;
    ShapeGanConfig d = j.get<ShapeGanConfig>();
    CHECK(d.n_h == 64);
    j["bogus"] = 1;
    CHECK_THROWS_AS(j.get<ShapeGanConfig>(), ConfigError);
  }
}
