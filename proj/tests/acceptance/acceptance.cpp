// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...] [--known-red 10,...]
//
// The exit status is non-zero when a criterion fails that is not listed in
// --known-red. Known-red criteria still print FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "emoedit/classifier.hpp"
#include "emoedit/metrics.hpp"
#include "emoedit/mouth_inpaint.hpp"
#include "emoedit/pipeline.hpp"
#include "emoedit/render.hpp"
#include "emoedit/shape_gan.hpp"
#include "emoedit/synthetic_world.hpp"
#include "emoedit/temporal.hpp"
#include "emoedit/texture_space.hpp"
#include "oracles.hpp"

using namespace emoedit;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(b) / (a.norm() * b.norm()); }

MorphableBasis tiny_basis(std::uint64_t seed) {
  SyntheticBasisConfig cfg;
  cfg.rows = 12;
  cfg.cols = 12;
  cfg.n_alpha = 6;
  cfg.n_beta = 5;
  cfg.n_landmarks = 40;
  cfg.seed = seed;
  return make_synthetic_basis(cfg);
}

ShapeGanConfig tiny_gan(const MorphableBasis& b, int n_e) {
  ShapeGanConfig c;
  c.n_c = b.n_coeffs();
  c.n_e = n_e;
  c.n_h = 7;
  c.hidden_layers = 2;
  return c;
}

void randomize_biases(Layers& layers, std::mt19937_64& rng) {
  for (auto& l : layers) l.b = gaussian(l.b.size(), 1, rng, 0.3);
}

// ---------------------------------------------------------------------------

Outcome loss_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::map<std::string, double> worst{{"reg_d", 0}, {"reg_g", 0}, {"rec", 0}, {"mouth", 0}, {"r", 0}};
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const MorphableBasis b = tiny_basis(1000 + static_cast<std::uint64_t>(i % 10));
    const int n_e = 2 + i % 4;
    auto g = init_generator(tiny_gan(b, n_e), rng());
    auto d = init_discriminator(tiny_gan(b, n_e), rng());
    randomize_biases(g.layers, rng);
    randomize_biases(d.layers, rng);
    GeneratorBatch batch;
    batch.neutral = gaussian(2 + i % 5, b.n_coeffs(), rng);
    batch.targets = gaussian(batch.neutral.rows(), n_e, rng).cwiseAbs();
    batch.starred = gaussian(1 + i % 3, b.n_coeffs(), rng);
    batch.starred_labels = gaussian(batch.starred.rows(), n_e, rng).cwiseAbs();
    const Eigen::MatrixXd& c = batch.neutral;
    const Eigen::MatrixXd& e = batch.targets;
    auto upd = [&](const char* k, double v) { worst[k] = std::max(worst[k], v); };
    upd("reg_d", rel_err(loss_reg_d(d, c, e), oracle::reg_d(d, c, e)));
    upd("reg_g", rel_err(loss_reg_g(d, g, c, e), oracle::reg_g(d, g, c, e)));
    upd("rec", rel_err(loss_rec(g, b, batch), oracle::rec(g, b, batch)));
    upd("mouth", rel_err(loss_mouth(g, b, batch), oracle::mouth(g, b, batch)));
    upd("r", rel_err(loss_r(g, b, c, e), oracle::r(g, b, c, e)));
  }
  const double t = seconds_since(t0);
  bool pass = t < 10.0;
  std::string detail;
  for (const auto& [k, v] : worst) {
    pass = pass && v <= 1e-9;
    detail += fmt("%s %.1e ", k.c_str(), v);
  }
  return {pass, fmt("%d instances, worst rel err: %s(%.1f s, limit 10 s)", n, detail.c_str(), t)};
}

Outcome gradient_penalty_fd() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  const MorphableBasis b = tiny_basis(3);
  double worst = 0.0;
  int count = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ShapeGanConfig cfg = tiny_gan(b, 3);
    cfg.hidden_layers = 2;
    auto d = init_discriminator(cfg, rng());
    randomize_biases(d.layers, rng);
    const Eigen::MatrixXd real = gaussian(5, b.n_coeffs(), rng), fake = gaussian(5, b.n_coeffs(), rng);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Eigen::VectorXd u(5);
    for (auto& x : u) x = uni(rng);
    const GradientPenalty gp = gradient_penalty(d, real, fake, u);
    for (Eigen::Index i = 0; i < 5; ++i) {
      const Eigen::VectorXd x = u[i] * real.row(i).transpose() + (1.0 - u[i]) * fake.row(i).transpose();
      const double fd = oracle::norm(oracle::rf_gradient_fd(d, oracle::to_vec(x), 1e-4));
      worst = std::max(worst, rel_err(gp.grad_norms[i], fd));
      ++count;
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-3 && t < 30.0,
          fmt("%d gradient norms vs central differences (h 1e-4), worst rel err %.2e (%.1f s, limit 30 s)", count,
              worst, t)};
}

Outcome identity_fixed_points(const MorphableBasis& basis) {
  std::mt19937_64 rng(303);
  const int n_c = basis.n_coeffs(), n_e = 7;
  Linear l;
  l.w = Eigen::MatrixXd::Zero(n_c, n_c + n_e);
  l.w.leftCols(n_c).setIdentity();
  l.b = Eigen::VectorXd::Zero(n_c);
  const GeneratorParams g{{l}};
  GeneratorBatch batch;
  batch.neutral = gaussian(16, n_c, rng);
  batch.targets = gaussian(16, n_e, rng).cwiseAbs();
  batch.starred = gaussian(16, n_c, rng);
  batch.starred_labels = gaussian(16, n_e, rng).cwiseAbs();
  const double rec = loss_rec(g, basis, batch), mouth = loss_mouth(g, basis, batch),
               r = loss_r(g, basis, batch.neutral, batch.targets);
  return {rec == 0.0 && mouth == 0.0 && r == 0.0, fmt("identity generator: L_rec %g, L_mouth %g, L_r %g", rec, mouth, r)};
}

Outcome lie_checks() {
  const double cv = coefficient_of_variation({1.0, 2.0, 3.0});
  Image a(24, 24, 3), b(24, 24, 3);
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::uniform_int_distribution<int> q(0, 64);
  // multiples of 1/64 stepped in sixteenths stay exact in float
  for (float& v : a.data()) v = static_cast<float>(q(rng)) / 64.0f;
  for (float& v : b.data()) v = static_cast<float>(q(rng)) / 64.0f;
  std::vector<Image> sweep;
  const int steps = 16;
  for (int k = 0; k <= steps; ++k) {
    Image img(24, 24, 3);
    const float s = static_cast<float>(k) / steps;
    for (std::size_t i = 0; i < img.data().size(); ++i) img.data()[i] = a.data()[i] + s * (b.data()[i] - a.data()[i]);
    sweep.push_back(img);
  }
  const double lin = lie_metric(sweep, pixel_l2);
  std::vector<Image> rnd;
  for (int k = 0; k < 8; ++k) {
    Image img(8, 8, 3);
    for (float& v : img.data()) v = u(rng);
    rnd.push_back(img);
  }
  const double base = lie_metric(rnd, pixel_l2);
  const double scaled = lie_metric(rnd, [](const Image& x, const Image& y) { return 4.0 * pixel_l2(x, y); });
  return {std::abs(cv - 0.4082) <= 1e-4 && std::abs(lin) <= 1e-9 && scaled == base,
          fmt("CV([1,2,3]) %.6f, LIE of a linear sweep %.1e, LIE %.12f vs x4 distance %.12f", cv, lin, base, scaled)};
}

Outcome frechet_checks() {
  std::mt19937_64 rng(505);
  const FeatureSet a{gaussian(60, 6, rng), "x"};
  const double same = frechet_distance(a, a);
  // Unit-variance fits one apart: standardize a sample exactly.
  Eigen::MatrixXd x = gaussian(50, 1, rng);
  x.array() -= x.mean();
  x /= std::sqrt(x.squaredNorm() / 49.0);
  const double one = frechet_distance({x, "x"}, {(x.array() + 1.0).matrix(), "x"});
  double worst_rot = 0.0;
  for (int t = 0; t < 10; ++t) {
    const FeatureSet p{gaussian(40, 5, rng), "x"}, q{(gaussian(40, 5, rng, 1.5).array() + 0.7).matrix(), "x"};
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(5, 5, rng));
    const Eigen::MatrixXd o = qr.householderQ();
    worst_rot = std::max(worst_rot, std::abs(frechet_distance(p, q) - frechet_distance({p.features * o, "x"},
                                                                                         {q.features * o, "x"})));
  }
  return {std::abs(same) <= 1e-6 && std::abs(one - 1.0) <= 1e-6 && worst_rot <= 1e-6,
          fmt("identical %.1e, N(0,1) vs N(1,1) fits %.9f, orthogonal invariance worst %.1e", same, one, worst_rot)};
}

Outcome raster_round_trip(const MorphableBasis& basis) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = 256;
  Image tex(n, n, 3);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double u = (x + 0.5) / n, v = (y + 0.5) / n;
      tex.set(x, y, 0, static_cast<float>(0.2 + 0.6 * u));
      tex.set(x, y, 1, static_cast<float>(0.3 + 0.4 * v));
      tex.set(x, y, 2, static_cast<float>(0.5 + 0.2 * std::sin(6.0 * u) * std::cos(5.0 * v)));
    }
  const Camera cam{Camera::Mode::orthographic, 2000.0, 320.0, 320.0};
  const Vertices verts = reconstruct_shape(basis, FaceCoefficients::zeros(basis));
  const auto r = rasterize(basis, verts, tex, cam, 640, 640);
  const auto ex = extract_texture(r.image, basis, verts, cam, n);
  double err = 0.0;
  long cnt = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (ex.valid.at(x, y) > 0.5f) {
        for (int c = 0; c < 3; ++c) err += std::abs(ex.texture.at(x, y, c) - tex.at(x, y, c));
        cnt += 3;
      }
  const double mae = cnt ? err / static_cast<double>(cnt) : 1.0;
  const double t = seconds_since(t0);
  return {cnt > 0 && mae <= 0.02 && t < 60.0,
          fmt("256x256 texture, MAE %.4f over %ld valid texel channels (%.1f s, limit 60 s)", mae, cnt, t)};
}

Outcome homography_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(-1.0, 1.0), p(0.0, 100.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    Eigen::Matrix3d h;
    h << 1.0 + 0.3 * u(rng), 0.3 * u(rng), 20.0 * u(rng), 0.3 * u(rng), 1.0 + 0.3 * u(rng), 20.0 * u(rng),
        1e-3 * u(rng), 1e-3 * u(rng), 1.0;
    Points2d src(10, 2);
    for (int i = 0; i < 10; ++i) src.row(i) << p(rng), p(rng);
    const Points2d dst = apply_homography(h, src);
    worst = std::max(worst, max_reprojection_error(estimate_homography(src, dst), src, dst));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-6 && t < 5.0, fmt("100 transforms, worst reprojection %.2e px (%.2f s, limit 5 s)", worst, t)};
}

Outcome smoothing_properties() {
  std::mt19937_64 rng(808);
  const double wsum = kHannWeights3[0] + kHannWeights3[1] + kHannWeights3[2];
  bool constant_ok = true, linear_ok = true, tv_ok = true;
  for (int s = 0; s < 1000; ++s) {
    const int len = 2 + s % 40, dim = 1 + s % 7;
    std::vector<Eigen::VectorXd> a, b, mix;
    for (int t = 0; t < len; ++t) {
      a.push_back(gaussian(dim, 1, rng));
      b.push_back(gaussian(dim, 1, rng));
      mix.push_back(0.5 * a.back() - 3.0 * b.back());
    }
    const auto sa = smooth_series(a), sb = smooth_series(b), sm = smooth_series(mix);
    for (int t = 0; t < len; ++t)
      linear_ok = linear_ok && (sm[t] - (0.5 * sa[t] - 3.0 * sb[t])).cwiseAbs().maxCoeff() <= 1e-12;
    tv_ok = tv_ok && total_variation(sa) <= total_variation(a) * (1.0 + 1e-12);
    const std::vector<Eigen::VectorXd> c(len, a[0]);
    for (const auto& v : smooth_series(c)) constant_ok = constant_ok && (v - a[0]).cwiseAbs().maxCoeff() <= 1e-15;
  }
  return {std::abs(wsum - 1.0) <= 1e-9 && constant_ok && linear_ok && tv_ok,
          fmt("weight sum %.15f, constants %s, linearity %s, TV non-increase %s over 1000 series", wsum,
              constant_ok ? "ok" : "broken", linear_ok ? "ok" : "broken", tv_ok ? "ok" : "broken")};
}

// ---------------------------------------------------------------------------
// Trained fixtures shared by the quantitative criteria.

struct ShapeFixture {
  SoftmaxClassifier judge;
  Eigen::MatrixXd held_out_neutral;
  std::optional<ShapeGanResult> with_mouth, without_mouth;
  double seconds_with_mouth = 0.0;
};

ShapeGanResult train_gan(const SyntheticWorld& w, double lambda_mouth, double* seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const EmotionDataset ds = synth_emotion_dataset(w.basis, 11, w.config.synthesis);
  ShapeGanConfig cfg;
  cfg.n_c = w.basis.n_coeffs();
  cfg.n_e = ds.n_emotions;
  cfg.iterations = 5000;
  cfg.lambda_mouth = lambda_mouth;
  auto r = train_shape_gan(ds, w.basis, cfg, 5);
  if (seconds) *seconds = seconds_since(t0);
  return r;
}

ShapeFixture make_shape_fixture(const SyntheticWorld& w) {
  ShapeFixture f;
  const EmotionDataset judge_ds = synth_emotion_dataset(w.basis, 12, w.config.synthesis);
  f.judge = train_softmax(judge_ds.coefficient_matrix(), judge_ds.labels(), 1 + judge_ds.n_emotions);
  const EmotionDataset eval_ds = synth_emotion_dataset(w.basis, 13, w.config.synthesis);
  const auto labels = eval_ds.labels();
  const Eigen::MatrixXd all = eval_ds.coefficient_matrix();
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 0) rows.push_back(static_cast<Eigen::Index>(i));
  f.held_out_neutral.resize(static_cast<Eigen::Index>(rows.size()), all.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) f.held_out_neutral.row(static_cast<Eigen::Index>(i)) = all.row(rows[i]);
  return f;
}

Outcome shape_gan_training(const SyntheticWorld& w, ShapeFixture& f) {
  if (!f.with_mouth) f.with_mouth = train_gan(w, 1.0, &f.seconds_with_mouth);
  const ShapeEditReport r = evaluate_shape_edits(f.with_mouth->generator, w.basis, f.judge, f.held_out_neutral);
  double d0 = 0, dh = 0, d1 = 0;
  for (const auto& row : r.displacement_by_intensity) {
    d0 += row[0];
    dh += row[1];
    d1 += row[2];
  }
  const double n = static_cast<double>(r.displacement_by_intensity.size());
  return {r.target_accuracy >= 0.85 && r.neutral_displacement_ratio <= 0.05 && r.monotone && f.seconds_with_mouth <= 1200.0,
          fmt("5000 iterations in %.0f s; held-out accuracy %.3f; neutral displacement %.4f IOD; mean displacement "
              "%.5f / %.5f / %.5f at 0 / 0.5 / 1 (monotone: %s), %d neutral sources",
              f.seconds_with_mouth, r.target_accuracy, r.neutral_displacement_ratio, d0 / n, dh / n, d1 / n,
              r.monotone ? "yes" : "no", static_cast<int>(f.held_out_neutral.rows()))};
}

Outcome mouth_ablation(const SyntheticWorld& w, ShapeFixture& f) {
  if (!f.with_mouth) f.with_mouth = train_gan(w, 1.0, &f.seconds_with_mouth);
  if (!f.without_mouth) f.without_mouth = train_gan(w, 0.0, nullptr);
  const double dev1 = evaluate_shape_edits(f.with_mouth->generator, w.basis, f.judge, f.held_out_neutral).lip_deviation;
  const double dev0 =
      evaluate_shape_edits(f.without_mouth->generator, w.basis, f.judge, f.held_out_neutral).lip_deviation;
  const double ratio = dev0 / dev1;
  return {ratio >= 2.0, fmt("lip deviation %.5f with lambda_mouth 1, %.5f with 0, ratio %.3f (need >= 2)", dev1, dev0,
                            ratio)};
}

struct TextureFixture {
  EditingDirectionSet directions;
};

TextureFixture make_texture_fixture(const SyntheticWorld& w) {
  const auto frames = synth_labeled_frames(w, 10, 40, 21);
  return {compute_editing_directions(w.texture_fixture, extract_labeled_textures(w, frames),
                                     static_cast<int>(w.emotion_offsets.size()))};
}

Outcome direction_recovery(const SyntheticWorld& w, const TextureFixture& t) {
  double worst = 1.0;
  std::string detail;
  for (const auto& [y, offset] : w.emotion_offsets) {
    const double c = cosine(t.directions.directions.at(y).flat(), offset.flat());
    worst = std::min(worst, c);
    detail += fmt(" %.4f", c);
  }
  return {worst >= 0.9, fmt("cosine(d_y, injected offset) per emotion:%s; min %.4f", detail.c_str(), worst)};
}

EditModels edit_models(const SyntheticWorld& w, ShapeFixture& f, const TextureFixture& t, const MouthModel& mouth) {
  if (!f.with_mouth) f.with_mouth = train_gan(w, 1.0, &f.seconds_with_mouth);
  EditModels m;
  m.basis = w.basis;
  m.camera = w.camera;
  m.generator = f.with_mouth->generator;
  m.texture = w.texture_fixture;
  m.directions = t.directions;
  m.mouth = mouth;
  return m;
}

MouthModel train_mouth(const SyntheticWorld& w) {
  const auto frames = synth_labeled_frames(w, 10, 40, 31);
  std::vector<Image> imgs;
  std::vector<FaceCoefficients> cs;
  for (const auto& fr : frames) {
    imgs.push_back(fr.image);
    cs.push_back(fr.coeffs);
  }
  const MouthConfig mc;
  return train_mouth_translator(make_paired_mouth_data(imgs, w.basis, cs, w.camera, mc), mc, 4).model;
}

Outcome neutral_edit(const SyntheticWorld& w, const EditModels& m) {
  EmotionTrack track;
  track.frames.assign(12, EmotionVector::neutral(7));
  const auto clip = synth_clip(w, track, 0, 41);
  std::vector<Image> frames;
  std::vector<FaceCoefficients> coeffs;
  for (const auto& fr : clip) {
    frames.push_back(fr.image);
    coeffs.push_back(fr.coeffs);
  }
  const EditOptions opts = EditOptions::from_settings({});
  const auto a = edit_video(frames, coeffs, track, m, opts);
  const auto b = edit_video(frames, coeffs, track, m, opts);
  double mae = 0.0;
  bool identical = true;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    mae += mean_abs_diff(a[t], straight_rerender(frames[t], coeffs[t], m, opts));
    identical = identical && a[t] == b[t];
  }
  mae /= static_cast<double>(frames.size());
  return {mae <= 0.03 && identical, fmt("all-zero track vs straight re-render MAE %.4f over %zu frames; repeat run "
                                        "bit-identical: %s",
                                        mae, frames.size(), identical ? "yes" : "no")};
}

Outcome smoothing_ab(const SyntheticWorld& w, const EditModels& m) {
  EmotionTrack track;
  track.frames.assign(24, EmotionVector::single(7, 0, 1.0));
  ClipOptions co;
  co.pose_jitter = 0.02;
  const auto clip = synth_clip(w, track, 1, 51, co);
  std::vector<Image> frames;
  std::vector<FaceCoefficients> coeffs;
  for (const auto& fr : clip) {
    frames.push_back(fr.image);
    coeffs.push_back(fr.coeffs);
  }
  EditTrace trace;
  edit_video(frames, coeffs, track, m, EditOptions::from_settings({}), nullptr, &trace);
  auto tv = [](const EditedCodes& c) {
    std::vector<Eigen::VectorXd> shape, lat;
    for (const auto& x : c.coeffs) shape.push_back(x.shape_expression());
    for (const auto& x : c.latents) lat.push_back(x.flat());
    return std::pair{total_variation(shape), total_variation(lat)};
  };
  const auto [s0, l0] = tv(trace.raw);
  const auto [s1, l1] = tv(trace.smoothed);
  const double rs = 1.0 - s1 / s0, rl = 1.0 - l1 / l0;
  return {rs >= 0.2 && rl >= 0.2, fmt("TV reduction: coefficients %.1f%% (%.4f -> %.4f), latents %.1f%% (%.3f -> %.3f)",
                                      100 * rs, s0, s1, 100 * rl, l0, l1)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only, known_red;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--known-red", known_red, "criteria whose failure does not fail the run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const SyntheticWorld world = make_world();
  std::optional<ShapeFixture> shape;
  std::optional<TextureFixture> texture;
  std::optional<MouthModel> mouth;
  auto shape_fx = [&]() -> ShapeFixture& {
    if (!shape) shape = make_shape_fixture(world);
    return *shape;
  };
  auto texture_fx = [&]() -> const TextureFixture& {
    if (!texture) texture = make_texture_fixture(world);
    return *texture;
  };
  auto models = [&]() {
    if (!mouth) mouth = train_mouth(world);
    return edit_models(world, shape_fx(), texture_fx(), *mouth);
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"loss oracles", loss_oracles},
      {"gradient penalty vs finite differences", gradient_penalty_fd},
      {"identity fixed points", [&] { return identity_fixed_points(world.basis); }},
      {"LIE correctness", lie_checks},
      {"Frechet correctness", frechet_checks},
      {"rasterizer round trip", [&] { return raster_round_trip(world.basis); }},
      {"homography recovery", homography_recovery},
      {"smoothing properties", smoothing_properties},
      {"shape GAN training", [&] { return shape_gan_training(world, shape_fx()); }},
      {"mouth-preservation ablation", [&] { return mouth_ablation(world, shape_fx()); }},
      {"editing-direction recovery", [&] { return direction_recovery(world, texture_fx()); }},
      {"neutral edit and determinism", [&] { return neutral_edit(world, models()); }},
      {"smoothing A/B", [&] { return smoothing_ab(world, models()); }},
  };

  const std::set<int> only_set(only.begin(), only.end()), red(known_red.begin(), known_red.end());
  int unexpected = 0, failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only_set.empty() && !only_set.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %2d %s  %s: %s [%.1f s]%s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0), !o.pass && red.count(id) ? " (known red)" : "");
    std::fflush(stdout);
    if (!o.pass) {
      ++failed;
      if (!red.count(id)) ++unexpected;
    }
  }
  std::printf("%d failed, %d unexpected\n", failed, unexpected);
  return unexpected == 0 ? 0 : 1;
}
