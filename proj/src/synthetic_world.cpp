#include "emoedit/synthetic_world.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "emoedit/error.hpp"
#include "emoedit/mouth_inpaint.hpp"

namespace emoedit {
namespace {

// Face-like base texture at working resolution, channel-major.
Eigen::VectorXd base_face_texture(const WorldConfig& cfg) {
  const int r = cfg.texture.work_size, ch = cfg.texture.channels;
  const double skin[3] = {0.72, 0.55, 0.46}, lip[3] = {0.62, 0.30, 0.30}, eye[3] = {0.25, 0.20, 0.18};
  const double brow[3] = {0.35, 0.27, 0.22};
  const int rows = cfg.basis.rows, cols = cfg.basis.cols;
  const double lip_v = (std::lround(0.76 * (rows - 1)) + 0.5) / (rows - 1);
  const double eye_v = std::lround(0.32 * (rows - 1)) / static_cast<double>(rows - 1);
  const double eye_u = std::lround(0.22 * (cols - 1)) / static_cast<double>(cols - 1);
  Eigen::VectorXd out(ch * r * r);
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      const double u = (x + 0.5) / r, v = (y + 0.5) / r;
      auto bump = [](double du, double dv, double su, double sv) {
        return std::exp(-(du * du) / (su * su) - (dv * dv) / (sv * sv));
      };
      const double wl = bump(u - 0.5, v - lip_v, 0.2, 0.035);
      const double we = std::max(bump(u - eye_u, v - eye_v, 0.06, 0.03), bump(u - 1.0 + eye_u, v - eye_v, 0.06, 0.03));
      const double wb = std::max(bump(u - eye_u, v - eye_v + 0.08, 0.08, 0.015),
                                 bump(u - 1.0 + eye_u, v - eye_v + 0.08, 0.08, 0.015));
      const double shade = 0.06 * std::cos(std::numbers::pi * (u - 0.5)) - 0.03;
      for (int c = 0; c < ch; ++c) {
        const int k = ch == 1 ? 0 : c;
        double val = skin[k] + shade;
        val += wl * (lip[k] - val);
        val += we * (eye[k] - val);
        val += wb * (brow[k] - val);
        out[(static_cast<Eigen::Index>(c) * r + y) * r + x] = val;
      }
    }
  return out;
}

Image make_background(int size, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01;
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.25 + 0.3 * u01(rng);
    gx[c] = 0.2 * (u01(rng) - 0.5);
    gy[c] = 0.2 * (u01(rng) - 0.5);
  }
  const double fx = 2.0 + 3.0 * u01(rng), fy = 2.0 + 3.0 * u01(rng);
  Image img(size, size, channels);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double xn = (x + 0.5) / size, yn = (y + 0.5) / size;
      const double wave = 0.05 * std::sin(2.0 * std::numbers::pi * (fx * xn + fy * yn));
      for (int c = 0; c < channels; ++c)
        img.set(x, y, c, static_cast<float>(base[c] + gx[c] * (xn - 0.5) + gy[c] * (yn - 0.5) + wave));
    }
  return img;
}

LatentStack gaussian_stack(int n, int d, double sigma, int active_layers, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  LatentStack s{Eigen::MatrixXd::Zero(n, d)};
  for (int i = 0; i < std::min(n, active_layers); ++i)
    for (int k = 0; k < d; ++k) s.codes(i, k) = sigma * n01(rng);
  return s;
}

}  // namespace

void WorldConfig::validate() const {
  texture.validate();
  if (image_size < 32 || !(camera_scale > 0.0)) throw ConfigError("world: image_size >= 32 and camera_scale > 0 required");
  if (emotion_layers < 1 || emotion_layers > texture.n_layers)
    throw ConfigError("world: emotion_layers must be in [1, n_layers]");
  if (texture_amplitude < 0.0 || identity_latent_sigma < 0.0 || emotion_latent_sigma < 0.0 || latent_jitter < 0.0 ||
      max_roll < 0.0 || max_shift < 0.0)
    throw ConfigError("world: noise and motion scales must be non-negative");
}

SyntheticWorld make_world(const WorldConfig& cfg) {
  cfg.validate();
  SyntheticWorld w;
  w.config = cfg;
  w.basis = make_synthetic_basis(cfg.basis);
  w.camera.scale = cfg.camera_scale;
  w.camera.cx = w.camera.cy = 0.5 * cfg.image_size;
  w.actor = make_actor(w.basis, cfg.synthesis);
  w.texture_fixture = make_fixture_model(cfg.texture, cfg.seed, cfg.texture_amplitude, base_face_texture(cfg));
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const int n = cfg.texture.n_layers, d = cfg.texture.latent_dim;
  w.identity_latent = gaussian_stack(n, d, cfg.identity_latent_sigma, n, rng);
  for (int y = 0; y < cfg.synthesis.n_emotions; ++y)
    w.emotion_offsets[y] = gaussian_stack(n, d, cfg.emotion_latent_sigma, cfg.emotion_layers, rng);
  w.background = make_background(cfg.image_size, cfg.texture.channels, cfg.seed + 1);
  return w;
}

Pose in_plane_pose(double roll, double dx, double dy) {
  Pose p = Pose::Zero();
  p[2] = roll;
  p[3] = dx;
  p[4] = dy;
  return p;
}

LatentStack world_latent(const SyntheticWorld& w, const EmotionVector& e, std::uint64_t noise_seed) {
  LatentStack s = w.identity_latent;
  for (int y = 0; y < e.size(); ++y)
    if (e[y] != 0.0) s.codes += e[y] * w.emotion_offsets.at(y).codes;
  std::mt19937_64 rng(noise_seed);
  s.codes += gaussian_stack(s.n_layers(), s.dim(), w.config.latent_jitter, s.n_layers(), rng).codes;
  return s;
}

void paint_teeth(Image& frame, const SyntheticWorld& w, const FaceCoefficients& coeffs) {
  const Vertices posed = apply_pose(reconstruct_shape(w.basis, coeffs), coeffs.pose);
  const Image cavity = inner_mouth_mask(w.basis, posed, w.camera, frame.width(), frame.height());
  const FrontalLandmarks fl = frontalize_landmarks(w.basis, coeffs, w.camera);
  const Eigen::Matrix3d h = estimate_homography(fl.observed, fl.frontal);
  const std::size_t n_lip = w.basis.lip_upper.size();
  double upper = 0.0, x_left = fl.frontal(0, 0);
  for (std::size_t i = 0; i < n_lip; ++i) upper += fl.frontal(static_cast<Eigen::Index>(i), 1);
  upper /= static_cast<double>(n_lip);
  const double px = w.camera.scale;
  const double teeth_height = 0.006 * px, tooth_width = 0.016 * px;
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) {
      if (cavity.at(x, y) <= 0.5f) continue;
      const Eigen::Vector3d q = h * Eigen::Vector3d(x + 0.5, y + 0.5, 1.0);
      const double fx = q.x() / q.z() - x_left, fy = q.y() / q.z() - upper;
      double col[3];
      if (fy < teeth_height) {
        const double phase = std::fmod(std::abs(fx) / tooth_width, 1.0);
        const double t = phase < 0.15 ? 0.7 : 0.93;
        col[0] = t;
        col[1] = t;
        col[2] = t * 0.95;
      } else {
        col[0] = 0.45;
        col[1] = 0.12;
        col[2] = 0.14;
      }
      for (int c = 0; c < frame.channels(); ++c)
        frame.set(x, y, c, static_cast<float>(frame.channels() == 1 ? (col[0] + col[1] + col[2]) / 3.0 : col[c]));
    }
}

RenderedFrame render_world_frame(const SyntheticWorld& w, const FaceCoefficients& coeffs, const Image& texture,
                                 bool teeth) {
  const int s = w.config.image_size;
  const Vertices posed = apply_pose(reconstruct_shape(w.basis, coeffs), coeffs.pose);
  const RasterResult r = rasterize(w.basis, posed, texture, w.camera, s, s);
  RenderedFrame out;
  out.cavity_mask = inner_mouth_mask(w.basis, posed, w.camera, s, s);
  out.face_mask = r.mask;
  out.image = composite(r.image, w.background, r.mask);
  Image black(s, s, w.background.channels());
  out.image = composite(black, out.image, out.cavity_mask);
  if (teeth) paint_teeth(out.image, w, coeffs);
  return out;
}

std::vector<SyntheticFrame> synth_clip(const SyntheticWorld& w, const EmotionTrack& track, int clip,
                                       std::uint64_t seed, const ClipOptions& opts) {
  const auto& sc = w.config.synthesis;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01;
  std::normal_distribution<double> n01;
  const double phase = 2.0 * std::numbers::pi * u01(rng);
  const double roll_phase = 2.0 * std::numbers::pi * u01(rng);
  const double dx = w.config.max_shift * (2.0 * u01(rng) - 1.0), dy = w.config.max_shift * (2.0 * u01(rng) - 1.0);
  std::vector<SyntheticFrame> frames;
  for (int t = 0; t < track.length(); ++t) {
    const EmotionVector& e = track.frames[static_cast<std::size_t>(t)];
    const double mid = 0.5 * (sc.speech_low + sc.speech_high), amp = 0.5 * (sc.speech_high - sc.speech_low);
    const double speech = mid + amp * std::sin(2.0 * std::numbers::pi * t / opts.speech_period + phase);
    SyntheticFrame f;
    f.coeffs = synth_sample(w.basis, w.actor, sc, e.values(), speech, rng());
    const double roll = opts.roll_amplitude * w.config.max_roll * std::sin(0.15 * t + roll_phase) +
                        opts.pose_jitter * n01(rng);
    f.coeffs.pose = in_plane_pose(roll, dx, dy);
    f.latent = world_latent(w, e, rng());
    f.texture = decode(w.texture_fixture, f.latent);
    f.image = render_world_frame(w, f.coeffs, f.texture).image;
    f.emotion = e;
    const auto dom = e.dominant();
    f.level = dom ? static_cast<int>(std::lround(e[*dom] * sc.intensity_levels)) : 0;
    f.clip = clip;
    f.frame = t;
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<SyntheticFrame> synth_labeled_frames(const SyntheticWorld& w, int per_level, int neutral_count,
                                                 std::uint64_t seed) {
  if (per_level < 1 || neutral_count < 1) throw DataError("synth_labeled_frames: counts must be positive");
  const auto& sc = w.config.synthesis;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01;
  std::vector<SyntheticFrame> frames;
  auto add = [&](int emotion, int level) {
    const EmotionVector e = emotion < 0 ? EmotionVector::neutral(sc.n_emotions)
                                        : EmotionVector::single(sc.n_emotions, emotion,
                                                                intensity_from_level(level, sc.intensity_levels));
    SyntheticFrame f;
    const double speech = sc.speech_low + (sc.speech_high - sc.speech_low) * u01(rng);
    f.coeffs = synth_sample(w.basis, w.actor, sc, e.values(), speech, rng());
    const double roll = w.config.max_roll * (2.0 * u01(rng) - 1.0);
    const double dx = w.config.max_shift * (2.0 * u01(rng) - 1.0), dy = w.config.max_shift * (2.0 * u01(rng) - 1.0);
    f.coeffs.pose = in_plane_pose(roll, dx, dy);
    f.latent = world_latent(w, e, rng());
    f.texture = decode(w.texture_fixture, f.latent);
    f.image = render_world_frame(w, f.coeffs, f.texture).image;
    f.emotion = e;
    f.level = level;
    f.clip = static_cast<int>(frames.size());
    frames.push_back(std::move(f));
  };
  for (int i = 0; i < neutral_count; ++i) add(-1, 0);
  for (int y = 0; y < sc.n_emotions; ++y)
    for (int level = 1; level <= sc.intensity_levels; ++level)
      for (int i = 0; i < per_level; ++i) add(y, level);
  return frames;
}

std::vector<LabeledTexture> extract_labeled_textures(const SyntheticWorld& w,
                                                     const std::vector<SyntheticFrame>& frames) {
  std::vector<LabeledTexture> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    const Vertices posed = apply_pose(reconstruct_shape(w.basis, f.coeffs), f.coeffs.pose);
    TextureExtraction ex = extract_texture(f.image, w.basis, posed, w.camera, w.config.texture.tex_size);
    const auto dom = f.emotion.dominant();
    out.push_back({std::move(ex.texture), std::move(ex.valid), dom ? *dom : -1, f.level});
  }
  return out;
}

}  // namespace emoedit
