#pragma once

// Synthetic talking-face world: one actor's morphable coefficients, a linear
// texture generator with known per-emotion latent offsets, a teeth decal in
// the mouth cavity and rendered frames with in-plane head motion. Every
// quantity the editing stages estimate has a ground truth here.

#include <cstdint>
#include <map>
#include <vector>

#include "emoedit/image.hpp"
#include "emoedit/morphable.hpp"
#include "emoedit/render.hpp"
#include "emoedit/synthetic_face.hpp"
#include "emoedit/temporal.hpp"
#include "emoedit/texture_space.hpp"

namespace emoedit {

struct WorldConfig {
  SyntheticBasisConfig basis;
  SynthesisConfig synthesis;
  int image_size = 160;
  double camera_scale = 500.0;   // pixels per model unit
  TextureModelConfig texture{.tex_size = 256, .work_size = 64, .n_layers = 4, .latent_dim = 64};
  double texture_amplitude = 0.008;  // fixture decoder weight scale
  double identity_latent_sigma = 0.25;
  double emotion_latent_sigma = 0.6;  // entries of the injected offsets (coarse layers only)
  int emotion_layers = 2;             // leading layers that carry the offsets
  double latent_jitter = 0.05;        // per-frame latent noise
  double max_roll = 0.12;             // radians, in-plane rotation
  double max_shift = 0.01;            // model units
  std::uint64_t seed = 11;
  void validate() const;
};

struct SyntheticWorld {
  WorldConfig config;
  MorphableBasis basis;
  Camera camera;
  SyntheticActor actor;
  TextureModel texture_fixture;            // linear decoder, least-squares inverse encoder
  LatentStack identity_latent;
  std::map<int, LatentStack> emotion_offsets;  // injected offset per emotion index
  Image background;
};

SyntheticWorld make_world(const WorldConfig& cfg = {});

/// In-plane pose: rotation about the viewing axis plus an image-plane shift.
Pose in_plane_pose(double roll, double dx, double dy);

/// Ground-truth latent: identity + sum_y e_y * offset_y + jitter.
LatentStack world_latent(const SyntheticWorld& w, const EmotionVector& e, std::uint64_t noise_seed);

/// Colour of the teeth decal at every cavity pixel (mask > 0.5), drawn in
/// the pose-free mouth plane so it moves rigidly with the head.
void paint_teeth(Image& frame, const SyntheticWorld& w, const FaceCoefficients& coeffs);

struct RenderedFrame {
  Image image;
  Image face_mask;    // rasterized face coverage
  Image cavity_mask;  // projected lip-loop interior
};

/// Face rendered over the background with the teeth decal in the cavity.
RenderedFrame render_world_frame(const SyntheticWorld& w, const FaceCoefficients& coeffs, const Image& texture,
                                 bool teeth = true);

struct SyntheticFrame {
  Image image;
  Image texture;  // ground-truth texture
  LatentStack latent;
  FaceCoefficients coeffs;
  EmotionVector emotion;
  int level = 0;  // 0 neutral, else 1..intensity_levels
  int clip = 0;
  int frame = 0;
};

struct ClipOptions {
  double speech_period = 9.0;  // frames per jaw cycle
  double roll_amplitude = 0.5;  // fraction of max_roll
  double pose_jitter = 0.0;     // extra per-frame roll noise, radians
};

/// One clip following the emotion track; consecutive frames share identity
/// and evolve the jaw and head pose smoothly, with per-frame coefficient noise.
std::vector<SyntheticFrame> synth_clip(const SyntheticWorld& w, const EmotionTrack& track, int clip,
                                       std::uint64_t seed, const ClipOptions& opts = {});

/// Frames at every (emotion, level) plus neutral ones, each with an
/// independent random pose, jaw opening and noise.
std::vector<SyntheticFrame> synth_labeled_frames(const SyntheticWorld& w, int per_level, int neutral_count,
                                                 std::uint64_t seed);

/// Extracted (not ground-truth) textures of frames, labelled.
std::vector<LabeledTexture> extract_labeled_textures(const SyntheticWorld& w,
                                                     const std::vector<SyntheticFrame>& frames);

}  // namespace emoedit
