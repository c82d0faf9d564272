#pragma once

// Desk-scale stand-ins for a real morphable model and for emotion-labelled
// coefficient corpora.
//
// The synthetic basis is a grid mesh shaped like a face-sized ellipsoid cap
// with a nose bump and a one-cell mouth opening. Basis columns are smooth
// Gaussian random fields over the grid, orthonormalized jointly and scaled by
// a decaying spectrum. Expression column 0 is a jaw-opening field.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "emoedit/morphable.hpp"

namespace emoedit {

struct SyntheticBasisConfig {
  int rows = 26;
  int cols = 18;  // rows * cols = V (468 by default)
  int n_alpha = 80;
  int n_beta = 64;
  int n_landmarks = 96;
  double unit_scale = 0.1;  // face half-width in model units
  std::uint64_t seed = 7;
};

MorphableBasis make_synthetic_basis(const SyntheticBasisConfig& cfg = {});

struct SynthesisConfig {
  int n_emotions = 7;
  int samples_per_emotion = 1000;  // split evenly over the intensity levels
  int neutral_samples = 1000;
  int intensity_levels = 3;
  double noise_sigma = 0.1;        // expression noise on the leading dims
  double identity_jitter = 0.05;   // shape noise on the leading dims
  double speech_low = -0.4;        // range of the jaw-opening coefficient
  double speech_high = 1.0;
  double emotion_offset_norm = 2.5;
  std::uint64_t actor_seed = 1;    // fixes identity and emotion offsets
};

/// Identity and emotion signature shared by every sample of one actor.
struct SyntheticActor {
  Eigen::VectorXd alpha0;
  std::vector<Eigen::VectorXd> emotion_offsets;  // one n_beta offset per emotion
};

SyntheticActor make_actor(const MorphableBasis& basis, const SynthesisConfig& cfg);

struct LabeledSample {
  FaceCoefficients coeffs;
  EmotionVector emotion;
  int level = 0;  // 0 = neutral, else 1..intensity_levels

  /// 0 for neutral, 1 + emotion index otherwise.
  int label() const;
};

struct EmotionDataset {
  int n_emotions = 0;
  int intensity_levels = 0;
  std::vector<LabeledSample> samples;

  Eigen::MatrixXd coefficient_matrix() const;  // N x n_c
  std::vector<int> labels() const;
};

/// Deterministic for fixed (seed, cfg). Each non-neutral emotion adds its
/// actor offset scaled by the normalized intensity, on top of jaw motion
/// ("speech") and per-sample noise.
EmotionDataset synth_emotion_dataset(const MorphableBasis& basis, std::uint64_t seed,
                                     const SynthesisConfig& cfg);

/// One coefficient sample for an arbitrary emotion vector (multi-label allowed).
FaceCoefficients synth_sample(const MorphableBasis& basis, const SyntheticActor& actor,
                              const SynthesisConfig& cfg, const Eigen::VectorXd& emotion,
                              double speech, std::uint64_t noise_seed);

void save_dataset(const EmotionDataset& ds, const std::filesystem::path& path);
EmotionDataset load_dataset(const std::filesystem::path& path);

}  // namespace emoedit
