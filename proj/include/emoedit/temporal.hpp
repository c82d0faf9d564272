#pragma once

// Emotion tracks and 3-tap temporal smoothing of per-frame code vectors.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "emoedit/morphable.hpp"

namespace emoedit {

struct EmotionTrack {
  enum class Provenance { dense, keyframes };
  std::vector<EmotionVector> frames;
  Provenance provenance = Provenance::dense;

  int length() const { return static_cast<int>(frames.size()); }
};

using Keyframe = std::pair<int, EmotionVector>;

/// Componentwise linear interpolation between neighbouring keyframes, holding
/// the first / last keyframe outside their range. Frames with more than one
/// non-zero component (cross-fades) are multi-label vectors.
EmotionTrack interpolate_emotions(const std::vector<Keyframe>& keyframes, int frame_count);

/// Interior three samples of the length-5 Hann window, normalized.
inline const std::vector<double> kHannWeights3{0.25, 0.5, 0.25};

struct SmoothingOptions {
  std::vector<double> weights = kHannWeights3;
  /// Window over t-K+1 .. t instead of the centred one.
  bool causal = false;
};

/// out[t] = sum_k w[k] * series[t + k - (K-1)/2] (centred) with edge
/// replication. Weights must sum to 1 within 1e-9 and have odd length when
/// centred.
std::vector<Eigen::VectorXd> smooth_series(const std::vector<Eigen::VectorXd>& series,
                                           const SmoothingOptions& opts = {});

/// sum_t |x[t+1] - x[t]|.
double total_variation(const std::vector<Eigen::VectorXd>& series);

/// CSV: frame index, then one intensity column per emotion.
void write_track_csv(const EmotionTrack& track, const std::filesystem::path& path,
                     const std::vector<std::string>& names = default_emotion_names());
/// Dense file: every frame 0..T-1 present in order.
EmotionTrack read_track_csv(const std::filesystem::path& path, int n_emotions);
/// Sparse file of keyframes, same columns.
std::vector<Keyframe> read_keyframes_csv(const std::filesystem::path& path, int n_emotions);

}  // namespace emoedit
