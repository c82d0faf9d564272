#pragma once

// Teeth completion: projective mouth alignment, paired toothless/toothed
// crops, a crop-to-crop translator and pasting the translated cavity back.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "emoedit/image.hpp"
#include "emoedit/morphable.hpp"
#include "emoedit/render.hpp"
#include "emoedit/texture_space.hpp"

namespace emoedit {

/// Normalized DLT (Hartley scaling to mean distance sqrt 2) for H with
/// dst ~ H src, scaled so H(2,2) = 1. Throws DataError for fewer than four
/// points or when a line holds at least L-1 of them.
Eigen::Matrix3d estimate_homography(const Points2d& src, const Points2d& dst);

Points2d apply_homography(const Eigen::Matrix3d& h, const Points2d& pts);
/// Largest |H src - dst| over the points.
double max_reprojection_error(const Eigen::Matrix3d& h, const Points2d& src, const Points2d& dst);

struct FrontalLandmarks {
  Points2d observed;  // mouth landmarks under the frame's pose, pixels
  Points2d frontal;   // same landmarks with the pose zeroed
};

FrontalLandmarks frontalize_landmarks(const MorphableBasis& basis, const FaceCoefficients& coeffs,
                                      const Camera& camera);

/// Square region of the frontal image plane that is resampled into a crop.
struct CropBox {
  double x0 = 0.0, y0 = 0.0, size = 1.0;
};

/// Bounding box of the points, squared about its centre and grown by `expand`
/// (0.25 = 25 %) on each dimension.
CropBox crop_box(const Points2d& pts, double expand);

struct MouthPatch {
  Image image;
  Eigen::Matrix3d homography = Eigen::Matrix3d::Identity();  // frame -> frontal plane
  int frame = 0;
};

/// Resamples the box of the frontal plane from `frame` through H^-1 (bilinear,
/// border replicated).
Image crop_frontal(const Image& frame, const Eigen::Matrix3d& h, const CropBox& box, int crop_size);

struct MouthConfig {
  int crop_size = 64;
  double box_expand = 0.25;
  int feather = 2;  // pixels
  double change_weight = 10.0;  // extra pixel-loss weight where the pairs differ
  int texture_size = 256;  // texture extracted for the toothless reconstruction
  TextureModelConfig translator{.tex_size = 64, .work_size = 64, .n_layers = 4, .latent_dim = 64,
                                .encoder_hidden = 256, .joint_epochs = 60, .encoder_epochs = 60};
  void validate() const;
};

/// Re-render of a frame from its own coefficients and extracted texture; the
/// lip-loop interior is left black (the mesh has no mouth interior).
Image render_toothless(const Image& frame, const MorphableBasis& basis, const FaceCoefficients& coeffs,
                       const Camera& camera, int texture_size);

struct MouthPairs {
  std::vector<MouthPatch> toothless;
  std::vector<MouthPatch> toothed;
  CropBox box;
};

/// One pair per frame: the toothless re-render and the original frame, both
/// cropped with the frame's homography and one shared box (mean frontal
/// landmarks).
MouthPairs make_paired_mouth_data(const std::vector<Image>& frames, const MorphableBasis& basis,
                                  const std::vector<FaceCoefficients>& coeffs, const Camera& camera,
                                  const MouthConfig& cfg = {});

struct MouthModel {
  TextureModel translator;
  CropBox box;
  int feather = 2;
};

struct MouthTrainResult {
  MouthModel model;
  std::vector<TextureTrainLogRow> log;
};

MouthTrainResult train_mouth_translator(const MouthPairs& pairs, const MouthConfig& cfg, std::uint64_t seed);

/// Translated crop for a toothless crop.
Image translate_patch(const MouthModel& model, const Image& toothless);

/// Pastes the translated cavity into the frame inside the projected lip loop,
/// with a linear feather of `model.feather` pixels outside it. Pixels outside
/// that band are returned bit-identical; a failed alignment returns the input
/// and logs a warning.
Image fill_teeth(const Image& rendered_frame, const MorphableBasis& basis, const FaceCoefficients& coeffs,
                 const Camera& camera, const MouthModel& model);

/// Paste weights of fill_teeth (1 inside the lip loop, feathered outside).
Image paste_weights(const Image& inner_mask, int feather);

void save_mouth_model(const MouthModel& model, const std::filesystem::path& path);
MouthModel load_mouth_model(const std::filesystem::path& path);

void save_mouth_pairs(const MouthPairs& pairs, const std::filesystem::path& path);
MouthPairs load_mouth_pairs(const std::filesystem::path& path);

}  // namespace emoedit
