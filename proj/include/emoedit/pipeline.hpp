#pragma once

// Frame-sequence editing: dataset ingestion, per-frame analysis (texture
// extraction and latent encoding, cached by content hash), shape and texture
// edits under an emotion track, temporal smoothing of the edited codes,
// re-rendering, teeth filling and blending onto the original frames.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emoedit/config.hpp"
#include "emoedit/image.hpp"
#include "emoedit/metrics.hpp"
#include "emoedit/morphable.hpp"
#include "emoedit/mouth_inpaint.hpp"
#include "emoedit/render.hpp"
#include "emoedit/shape_gan.hpp"
#include "emoedit/temporal.hpp"
#include "emoedit/texture_space.hpp"

namespace emoedit {

struct FrameRecord {
  std::string path;  // relative to the dataset root
  std::string actor;
  int clip = 0;
  int frame = 0;
  int level = 0;  // 0 neutral
  EmotionVector emotion;
  Image image;
  std::optional<FaceCoefficients> coeffs;
  Image texture;  // extracted
  Image valid;
  std::optional<LatentStack> latent;
};

/// Manifest CSV with header path,actor,emotion,intensity_level,clip,frame.
struct ManifestRow {
  std::string path, actor, emotion;
  int intensity_level = 0;
  int clip = 0;
  int frame = 0;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path);

struct IngestOptions {
  std::vector<std::string> emotion_names = default_emotion_names();
  int intensity_levels = 3;
  int stride = 1;           // keep every stride-th frame of each clip
  bool load_images = true;
};

/// Records sorted by path. Unknown emotions, levels outside 1..L (0 for
/// neutral) and missing frame files raise DataError.
std::vector<FrameRecord> ingest_dataset(const std::filesystem::path& root, const std::filesystem::path& manifest,
                                        const IngestOptions& opts = {});

/// Per-path coefficients (archive kind "coefficient_store").
using CoefficientStore = std::map<std::string, FaceCoefficients>;
void save_coefficient_store(const CoefficientStore& store, const std::filesystem::path& path);
CoefficientStore load_coefficient_store(const std::filesystem::path& path, const MorphableBasis& basis);
/// Fills `coeffs` of every record from the store; missing paths raise DataError.
void attach_coefficients(std::vector<FrameRecord>& records, const CoefficientStore& store);

struct EditModels {
  MorphableBasis basis;
  Camera camera;
  GeneratorParams generator;
  TextureModel texture;
  EditingDirectionSet directions;
  std::optional<MouthModel> mouth;

  /// Throws ModelMismatch when dimensions or ids do not agree.
  void check() const;
};

/// Loads every model named by the config (mouth model optional when
/// fill_teeth is off).
EditModels load_edit_models(const ProjectConfig& cfg);

struct EditOptions {
  bool smoothing = true;
  SmoothingOptions smoothing_options;
  EmotionMode mode = EmotionMode::strict;
  TextureEditOptions texture_options;
  bool fill_teeth = true;
  int blend_erode = 2;
  double blend_sigma = 1.5;

  static EditOptions from_settings(const EditSettings& s);
};

/// Texture, validity and latent of one frame.
struct FrameAnalysis {
  Image texture;
  Image valid;
  LatentStack latent;
};

/// Content-addressed store of frame analyses.
class AnalysisCache {
 public:
  explicit AnalysisCache(std::filesystem::path dir);
  static std::string key(const Image& frame, const FaceCoefficients& coeffs, const EditModels& models);
  std::optional<FrameAnalysis> get(const std::string& key) const;
  void put(const std::string& key, const FrameAnalysis& a) const;
  int hits() const { return hits_; }

 private:
  std::filesystem::path dir_;
  mutable int hits_ = 0;
};

FrameAnalysis analyze_frame(const Image& frame, const FaceCoefficients& coeffs, const EditModels& models);

/// Edited per-frame codes before rendering.
struct EditedCodes {
  std::vector<FaceCoefficients> coeffs;
  std::vector<LatentStack> latents;
};

EditedCodes compute_edit_codes(const std::vector<FaceCoefficients>& coeffs,
                               const std::vector<FrameAnalysis>& analyses, const EmotionTrack& track,
                               const EditModels& models, const EditOptions& opts);
/// Smooths (alpha, beta) and the flattened latents over the sequence; pose,
/// delta and gamma pass through.
EditedCodes smooth_codes(const EditedCodes& codes, const SmoothingOptions& opts);

/// Render with the given coefficients and latent, fill the cavity, blend over
/// `frame`.
Image render_edited_frame(const Image& frame, const FaceCoefficients& coeffs, const Image& texture,
                          const Image& valid, const EditModels& models, const EditOptions& opts);

/// Same rendering path with the frame's own coefficients and extracted texture.
Image straight_rerender(const Image& frame, const FaceCoefficients& coeffs, const EditModels& models,
                        const EditOptions& opts);

struct EditTrace {
  EditedCodes raw;       // before smoothing
  EditedCodes smoothed;  // as rendered
};

/// Output frame t is built from frame t's codes after smoothing. Inputs are
/// never modified. Deterministic.
std::vector<Image> edit_video(const std::vector<Image>& frames, const std::vector<FaceCoefficients>& coeffs,
                              const EmotionTrack& track, const EditModels& models, const EditOptions& opts,
                              const AnalysisCache* cache = nullptr, EditTrace* trace = nullptr);

/// Images of one frame edited towards emotion y at intensities k / steps,
/// k = 0..steps.
std::vector<Image> intensity_sweep(const Image& frame, const FaceCoefficients& coeffs, int emotion, int steps,
                                   const EditModels& models, const EditOptions& opts);

struct MetricsExtractors {
  ImageEmbedder emotion;
  ImageEmbedder identity;
  ConvEmbedder generic;
};

struct MetricsReport {
  std::vector<std::pair<std::string, double>> rows;

  double value(const std::string& name) const;
  void print(std::ostream& os) const;
  void write_csv(const std::filesystem::path& path) const;
};

/// FED (emotion features) and FID (generic features) between edited frames
/// and reference frames of the target emotion, ID between edited and source
/// frames. With a cache directory, feature sets are cached per image-set hash
/// and a cached set from another extractor raises ModelMismatch.
MetricsReport run_metrics(const std::vector<Image>& edited, const std::vector<Image>& references,
                          const std::vector<Image>& sources, const MetricsExtractors& extractors,
                          const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

/// Digest of an ordered image set.
std::string image_set_hash(const std::vector<Image>& images);

/// Exclusive lock file for training commands; released on destruction.
class ProjectLock {
 public:
  explicit ProjectLock(std::filesystem::path dir);
  ~ProjectLock();
  ProjectLock(const ProjectLock&) = delete;
  ProjectLock& operator=(const ProjectLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Numbered PNG frames (frame_00000.png ...).
void write_frames(const std::vector<Image>& frames, const std::filesystem::path& dir);
std::vector<Image> read_frames(const std::filesystem::path& dir);

}  // namespace emoedit
