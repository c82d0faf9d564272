#pragma once

// Project configuration: one JSON file with every setting of the toolkit.
// Missing keys keep their defaults; unknown keys raise ConfigError.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoedit/mouth_inpaint.hpp"
#include "emoedit/render.hpp"
#include "emoedit/shape_gan.hpp"
#include "emoedit/synthetic_world.hpp"
#include "emoedit/texture_space.hpp"

namespace emoedit {

/// Relative paths resolve against the directory of the config file.
struct ProjectPaths {
  std::filesystem::path dataset = "data";
  std::filesystem::path models = "models";
  std::filesystem::path output = "out";
  std::filesystem::path cache = "cache";

  std::filesystem::path basis() const { return dataset / "basis.emo"; }
  std::filesystem::path shape_checkpoint() const { return models / "shape_gan.emo"; }
  std::filesystem::path texture_model() const { return models / "texture.emo"; }
  std::filesystem::path directions() const { return models / "directions.emo"; }
  std::filesystem::path mouth_model() const { return models / "mouth.emo"; }
};

struct EditSettings {
  bool smoothing = true;
  bool causal = false;
  std::vector<double> window = {0.25, 0.5, 0.25};
  bool multi_label = false;
  bool allow_extrapolation = false;
  bool fill_teeth = true;
  int blend_erode = 2;       // pixels
  double blend_sigma = 1.5;  // pixels
};

struct DataSettings {
  int train_per_level = 10;   // labelled frames per (emotion, level)
  int train_neutral = 40;
  int eval_clips = 2;
  int clip_length = 24;
  int identity_actors = 4;
  int identity_frames = 20;   // per actor
  int stride = 1;             // manifest sampling stride
};

struct MetricsSettings {
  int thumb_size = 16;
  int conv_channels = 8;
  std::uint64_t conv_seed = 99;
  int lie_steps = 100;  // images per sweep = lie_steps + 1
};

struct ProjectConfig {
  std::filesystem::path base_dir = ".";  // set by load_project_config, not serialized
  ProjectPaths paths;
  WorldConfig world;
  std::optional<Camera> camera;  // defaults to the synthetic world's camera
  ShapeGanConfig shape;
  TextureModelConfig texture;
  MouthConfig mouth;
  EditSettings edit;
  DataSettings data;
  MetricsSettings metrics;

  Camera resolved_camera() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const Camera& c);
void from_json(const nlohmann::json& j, Camera& c);
void to_json(nlohmann::json& j, const SyntheticBasisConfig& c);
void from_json(const nlohmann::json& j, SyntheticBasisConfig& c);
void to_json(nlohmann::json& j, const SynthesisConfig& c);
void from_json(const nlohmann::json& j, SynthesisConfig& c);
void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);
void to_json(nlohmann::json& j, const MouthConfig& c);
void from_json(const nlohmann::json& j, MouthConfig& c);
void to_json(nlohmann::json& j, const ProjectConfig& c);
void from_json(const nlohmann::json& j, ProjectConfig& c);

/// Throws ConfigError for unreadable or invalid files.
ProjectConfig load_project_config(const std::filesystem::path& path);
void save_project_config(const ProjectConfig& cfg, const std::filesystem::path& path);

}  // namespace emoedit
