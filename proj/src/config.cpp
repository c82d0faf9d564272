#include "emoedit/config.hpp"

#include <fstream>
#include <set>

#include "emoedit/error.hpp"

namespace emoedit {
namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& known, const char* label) {
  if (!j.is_object()) throw ConfigError(std::string(label) + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError(std::string(label) + ": unknown key '" + key + "'");
}

}  // namespace

#define EMOEDIT_PUT(f) j[#f] = c.f;
#define EMOEDIT_NAME(f) #f,
#define EMOEDIT_GET(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
#define EMOEDIT_JSON(Type, label, FIELDS)                            \
  void to_json(nlohmann::json& j, const Type& c) {                   \
    j = nlohmann::json::object();                                    \
    FIELDS(EMOEDIT_PUT)                                              \
  }                                                                  \
  void from_json(const nlohmann::json& j, Type& c) {                 \
    check_keys(j, {FIELDS(EMOEDIT_NAME)}, label);                    \
    try {                                                            \
      FIELDS(EMOEDIT_GET)                                            \
    } catch (const nlohmann::json::exception& e) {                   \
      throw ConfigError(std::string(label) + ": " + e.what());       \
    }                                                                \
  }

NLOHMANN_JSON_SERIALIZE_ENUM(Camera::Mode, {{Camera::Mode::orthographic, "orthographic"},
                                            {Camera::Mode::pinhole, "pinhole"}})

#define CAMERA_FIELDS(X) X(mode) X(scale) X(cx) X(cy)
EMOEDIT_JSON(Camera, "camera", CAMERA_FIELDS)

#define BASIS_FIELDS(X) X(rows) X(cols) X(n_alpha) X(n_beta) X(n_landmarks) X(unit_scale) X(seed)
EMOEDIT_JSON(SyntheticBasisConfig, "basis", BASIS_FIELDS)

#define SYNTHESIS_FIELDS(X)                                                                              \
  X(n_emotions) X(samples_per_emotion) X(neutral_samples) X(intensity_levels) X(noise_sigma)           \
      X(identity_jitter) X(speech_low) X(speech_high) X(emotion_offset_norm) X(actor_seed)
EMOEDIT_JSON(SynthesisConfig, "synthesis", SYNTHESIS_FIELDS)

#define WORLD_FIELDS(X)                                                                                  \
  X(basis) X(synthesis) X(image_size) X(camera_scale) X(texture) X(texture_amplitude)                   \
      X(identity_latent_sigma) X(emotion_latent_sigma) X(emotion_layers) X(latent_jitter) X(max_roll) \
          X(max_shift) X(seed)
EMOEDIT_JSON(WorldConfig, "world", WORLD_FIELDS)

#define MOUTH_FIELDS(X) X(crop_size) X(box_expand) X(feather) X(change_weight) X(texture_size) X(translator)
EMOEDIT_JSON(MouthConfig, "mouth", MOUTH_FIELDS)

#define EDIT_FIELDS(X)                                                                           \
  X(smoothing) X(causal) X(window) X(multi_label) X(allow_extrapolation) X(fill_teeth) X(blend_erode) \
      X(blend_sigma)
EMOEDIT_JSON(EditSettings, "edit", EDIT_FIELDS)

#define DATA_FIELDS(X)                                                                               \
  X(train_per_level) X(train_neutral) X(eval_clips) X(clip_length) X(identity_actors) X(identity_frames) \
      X(stride)
EMOEDIT_JSON(DataSettings, "data", DATA_FIELDS)

#define METRICS_FIELDS(X) X(thumb_size) X(conv_channels) X(conv_seed) X(lie_steps)
EMOEDIT_JSON(MetricsSettings, "metrics", METRICS_FIELDS)

void to_json(nlohmann::json& j, const ProjectPaths& c) {
  j = {{"dataset", c.dataset.string()}, {"models", c.models.string()}, {"output", c.output.string()},
       {"cache", c.cache.string()}};
}

void from_json(const nlohmann::json& j, ProjectPaths& c) {
  check_keys(j, {"dataset", "models", "output", "cache"}, "paths");
  try {
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("models")) c.models = j.at("models").get<std::string>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (j.contains("cache")) c.cache = j.at("cache").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("paths: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const ProjectConfig& c) {
  j = {{"paths", c.paths},   {"world", c.world}, {"shape_gan", c.shape}, {"texture", c.texture},
       {"mouth", c.mouth},   {"edit", c.edit},   {"data", c.data},       {"metrics", c.metrics}};
  if (c.camera) j["camera"] = *c.camera;
}

void from_json(const nlohmann::json& j, ProjectConfig& c) {
  check_keys(j, {"paths", "world", "camera", "shape_gan", "texture", "mouth", "edit", "data", "metrics"}, "config");
  try {
    if (j.contains("paths")) j.at("paths").get_to(c.paths);
    if (j.contains("world")) j.at("world").get_to(c.world);
    if (j.contains("camera")) c.camera = j.at("camera").get<Camera>();
    if (j.contains("shape_gan")) j.at("shape_gan").get_to(c.shape);
    if (j.contains("texture")) j.at("texture").get_to(c.texture);
    if (j.contains("mouth")) j.at("mouth").get_to(c.mouth);
    if (j.contains("edit")) j.at("edit").get_to(c.edit);
    if (j.contains("data")) j.at("data").get_to(c.data);
    if (j.contains("metrics")) j.at("metrics").get_to(c.metrics);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

#undef EMOEDIT_JSON
#undef EMOEDIT_GET
#undef EMOEDIT_NAME
#undef EMOEDIT_PUT

Camera ProjectConfig::resolved_camera() const {
  if (camera) return *camera;
  Camera c;
  c.scale = world.camera_scale;
  c.cx = c.cy = 0.5 * world.image_size;
  return c;
}

std::filesystem::path ProjectConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

void ProjectConfig::validate() const {
  world.validate();
  resolved_camera().validate();
  shape.validate();
  texture.validate();
  mouth.validate();
  if (edit.blend_erode < 0 || edit.blend_sigma < 0.0) throw ConfigError("edit: blend_erode and blend_sigma must be >= 0");
  if (edit.window.empty()) throw ConfigError("edit: window must not be empty");
  if (data.train_per_level < 1 || data.train_neutral < 1 || data.eval_clips < 0 || data.clip_length < 1 ||
      data.identity_actors < 0 || data.identity_frames < 1 || data.stride < 1)
    throw ConfigError("data: counts must be positive (eval_clips and identity_actors may be 0)");
  if (metrics.thumb_size < 2 || metrics.conv_channels < 1 || metrics.lie_steps < 2)
    throw ConfigError("metrics: thumb_size >= 2, conv_channels >= 1 and lie_steps >= 2 required");
  if (shape.n_e != world.synthesis.n_emotions)
    throw ConfigError("shape_gan.n_e must equal world.synthesis.n_emotions");
  if (shape.n_c != world.basis.n_alpha + world.basis.n_beta)
    throw ConfigError("shape_gan.n_c must equal world.basis.n_alpha + n_beta");
}

ProjectConfig load_project_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ProjectConfig cfg = j.get<ProjectConfig>();
  cfg.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  cfg.validate();
  return cfg;
}

void save_project_config(const ProjectConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << nlohmann::json(cfg).dump(2) << '\n';
}

}  // namespace emoedit
