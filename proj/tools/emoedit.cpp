// emoedit command-line interface.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emoedit/config.hpp"
#include "emoedit/error.hpp"
#include "emoedit/metrics.hpp"
#include "emoedit/mouth_inpaint.hpp"
#include "emoedit/pipeline.hpp"
#include "emoedit/shape_gan.hpp"
#include "emoedit/synthetic_face.hpp"
#include "emoedit/synthetic_world.hpp"
#include "emoedit/temporal.hpp"
#include "emoedit/texture_space.hpp"

namespace fs = std::filesystem;
using namespace emoedit;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
};

ProjectConfig load_config(const Common& c) {
  ProjectConfig cfg;
  if (!c.config.empty()) {
    cfg = load_project_config(c.config);
  } else {
    cfg.base_dir = fs::current_path();
  }
  cfg.validate();
  return cfg;
}

fs::path data_dir(const ProjectConfig& cfg) { return cfg.resolve(cfg.paths.dataset); }
fs::path model_dir(const ProjectConfig& cfg) { return cfg.resolve(cfg.paths.models); }

IngestOptions ingest_options(const ProjectConfig& cfg) {
  IngestOptions o;
  o.intensity_levels = cfg.world.synthesis.intensity_levels;
  o.stride = cfg.data.stride;
  return o;
}

std::vector<FrameRecord> ingest_with_coeffs(const ProjectConfig& cfg, const std::string& manifest,
                                            const MorphableBasis& basis) {
  const fs::path root = data_dir(cfg);
  auto records = ingest_dataset(root, root / manifest, ingest_options(cfg));
  attach_coefficients(records, load_coefficient_store(root / "coefficients.emo", basis));
  return records;
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05d.png", i);
  return buf;
}

std::string emotion_name(const EmotionVector& e) {
  for (int y = 0; y < e.size(); ++y)
    if (e.values()[y] != 0.0) return default_emotion_names()[static_cast<std::size_t>(y)];
  return "neutral";
}

// ------------------------------------------------------------------ synth-data

void cmd_synth_data(const Common& c) {
  const ProjectConfig cfg = load_config(c);
  const fs::path root = data_dir(cfg);
  fs::create_directories(root);
  const SyntheticWorld w = make_world(cfg.world);
  save_basis(w.basis, cfg.resolve(cfg.paths.basis()));

  const auto t0 = std::chrono::steady_clock::now();
  save_dataset(synth_emotion_dataset(w.basis, c.seed, cfg.world.synthesis), root / "shape_dataset.emo");

  CoefficientStore coeffs;
  auto store = [&](std::vector<ManifestRow>& rows, const std::string& rel, const SyntheticFrame& f,
                   const std::string& actor, const std::string& emotion, int level, int clip, int frame) {
    fs::create_directories((root / rel).parent_path());
    save_png(f.image, root / rel);
    coeffs[rel] = f.coeffs;
    rows.push_back({rel, actor, emotion, level, clip, frame});
  };

  std::vector<ManifestRow> train;
  const auto labeled =
      synth_labeled_frames(w, cfg.data.train_per_level, cfg.data.train_neutral, c.seed + 1);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const auto& f = labeled[i];
    store(train, "train/" + frame_name(static_cast<int>(i)), f, "actor0", emotion_name(f.emotion), f.level,
          static_cast<int>(i), 0);
  }
  write_manifest(train, root / "train.csv");

  // Neutral source clips, then one reference clip per emotion at full intensity.
  const int n_e = cfg.world.synthesis.n_emotions;
  const int levels = cfg.world.synthesis.intensity_levels;
  std::vector<ManifestRow> eval;
  const int n_clips = cfg.data.eval_clips + n_e;
  for (int clip = 0; clip < n_clips; ++clip) {
    const bool reference = clip >= cfg.data.eval_clips;
    const EmotionVector e = reference ? EmotionVector::single(n_e, clip - cfg.data.eval_clips, 1.0)
                                      : EmotionVector::neutral(n_e);
    EmotionTrack track;
    track.frames.assign(static_cast<std::size_t>(cfg.data.clip_length), e);
    const auto frames = synth_clip(w, track, clip, c.seed + 100 + static_cast<std::uint64_t>(clip));
    char dir[32];
    std::snprintf(dir, sizeof dir, "eval/clip_%03d/", clip);
    for (std::size_t t = 0; t < frames.size(); ++t)
      store(eval, dir + frame_name(static_cast<int>(t)), frames[t], "actor0", emotion_name(e),
            reference ? levels : 0, clip, static_cast<int>(t));
  }
  write_manifest(eval, root / "eval.csv");

  // Other actors for the identity feature extractor.
  std::vector<ManifestRow> identity;
  for (int k = 0; k < cfg.data.identity_actors; ++k) {
    WorldConfig wc = cfg.world;
    wc.seed += static_cast<std::uint64_t>(k);
    wc.synthesis.actor_seed += static_cast<std::uint64_t>(k);
    const SyntheticWorld wk = k == 0 ? w : make_world(wc);
    EmotionTrack track;
    track.frames.assign(static_cast<std::size_t>(cfg.data.identity_frames), EmotionVector::neutral(n_e));
    const auto frames = synth_clip(wk, track, k, c.seed + 1000 + static_cast<std::uint64_t>(k));
    const std::string actor = "actor" + std::to_string(k);
    for (std::size_t t = 0; t < frames.size(); ++t)
      store(identity, "identity/" + actor + "/" + frame_name(static_cast<int>(t)), frames[t], actor, "neutral", 0,
            k, static_cast<int>(t));
  }
  write_manifest(identity, root / "identity.csv");
  save_coefficient_store(coeffs, root / "coefficients.emo");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("synth-data: {} train, {} eval, {} identity frames in {} ({:.1f} s)", train.size(), eval.size(),
               identity.size(), root.string(), secs);
}

// ------------------------------------------------------------------ training

void cmd_train_shape(const Common& c) {
  const ProjectConfig cfg = load_config(c);
  ProjectLock lock(model_dir(cfg));
  const MorphableBasis basis = load_basis(cfg.resolve(cfg.paths.basis()));
  const EmotionDataset ds = load_dataset(data_dir(cfg) / "shape_dataset.emo");
  ShapeGanConfig sc = cfg.shape;
  sc.n_c = basis.n_coeffs();
  sc.n_e = ds.n_emotions;
  const auto result = train_shape_gan(ds, basis, sc, c.seed, [](const ShapeGanLogRow& r) {
    if (!std::isnan(r.val_reg_mse))
      spdlog::info("iter {:6d}  loss_d {:+.4e}  loss_g {:+.4e}  val_reg {:.4e}  {:.0f} s", r.iteration, r.loss_d,
                   r.loss_g, r.val_reg_mse, r.wall_seconds);
  });
  save_shape_checkpoint({sc, result.generator, result.discriminator, basis_fingerprint(basis)}, basis,
                        cfg.resolve(cfg.paths.shape_checkpoint()));
  write_training_log(result.log, model_dir(cfg) / "shape_gan_log.csv");
  spdlog::info("train-shape: wrote {}", cfg.resolve(cfg.paths.shape_checkpoint()).string());
}

std::vector<LabeledTexture> training_textures(const ProjectConfig& cfg, const MorphableBasis& basis) {
  const auto records = ingest_with_coeffs(cfg, "train.csv", basis);
  const Camera cam = cfg.resolved_camera();
  std::vector<LabeledTexture> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto ex = extract_texture(r.image, basis, apply_pose(reconstruct_shape(basis, *r.coeffs), r.coeffs->pose),
                                    cam, cfg.texture.tex_size);
    int y = -1;
    for (int k = 0; k < r.emotion.size(); ++k)
      if (r.emotion.values()[k] > 0.0) y = k;
    out.push_back({ex.texture, ex.valid, y, r.level});
  }
  return out;
}

void cmd_train_texture(const Common& c) {
  const ProjectConfig cfg = load_config(c);
  ProjectLock lock(model_dir(cfg));
  const MorphableBasis basis = load_basis(cfg.resolve(cfg.paths.basis()));
  const auto textures = training_textures(cfg, basis);
  const auto result = train_texture_model(textures, cfg.texture, c.seed);
  for (const auto& r : result.log)
    spdlog::info("phase {} epoch {:3d}  loss {:.5f}  val_mae {:.5f}", r.phase, r.epoch, r.train_loss, r.val_mae);
  save_texture_model(result.model, cfg.resolve(cfg.paths.texture_model()));
  spdlog::info("train-texture: wrote {}", cfg.resolve(cfg.paths.texture_model()).string());
}

void cmd_directions(const Common& c) {
  const ProjectConfig cfg = load_config(c);
  ProjectLock lock(model_dir(cfg));
  const MorphableBasis basis = load_basis(cfg.resolve(cfg.paths.basis()));
  const TextureModel model = load_texture_model(cfg.resolve(cfg.paths.texture_model()));
  const auto dirs =
      compute_editing_directions(model, training_textures(cfg, basis), cfg.world.synthesis.n_emotions);
  save_directions(dirs, cfg.resolve(cfg.paths.directions()));
  for (const auto& [y, d] : dirs.directions)
    spdlog::info("direction {:10s} |d| = {:.4f}", default_emotion_names()[static_cast<std::size_t>(y)],
                 d.flat().norm());
}

void cmd_train_mouth(const Common& c) {
  const ProjectConfig cfg = load_config(c);
  ProjectLock lock(model_dir(cfg));
  const MorphableBasis basis = load_basis(cfg.resolve(cfg.paths.basis()));
  const auto records = ingest_with_coeffs(cfg, "train.csv", basis);
  std::vector<Image> frames;
  std::vector<FaceCoefficients> coeffs;
  for (const auto& r : records) {
    frames.push_back(r.image);
    coeffs.push_back(*r.coeffs);
  }
  const auto pairs = make_paired_mouth_data(frames, basis, coeffs, cfg.resolved_camera(), cfg.mouth);
  const auto result = train_mouth_translator(pairs, cfg.mouth, c.seed);
  for (const auto& r : result.log)
    spdlog::info("phase {} epoch {:3d}  loss {:.5f}  val_mae {:.5f}", r.phase, r.epoch, r.train_loss, r.val_mae);
  save_mouth_model(result.model, cfg.resolve(cfg.paths.mouth_model()));
  spdlog::info("train-mouth: wrote {}", cfg.resolve(cfg.paths.mouth_model()).string());
}

// ------------------------------------------------------------------ editing

struct EditArgs {
  int clip = 0;
  std::string manifest = "eval.csv";
  std::string emotion;
  double intensity = 1.0;
  std::string track;
  std::string keyframes;
  std::string output;
  bool no_smoothing = false;
  bool causal = false;
  bool no_teeth = false;
  bool rerender = false;
  bool no_cache = false;
};

struct ClipData {
  std::vector<Image> frames;
  std::vector<FaceCoefficients> coeffs;
};

ClipData load_clip(const ProjectConfig& cfg, const std::string& manifest, int clip, const MorphableBasis& basis) {
  ClipData d;
  auto records = ingest_with_coeffs(cfg, manifest, basis);
  std::erase_if(records, [&](const FrameRecord& r) { return r.clip != clip; });
  if (records.empty()) throw DataError("clip " + std::to_string(clip) + " not found in " + manifest);
  std::stable_sort(records.begin(), records.end(),
                   [](const FrameRecord& a, const FrameRecord& b) { return a.frame < b.frame; });
  for (auto& r : records) {
    d.frames.push_back(std::move(r.image));
    d.coeffs.push_back(*r.coeffs);
  }
  return d;
}

void cmd_edit(const Common& c, const EditArgs& a) {
  ProjectConfig cfg = load_config(c);
  if (a.no_smoothing) cfg.edit.smoothing = false;
  if (a.causal) cfg.edit.causal = true;
  if (a.no_teeth) cfg.edit.fill_teeth = false;
  const EditModels models = load_edit_models(cfg);
  const EditOptions opts = EditOptions::from_settings(cfg.edit);
  const ClipData clip = load_clip(cfg, a.manifest, a.clip, models.basis);
  const int n_e = models.generator.n_e();
  const int sources = static_cast<int>(!a.emotion.empty()) + static_cast<int>(!a.track.empty()) +
                      static_cast<int>(!a.keyframes.empty());
  if (sources > 1) throw ConfigError("edit: give at most one of --emotion, --track, --keyframes");

  EmotionTrack track;
  if (!a.track.empty()) {
    track = read_track_csv(a.track, n_e);
  } else if (!a.keyframes.empty()) {
    track = interpolate_emotions(read_keyframes_csv(a.keyframes, n_e), static_cast<int>(clip.frames.size()));
  } else {
    EmotionVector e = EmotionVector::neutral(n_e);
    if (!a.emotion.empty() && a.emotion != "neutral") {
      const int y = emotion_index(default_emotion_names(), a.emotion);
      e = EmotionVector::single(n_e, y, a.intensity);
    }
    track.frames.assign(clip.frames.size(), e);
  }

  fs::path out = a.output.empty() ? cfg.resolve(cfg.paths.output) / ("edit_clip_" + std::to_string(a.clip))
                                  : fs::path(a.output);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Image> result;
  if (a.rerender) {
    for (std::size_t t = 0; t < clip.frames.size(); ++t)
      result.push_back(straight_rerender(clip.frames[t], clip.coeffs[t], models, opts));
  } else {
    std::optional<AnalysisCache> cache;
    if (!a.no_cache) cache.emplace(cfg.resolve(cfg.paths.cache) / "analysis");
    result = edit_video(clip.frames, clip.coeffs, track, models, opts, cache ? &*cache : nullptr);
    if (cache) spdlog::info("edit: {} of {} frame analyses from cache", cache->hits(), clip.frames.size());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_frames(result, out);
  spdlog::info("edit: {} frames -> {} ({:.2f} frames/s)", result.size(), out.string(), result.size() / secs);
}

// ------------------------------------------------------------------ metrics

ImageEmbedder emotion_extractor(const ProjectConfig& cfg) {
  const fs::path path = model_dir(cfg) / "emotion_embedder.emo";
  if (fs::exists(path)) return load_image_embedder(path);
  ProjectLock lock(model_dir(cfg));
  const fs::path root = data_dir(cfg);
  const auto records = ingest_dataset(root, root / "train.csv", ingest_options(cfg));
  std::vector<Image> images;
  std::vector<int> labels;
  for (const auto& r : records) {
    int label = 0;
    for (int k = 0; k < r.emotion.size(); ++k)
      if (r.emotion.values()[k] > 0.0) label = 1 + k;
    images.push_back(r.image);
    labels.push_back(label);
  }
  const auto e = train_image_embedder(images, labels, 1 + cfg.world.synthesis.n_emotions, cfg.metrics.thumb_size);
  save_image_embedder(e, path);
  spdlog::info("metrics: trained emotion extractor on {} frames", images.size());
  return e;
}

ImageEmbedder identity_extractor(const ProjectConfig& cfg) {
  const fs::path path = model_dir(cfg) / "identity_embedder.emo";
  if (fs::exists(path)) return load_image_embedder(path);
  ProjectLock lock(model_dir(cfg));
  const fs::path root = data_dir(cfg);
  const auto records = ingest_dataset(root, root / "identity.csv", ingest_options(cfg));
  std::map<std::string, int> actors;
  std::vector<Image> images;
  std::vector<int> labels;
  for (const auto& r : records) {
    const auto [it, _] = actors.emplace(r.actor, static_cast<int>(actors.size()));
    images.push_back(r.image);
    labels.push_back(it->second);
  }
  if (actors.size() < 2) throw DataError("metrics: the identity manifest needs at least two actors");
  const auto e = train_image_embedder(images, labels, static_cast<int>(actors.size()), cfg.metrics.thumb_size);
  save_image_embedder(e, path);
  spdlog::info("metrics: trained identity extractor on {} frames of {} actors", images.size(), actors.size());
  return e;
}

ConvEmbedder generic_extractor(const ProjectConfig& cfg) {
  return {RandomConvFeatures(3, cfg.metrics.conv_channels, cfg.metrics.conv_seed), 4};
}

struct MetricsArgs {
  std::string edited, reference, source, csv;
  bool no_cache = false;
};

void cmd_metrics(const Common& c, const MetricsArgs& a) {
  const ProjectConfig cfg = load_config(c);
  const MetricsExtractors ex{emotion_extractor(cfg), identity_extractor(cfg), generic_extractor(cfg)};
  std::optional<fs::path> cache;
  if (!a.no_cache) cache = cfg.resolve(cfg.paths.cache) / "features";
  const auto report = run_metrics(read_frames(a.edited), read_frames(a.reference), read_frames(a.source), ex, cache);
  report.print(std::cout);
  const fs::path csv = a.csv.empty() ? cfg.resolve(cfg.paths.output) / "metrics.csv" : fs::path(a.csv);
  fs::create_directories(csv.parent_path());
  report.write_csv(csv);
}

struct SweepArgs {
  int clip = 0;
  int frame = 0;
  std::string emotion = "all";
  std::string manifest = "eval.csv";
  std::string output;
};

void cmd_lie_sweep(const Common& c, const SweepArgs& a) {
  ProjectConfig cfg = load_config(c);
  const EditModels models = load_edit_models(cfg);
  const EditOptions opts = EditOptions::from_settings(cfg.edit);
  const ClipData clip = load_clip(cfg, a.manifest, a.clip, models.basis);
  if (a.frame < 0 || a.frame >= static_cast<int>(clip.frames.size()))
    throw ConfigError("lie-sweep: frame index out of range");
  const auto& names = default_emotion_names();
  std::vector<int> emotions;
  if (a.emotion == "all") {
    for (int y = 0; y < models.generator.n_e(); ++y) emotions.push_back(y);
  } else {
    const int y = emotion_index(names, a.emotion);
    if (y < 0) throw ConfigError("lie-sweep: neutral has no intensity sweep");
    emotions.push_back(y);
  }
  const fs::path out = a.output.empty() ? cfg.resolve(cfg.paths.output) / "lie" : fs::path(a.output);
  const ConvEmbedder g = generic_extractor(cfg);
  const DistanceFn dist = [&](const Image& x, const Image& y) { return g.conv.distance(x, y); };
  std::vector<std::pair<std::string, double>> rows;
  double sum = 0.0;
  for (int y : emotions) {
    const auto images = intensity_sweep(clip.frames[static_cast<std::size_t>(a.frame)],
                                        clip.coeffs[static_cast<std::size_t>(a.frame)], y, cfg.metrics.lie_steps,
                                        models, opts);
    const std::string name = names[static_cast<std::size_t>(y)];
    write_frames(images, out / name);
    const double lie = lie_metric(images, dist);
    rows.emplace_back("LIE_" + name, lie);
    sum += lie;
    std::cout << "LIE " << name << ' ' << lie << " (" << images.size() << " images)\n";
  }
  rows.emplace_back("LIE_mean", sum / static_cast<double>(emotions.size()));
  std::cout << "LIE mean " << rows.back().second << '\n';
  write_metrics_csv(rows, out / "lie.csv");
}

void cmd_print_config(const Common& c) {
  const ProjectConfig cfg = c.config.empty() ? ProjectConfig{} : load_project_config(c.config);
  nlohmann::json j = cfg;
  std::cout << j.dump(2) << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"emoedit: emotion editing of talking-face frame sequences"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "project configuration file (JSON)");
    sub->add_option("--seed", common.seed, "random seed")->capture_default_str();
  };

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic dataset");
  auto* shape = app.add_subcommand("train-shape", "train the shape-editing GAN");
  auto* texture = app.add_subcommand("train-texture", "train the texture autoencoder");
  auto* mouth = app.add_subcommand("train-mouth", "train the teeth translator");
  auto* dirs = app.add_subcommand("directions", "compute latent editing directions");
  auto* edit = app.add_subcommand("edit", "edit the expression of a clip");
  auto* metrics = app.add_subcommand("metrics", "Fréchet and identity metrics of edited frames");
  auto* sweep = app.add_subcommand("lie-sweep", "intensity sweep and its LIE score");
  auto* print = app.add_subcommand("print-config", "print the effective configuration");
  for (auto* s : {synth, shape, texture, mouth, dirs, edit, metrics, sweep, print}) add_common(s);

  EditArgs ea;
  edit->add_option("--clip", ea.clip, "clip id in the manifest")->capture_default_str();
  edit->add_option("--manifest", ea.manifest, "manifest under the dataset root")->capture_default_str();
  edit->add_option("--emotion", ea.emotion, "constant target emotion");
  edit->add_option("--intensity", ea.intensity, "intensity of --emotion")->capture_default_str();
  edit->add_option("--track", ea.track, "dense emotion track CSV");
  edit->add_option("--keyframes", ea.keyframes, "keyframe CSV, interpolated over the clip");
  edit->add_option("--output", ea.output, "output frame directory");
  edit->add_flag("--no-smoothing", ea.no_smoothing, "disable temporal smoothing");
  edit->add_flag("--causal", ea.causal, "causal smoothing window");
  edit->add_flag("--no-teeth", ea.no_teeth, "skip teeth filling");
  edit->add_flag("--rerender", ea.rerender, "straight re-render without editing");
  edit->add_flag("--no-cache", ea.no_cache, "do not read or write the analysis cache");

  MetricsArgs ma;
  metrics->add_option("--edited", ma.edited, "edited frames")->required();
  metrics->add_option("--reference", ma.reference, "frames with the target expression")->required();
  metrics->add_option("--source", ma.source, "source frames (identity reference)")->required();
  metrics->add_option("--csv", ma.csv, "CSV output path");
  metrics->add_flag("--no-cache", ma.no_cache, "do not read or write cached features");

  SweepArgs sa;
  sweep->add_option("--clip", sa.clip, "clip id in the manifest")->capture_default_str();
  sweep->add_option("--frame", sa.frame, "frame index within the clip")->capture_default_str();
  sweep->add_option("--emotion", sa.emotion, "emotion name or 'all'")->capture_default_str();
  sweep->add_option("--manifest", sa.manifest, "manifest under the dataset root")->capture_default_str();
  sweep->add_option("--output", sa.output, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  if (*synth) cmd_synth_data(common);
  if (*shape) cmd_train_shape(common);
  if (*texture) cmd_train_texture(common);
  if (*mouth) cmd_train_mouth(common);
  if (*dirs) cmd_directions(common);
  if (*edit) cmd_edit(common, ea);
  if (*metrics) cmd_metrics(common, ma);
  if (*sweep) cmd_lie_sweep(common, sa);
  if (*print) cmd_print_config(common);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const ModelMismatch& e) {
    spdlog::error("model mismatch: {}", e.what());
    return 3;
  } catch (const DimensionError& e) {
    spdlog::error("model mismatch: {}", e.what());
    return 3;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
