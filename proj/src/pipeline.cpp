#include "emoedit/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"
#include "emoedit/hash.hpp"

namespace emoedit {
namespace {

const char* const kManifestHeader = "path,actor,emotion,intensity_level,clip,frame";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("manifest: " + what + " '" + s + "' is not an integer");
  }
}

void hash_image(Sha256& h, const Image& img) {
  h.update(std::to_string(img.width()) + "x" + std::to_string(img.height()) + "x" + std::to_string(img.channels()));
  const auto d = img.data();
  h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(d.data()), d.size() * sizeof(float)));
}

void put_image(Archive& a, const std::string& name, const Image& img) {
  a.put(name, img.data(),
        {static_cast<std::uint64_t>(img.height()), static_cast<std::uint64_t>(img.width()),
         static_cast<std::uint64_t>(img.channels())});
}

Image get_image(const Archive& a, const std::string& name) {
  const auto& e = a.entry(name);
  if (e.shape.size() != 3) throw DataError("archive image '" + name + "' must have rank 3");
  const std::vector<float> v = a.floats(name);
  Image img(static_cast<int>(e.shape[1]), static_cast<int>(e.shape[0]), static_cast<int>(e.shape[2]));
  std::copy(v.begin(), v.end(), img.data().begin());
  return img;
}

Vertices posed_vertices(const MorphableBasis& basis, const FaceCoefficients& c) {
  return apply_pose(reconstruct_shape(basis, c), c.pose);
}

FeatureSet cached_features(const std::vector<Image>& images, const std::string& role, const std::string& extractor_id,
                           const std::function<FeatureSet()>& compute,
                           const std::optional<std::filesystem::path>& cache_dir) {
  if (!cache_dir) return compute();
  const auto path = *cache_dir / ("features_" + role + "_" + image_set_hash(images).substr(0, 24) + ".emo");
  if (std::filesystem::exists(path)) return load_feature_set(path, extractor_id);
  FeatureSet fs = compute();
  std::filesystem::create_directories(*cache_dir);
  save_feature_set(fs, path);
  return fs;
}

}  // namespace

// ------------------------------------------------------------------ manifest

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) return {};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) throw DataError("manifest header must be '" + std::string(kManifestHeader) + "'");
  std::vector<ManifestRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 6)
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 6 columns, got " +
                      std::to_string(cells.size()));
    rows.push_back({cells[0], cells[1], cells[2], parse_int(cells[3], "intensity_level"), parse_int(cells[4], "clip"),
                    parse_int(cells[5], "frame")});
  }
  return rows;
}

void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : rows)
    out << r.path << ',' << r.actor << ',' << r.emotion << ',' << r.intensity_level << ',' << r.clip << ','
        << r.frame << '\n';
}

std::vector<FrameRecord> ingest_dataset(const std::filesystem::path& root, const std::filesystem::path& manifest,
                                        const IngestOptions& opts) {
  if (opts.stride < 1) throw ConfigError("ingest: stride must be >= 1");
  if (opts.intensity_levels < 1) throw ConfigError("ingest: intensity_levels must be >= 1");
  std::vector<ManifestRow> rows = read_manifest(manifest);

  // Stride within each (actor, clip), in frame order.
  std::stable_sort(rows.begin(), rows.end(), [](const ManifestRow& a, const ManifestRow& b) {
    return std::tie(a.actor, a.clip, a.frame, a.path) < std::tie(b.actor, b.clip, b.frame, b.path);
  });
  std::vector<ManifestRow> kept;
  for (std::size_t i = 0, k = 0; i < rows.size(); ++i, ++k) {
    if (i > 0 && (rows[i].actor != rows[i - 1].actor || rows[i].clip != rows[i - 1].clip)) k = 0;
    if (k % static_cast<std::size_t>(opts.stride) == 0) kept.push_back(rows[i]);
  }
  std::sort(kept.begin(), kept.end(), [](const ManifestRow& a, const ManifestRow& b) { return a.path < b.path; });

  const int n_e = static_cast<int>(opts.emotion_names.size());
  std::vector<FrameRecord> out;
  out.reserve(kept.size());
  for (const auto& r : kept) {
    FrameRecord rec;
    rec.path = r.path;
    rec.actor = r.actor;
    rec.clip = r.clip;
    rec.frame = r.frame;
    const int y = emotion_index(opts.emotion_names, r.emotion);
    if (y < 0) {
      if (r.intensity_level < 0 || r.intensity_level > opts.intensity_levels)
        throw DataError(r.path + ": intensity level " + std::to_string(r.intensity_level) + " outside 0.." +
                        std::to_string(opts.intensity_levels));
      rec.level = 0;
      rec.emotion = EmotionVector::neutral(n_e);
    } else {
      if (r.intensity_level < 1 || r.intensity_level > opts.intensity_levels)
        throw DataError(r.path + ": intensity level " + std::to_string(r.intensity_level) + " outside 1.." +
                        std::to_string(opts.intensity_levels));
      rec.level = r.intensity_level;
      rec.emotion = EmotionVector::single(n_e, y, intensity_from_level(r.intensity_level, opts.intensity_levels));
    }
    const auto file = root / r.path;
    if (opts.load_images) {
      if (!std::filesystem::exists(file)) throw DataError("manifest references missing frame " + file.string());
      rec.image = load_png(file);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ------------------------------------------------------------------ coefficients

void save_coefficient_store(const CoefficientStore& store, const std::filesystem::path& path) {
  Archive a;
  a.meta["kind"] = "coefficient_store";
  a.meta["version"] = 1;
  nlohmann::json paths = nlohmann::json::array();
  const auto n = static_cast<Eigen::Index>(store.size());
  if (n > 0) {
    const auto& first = store.begin()->second;
    Eigen::MatrixXd alpha(n, first.alpha.size()), beta(n, first.beta.size()), pose(n, 6);
    Eigen::Index i = 0;
    for (const auto& [p, c] : store) {
      if (c.alpha.size() != alpha.cols() || c.beta.size() != beta.cols())
        throw DimensionError("coefficient store: records have different dimensions");
      paths.push_back(p);
      alpha.row(i) = c.alpha.transpose();
      beta.row(i) = c.beta.transpose();
      pose.row(i) = c.pose.transpose();
      ++i;
    }
    a.put("alpha", alpha);
    a.put("beta", beta);
    a.put("pose", pose);
  }
  a.meta["paths"] = paths;
  a.save(path);
}

CoefficientStore load_coefficient_store(const std::filesystem::path& path, const MorphableBasis& basis) {
  const Archive a = Archive::load(path);
  require_kind(a, "coefficient_store", 1);
  const auto paths = a.meta.at("paths").get<std::vector<std::string>>();
  CoefficientStore store;
  if (paths.empty()) return store;
  const Eigen::MatrixXd alpha = a.matrix("alpha"), beta = a.matrix("beta"), pose = a.matrix("pose");
  if (alpha.rows() != static_cast<Eigen::Index>(paths.size()) || beta.rows() != alpha.rows() ||
      pose.rows() != alpha.rows() || pose.cols() != 6)
    throw DataError(path.string() + ": inconsistent coefficient arrays");
  if (alpha.cols() != basis.n_alpha() || beta.cols() != basis.n_beta())
    throw ModelMismatch(path.string() + ": coefficients do not match the basis dimensions");
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    FaceCoefficients c = FaceCoefficients::zeros(basis);
    c.alpha = alpha.row(r).transpose();
    c.beta = beta.row(r).transpose();
    c.pose = pose.row(r).transpose();
    store[paths[i]] = std::move(c);
  }
  return store;
}

void attach_coefficients(std::vector<FrameRecord>& records, const CoefficientStore& store) {
  for (auto& r : records) {
    const auto it = store.find(r.path);
    if (it == store.end()) throw DataError("no coefficients for " + r.path);
    r.coeffs = it->second;
  }
}

// ------------------------------------------------------------------ models

void EditModels::check() const {
  if (generator.empty()) throw ConfigError("edit: shape generator is not trained");
  if (generator.n_c() != basis.n_coeffs())
    throw ModelMismatch("edit: generator has n_c = " + std::to_string(generator.n_c()) + ", basis has " +
                        std::to_string(basis.n_coeffs()));
  if (texture.empty()) throw ConfigError("edit: texture model is not trained");
  if (directions.model_id != texture.id())
    throw ModelMismatch("edit: editing directions were computed with a different texture model");
  for (const auto& [y, d] : directions.directions)
    if (d.n_layers() != texture.config.n_layers || d.dim() != texture.config.latent_dim)
      throw ModelMismatch("edit: direction shape does not match the texture model");
  if (static_cast<int>(directions.directions.size()) != generator.n_e())
    throw ModelMismatch("edit: generator and direction set cover different emotion counts");
  if (mouth && mouth->translator.config.channels != texture.config.channels)
    throw ModelMismatch("edit: mouth model and texture model channel counts differ");
}

EditModels load_edit_models(const ProjectConfig& cfg) {
  EditModels m;
  m.basis = load_basis(cfg.resolve(cfg.paths.basis()));
  m.camera = cfg.resolved_camera();
  m.generator = load_shape_checkpoint(cfg.resolve(cfg.paths.shape_checkpoint()), m.basis).generator;
  m.texture = load_texture_model(cfg.resolve(cfg.paths.texture_model()));
  m.directions = load_directions(cfg.resolve(cfg.paths.directions()));
  const auto mouth = cfg.resolve(cfg.paths.mouth_model());
  if (cfg.edit.fill_teeth || std::filesystem::exists(mouth)) m.mouth = load_mouth_model(mouth);
  m.check();
  return m;
}

EditOptions EditOptions::from_settings(const EditSettings& s) {
  EditOptions o;
  o.smoothing = s.smoothing;
  o.smoothing_options.weights = s.window;
  o.smoothing_options.causal = s.causal;
  o.mode = s.multi_label ? EmotionMode::multi_label : EmotionMode::strict;
  o.texture_options.allow_extrapolation = s.allow_extrapolation;
  o.fill_teeth = s.fill_teeth;
  o.blend_erode = s.blend_erode;
  o.blend_sigma = s.blend_sigma;
  return o;
}

// ------------------------------------------------------------------ analysis cache

AnalysisCache::AnalysisCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string AnalysisCache::key(const Image& frame, const FaceCoefficients& coeffs, const EditModels& models) {
  Sha256 h;
  hash_image(h, frame);
  h.update(Eigen::MatrixXd(coeffs.alpha)).update(Eigen::MatrixXd(coeffs.beta)).update(Eigen::MatrixXd(coeffs.pose));
  h.update(models.texture.id());
  h.update(basis_fingerprint(models.basis));
  std::ostringstream cam;
  cam << std::setprecision(17) << static_cast<int>(models.camera.mode) << ':' << models.camera.scale << ':'
      << models.camera.cx << ':' << models.camera.cy;
  h.update(cam.str());
  return h.hex();
}

std::optional<FrameAnalysis> AnalysisCache::get(const std::string& key) const {
  const auto path = dir_ / ("analysis_" + key + ".emo");
  if (!std::filesystem::exists(path)) return std::nullopt;
  const Archive a = Archive::load(path);
  require_kind(a, "frame_analysis", 1);
  ++hits_;
  return FrameAnalysis{get_image(a, "texture"), get_image(a, "valid"), LatentStack{a.matrix("latent")}};
}

void AnalysisCache::put(const std::string& key, const FrameAnalysis& fa) const {
  Archive a;
  a.meta["kind"] = "frame_analysis";
  a.meta["version"] = 1;
  put_image(a, "texture", fa.texture);
  put_image(a, "valid", fa.valid);
  a.put("latent", fa.latent.codes);
  const auto path = dir_ / ("analysis_" + key + ".emo");
  const auto tmp = dir_ / ("analysis_" + key + ".tmp");
  a.save(tmp);
  std::filesystem::rename(tmp, path);
}

FrameAnalysis analyze_frame(const Image& frame, const FaceCoefficients& coeffs, const EditModels& models) {
  coeffs.check_against(models.basis);
  const TextureExtraction ex =
      extract_texture(frame, models.basis, posed_vertices(models.basis, coeffs), models.camera,
                      models.texture.config.tex_size);
  FrameAnalysis a{ex.texture, ex.valid, encode(models.texture, ex.texture, &ex.valid)};
  return a;
}

// ------------------------------------------------------------------ editing

EditedCodes compute_edit_codes(const std::vector<FaceCoefficients>& coeffs,
                               const std::vector<FrameAnalysis>& analyses, const EmotionTrack& track,
                               const EditModels& models, const EditOptions& opts) {
  if (coeffs.size() != analyses.size()) throw DataError("edit: coefficient and analysis counts differ");
  if (track.length() != static_cast<int>(coeffs.size()))
    throw DataError("edit: emotion track has " + std::to_string(track.length()) + " frames, sequence has " +
                    std::to_string(coeffs.size()));
  const double max_intensity = opts.texture_options.allow_extrapolation ? 2.0 : 1.0;
  EditedCodes out;
  for (std::size_t t = 0; t < coeffs.size(); ++t) {
    const EmotionVector& e = track.frames[t];
    if (e.size() != models.generator.n_e())
      throw DimensionError("edit: emotion vector has " + std::to_string(e.size()) + " entries, models expect " +
                           std::to_string(models.generator.n_e()));
    EmotionVector::validate(e.values(), opts.mode, max_intensity);
    out.coeffs.push_back(edit_shape(models.generator, coeffs[t], e));
    out.latents.push_back(edit_latent(models.directions, analyses[t].latent, e, opts.texture_options));
  }
  return out;
}

EditedCodes smooth_codes(const EditedCodes& codes, const SmoothingOptions& opts) {
  std::vector<Eigen::VectorXd> c, w;
  for (const auto& x : codes.coeffs) c.push_back(x.shape_expression());
  for (const auto& x : codes.latents) w.push_back(x.flat());
  const auto cs = smooth_series(c, opts);
  const auto ws = smooth_series(w, opts);
  EditedCodes out = codes;
  for (std::size_t t = 0; t < out.coeffs.size(); ++t) {
    out.coeffs[t].set_shape_expression(cs[t]);
    out.latents[t] = LatentStack::from_flat(ws[t], codes.latents[t].n_layers(), codes.latents[t].dim());
  }
  return out;
}

Image render_edited_frame(const Image& frame, const FaceCoefficients& coeffs, const Image& texture,
                          const Image& valid, const EditModels& models, const EditOptions& opts) {
  const Vertices posed = posed_vertices(models.basis, coeffs);
  const RasterResult r =
      rasterize(models.basis, posed, texture, models.camera, frame.width(), frame.height(), &valid);
  const Image cavity = inner_mouth_mask(models.basis, posed, models.camera, frame.width(), frame.height());
  const Image hard = mask_union(r.mask, cavity);
  Image rendered = composite(r.image, frame, hard);
  if (opts.fill_teeth && models.mouth) rendered = fill_teeth(rendered, models.basis, coeffs, models.camera, *models.mouth);
  return blend(rendered, frame, hard, opts.blend_erode, opts.blend_sigma);
}

Image straight_rerender(const Image& frame, const FaceCoefficients& coeffs, const EditModels& models,
                        const EditOptions& opts) {
  const TextureExtraction ex = extract_texture(frame, models.basis, posed_vertices(models.basis, coeffs),
                                               models.camera, models.texture.config.tex_size);
  return render_edited_frame(frame, coeffs, ex.texture, ex.valid, models, opts);
}

std::vector<Image> edit_video(const std::vector<Image>& frames, const std::vector<FaceCoefficients>& coeffs,
                              const EmotionTrack& track, const EditModels& models, const EditOptions& opts,
                              const AnalysisCache* cache, EditTrace* trace) {
  models.check();
  if (frames.size() != coeffs.size()) throw DataError("edit: frame and coefficient counts differ");
  std::vector<FrameAnalysis> analyses;
  analyses.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (cache) {
      const std::string key = AnalysisCache::key(frames[t], coeffs[t], models);
      if (auto hit = cache->get(key)) {
        analyses.push_back(std::move(*hit));
        continue;
      }
      analyses.push_back(analyze_frame(frames[t], coeffs[t], models));
      cache->put(key, analyses.back());
    } else {
      analyses.push_back(analyze_frame(frames[t], coeffs[t], models));
    }
  }
  const EditedCodes raw = compute_edit_codes(coeffs, analyses, track, models, opts);
  const EditedCodes codes = opts.smoothing ? smooth_codes(raw, opts.smoothing_options) : raw;
  std::vector<Image> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Image tex = decode(models.texture, codes.latents[t]);
    out.push_back(render_edited_frame(frames[t], codes.coeffs[t], tex, analyses[t].valid, models, opts));
  }
  if (trace) {
    trace->raw = raw;
    trace->smoothed = codes;
  }
  return out;
}

std::vector<Image> intensity_sweep(const Image& frame, const FaceCoefficients& coeffs, int emotion, int steps,
                                   const EditModels& models, const EditOptions& opts) {
  models.check();
  if (steps < 2) throw ConfigError("intensity sweep: steps must be >= 2");
  if (emotion < 0 || emotion >= models.generator.n_e()) throw ConfigError("intensity sweep: emotion index out of range");
  const FrameAnalysis a = analyze_frame(frame, coeffs, models);
  std::vector<Image> out;
  for (int k = 0; k <= steps; ++k) {
    const EmotionVector e = EmotionVector::single(models.generator.n_e(), emotion, static_cast<double>(k) / steps);
    const FaceCoefficients c = edit_shape(models.generator, coeffs, e);
    const Image tex = decode(models.texture, edit_latent(models.directions, a.latent, e, opts.texture_options));
    out.push_back(render_edited_frame(frame, c, tex, a.valid, models, opts));
  }
  return out;
}

// ------------------------------------------------------------------ metrics

double MetricsReport::value(const std::string& name) const {
  for (const auto& [n, v] : rows)
    if (n == name) return v;
  throw DataError("metrics report has no entry '" + name + "'");
}

void MetricsReport::print(std::ostream& os) const {
  std::size_t width = 6;
  for (const auto& [n, _] : rows) width = std::max(width, n.size());
  os << std::left << std::setw(static_cast<int>(width)) << "metric" << "  value\n";
  os << std::string(width, '-') << "  " << std::string(12, '-') << '\n';
  for (const auto& [n, v] : rows)
    os << std::left << std::setw(static_cast<int>(width)) << n << "  " << std::setprecision(6) << v << '\n';
}

void MetricsReport::write_csv(const std::filesystem::path& path) const { write_metrics_csv(rows, path); }

std::string image_set_hash(const std::vector<Image>& images) {
  Sha256 h;
  h.update(std::to_string(images.size()));
  for (const auto& img : images) hash_image(h, img);
  return h.hex();
}

MetricsReport run_metrics(const std::vector<Image>& edited, const std::vector<Image>& references,
                          const std::vector<Image>& sources, const MetricsExtractors& ex,
                          const std::optional<std::filesystem::path>& cache_dir) {
  if (edited.size() < 2 || references.size() < 2) throw DataError("metrics: need at least 2 edited and 2 reference frames");
  if (sources.empty()) throw DataError("metrics: no source frames");
  auto feats = [&](const std::vector<Image>& imgs, const std::string& role, const std::string& id,
                   const std::function<FeatureSet()>& f) { return cached_features(imgs, role, id, f, cache_dir); };
  const std::string emo_id = ex.emotion.id(), idn_id = ex.identity.id(), gen_id = ex.generic.id();
  const FeatureSet e_emo = feats(edited, "emotion", emo_id, [&] { return ex.emotion.embed(edited); });
  const FeatureSet r_emo = feats(references, "emotion", emo_id, [&] { return ex.emotion.embed(references); });
  const FeatureSet e_gen = feats(edited, "generic", gen_id, [&] { return ex.generic.embed(edited); });
  const FeatureSet r_gen = feats(references, "generic", gen_id, [&] { return ex.generic.embed(references); });
  const FeatureSet e_id = feats(edited, "identity", idn_id, [&] { return ex.identity.embed(edited); });
  const FeatureSet s_id = feats(sources, "identity", idn_id, [&] { return ex.identity.embed(sources); });
  MetricsReport r;
  r.rows = {{"FED", frechet_distance(e_emo, r_emo)},
            {"FID", frechet_distance(e_gen, r_gen)},
            {"ID", identity_similarity(e_id, s_id)}};
  return r;
}

// ------------------------------------------------------------------ files

ProjectLock::ProjectLock(std::filesystem::path dir) : path_(dir / ".emoedit.lock") {
  std::filesystem::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw ConfigError("project is locked by another training command (remove " + path_.string() +
                      " if no command is running)");
  std::fclose(f);
}

ProjectLock::~ProjectLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

void write_frames(const std::vector<Image>& frames, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.png", i);
    save_png(frames[i], dir / name);
  }
}

std::vector<Image> read_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("frame directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  for (const auto& f : files) out.push_back(load_png(f));
  return out;
}

}  // namespace emoedit
