#include "emoedit/mouth_inpaint.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"

namespace emoedit {
namespace {

// Similarity taking the points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d hartley(const Points2d& p) {
  const Eigen::RowVector2d c = p.colwise().mean();
  double mean_dist = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) mean_dist += (p.row(i) - c).norm();
  mean_dist /= static_cast<double>(p.rows());
  if (!(mean_dist > 0.0)) throw DataError("estimate_homography: all points coincide");
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

Points2d transform(const Eigen::Matrix3d& h, const Points2d& p) {
  Points2d out(p.rows(), 2);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const Eigen::Vector3d q = h * Eigen::Vector3d(p(i, 0), p(i, 1), 1.0);
    out(i, 0) = q.x() / q.z();
    out(i, 1) = q.y() / q.z();
  }
  return out;
}

// True when some line holds at least L-1 of the (normalized) points.
bool nearly_collinear(const Points2d& p) {
  const Eigen::Index n = p.rows();
  constexpr double kTol = 1e-9;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Eigen::Vector2d d = (p.row(j) - p.row(i)).transpose();
      const double len = d.norm();
      if (len < kTol) continue;
      Eigen::Index on_line = 0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Vector2d e = (p.row(k) - p.row(i)).transpose();
        if (std::abs(d.x() * e.y() - d.y() * e.x()) / len < kTol) ++on_line;
      }
      if (on_line >= n - 1) return true;
    }
  return false;
}

Vertices posed_shape(const MorphableBasis& basis, const FaceCoefficients& coeffs) {
  return apply_pose(reconstruct_shape(basis, coeffs), coeffs.pose);
}

void put_box(Archive& a, const CropBox& box) {
  a.meta["box"] = {{"x0", box.x0}, {"y0", box.y0}, {"size", box.size}};
}

CropBox get_box(const Archive& a) {
  const auto& b = a.meta.at("box");
  return {b.at("x0").get<double>(), b.at("y0").get<double>(), b.at("size").get<double>()};
}

void put_patches(Archive& a, const std::string& name, const std::vector<MouthPatch>& patches) {
  if (patches.empty()) {
    a.put(name, std::span<const float>(), {0, 0, 0, 0});
    return;
  }
  const auto& first = patches.front().image;
  std::vector<float> all;
  for (const auto& p : patches) {
    if (!p.image.same_shape(first)) throw DimensionError("mouth pairs: patches differ in size");
    all.insert(all.end(), p.image.data().begin(), p.image.data().end());
  }
  a.put(name, all,
        {patches.size(), static_cast<std::uint64_t>(first.height()), static_cast<std::uint64_t>(first.width()),
         static_cast<std::uint64_t>(first.channels())});
}

std::vector<Image> get_images(const Archive& a, const std::string& name) {
  const auto& shape = a.entry(name).shape;
  if (shape.size() != 4) throw DataError("mouth pairs: '" + name + "' must have rank 4");
  const auto data = a.floats(name);
  std::vector<Image> out;
  const std::size_t per = static_cast<std::size_t>(shape[1] * shape[2] * shape[3]);
  for (std::uint64_t i = 0; i < shape[0]; ++i) {
    Image img(static_cast<int>(shape[2]), static_cast<int>(shape[1]), static_cast<int>(shape[3]));
    std::copy_n(data.begin() + static_cast<long>(i * per), per, img.data().begin());
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace

Eigen::Matrix3d estimate_homography(const Points2d& src, const Points2d& dst) {
  if (src.rows() != dst.rows()) throw DimensionError("estimate_homography: point counts differ");
  if (src.rows() < 4) throw DataError("estimate_homography: need at least 4 correspondences");
  const Eigen::Matrix3d ts = hartley(src), td = hartley(dst);
  const Points2d s = transform(ts, src), d = transform(td, dst);
  if (nearly_collinear(s) || nearly_collinear(d))
    throw DataError("estimate_homography: degenerate configuration (collinear points)");

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * src.rows(), 9);
  for (Eigen::Index i = 0; i < src.rows(); ++i) {
    const double x = s(i, 0), y = s(i, 1), u = d(i, 0), v = d(i, 1);
    a.row(2 * i) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    a.row(2 * i + 1) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() >= 8 && sv[7] <= 1e-12 * sv[0])
    throw DataError("estimate_homography: correspondences do not determine a unique homography");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  Eigen::Matrix3d out = td.inverse() * hn * ts;
  if (std::abs(out(2, 2)) < 1e-12) throw NumericalError("estimate_homography: H(2,2) vanishes");
  out /= out(2, 2);
  return out;
}

Points2d apply_homography(const Eigen::Matrix3d& h, const Points2d& pts) { return transform(h, pts); }

double max_reprojection_error(const Eigen::Matrix3d& h, const Points2d& src, const Points2d& dst) {
  const Points2d p = transform(h, src);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) worst = std::max(worst, (p.row(i) - dst.row(i)).norm());
  return worst;
}

FrontalLandmarks frontalize_landmarks(const MorphableBasis& basis, const FaceCoefficients& coeffs,
                                      const Camera& camera) {
  if (basis.mouth_landmarks.empty()) throw DataError("frontalize_landmarks: basis has no mouth landmarks");
  const Vertices shape = reconstruct_shape(basis, coeffs);
  const ScreenVertices posed = project(apply_pose(shape, coeffs.pose), camera);
  const ScreenVertices frontal = project(shape, camera);
  FrontalLandmarks out{Points2d(basis.mouth_landmarks.size(), 2), Points2d(basis.mouth_landmarks.size(), 2)};
  for (std::size_t i = 0; i < basis.mouth_landmarks.size(); ++i) {
    const int v = basis.mouth_landmarks[i];
    out.observed.row(static_cast<Eigen::Index>(i)) << posed(v, 0), posed(v, 1);
    out.frontal.row(static_cast<Eigen::Index>(i)) << frontal(v, 0), frontal(v, 1);
  }
  return out;
}

CropBox crop_box(const Points2d& pts, double expand) {
  if (pts.rows() == 0) throw DataError("crop_box: no points");
  const Eigen::RowVector2d lo = pts.colwise().minCoeff(), hi = pts.colwise().maxCoeff();
  const double side = (hi - lo).maxCoeff() * (1.0 + expand);
  if (!(side > 0.0)) throw DataError("crop_box: points span no area");
  const Eigen::RowVector2d c = 0.5 * (lo + hi);
  return {c.x() - 0.5 * side, c.y() - 0.5 * side, side};
}

Image crop_frontal(const Image& frame, const Eigen::Matrix3d& h, const CropBox& box, int crop_size) {
  const Eigen::Matrix3d inv = h.inverse();
  Image out(crop_size, crop_size, frame.channels());
  for (int j = 0; j < crop_size; ++j)
    for (int i = 0; i < crop_size; ++i) {
      const Eigen::Vector3d q(box.x0 + (i + 0.5) / crop_size * box.size, box.y0 + (j + 0.5) / crop_size * box.size, 1.0);
      const Eigen::Vector3d p = inv * q;
      for (int c = 0; c < frame.channels(); ++c) out.raw(i, j, c) = frame.sample(p.x() / p.z(), p.y() / p.z(), c);
    }
  return out;
}

void MouthConfig::validate() const {
  if (crop_size < 4 || !(box_expand >= 0.0) || feather < 0 || !(change_weight >= 0.0) || texture_size < 4)
    throw ConfigError("mouth config: crop_size >= 4, box_expand >= 0, feather >= 0, texture_size >= 4 required");
  translator.validate();
  if (translator.tex_size != crop_size) throw ConfigError("mouth config: translator size must equal crop_size");
}

Image render_toothless(const Image& frame, const MorphableBasis& basis, const FaceCoefficients& coeffs,
                       const Camera& camera, int texture_size) {
  const Vertices posed = posed_shape(basis, coeffs);
  const TextureExtraction ext = extract_texture(frame, basis, posed, camera, texture_size);
  const RasterResult r = rasterize(basis, posed, ext.texture, camera, frame.width(), frame.height(), &ext.valid);
  const Image cavity = inner_mouth_mask(basis, posed, camera, frame.width(), frame.height());
  return composite(r.image, frame, mask_union(r.mask, cavity));
}

MouthPairs make_paired_mouth_data(const std::vector<Image>& frames, const MorphableBasis& basis,
                                  const std::vector<FaceCoefficients>& coeffs, const Camera& camera,
                                  const MouthConfig& cfg) {
  cfg.validate();
  if (frames.size() != coeffs.size()) throw DataError("make_paired_mouth_data: frames and coefficients differ in count");
  MouthPairs pairs;
  if (frames.empty()) return pairs;
  std::vector<FrontalLandmarks> lms;
  Points2d mean = Points2d::Zero(static_cast<Eigen::Index>(basis.mouth_landmarks.size()), 2);
  for (const auto& c : coeffs) {
    lms.push_back(frontalize_landmarks(basis, c, camera));
    mean += lms.back().frontal;
  }
  mean /= static_cast<double>(coeffs.size());
  pairs.box = crop_box(mean, cfg.box_expand);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Eigen::Matrix3d h = estimate_homography(lms[i].observed, lms[i].frontal);
    const Image toothless = render_toothless(frames[i], basis, coeffs[i], camera, cfg.texture_size);
    const int idx = static_cast<int>(i);
    pairs.toothless.push_back({crop_frontal(toothless, h, pairs.box, cfg.crop_size), h, idx});
    pairs.toothed.push_back({crop_frontal(frames[i], h, pairs.box, cfg.crop_size), h, idx});
  }
  return pairs;
}

MouthTrainResult train_mouth_translator(const MouthPairs& pairs, const MouthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (pairs.toothless.empty()) throw DataError("train_mouth_translator: no training pairs");
  if (pairs.toothless.size() != pairs.toothed.size()) throw DataError("train_mouth_translator: unpaired patches");
  std::vector<Image> in, out;
  for (std::size_t i = 0; i < pairs.toothless.size(); ++i) {
    in.push_back(pairs.toothless[i].image);
    out.push_back(pairs.toothed[i].image);
  }
  TextureTrainResult t = train_translator(in, out, cfg.translator, seed, cfg.change_weight);
  return {{std::move(t.model), pairs.box, cfg.feather}, std::move(t.log)};
}

Image translate_patch(const MouthModel& model, const Image& toothless) {
  return decode(model.translator, encode(model.translator, toothless));
}

Image paste_weights(const Image& inner_mask, int feather) {
  const int w = inner_mask.width(), h = inner_mask.height();
  Image out(w, h, 1);
  std::vector<Eigen::Vector2i> inside;
  int x_lo = w, x_hi = -1, y_lo = h, y_hi = -1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (inner_mask.at(x, y) > 0.5f) {
        inside.emplace_back(x, y);
        out.raw(x, y) = 1.0f;
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
      }
  if (inside.empty() || feather == 0) return out;
  for (int y = std::max(0, y_lo - feather); y <= std::min(h - 1, y_hi + feather); ++y)
    for (int x = std::max(0, x_lo - feather); x <= std::min(w - 1, x_hi + feather); ++x) {
      if (out.at(x, y) > 0.0f) continue;
      double best = 1e300;
      for (const auto& p : inside) best = std::min(best, std::hypot(p.x() - x, p.y() - y));
      if (best <= feather) out.raw(x, y) = static_cast<float>(1.0 - best / (feather + 1.0));
    }
  return out;
}

Image fill_teeth(const Image& rendered_frame, const MorphableBasis& basis, const FaceCoefficients& coeffs,
                 const Camera& camera, const MouthModel& model) {
  if (model.translator.empty()) throw ConfigError("fill_teeth: mouth model is not trained");
  if (model.translator.config.channels != rendered_frame.channels())
    throw DimensionError("fill_teeth: mouth model and frame channel counts differ");
  const Vertices posed = posed_shape(basis, coeffs);
  const Image inner = inner_mouth_mask(basis, posed, camera, rendered_frame.width(), rendered_frame.height());
  const auto& mdata = inner.data();
  if (std::none_of(mdata.begin(), mdata.end(), [](float v) { return v > 0.5f; })) return rendered_frame;

  Eigen::Matrix3d h;
  try {
    const FrontalLandmarks fl = frontalize_landmarks(basis, coeffs, camera);
    h = estimate_homography(fl.observed, fl.frontal);
  } catch (const Error& e) {
    spdlog::warn("fill_teeth: mouth alignment failed ({}); frame left unfilled", e.what());
    return rendered_frame;
  }
  const int s = model.translator.config.tex_size;
  const Image patch = translate_patch(model, crop_frontal(rendered_frame, h, model.box, s));
  const Image weights = paste_weights(inner, model.feather);

  Image out = rendered_frame;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const float a = weights.at(x, y);
      if (a <= 0.0f) continue;
      const Eigen::Vector3d q = h * Eigen::Vector3d(x + 0.5, y + 0.5, 1.0);
      const double u = (q.x() / q.z() - model.box.x0) / model.box.size * s;
      const double v = (q.y() / q.z() - model.box.y0) / model.box.size * s;
      for (int c = 0; c < out.channels(); ++c)
        out.set(x, y, c, a * patch.sample(u, v, c) + (1.0f - a) * rendered_frame.at(x, y, c));
    }
  return out;
}

void save_mouth_model(const MouthModel& model, const std::filesystem::path& path) {
  Archive a;
  a.meta["kind"] = "mouth_model";
  a.meta["version"] = 1;
  a.meta["feather"] = model.feather;
  put_box(a, model.box);
  put_texture_model(a, model.translator, "translator.");
  a.save(path);
}

MouthModel load_mouth_model(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  require_kind(a, "mouth_model", 1);
  MouthModel m;
  m.feather = a.meta.at("feather").get<int>();
  m.box = get_box(a);
  m.translator = get_texture_model(a, "translator.");
  return m;
}

void save_mouth_pairs(const MouthPairs& pairs, const std::filesystem::path& path) {
  if (pairs.toothless.size() != pairs.toothed.size()) throw DataError("save_mouth_pairs: unpaired patches");
  Archive a;
  a.meta["kind"] = "mouth_pairs";
  a.meta["version"] = 1;
  put_box(a, pairs.box);
  put_patches(a, "toothless", pairs.toothless);
  put_patches(a, "toothed", pairs.toothed);
  Eigen::MatrixXd hs(static_cast<Eigen::Index>(pairs.toothless.size()), 9);
  std::vector<std::int64_t> frames;
  for (std::size_t i = 0; i < pairs.toothless.size(); ++i) {
    const Eigen::Matrix3d& h = pairs.toothless[i].homography;
    for (int k = 0; k < 9; ++k) hs(static_cast<Eigen::Index>(i), k) = h(k / 3, k % 3);
    frames.push_back(pairs.toothless[i].frame);
  }
  a.put("homography", hs);
  a.put("frame", frames);
  a.save(path);
}

MouthPairs load_mouth_pairs(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  require_kind(a, "mouth_pairs", 1);
  MouthPairs pairs;
  pairs.box = get_box(a);
  const auto toothless = get_images(a, "toothless"), toothed = get_images(a, "toothed");
  const auto frames = a.ints("frame");
  const Eigen::MatrixXd hs = toothless.empty() ? Eigen::MatrixXd() : a.matrix("homography");
  if (toothed.size() != toothless.size() || frames.size() != toothless.size())
    throw DataError(path.string() + ": inconsistent pair counts");
  for (std::size_t i = 0; i < toothless.size(); ++i) {
    Eigen::Matrix3d h;
    for (int k = 0; k < 9; ++k) h(k / 3, k % 3) = hs(static_cast<Eigen::Index>(i), k);
    const int f = static_cast<int>(frames[i]);
    pairs.toothless.push_back({toothless[i], h, f});
    pairs.toothed.push_back({toothed[i], h, f});
  }
  return pairs;
}

}  // namespace emoedit
