#include "emoedit/render.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "emoedit/error.hpp"

namespace emoedit {
namespace {

constexpr double kVisibilityEps = 1e-4;
constexpr double kDegenerateArea = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

struct ScreenTriangle {
  Eigen::Vector2d p[3];
  double z[3];
  double area;
};

ScreenTriangle screen_triangle(const ScreenVertices& sv, const Triangle& f) {
  ScreenTriangle t{};
  for (int k = 0; k < 3; ++k) {
    t.p[k] = sv.row(f[k]).head<2>().transpose();
    t.z[k] = sv(f[k], 2);
  }
  t.area = edge(t.p[0], t.p[1], t.p[2]);
  return t;
}

Eigen::Vector3d barycentric(const ScreenTriangle& t, const Eigen::Vector2d& p) {
  return Eigen::Vector3d(edge(t.p[1], t.p[2], p), edge(t.p[2], t.p[0], p),
                         edge(t.p[0], t.p[1], p)) /
         t.area;
}

double interpolate_depth(const ScreenTriangle& t, const Eigen::Vector3d& b, bool pinhole) {
  if (!pinhole) return b[0] * t.z[0] + b[1] * t.z[1] + b[2] * t.z[2];
  return 1.0 / (b[0] / t.z[0] + b[1] / t.z[1] + b[2] / t.z[2]);
}

// Screen barycentrics -> attribute weights (perspective-correct for pinhole).
Eigen::Vector3d attribute_weights(const ScreenTriangle& t, const Eigen::Vector3d& b, bool pinhole) {
  if (!pinhole) return b;
  Eigen::Vector3d w(b[0] / t.z[0], b[1] / t.z[1], b[2] / t.z[2]);
  return w / w.sum();
}

template <typename Fn>
void for_each_covered_center(const ScreenTriangle& t, int width, int height, Fn&& fn) {
  const double min_x = std::min({t.p[0].x(), t.p[1].x(), t.p[2].x()});
  const double max_x = std::max({t.p[0].x(), t.p[1].x(), t.p[2].x()});
  const double min_y = std::min({t.p[0].y(), t.p[1].y(), t.p[2].y()});
  const double max_y = std::max({t.p[0].y(), t.p[1].y(), t.p[2].y()});
  const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
  const int x1 = std::min(width - 1, static_cast<int>(std::floor(max_x - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
  const int y1 = std::min(height - 1, static_cast<int>(std::floor(max_y - 0.5)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Eigen::Vector2d p(x + 0.5, y + 0.5);
      const Eigen::Vector3d b = barycentric(t, p);
      if (b.minCoeff() >= 0.0) fn(x, y, b);
    }
}

}  // namespace

void Camera::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ConfigError("camera: scale / focal length must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw ConfigError("camera: non-finite principal point");
}

ScreenVertices project(const Vertices& vertices, const Camera& camera) {
  camera.validate();
  ScreenVertices out(vertices.rows(), 3);
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    const double x = vertices(i, 0), y = vertices(i, 1), z = vertices(i, 2);
    if (camera.mode == Camera::Mode::orthographic) {
      out.row(i) << camera.scale * x + camera.cx, camera.scale * y + camera.cy, z;
    } else {
      if (!(z > 0.0))
        throw DataError("project: pinhole camera needs positive depth, vertex " +
                        std::to_string(i) + " has z = " + std::to_string(z));
      out.row(i) << camera.scale * x / z + camera.cx, camera.scale * y / z + camera.cy, z;
    }
  }
  return out;
}

RasterResult rasterize(const MorphableBasis& basis, const Vertices& posed_vertices,
                       const Image& texture, const Camera& camera, int width, int height,
                       const Image* texture_valid) {
  if (texture.width() != texture.height()) throw DimensionError("rasterize: texture must be square");
  if (posed_vertices.rows() != basis.n_vertices())
    throw DimensionError("rasterize: vertex count does not match basis");
  if (!posed_vertices.allFinite()) throw DataError("rasterize: non-finite vertices");
  const bool pinhole = camera.mode == Camera::Mode::pinhole;
  const ScreenVertices sv = project(posed_vertices, camera);

  RasterResult r;
  r.depth = Eigen::MatrixXd::Constant(height, width, kInf);
  r.face_id = Eigen::MatrixXi::Constant(height, width, -1);
  std::vector<Eigen::Vector3d> weights(static_cast<std::size_t>(width) * height);

  for (std::size_t fi = 0; fi < basis.faces.size(); ++fi) {
    const ScreenTriangle t = screen_triangle(sv, basis.faces[fi]);
    if (std::abs(t.area) < kDegenerateArea) {
      ++r.degenerate_faces;
      continue;
    }
    if (t.area < 0.0) {
      ++r.back_faces;
      continue;
    }
    for_each_covered_center(t, width, height, [&](int x, int y, const Eigen::Vector3d& b) {
      const double z = interpolate_depth(t, b, pinhole);
      if (z < r.depth(y, x)) {
        r.depth(y, x) = z;
        r.face_id(y, x) = static_cast<int>(fi);
        weights[static_cast<std::size_t>(y) * width + x] = attribute_weights(t, b, pinhole);
      }
    });
  }
  if (r.degenerate_faces > 0)
    spdlog::debug("rasterize: skipped {} degenerate faces", r.degenerate_faces);

  r.image = Image(width, height, texture.channels());
  r.mask = Image(width, height, 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int fi = r.face_id(y, x);
      if (fi < 0) continue;
      const auto& f = basis.faces[static_cast<std::size_t>(fi)];
      const Eigen::Vector3d& w = weights[static_cast<std::size_t>(y) * width + x];
      const Eigen::Vector2d uv =
          w[0] * basis.uv.row(f[0]).transpose() + w[1] * basis.uv.row(f[1]).transpose() +
          w[2] * basis.uv.row(f[2]).transpose();
      if (texture_valid && texture_valid->sample_uv(uv.x(), uv.y(), 0) < 0.5f) {
        r.face_id(y, x) = -1;
        r.depth(y, x) = kInf;
        continue;
      }
      for (int c = 0; c < texture.channels(); ++c)
        r.image.set(x, y, c, texture.sample_uv(uv.x(), uv.y(), c));
      r.mask.raw(x, y) = 1.0f;
    }
  return r;
}

TextureExtraction extract_texture(const Image& frame, const MorphableBasis& basis,
                                  const Vertices& posed_vertices, const Camera& camera,
                                  int tex_size) {
  if (tex_size <= 0) throw ConfigError("extract_texture: tex_size must be positive");
  const bool pinhole = camera.mode == Camera::Mode::pinhole;
  const ScreenVertices sv = project(posed_vertices, camera);
  // The z-buffer of the untextured mesh decides visibility.
  const Image flat(1, 1, 1, 1.0f);
  const RasterResult zr =
      rasterize(basis, posed_vertices, flat, camera, frame.width(), frame.height());

  TextureExtraction out{Image(tex_size, tex_size, frame.channels()), Image(tex_size, tex_size, 1)};
  for (std::size_t fi = 0; fi < basis.faces.size(); ++fi) {
    const auto& f = basis.faces[fi];
    const ScreenTriangle st = screen_triangle(sv, f);
    if (st.area < kDegenerateArea) continue;  // back-facing or degenerate
    ScreenTriangle uvt{};
    for (int k = 0; k < 3; ++k) {
      uvt.p[k] = basis.uv.row(f[k]).transpose() * tex_size;
      uvt.z[k] = 0.0;
    }
    uvt.area = edge(uvt.p[0], uvt.p[1], uvt.p[2]);
    if (std::abs(uvt.area) < kDegenerateArea) continue;
    for_each_covered_center(uvt, tex_size, tex_size, [&](int tx, int ty, Eigen::Vector3d b) {
      if (out.valid.at(tx, ty) > 0.5f) return;
      // Surface point in screen space; attribute interpolation is affine in 3D.
      Eigen::Vector3d p3 = Eigen::Vector3d::Zero();
      for (int k = 0; k < 3; ++k) p3 += b[k] * posed_vertices.row(f[k]).transpose();
      double sx, sy, sz = p3.z();
      if (pinhole) {
        if (!(sz > 0.0)) return;
        sx = camera.scale * p3.x() / sz + camera.cx;
        sy = camera.scale * p3.y() / sz + camera.cy;
      } else {
        sx = camera.scale * p3.x() + camera.cx;
        sy = camera.scale * p3.y() + camera.cy;
      }
      const int px = static_cast<int>(std::floor(sx)), py = static_cast<int>(std::floor(sy));
      if (px < 0 || py < 0 || px >= frame.width() || py >= frame.height()) return;
      if (zr.face_id(py, px) < 0) return;
      // Nearest surface at the exact point, among the faces the z-buffer
      // shows around it (the pixel's own owner may be a neighbouring facet).
      double front_depth = sz;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int qx = px + dx, qy = py + dy;
          if (qx < 0 || qy < 0 || qx >= frame.width() || qy >= frame.height()) continue;
          const int cand = zr.face_id(qy, qx);
          if (cand < 0 || cand == static_cast<int>(fi)) continue;
          const ScreenTriangle ct = screen_triangle(sv, basis.faces[static_cast<std::size_t>(cand)]);
          const Eigen::Vector3d cb = barycentric(ct, Eigen::Vector2d(sx, sy));
          if (cb.minCoeff() < -1e-9) continue;
          front_depth = std::min(front_depth, interpolate_depth(ct, cb, pinhole));
        }
      if (sz > front_depth + kVisibilityEps) return;
      for (int c = 0; c < frame.channels(); ++c) out.texture.set(tx, ty, c, frame.sample(sx, sy, c));
      out.valid.raw(tx, ty) = 1.0f;
    });
  }
  return out;
}

Image fill_invalid_texels(const Image& texture, const Image& valid) {
  if (valid.width() != texture.width() || valid.height() != texture.height())
    throw DimensionError("fill_invalid_texels: mask size differs from texture");
  const int w = texture.width(), h = texture.height();
  Image out = texture;
  std::vector<char> done(static_cast<std::size_t>(w) * h, 0);
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (valid.at(x, y) > 0.5f) {
        done[static_cast<std::size_t>(y) * w + x] = 1;
        queue.emplace_back(x, y);
      }
  constexpr int kDx[] = {1, -1, 0, 0};
  constexpr int kDy[] = {0, 0, 1, -1};
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    for (int k = 0; k < 4; ++k) {
      const int nx = x + kDx[k], ny = y + kDy[k];
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      auto& d = done[static_cast<std::size_t>(ny) * w + nx];
      if (d) continue;
      d = 1;
      for (int c = 0; c < texture.channels(); ++c) out.raw(nx, ny, c) = out.at(x, y, c);
      queue.emplace_back(nx, ny);
    }
  }
  return out;
}

Image erode_disk(const Image& mask, int radius) {
  if (radius <= 0) return mask;
  const int w = mask.width(), h = mask.height();
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dx, dy);
  Image out(w, h, mask.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < mask.channels(); ++c) {
        float m = 1.0f;
        for (const auto& [dx, dy] : offsets) {
          m = std::min(m, mask.at(std::clamp(x + dx, 0, w - 1), std::clamp(y + dy, 0, h - 1), c));
          if (m == 0.0f) break;
        }
        out.raw(x, y, c) = m;
      }
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(k + radius)];
  }
  for (auto& k : kernel) k /= total;
  const int w = img.width(), h = img.height(), ch = img.channels();
  Image tmp(w, h, ch), out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(std::clamp(x + k, 0, w - 1), y, c);
        tmp.raw(x, y, c) = static_cast<float>(acc);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(x, std::clamp(y + k, 0, h - 1), c);
        out.set(x, y, c, static_cast<float>(acc));
      }
  return out;
}

Image blend(const Image& rendered, const Image& background, const Image& hard_mask,
            int erode_radius, double blur_sigma) {
  if (!rendered.same_shape(background) || hard_mask.width() != rendered.width() ||
      hard_mask.height() != rendered.height() || hard_mask.channels() != 1)
    throw DimensionError("blend: rendered, background and mask sizes differ");
  const Image eroded = erode_disk(hard_mask, erode_radius);
  const auto nonzero = [](const Image& m) {
    return std::any_of(m.data().begin(), m.data().end(), [](float v) { return v > 0.0f; });
  };
  if (nonzero(hard_mask) && !nonzero(eroded))
    spdlog::warn("blend: erode radius {} removes the whole mask; output is the background",
                 erode_radius);
  const Image soft = gaussian_blur(eroded, blur_sigma);
  Image out(rendered.width(), rendered.height(), rendered.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const float s = soft.at(x, y);
      for (int c = 0; c < out.channels(); ++c)
        out.raw(x, y, c) = s * rendered.at(x, y, c) + (1.0f - s) * background.at(x, y, c);
    }
  return out;
}

Image polygon_mask(const std::vector<Eigen::Vector2d>& polygon, int width, int height) {
  Image mask(width, height, 1);
  if (polygon.size() < 3) return mask;
  double min_y = kInf, max_y = -kInf;
  for (const auto& p : polygon) {
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(max_y)));
  for (int y = y0; y <= y1; ++y) {
    const double py = y + 0.5;
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
        const auto& a = polygon[i];
        const auto& b = polygon[j];
        if ((a.y() > py) != (b.y() > py) &&
            px < (b.x() - a.x()) * (py - a.y()) / (b.y() - a.y()) + a.x())
          inside = !inside;
      }
      if (inside) mask.raw(x, y) = 1.0f;
    }
  }
  return mask;
}

std::vector<Eigen::Vector2d> mouth_polygon(const MorphableBasis& basis,
                                           const Vertices& posed_vertices,
                                           const Camera& camera) {
  const ScreenVertices sv = project(posed_vertices, camera);
  std::vector<Eigen::Vector2d> poly;
  for (int v : basis.lip_loop()) poly.emplace_back(sv(v, 0), sv(v, 1));
  return poly;
}

Image inner_mouth_mask(const MorphableBasis& basis, const Vertices& posed_vertices,
                       const Camera& camera, int width, int height) {
  return polygon_mask(mouth_polygon(basis, posed_vertices, camera), width, height);
}

Image mask_union(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("mask_union: shapes differ");
  Image out = a;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = std::max(a.data()[i], b.data()[i]);
  return out;
}

Image composite(const Image& fg, const Image& bg, const Image& mask) {
  if (!fg.same_shape(bg) || mask.width() != fg.width() || mask.height() != fg.height())
    throw DimensionError("composite: shapes differ");
  Image out = bg;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (mask.at(x, y) > 0.5f)
        for (int c = 0; c < out.channels(); ++c) out.raw(x, y, c) = fg.at(x, y, c);
  return out;
}

}  // namespace emoedit
