#pragma once

// Software rasterizer for morphable-model meshes: projection, z-buffered
// texture-mapped rendering, inverse texture extraction and soft-mask
// blending.

#include <vector>

#include "emoedit/image.hpp"
#include "emoedit/morphable.hpp"

namespace emoedit {

struct Camera {
  enum class Mode { orthographic, pinhole };
  Mode mode = Mode::orthographic;
  double scale = 1.0;  // pixels per model unit (orthographic) or focal length in pixels
  double cx = 0.0;     // principal point, pixels
  double cy = 0.0;

  void validate() const;
};

/// V x 3 rows of (x_pix, y_pix, depth). Smaller depth is nearer.
using ScreenVertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

ScreenVertices project(const Vertices& vertices, const Camera& camera);

struct RasterResult {
  Image image;                  // texture colour where covered, 0 elsewhere
  Image mask;                   // 1 where a face covers the pixel centre
  Eigen::MatrixXd depth;        // height x width, +inf where uncovered
  Eigen::MatrixXi face_id;      // height x width, -1 where uncovered
  int degenerate_faces = 0;     // zero screen area, skipped
  int back_faces = 0;           // culled
};

/// Renders the posed mesh with per-pixel barycentric UV interpolation and
/// bilinear texture lookup. When `texture_valid` is given, pixels whose
/// interpolated validity is below 0.5 are left uncovered.
RasterResult rasterize(const MorphableBasis& basis, const Vertices& posed_vertices,
                       const Image& texture, const Camera& camera, int width, int height,
                       const Image* texture_valid = nullptr);

struct TextureExtraction {
  Image texture;  // tex_size x tex_size x frame channels
  Image valid;    // 1 where the texel's surface point is visible in the frame
};

/// Inverse of `rasterize`: samples the frame at the projection of each
/// texel's surface point; texels hidden by the z-buffer, on back faces or
/// outside every UV triangle are marked invalid.
TextureExtraction extract_texture(const Image& frame, const MorphableBasis& basis,
                                  const Vertices& posed_vertices, const Camera& camera,
                                  int tex_size);

/// Fills invalid texels with the value of the nearest valid texel
/// (breadth-first dilation, 4-neighbourhood, deterministic order).
Image fill_invalid_texels(const Image& texture, const Image& valid);

/// Morphological erosion with a disk of the given radius; out-of-image
/// pixels replicate the border.
Image erode_disk(const Image& mask, int radius);
/// Separable Gaussian blur truncated at 3 sigma, border replicated.
Image gaussian_blur(const Image& img, double sigma);

/// soft = blur(erode(hard_mask)); out = soft * rendered + (1 - soft) * background.
Image blend(const Image& rendered, const Image& background, const Image& hard_mask,
            int erode_radius, double blur_sigma);

/// 1 for pixel centres inside the closed polygon (even-odd rule).
Image polygon_mask(const std::vector<Eigen::Vector2d>& polygon, int width, int height);

/// Projected lip-loop polygon of a posed shape.
std::vector<Eigen::Vector2d> mouth_polygon(const MorphableBasis& basis,
                                           const Vertices& posed_vertices,
                                           const Camera& camera);
Image inner_mouth_mask(const MorphableBasis& basis, const Vertices& posed_vertices,
                       const Camera& camera, int width, int height);

/// Pixel-wise max of two masks.
Image mask_union(const Image& a, const Image& b);
/// out = mask ? fg : bg, hard switch at 0.5.
Image composite(const Image& fg, const Image& bg, const Image& mask);

}  // namespace emoedit
