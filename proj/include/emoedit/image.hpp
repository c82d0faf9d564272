#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace emoedit {

/// Row-major float image with 1 or 3 interleaved channels. Values written
/// through `set` are clamped to [0,1]; pixel centres sit at half-integer
/// coordinates with the origin at the top-left corner.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float& raw(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  void set(int x, int y, int c, float v);

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  void clamp();
  bool same_shape(const Image& other) const;

  /// Bilinear sample at continuous pixel coordinates, border replicated.
  float sample(double x, double y, int c) const;
  /// Bilinear sample at texture coordinates (u, v) in [0,1]^2.
  float sample_uv(double u, double v, int c) const {
    return sample(u * width_, v * height_, c);
  }

  /// Flattened copy in [0,1] as doubles (length width*height*channels).
  Eigen::VectorXd to_vector() const;
  static Image from_vector(const Eigen::VectorXd& v, int width, int height, int channels);

  bool operator==(const Image& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

Image load_png(const std::filesystem::path& path);
/// 8-bit PNG, gray or RGB by channel count; values rounded from [0,1].
void save_png(const Image& img, const std::filesystem::path& path);

/// Lossless float container (named-array archive, kind "image").
void save_float_image(const Image& img, const std::filesystem::path& path);
Image load_float_image(const std::filesystem::path& path);

/// Area-average downsample by an integer factor.
Image downsample(const Image& img, int factor);
/// Bilinear resize to the given size.
Image resize_bilinear(const Image& img, int width, int height);
/// Mean of channels, as a 1-channel image.
Image to_gray(const Image& img);

double mean_abs_diff(const Image& a, const Image& b);
/// Mean absolute difference restricted to pixels where mask > 0.5.
double mean_abs_diff(const Image& a, const Image& b, const Image& mask);

}  // namespace emoedit
