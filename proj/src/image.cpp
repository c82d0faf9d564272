#include "emoedit/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"

namespace emoedit {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3))
    throw DimensionError("image: invalid size " + std::to_string(width) + "x" +
                         std::to_string(height) + "x" + std::to_string(channels));
  data_.assign(static_cast<std::size_t>(width) * height * channels, std::clamp(fill, 0.0f, 1.0f));
}

void Image::set(int x, int y, int c, float v) {
  raw(x, y, c) = std::clamp(v, 0.0f, 1.0f);
}

void Image::clamp() {
  for (auto& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

bool Image::same_shape(const Image& other) const {
  return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
}

float Image::sample(double x, double y, int c) const {
  const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(width_ - 1));
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(height_ - 1));
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, width_ - 1), y1 = std::min(y0 + 1, height_ - 1);
  const double tx = fx - x0, ty = fy - y0;
  const double top = (1 - tx) * at(x0, y0, c) + tx * at(x1, y0, c);
  const double bottom = (1 - tx) * at(x0, y1, c) + tx * at(x1, y1, c);
  return static_cast<float>((1 - ty) * top + ty * bottom);
}

Eigen::VectorXd Image::to_vector() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(data_.size()));
  for (std::size_t i = 0; i < data_.size(); ++i) v[static_cast<Eigen::Index>(i)] = data_[i];
  return v;
}

Image Image::from_vector(const Eigen::VectorXd& v, int width, int height, int channels) {
  Image img(width, height, channels);
  if (static_cast<std::size_t>(v.size()) != img.size())
    throw DimensionError("image: vector length does not match image size");
  for (std::size_t i = 0; i < img.size(); ++i)
    img.data_[i] = std::clamp(static_cast<float>(v[static_cast<Eigen::Index>(i)]), 0.0f, 1.0f);
  return img;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};

}  // namespace

Image load_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_expand(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = png_get_channels(png, info);
  std::vector<png_byte> buffer(static_cast<std::size_t>(w) * h * ch);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const int out_ch = ch >= 3 ? 3 : 1;
  Image img(w, h, out_ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < out_ch; ++c)
        img.raw(x, y, c) = buffer[(static_cast<std::size_t>(y) * w + x) * ch + c] / 255.0f;
  return img;
}

void save_png(const Image& img, const std::filesystem::path& path) {
  if (img.empty()) throw DataError("save_png: empty image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), 8,
               img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c)
        row[static_cast<std::size_t>(x) * img.channels() + c] = static_cast<png_byte>(
            std::lround(std::clamp(img.at(x, y, c), 0.0f, 1.0f) * 255.0f));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_float_image(const Image& img, const std::filesystem::path& path) {
  Archive a;
  a.meta["kind"] = "image";
  a.meta["version"] = 1;
  a.put("pixels", img.data(),
        {static_cast<std::uint64_t>(img.height()), static_cast<std::uint64_t>(img.width()),
         static_cast<std::uint64_t>(img.channels())});
  a.save(path);
}

Image load_float_image(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  require_kind(a, "image", 1);
  const auto& e = a.entry("pixels");
  if (e.shape.size() != 3) throw DataError("float image: expected a rank-3 array");
  Image img(static_cast<int>(e.shape[1]), static_cast<int>(e.shape[0]), static_cast<int>(e.shape[2]));
  const auto values = a.floats("pixels");
  std::copy(values.begin(), values.end(), img.data().begin());
  return img;
}

Image downsample(const Image& img, int factor) {
  if (factor <= 0 || img.width() % factor || img.height() % factor)
    throw DimensionError("downsample: factor must divide the image size");
  if (factor == 1) return img;
  Image out(img.width() / factor, img.height() / factor, img.channels());
  const float norm = 1.0f / static_cast<float>(factor * factor);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        float acc = 0.0f;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += img.at(x * factor + dx, y * factor + dy, c);
        out.raw(x, y, c) = acc * norm;
      }
  return out;
}

Image resize_bilinear(const Image& img, int width, int height) {
  Image out(width, height, img.channels());
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < img.channels(); ++c)
        out.raw(x, y, c) = img.sample((x + 0.5) * sx, (y + 0.5) * sy, c);
  return out;
}

Image to_gray(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.raw(x, y) = (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0f;
  return out;
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("mean_abs_diff: image shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a.data()[i] - b.data()[i]);
  return acc / static_cast<double>(a.size());
}

double mean_abs_diff(const Image& a, const Image& b, const Image& mask) {
  if (!a.same_shape(b) || mask.width() != a.width() || mask.height() != a.height())
    throw DimensionError("mean_abs_diff: image shapes differ");
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (mask.at(x, y) <= 0.5f) continue;
      for (int c = 0; c < a.channels(); ++c) acc += std::abs(a.at(x, y, c) - b.at(x, y, c));
      n += static_cast<std::size_t>(a.channels());
    }
  return n ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace emoedit
