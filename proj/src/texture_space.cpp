#include "emoedit/texture_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"
#include "emoedit/hash.hpp"
#include "emoedit/render.hpp"

namespace emoedit {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using PlaneMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstPlaneMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Rows: output samples; half-pixel centres, border clamped (same rule as Image::sample).
Mat bilinear_matrix(int out, int in) {
  Mat m = Mat::Zero(out, in);
  for (int j = 0; j < out; ++j) {
    const double src = std::clamp((j + 0.5) * in / out - 0.5, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(src);
    const int i1 = std::min(i0 + 1, in - 1);
    const double t = src - i0;
    m(j, i0) += 1.0 - t;
    m(j, i1) += t;
  }
  return m;
}

Mat area_matrix(int out, int in) {
  const int f = in / out;
  Mat m = Mat::Zero(out, in);
  for (int j = 0; j < out; ++j)
    for (int k = 0; k < f; ++k) m(j, j * f + k) = 1.0 / f;
  return m;
}

// Applies A (R x r) on both axes of every r x r plane: out_c = A X_c A^T.
Vec resample(const Vec& x, int channels, const Mat& a) {
  const auto r = a.cols(), big = a.rows();
  Vec out(channels * big * big);
  for (int c = 0; c < channels; ++c) {
    ConstPlaneMap src(x.data() + c * r * r, r, r);
    PlaneMap dst(out.data() + c * big * big, big, big);
    dst.noalias() = a * src * a.transpose();
  }
  return out;
}

// Adjoint of resample: out_c = A^T X_c A.
Vec resample_adjoint(const Vec& x, int channels, const Mat& a) {
  const auto r = a.cols(), big = a.rows();
  Vec out(channels * r * r);
  for (int c = 0; c < channels; ++c) {
    ConstPlaneMap src(x.data() + c * big * big, big, big);
    PlaneMap dst(out.data() + c * r * r, r, r);
    dst.noalias() = a.transpose() * src * a;
  }
  return out;
}

struct Resamplers {
  std::vector<Mat> layer_up;  // work x layer_size(i)
  Mat tex_up;                 // tex x work
  Mat tex_down;               // work x tex

  explicit Resamplers(const TextureModelConfig& cfg) {
    for (int i = 0; i < cfg.n_layers; ++i)
      layer_up.push_back(bilinear_matrix(cfg.work_size, cfg.layer_size(i)));
    tex_up = bilinear_matrix(cfg.tex_size, cfg.work_size);
    tex_down = area_matrix(cfg.work_size, cfg.tex_size);
  }
};

void check_model(const TextureModel& m) {
  if (m.empty()) throw ConfigError("texture model is not initialized");
}

void check_latent(const TextureModel& m, const LatentStack& w) {
  if (w.n_layers() != m.config.n_layers || w.dim() != m.config.latent_dim)
    throw DimensionError("latent stack is " + std::to_string(w.n_layers()) + "x" +
                         std::to_string(w.dim()) + ", model expects " +
                         std::to_string(m.config.n_layers) + "x" + std::to_string(m.config.latent_dim));
}

Vec decode_work_with(const TextureModel& m, const Resamplers& rs, const Vec& codes, bool with_bias) {
  const auto& cfg = m.config;
  Vec out = Vec::Zero(cfg.channels * cfg.work_size * cfg.work_size);
  for (int i = 0; i < cfg.n_layers; ++i) {
    Vec z = m.decoder[i].w * codes.segment(i * cfg.latent_dim, cfg.latent_dim);
    if (with_bias) z += m.decoder[i].b;
    out += resample(z, cfg.channels, rs.layer_up[i]);
  }
  return out;
}

// Columns are samples.
Mat encoder_forward(const TextureModel& m, const Mat& x, TrunkCache* cache = nullptr) {
  const std::span<const Linear> trunk(m.encoder.data(), m.encoder.size() - 1);
  const Mat h = trunk.empty() ? x : trunk_forward(trunk, x, cache);
  Mat codes = m.encoder.back().w * h;
  codes.colwise() += m.encoder.back().b;
  return codes;
}

Vec encode_work(const TextureModel& m, const Vec& x) { return encoder_forward(m, x).col(0); }

std::string texture_digest(const LabeledTexture& t) {
  Sha256 h;
  const auto d = t.texture.data();
  h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(d.data()), d.size() * sizeof(float)));
  if (!t.valid.empty()) {
    const auto v = t.valid.data();
    h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(float)));
  }
  h.update(std::to_string(t.emotion) + "/" + std::to_string(t.level));
  return h.hex();
}

Vec pairwise_sum(const std::vector<Vec>& vs, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return vs[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(vs, lo, mid) + pairwise_sum(vs, mid, hi);
}

std::string emotion_name(int y) {
  const auto& names = default_emotion_names();
  return y >= 0 && y < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(y)]
                                                       : "emotion " + std::to_string(y);
}

// ------------------------------------------------------------------ training

struct TrainSet {
  Mat in;   // P x N, working resolution
  Mat out;  // P x N
  Vec weight;  // P pixel-loss weights, empty = uniform
};

struct BatchResult {
  double loss = 0.0;
  Layers dec_grads;
  Layers enc_grads;
};

BatchResult batch_gradients(const TextureModel& m, const Resamplers& rs, const RandomConvFeatures& feat,
                            const TrainSet& data, const std::vector<int>& idx, bool decoder_grads) {
  const auto& cfg = m.config;
  const int r = cfg.work_size, ch = cfg.channels;
  const auto b = static_cast<Eigen::Index>(idx.size());
  const auto p = data.in.rows();
  Mat x(p, b), t(p, b);
  for (Eigen::Index k = 0; k < b; ++k) {
    x.col(k) = data.in.col(idx[static_cast<std::size_t>(k)]);
    t.col(k) = data.out.col(idx[static_cast<std::size_t>(k)]);
  }
  TrunkCache cache;
  const Mat codes = encoder_forward(m, x, &cache);
  const bool hidden = m.encoder.size() > 1;
  const Mat h = hidden ? cache.h.back() : x;

  BatchResult res;
  res.dec_grads = zeros_like(m.decoder);
  res.enc_grads = zeros_like(m.encoder);
  const double pix_norm = 1.0 / static_cast<double>(p * b);
  Mat d_codes(codes.rows(), b);
  for (Eigen::Index k = 0; k < b; ++k) {
    const Vec y = decode_work_with(m, rs, codes.col(k), true);
    const Vec diff = y - t.col(k);
    const Vec wdiff = data.weight.size() ? Vec(data.weight.cwiseProduct(diff)) : diff;
    res.loss += diff.dot(wdiff) * pix_norm;
    Vec dy = 2.0 * pix_norm * wdiff;
    if (cfg.perceptual_weight > 0.0) {
      Vec pre;
      const Vec fy = feat.forward(y, r, r, &pre);
      const Vec ft = feat.forward(t.col(k), r, r);
      const double f_norm = cfg.perceptual_weight / static_cast<double>(fy.size() * b);
      res.loss += (fy - ft).squaredNorm() * f_norm;
      dy += feat.backward(2.0 * f_norm * (fy - ft), pre, r, r);
    }
    for (int i = 0; i < cfg.n_layers; ++i) {
      const Vec dz = resample_adjoint(dy, ch, rs.layer_up[i]);
      const auto seg = codes.col(k).segment(i * cfg.latent_dim, cfg.latent_dim);
      if (decoder_grads) {
        res.dec_grads[i].w.noalias() += dz * seg.transpose();
        res.dec_grads[i].b += dz;
      }
      d_codes.col(k).segment(i * cfg.latent_dim, cfg.latent_dim) = m.decoder[i].w.transpose() * dz;
    }
  }
  Linear& out = res.enc_grads.back();
  out.w.noalias() = d_codes * h.transpose();
  out.b = d_codes.rowwise().sum();
  if (hidden) {
    const Mat dh = m.encoder.back().w.transpose() * d_codes;
    trunk_backward(std::span<const Linear>(m.encoder.data(), m.encoder.size() - 1), cache, dh,
                   res.enc_grads.data());
  }
  return res;
}

double mean_abs_reconstruction(const TextureModel& m, const Resamplers& rs, const TrainSet& data,
                               const std::vector<int>& idx) {
  double acc = 0.0;
  for (int i : idx) {
    const Vec y = decode_work_with(m, rs, encode_work(m, data.in.col(i)), true).cwiseMax(0.0).cwiseMin(1.0);
    acc += (y - data.out.col(i)).cwiseAbs().mean();
  }
  return idx.empty() ? 0.0 : acc / static_cast<double>(idx.size());
}

TextureTrainResult train_two_phase(const TrainSet& phase1, const TrainSet& phase2,
                                   const TextureModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto n = static_cast<int>(phase1.in.cols());
  if (n == 0) throw DataError("texture training: no samples");
  std::mt19937_64 rng(seed);

  TextureTrainResult res;
  res.model = init_texture_model(cfg, rng());
  auto& m = res.model;
  m.decoder.back().b = phase1.out.rowwise().mean();
  const Resamplers rs(cfg);
  const RandomConvFeatures feat(cfg.channels, cfg.feature_channels, cfg.feature_seed);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_val = n >= 10 ? static_cast<int>(cfg.validation_fraction * n) : 0;
  std::vector<int> val(order.begin(), order.begin() + n_val);
  std::vector<int> train(order.begin() + n_val, order.end());
  if (val.empty()) val = train;

  const AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8};
  Adam dec_opt(adam_cfg, m.decoder);
  Adam enc_opt(adam_cfg, m.encoder);

  for (int phase = 1; phase <= 2; ++phase) {
    const TrainSet& data = phase == 1 ? phase1 : phase2;
    const int epochs = phase == 1 ? cfg.joint_epochs : cfg.encoder_epochs;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
      std::shuffle(train.begin(), train.end(), rng);
      double loss = 0.0;
      int batches = 0;
      for (std::size_t s = 0; s < train.size(); s += static_cast<std::size_t>(cfg.batch_size)) {
        const std::vector<int> idx(train.begin() + static_cast<long>(s),
                                   train.begin() + static_cast<long>(std::min(train.size(), s + cfg.batch_size)));
        BatchResult g = batch_gradients(m, rs, feat, data, idx, phase == 1);
        if (phase == 1) dec_opt.step(m.decoder, g.dec_grads);
        enc_opt.step(m.encoder, g.enc_grads);
        loss += g.loss;
        ++batches;
      }
      res.log.push_back({phase, epoch, loss / std::max(1, batches), mean_abs_reconstruction(m, rs, data, val)});
    }
  }
  return res;
}

}  // namespace

// ------------------------------------------------------------------ latents

Vec LatentStack::flat() const {
  Vec v(codes.size());
  for (Eigen::Index i = 0; i < codes.rows(); ++i) v.segment(i * codes.cols(), codes.cols()) = codes.row(i).transpose();
  return v;
}

LatentStack LatentStack::from_flat(const Vec& v, int n_layers, int dim) {
  if (v.size() != static_cast<Eigen::Index>(n_layers) * dim)
    throw DimensionError("latent stack: flat vector has the wrong length");
  LatentStack w{Mat(n_layers, dim)};
  for (int i = 0; i < n_layers; ++i) w.codes.row(i) = v.segment(i * dim, dim).transpose();
  return w;
}

// ------------------------------------------------------------------ features

RandomConvFeatures::RandomConvFeatures(int in_channels, int out_channels, std::uint64_t seed)
    : in_(in_channels), out_(out_channels), seed_(seed) {
  if (in_channels <= 0 || out_channels <= 0) throw ConfigError("feature extractor: channel counts must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  const double sd = std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * 9.0 * in_channels));
  w_.resize(static_cast<std::size_t>(out_) * in_ * 9);
  for (auto& v : w_) v = sd * n01(rng);
}

Vec RandomConvFeatures::forward(const Vec& x, int h, int w, Vec* pre) const {
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  if (x.size() != in_ * plane) throw DimensionError("feature extractor: input size mismatch");
  Vec z = Vec::Zero(out_ * plane);
  for (int o = 0; o < out_; ++o) {
    PlaneMap dst(z.data() + o * plane, h, w);
    for (int c = 0; c < in_; ++c) {
      ConstPlaneMap src(x.data() + c * plane, h, w);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const double k = w_[((static_cast<std::size_t>(o) * in_ + c) * 3 + (dy + 1)) * 3 + (dx + 1)];
          const int y0 = std::max(0, -dy), x0 = std::max(0, -dx);
          const int bh = h - std::abs(dy), bw = w - std::abs(dx);
          if (bh <= 0 || bw <= 0) continue;
          dst.block(y0, x0, bh, bw) += k * src.block(y0 + dy, x0 + dx, bh, bw);
        }
    }
  }
  if (pre) *pre = z;
  return (z.array() > 0.0).select(z, kLeakySlope * z);
}

Vec RandomConvFeatures::backward(const Vec& d_feat, const Vec& pre, int h, int w) const {
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  const Vec dz = (pre.array() > 0.0).select(d_feat, kLeakySlope * d_feat);
  Vec dx = Vec::Zero(in_ * plane);
  for (int o = 0; o < out_; ++o) {
    ConstPlaneMap g(dz.data() + o * plane, h, w);
    for (int c = 0; c < in_; ++c) {
      PlaneMap dst(dx.data() + c * plane, h, w);
      for (int dy = -1; dy <= 1; ++dy)
        for (int ddx = -1; ddx <= 1; ++ddx) {
          const double k = w_[((static_cast<std::size_t>(o) * in_ + c) * 3 + (dy + 1)) * 3 + (ddx + 1)];
          const int y0 = std::max(0, -dy), x0 = std::max(0, -ddx);
          const int bh = h - std::abs(dy), bw = w - std::abs(ddx);
          if (bh <= 0 || bw <= 0) continue;
          dst.block(y0 + dy, x0 + ddx, bh, bw) += k * g.block(y0, x0, bh, bw);
        }
    }
  }
  return dx;
}

double RandomConvFeatures::distance(const Image& a, const Image& b) const {
  if (!a.same_shape(b)) throw DimensionError("perceptual distance: image shapes differ");
  if (a.channels() != in_) throw DimensionError("perceptual distance: channel count mismatch");
  const Vec fa = forward(planar(a), a.height(), a.width());
  const Vec fb = forward(planar(b), b.height(), b.width());
  return std::sqrt((fa - fb).squaredNorm() / static_cast<double>(fa.size()));
}

// ------------------------------------------------------------------ config

void TextureModelConfig::validate() const {
  if (tex_size <= 0 || work_size <= 0 || tex_size % work_size)
    throw ConfigError("texture model: work_size must divide tex_size");
  if (n_layers < 1 || latent_dim < 1) throw ConfigError("texture model: n_layers and latent_dim must be positive");
  if (encoder_hidden < 0) throw ConfigError("texture model: encoder_hidden must be non-negative");
  if (work_size % (1 << (n_layers - 1)))
    throw ConfigError("texture model: work_size must be divisible by 2^(n_layers-1)");
  if (channels != 1 && channels != 3) throw ConfigError("texture model: channels must be 1 or 3");
  if (feature_channels < 1 || perceptual_weight < 0.0)
    throw ConfigError("texture model: feature_channels >= 1 and perceptual_weight >= 0 required");
  if (joint_epochs < 0 || encoder_epochs < 0 || batch_size < 1 || !(lr > 0.0))
    throw ConfigError("texture model: epochs >= 0, batch_size >= 1, lr > 0 required");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("texture model: validation_fraction must be in [0, 1)");
}

#define EMOEDIT_TEXTURE_FIELDS(X)                                                              \
  X(tex_size) X(work_size) X(n_layers) X(latent_dim) X(encoder_hidden) X(channels) X(feature_channels)           \
      X(feature_seed) X(perceptual_weight) X(joint_epochs) X(encoder_epochs) X(batch_size) X(lr) \
          X(validation_fraction)

void to_json(nlohmann::json& j, const TextureModelConfig& c) {
  j = nlohmann::json::object();
#define X(f) j[#f] = c.f;
  EMOEDIT_TEXTURE_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, TextureModelConfig& c) {
  static const std::set<std::string> known{
#define X(f) #f,
      EMOEDIT_TEXTURE_FIELDS(X)
#undef X
  };
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("texture config: unknown key '" + key + "'");
  try {
#define X(f) if (j.contains(#f)) j.at(#f).get_to(c.f);
    EMOEDIT_TEXTURE_FIELDS(X)
#undef X
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("texture config: ") + e.what());
  }
}

#undef EMOEDIT_TEXTURE_FIELDS

// ------------------------------------------------------------------ model

std::string TextureModel::id() const {
  Sha256 h;
  h.update(nlohmann::json(config).dump());
  for (const auto& l : decoder) h.update(l.w).update(Mat(l.b));
  for (const auto& l : encoder) h.update(l.w).update(Mat(l.b));
  return h.hex();
}

TextureModel init_texture_model(const TextureModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  TextureModel m;
  m.config = cfg;
  for (int i = 0; i < cfg.n_layers; ++i) {
    const int r = cfg.layer_size(i);
    Linear l{Mat(cfg.channels * r * r, cfg.latent_dim), Vec::Zero(cfg.channels * r * r)};
    for (Eigen::Index k = 0; k < l.w.size(); ++k) l.w.data()[k] = 0.01 * n01(rng);
    m.decoder.push_back(std::move(l));
  }
  const int p = cfg.channels * cfg.work_size * cfg.work_size;
  int in = p;
  if (cfg.encoder_hidden > 0) {
    m.encoder.push_back(make_linear(p, cfg.encoder_hidden, rng));
    in = cfg.encoder_hidden;
  }
  Linear out{Mat(cfg.n_layers * cfg.latent_dim, in), Vec::Zero(cfg.n_layers * cfg.latent_dim)};
  const double sd = 0.1 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index k = 0; k < out.w.size(); ++k) out.w.data()[k] = sd * n01(rng);
  m.encoder.push_back(std::move(out));
  return m;
}

Vec planar(const Image& img) {
  const int w = img.width(), h = img.height(), ch = img.channels();
  Vec v(static_cast<Eigen::Index>(img.size()));
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) v[(static_cast<Eigen::Index>(c) * h + y) * w + x] = img.at(x, y, c);
  return v;
}

Image from_planar(const Vec& v, int width, int height, int channels) {
  Image img(width, height, channels);
  if (static_cast<std::size_t>(v.size()) != img.size()) throw DimensionError("from_planar: size mismatch");
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        img.set(x, y, c, static_cast<float>(v[(static_cast<Eigen::Index>(c) * height + y) * width + x]));
  return img;
}

Vec decode_work(const TextureModel& model, const LatentStack& w) {
  check_model(model);
  check_latent(model, w);
  return decode_work_with(model, Resamplers(model.config), w.flat(), true);
}

Image decode(const TextureModel& model, const LatentStack& w) {
  return work_to_texture(model.config, decode_work(model, w));
}

Vec texture_to_work(const TextureModelConfig& cfg, const Image& texture) {
  if (texture.width() != cfg.tex_size || texture.height() != cfg.tex_size || texture.channels() != cfg.channels)
    throw DimensionError("texture is " + std::to_string(texture.width()) + "x" +
                         std::to_string(texture.height()) + "x" + std::to_string(texture.channels()) +
                         ", model expects " + std::to_string(cfg.tex_size) + "x" +
                         std::to_string(cfg.tex_size) + "x" + std::to_string(cfg.channels));
  if (cfg.tex_size == cfg.work_size) return planar(texture);
  const Mat down = area_matrix(cfg.work_size, cfg.tex_size);
  const Vec full = planar(texture);
  // resample() applies A on both axes with A of shape (out x in).
  const auto r = cfg.work_size, big = cfg.tex_size;
  Vec out(cfg.channels * r * r);
  for (int c = 0; c < cfg.channels; ++c) {
    ConstPlaneMap src(full.data() + static_cast<Eigen::Index>(c) * big * big, big, big);
    PlaneMap dst(out.data() + static_cast<Eigen::Index>(c) * r * r, r, r);
    dst.noalias() = down * src * down.transpose();
  }
  return out;
}

Image work_to_texture(const TextureModelConfig& cfg, const Vec& work) {
  const Vec up = cfg.tex_size == cfg.work_size ? work
                                               : resample(work, cfg.channels, bilinear_matrix(cfg.tex_size, cfg.work_size));
  return from_planar(up, cfg.tex_size, cfg.tex_size, cfg.channels);
}

LatentStack encode(const TextureModel& model, const Image& texture, const Image* valid) {
  check_model(model);
  const Image filled = valid && !valid->empty() ? fill_invalid_texels(texture, *valid) : texture;
  const Vec codes = encode_work(model, texture_to_work(model.config, filled));
  return LatentStack::from_flat(codes, model.config.n_layers, model.config.latent_dim);
}

TextureTrainResult train_texture_model(const std::vector<LabeledTexture>& textures,
                                       const TextureModelConfig& cfg, std::uint64_t seed) {
  if (textures.empty()) throw DataError("train_texture_model: empty texture set");
  std::set<int> emotions;
  for (const auto& t : textures) emotions.insert(t.emotion);
  if (!emotions.count(-1) || emotions.size() < 2)
    throw DataError("train_texture_model: need neutral textures and at least one emotion");
  cfg.validate();
  TrainSet data{Mat(cfg.channels * cfg.work_size * cfg.work_size, static_cast<Eigen::Index>(textures.size())), {}, {}};
  for (std::size_t i = 0; i < textures.size(); ++i) {
    const auto& t = textures[i];
    const Image filled = t.valid.empty() ? t.texture : fill_invalid_texels(t.texture, t.valid);
    data.in.col(static_cast<Eigen::Index>(i)) = texture_to_work(cfg, filled);
  }
  data.out = data.in;
  return train_two_phase(data, data, cfg, seed);
}

TextureTrainResult train_translator(const std::vector<Image>& inputs, const std::vector<Image>& targets,
                                    const TextureModelConfig& cfg, std::uint64_t seed, double change_weight) {
  if (change_weight < 0.0) throw ConfigError("train_translator: change_weight must be non-negative");
  if (inputs.empty()) throw DataError("train_translator: no training pairs");
  if (inputs.size() != targets.size()) throw DataError("train_translator: inputs and targets differ in count");
  cfg.validate();
  const auto p = cfg.channels * cfg.work_size * cfg.work_size;
  const auto n = static_cast<Eigen::Index>(inputs.size());
  TrainSet phase1{Mat(p, n), Mat(p, n), {}}, phase2{Mat(p, n), Mat(p, n), {}};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec t = texture_to_work(cfg, targets[static_cast<std::size_t>(i)]);
    phase1.in.col(i) = t;
    phase1.out.col(i) = t;
    phase2.in.col(i) = texture_to_work(cfg, inputs[static_cast<std::size_t>(i)]);
    phase2.out.col(i) = t;
  }
  if (change_weight > 0.0) {
    const Vec change = (phase2.out - phase2.in).cwiseAbs().rowwise().mean();
    const double peak = change.maxCoeff();
    if (peak > 0.0) {
      phase1.weight = Vec::Ones(p) + (change_weight / peak) * change;
      phase2.weight = phase1.weight;
    }
  }
  return train_two_phase(phase1, phase2, cfg, seed);
}

double empirical_lipschitz(const TextureModel& model, const std::vector<Image>& textures) {
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < textures.size(); ++i) {
    const double dt = (textures[i].to_vector() - textures[i + 1].to_vector()).norm();
    if (dt <= 0.0) continue;
    const double dw = (encode(model, textures[i]).flat() - encode(model, textures[i + 1]).flat()).norm();
    best = std::max(best, dw / dt);
  }
  return best;
}

TextureModel make_fixture_model(const TextureModelConfig& cfg, std::uint64_t seed, double amplitude,
                                const Vec& base_work) {
  cfg.validate();
  const auto p = cfg.channels * cfg.work_size * cfg.work_size;
  if (base_work.size() != p) throw DimensionError("fixture: base image has the wrong size");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  TextureModel m;
  m.config = cfg;
  for (int i = 0; i < cfg.n_layers; ++i) {
    const int r = cfg.layer_size(i);
    Linear l{Mat(cfg.channels * r * r, cfg.latent_dim), Vec::Zero(cfg.channels * r * r)};
    for (Eigen::Index k = 0; k < l.w.size(); ++k) l.w.data()[k] = amplitude * n01(rng);
    m.decoder.push_back(std::move(l));
  }
  m.decoder.back().b = base_work;

  // Working-resolution response of encode's input (down(up(decode_work))) to each latent unit.
  const Resamplers rs(cfg);
  const Mat round_trip = cfg.tex_size == cfg.work_size ? Mat::Identity(cfg.work_size, cfg.work_size)
                                                       : Mat(rs.tex_down * rs.tex_up);
  const int k_total = cfg.n_layers * cfg.latent_dim;
  Mat j(p, k_total);
  for (int k = 0; k < k_total; ++k) {
    Vec unit = Vec::Zero(k_total);
    unit[k] = 1.0;
    j.col(k) = resample(decode_work_with(m, rs, unit, false), cfg.channels, round_trip);
  }
  const Mat gram = j.transpose() * j;
  const Eigen::LDLT<Mat> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw NumericalError("fixture: decoder response is rank deficient");
  if (cfg.encoder_hidden != 0) throw ConfigError("fixture: the inverse encoder is affine (encoder_hidden must be 0)");
  Linear enc;
  enc.w = ldlt.solve(j.transpose());
  enc.b = -enc.w * resample(base_work, cfg.channels, round_trip);
  m.encoder = {std::move(enc)};
  return m;
}

Vec linear_response(const TextureModel& model, const LatentStack& delta) {
  check_model(model);
  check_latent(model, delta);
  const auto& cfg = model.config;
  const Resamplers rs(cfg);
  const Vec work = decode_work_with(model, rs, delta.flat(), false);
  return cfg.tex_size == cfg.work_size ? work : resample(work, cfg.channels, rs.tex_up);
}

// ------------------------------------------------------------------ directions

Vec stable_mean(std::vector<Vec> vs) {
  if (vs.empty()) throw DataError("stable_mean: no vectors");
  std::sort(vs.begin(), vs.end(), [](const Vec& a, const Vec& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  });
  return pairwise_sum(vs, 0, vs.size()) / static_cast<double>(vs.size());
}

EditingDirectionSet compute_editing_directions(const TextureModel& model,
                                               const std::vector<LabeledTexture>& textures,
                                               int n_emotions) {
  check_model(model);
  if (n_emotions < 1) throw ConfigError("compute_editing_directions: n_emotions must be positive");
  std::vector<int> top_level(static_cast<std::size_t>(n_emotions), 0);
  for (const auto& t : textures) {
    if (t.emotion < -1 || t.emotion >= n_emotions) throw DataError("compute_editing_directions: emotion index out of range");
    if (t.emotion >= 0) top_level[static_cast<std::size_t>(t.emotion)] = std::max(top_level[static_cast<std::size_t>(t.emotion)], t.level);
  }

  std::vector<Vec> neutral;
  std::vector<std::vector<Vec>> per(static_cast<std::size_t>(n_emotions));
  std::vector<std::string> digests;
  for (const auto& t : textures) {
    const bool use = t.emotion < 0 || t.level == top_level[static_cast<std::size_t>(t.emotion)];
    if (!use) continue;
    digests.push_back(texture_digest(t));
    Vec w = encode(model, t.texture, t.valid.empty() ? nullptr : &t.valid).flat();
    (t.emotion < 0 ? neutral : per[static_cast<std::size_t>(t.emotion)]).push_back(std::move(w));
  }
  if (neutral.empty()) throw DataError("compute_editing_directions: no neutral textures");
  for (int y = 0; y < n_emotions; ++y)
    if (per[static_cast<std::size_t>(y)].empty())
      throw DataError("compute_editing_directions: no textures for emotion '" + emotion_name(y) + "'");

  EditingDirectionSet dirs;
  const Vec mu0 = stable_mean(neutral);
  dirs.counts[-1] = static_cast<int>(neutral.size());
  for (int y = 0; y < n_emotions; ++y) {
    auto& group = per[static_cast<std::size_t>(y)];
    dirs.counts[y] = static_cast<int>(group.size());
    dirs.directions[y] =
        LatentStack::from_flat(stable_mean(std::move(group)) - mu0, model.config.n_layers, model.config.latent_dim);
  }
  std::sort(digests.begin(), digests.end());
  Sha256 h;
  for (const auto& d : digests) h.update(d);
  dirs.source_hash = h.hex();
  dirs.model_id = model.id();
  return dirs;
}

LatentStack edit_latent(const EditingDirectionSet& dirs, const LatentStack& w0, const EmotionVector& e,
                        const TextureEditOptions& opts) {
  LatentStack w = w0;
  for (int y = 0; y < e.size(); ++y) {
    double v = e[y];
    if (v == 0.0) continue;
    if (v < 0.0) throw ConfigError("edit_texture: negative intensity");
    if (v > 1.0 && !opts.allow_extrapolation)
      throw ConfigError("edit_texture: intensity above 1 needs extrapolation enabled");
    v = std::min(v, 2.0);
    const auto it = dirs.directions.find(y);
    if (it == dirs.directions.end())
      throw DataError("edit_texture: no editing direction for emotion '" + emotion_name(y) + "'");
    if (it->second.codes.rows() != w.codes.rows() || it->second.codes.cols() != w.codes.cols())
      throw DimensionError("edit_texture: direction shape does not match the latent stack");
    w.codes += v * it->second.codes;
  }
  return w;
}

Image edit_texture(const TextureModel& model, const EditingDirectionSet& dirs, const Image& t0,
                   const EmotionVector& e, const Image* valid, const TextureEditOptions& opts) {
  Image out = decode(model, edit_latent(dirs, encode(model, t0, valid), e, opts));
  if (valid && !valid->empty()) {
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        if (valid->at(x, y) <= 0.5f)
          for (int c = 0; c < out.channels(); ++c) out.raw(x, y, c) = 0.0f;
  }
  return out;
}

// ------------------------------------------------------------------ persistence

void put_texture_model(Archive& a, const TextureModel& model, const std::string& prefix) {
  check_model(model);
  a.meta[prefix + "config"] = model.config;
  a.meta[prefix + "id"] = model.id();
  put_layers(a, prefix + "dec", model.decoder);
  put_layers(a, prefix + "enc", model.encoder);
}

TextureModel get_texture_model(const Archive& a, const std::string& prefix) {
  TextureModel m;
  if (!a.meta.contains(prefix + "config")) throw DataError("archive has no texture model '" + prefix + "'");
  try {
    m.config = a.meta.at(prefix + "config").get<TextureModelConfig>();
  } catch (const ConfigError& e) {
    throw DataError(std::string("stored texture config: ") + e.what());
  }
  m.config.validate();
  m.decoder = get_layers(a, prefix + "dec");
  m.encoder = get_layers(a, prefix + "enc");
  const auto& cfg = m.config;
  const std::size_t enc_depth = cfg.encoder_hidden > 0 ? 2 : 1;
  if (static_cast<int>(m.decoder.size()) != cfg.n_layers || m.encoder.size() != enc_depth)
    throw DataError("texture model: layer count does not match the config");
  for (int i = 0; i < cfg.n_layers; ++i)
    if (m.decoder[i].out() != cfg.channels * cfg.layer_size(i) * cfg.layer_size(i) || m.decoder[i].in() != cfg.latent_dim)
      throw DataError("texture model: decoder layer " + std::to_string(i) + " has the wrong shape");
  const int enc_mid = cfg.encoder_hidden > 0 ? cfg.encoder_hidden : cfg.channels * cfg.work_size * cfg.work_size;
  if (m.encoder.front().in() != cfg.channels * cfg.work_size * cfg.work_size ||
      m.encoder.back().in() != enc_mid || m.encoder.back().out() != cfg.n_layers * cfg.latent_dim)
    throw DataError("texture model: encoder has the wrong shape");
  if (a.meta.value(prefix + "id", std::string()) != m.id())
    throw ModelMismatch("texture model: stored id does not match the parameters");
  return m;
}

void save_texture_model(const TextureModel& model, const std::filesystem::path& path, const std::string& kind) {
  Archive a;
  a.meta["kind"] = kind;
  a.meta["version"] = 1;
  put_texture_model(a, model, "");
  a.save(path);
}

TextureModel load_texture_model(const std::filesystem::path& path, const std::string& kind) {
  const Archive a = Archive::load(path);
  require_kind(a, kind, 1);
  try {
    return get_texture_model(a, "");
  } catch (const ModelMismatch& e) {
    throw ModelMismatch(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_directions(const EditingDirectionSet& dirs, const std::filesystem::path& path) {
  Archive a;
  a.meta["kind"] = "editing_directions";
  a.meta["version"] = 1;
  a.meta["source_hash"] = dirs.source_hash;
  a.meta["model_id"] = dirs.model_id;
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [y, n] : dirs.counts) counts[std::to_string(y)] = n;
  a.meta["counts"] = counts;
  std::vector<int> ids;
  for (const auto& [y, d] : dirs.directions) {
    ids.push_back(y);
    a.put("d" + std::to_string(y), d.codes);
  }
  a.meta["emotions"] = ids;
  a.save(path);
}

EditingDirectionSet load_directions(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  require_kind(a, "editing_directions", 1);
  EditingDirectionSet dirs;
  dirs.source_hash = a.meta.value("source_hash", std::string());
  dirs.model_id = a.meta.value("model_id", std::string());
  for (const auto& [k, v] : a.meta.at("counts").items()) dirs.counts[std::stoi(k)] = v.get<int>();
  for (int y : a.meta.at("emotions").get<std::vector<int>>()) dirs.directions[y] = {a.matrix("d" + std::to_string(y))};
  return dirs;
}

}  // namespace emoedit
