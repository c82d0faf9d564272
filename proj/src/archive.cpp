#include "emoedit/archive.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "emoedit/error.hpp"

namespace emoedit {
namespace {

constexpr char kMagic[8] = {'E', 'M', 'O', 'A', 'R', 'C', 'H', '\0'};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f64:
    case DType::i64:
      return 8;
    case DType::f32:
      return 4;
  }
  throw DataError("archive: unknown dtype");
}

template <typename T>
void append_pod(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    T value;
    need(sizeof(T));
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("archive: truncated file");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t ArrayEntry::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void Archive::put(const std::string& name, const Eigen::MatrixXd& m) {
  ArrayEntry e;
  e.dtype = DType::f64;
  e.shape = {static_cast<std::uint64_t>(m.rows()),
             static_cast<std::uint64_t>(m.cols())};
  e.bytes.resize(m.size() * sizeof(double));
  // Row-major payload.
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      std::memcpy(e.bytes.data() + k, &v, sizeof(double));
      k += sizeof(double);
    }
  arrays_[name] = std::move(e);
}

void Archive::put(const std::string& name, const Eigen::VectorXd& v) {
  ArrayEntry e;
  e.dtype = DType::f64;
  e.shape = {static_cast<std::uint64_t>(v.size())};
  e.bytes.resize(v.size() * sizeof(double));
  if (v.size() > 0) std::memcpy(e.bytes.data(), v.data(), e.bytes.size());
  arrays_[name] = std::move(e);
}

void Archive::put(const std::string& name, std::span<const std::int64_t> v) {
  ArrayEntry e;
  e.dtype = DType::i64;
  e.shape = {static_cast<std::uint64_t>(v.size())};
  e.bytes.resize(v.size_bytes());
  if (!v.empty()) std::memcpy(e.bytes.data(), v.data(), v.size_bytes());
  arrays_[name] = std::move(e);
}

void Archive::put(const std::string& name, std::span<const float> v,
                  std::vector<std::uint64_t> shape) {
  ArrayEntry e;
  e.dtype = DType::f32;
  e.shape = std::move(shape);
  if (e.element_count() != v.size())
    throw DimensionError("archive: float payload does not match shape for '" +
                         name + "'");
  e.bytes.resize(v.size_bytes());
  if (!v.empty()) std::memcpy(e.bytes.data(), v.data(), v.size_bytes());
  arrays_[name] = std::move(e);
}

bool Archive::contains(const std::string& name) const {
  return arrays_.count(name) != 0;
}

const ArrayEntry& Archive::entry(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end())
    throw DataError("archive: missing array '" + name + "'");
  return it->second;
}

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : arrays_) out.push_back(k);
  return out;
}

Eigen::MatrixXd Archive::matrix(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::f64 || e.shape.size() > 2)
    throw DataError("archive: '" + name + "' is not a f64 matrix");
  Eigen::Index rows = e.shape.empty() ? 1 : static_cast<Eigen::Index>(e.shape[0]);
  Eigen::Index cols = e.shape.size() == 2 ? static_cast<Eigen::Index>(e.shape[1]) : 1;
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v;
      std::memcpy(&v, e.bytes.data() + k, sizeof(double));
      m(r, c) = v;
      k += sizeof(double);
    }
  return m;
}

Eigen::VectorXd Archive::vector(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::f64)
    throw DataError("archive: '" + name + "' is not f64");
  Eigen::VectorXd v(static_cast<Eigen::Index>(e.element_count()));
  if (v.size() > 0) std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}

std::vector<std::int64_t> Archive::ints(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::i64)
    throw DataError("archive: '" + name + "' is not i64");
  std::vector<std::int64_t> v(e.element_count());
  if (!v.empty()) std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}

std::vector<float> Archive::floats(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::f32)
    throw DataError("archive: '" + name + "' is not f32");
  std::vector<float> v(e.element_count());
  if (!v.empty()) std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}

std::vector<std::uint8_t> Archive::to_bytes() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  append_pod<std::uint32_t>(out, kArchiveVersion);
  const std::string meta_text = meta.dump();
  append_pod<std::uint64_t>(out, meta_text.size());
  out.insert(out.end(), meta_text.begin(), meta_text.end());
  append_pod<std::uint64_t>(out, arrays_.size());
  for (const auto& [name, e] : arrays_) {
    append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    append_pod<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    append_pod<std::uint8_t>(out, static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) append_pod<std::uint64_t>(out, d);
    out.insert(out.end(), e.bytes.begin(), e.bytes.end());
  }
  return out;
}

Archive Archive::from_bytes(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("archive: bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kArchiveVersion)
    throw ModelMismatch("archive: unsupported container version " +
                        std::to_string(version));
  Archive a;
  const auto meta_len = r.pod<std::uint64_t>();
  auto meta_bytes = r.take(meta_len);
  a.meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.pod<std::uint32_t>();
    auto name_bytes = r.take(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    ArrayEntry e;
    e.dtype = static_cast<DType>(r.pod<std::uint8_t>());
    const auto rank = r.pod<std::uint8_t>();
    for (int k = 0; k < rank; ++k) e.shape.push_back(r.pod<std::uint64_t>());
    auto payload = r.take(e.element_count() * dtype_size(e.dtype));
    e.bytes.assign(payload.begin(), payload.end());
    a.arrays_[name] = std::move(e);
  }
  if (!r.done()) throw DataError("archive: trailing bytes");
  return a;
}

void Archive::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  const auto bytes = to_bytes();
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("short write to " + path.string());
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return from_bytes(bytes);
}

void require_kind(const Archive& a, const std::string& kind, int version) {
  const auto got_kind = a.meta.value("kind", std::string{});
  if (got_kind != kind)
    throw ModelMismatch("expected a '" + kind + "' archive, found '" +
                        got_kind + "'");
  const int got_version = a.meta.value("version", -1);
  if (got_version != version)
    throw ModelMismatch("'" + kind + "' archive version " +
                        std::to_string(got_version) + " is not supported (want " +
                        std::to_string(version) + ")");
}

}  // namespace emoedit
