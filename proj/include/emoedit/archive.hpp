#pragma once

// Named-array archive: the on-disk container for bases, checkpoints,
// direction sets, feature caches and float images.
//
// Layout (all integers little-endian):
//   8 bytes   magic "EMOARCH\0"
//   u32       container version (kArchiveVersion)
//   u64       metadata length N, then N bytes of UTF-8 JSON
//   u64       entry count
//   per entry:
//     u32     name length, name bytes
//     u8      dtype (1 = f64, 2 = i64, 3 = f32)
//     u8      rank
//     u64     extent per axis (rank values)
//     bytes   row-major payload
//
// Values are stored with their exact bit patterns, so a save/load cycle is
// bit-exact.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace emoedit {

inline constexpr std::uint32_t kArchiveVersion = 1;

enum class DType : std::uint8_t { f64 = 1, i64 = 2, f32 = 3 };

struct ArrayEntry {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> bytes;

  std::uint64_t element_count() const;
};

class Archive {
 public:
  nlohmann::json meta = nlohmann::json::object();

  void put(const std::string& name, const Eigen::MatrixXd& m);
  void put(const std::string& name, const Eigen::VectorXd& v);
  void put(const std::string& name, std::span<const std::int64_t> v);
  void put(const std::string& name, std::span<const float> v,
           std::vector<std::uint64_t> shape);

  bool contains(const std::string& name) const;
  const ArrayEntry& entry(const std::string& name) const;
  std::vector<std::string> names() const;

  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
  std::vector<std::int64_t> ints(const std::string& name) const;
  std::vector<float> floats(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

  /// Serialized form; `save` writes exactly these bytes.
  std::vector<std::uint8_t> to_bytes() const;
  static Archive from_bytes(std::span<const std::uint8_t> bytes);

 private:
  std::map<std::string, ArrayEntry> arrays_;
};

/// Checks meta["kind"] and meta["version"], throwing ModelMismatch otherwise.
void require_kind(const Archive& a, const std::string& kind, int version);

}  // namespace emoedit
