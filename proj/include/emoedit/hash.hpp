#pragma once

#include <span>
#include <string>
#include <cstdint>

#include <Eigen/Dense>

namespace emoedit {

/// Hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);

/// Digest of the raw bit patterns of a matrix (shape included).
std::string sha256_hex(const Eigen::MatrixXd& m);

/// Incremental digest for hashing several buffers into one id.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::uint8_t> bytes);
  Sha256& update(const std::string& text);
  Sha256& update(const Eigen::MatrixXd& m);
  std::string hex();

 private:
  void* ctx_;
};

}  // namespace emoedit
