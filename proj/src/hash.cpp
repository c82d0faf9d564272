#include "emoedit/hash.hpp"

#include <openssl/evp.h>

#include <array>

#include "emoedit/error.hpp"

namespace emoedit {

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1)
    throw Error("sha256: init failed");
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::update(std::span<const std::uint8_t> bytes) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), bytes.data(), bytes.size());
  return *this;
}

Sha256& Sha256::update(const std::string& text) {
  return update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Sha256& Sha256::update(const Eigen::MatrixXd& m) {
  const std::array<std::int64_t, 2> dims{m.rows(), m.cols()};
  update(std::span(reinterpret_cast<const std::uint8_t*>(dims.data()), sizeof(dims)));
  return update(std::span(reinterpret_cast<const std::uint8_t*>(m.data()),
                          static_cast<std::size_t>(m.size()) * sizeof(double)));
}

std::string Sha256::hex() {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  return Sha256().update(bytes).hex();
}

std::string sha256_hex(const std::string& text) { return Sha256().update(text).hex(); }

std::string sha256_hex(const Eigen::MatrixXd& m) { return Sha256().update(m).hex(); }

}  // namespace emoedit
