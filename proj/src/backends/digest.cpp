#include "stc/backends/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace stc::backends {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int md_len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &md_len, EVP_sha256(),
                 nullptr) != 1)
    throw std::runtime_error("sha256: EVP_Digest failed");

  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(md_len * 2, '0');
  for (unsigned int i = 0; i < md_len; ++i) {
    out[2 * i] = kHex[md[i] >> 4];
    out[2 * i + 1] = kHex[md[i] & 0x0f];
  }
  return out;
}

std::string canonical_dump(const nlohmann::json& value) {
  // nlohmann::json stores object members sorted by key, so a plain dump is
  // already canonical.
  return value.dump();
}

std::string request_digest(std::string_view kind, const nlohmann::json& payload) {
  std::string input(kind);
  input.push_back('\n');
  input += canonical_dump(payload);
  return sha256_hex(input);
}

std::string request_digest(std::string_view kind,
                           std::string_view canonical_payload) {
  nlohmann::json parsed =
      nlohmann::json::parse(canonical_payload, nullptr, false);
  if (parsed.is_discarded() || canonical_dump(parsed) != canonical_payload)
    throw std::invalid_argument("request_digest: payload is not canonical JSON");
  return request_digest(kind, parsed);
}

}  // namespace stc::backends
