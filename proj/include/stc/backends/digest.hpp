#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace stc::backends {

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

// Canonical serialization: object keys sorted, no insignificant whitespace.
std::string canonical_dump(const nlohmann::json& value);

// Content address of a backend request: SHA-256 over
// `<kind> "\n" <canonical JSON payload>`, lowercase hex. The same digest
// keys fixture records and the response cache.
std::string request_digest(std::string_view kind, const nlohmann::json& payload);

// String-payload variant; rejects payloads that are not in canonical form.
std::string request_digest(std::string_view kind, std::string_view canonical_payload);

}  // namespace stc::backends
