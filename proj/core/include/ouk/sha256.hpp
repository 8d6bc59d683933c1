#pragma once

#include <cstdint>
#include <string>

namespace ouk {

// FIPS 180-4 SHA-256 of a byte string, returned as lowercase hex.
// Used to fingerprint canonicalized run configurations.
std::string sha256_hex(const std::string& data);

}  // namespace ouk
