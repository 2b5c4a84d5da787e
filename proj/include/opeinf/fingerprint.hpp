#pragma once

// Content hashes for datasets and output files.

#include <openssl/evp.h>

#include <array>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

#include "opeinf/core.hpp"

namespace opeinf {

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::invariant, "sha256 failed");
  }
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int n = 0; n < len; ++n) out << std::setw(2) << static_cast<int>(digest[n]);
  return out.str();
}

/// Record encoding of every transition, one JSON object per line.
inline std::string dataset_jsonl(const Dataset& ds) {
  std::ostringstream out;
  write_dataset(out, ds);
  return out.str();
}

inline std::string fingerprint(const Dataset& ds) { return "sha256:" + sha256_hex(dataset_jsonl(ds)); }

}  // namespace opeinf
