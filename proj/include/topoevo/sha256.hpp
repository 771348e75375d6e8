#pragma once

#include <openssl/evp.h>

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

#include "topoevo/ids.hpp"

namespace topoevo {

/// Lower-case hex SHA-256 of `data` (64 characters).
inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("EVP_Digest failed");
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(detail::kHexDigits[md[i] >> 4]);
        out.push_back(detail::kHexDigits[md[i] & 0xF]);
    }
    return out;
}

} // namespace topoevo
