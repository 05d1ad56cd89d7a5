#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "hsd/errors.hpp"

namespace hsd {

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

inline std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for digest: '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

} // namespace hsd
