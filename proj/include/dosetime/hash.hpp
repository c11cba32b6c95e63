#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace dosetime {

// FNV-1a 64-bit; used for config hashes and manifest content hashes.
inline uint64_t fnv1a(std::string_view data, uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "missing";
    std::ostringstream ss;
    ss << in.rdbuf();
    return hash_hex(fnv1a(ss.str()));
}

}  // namespace dosetime
