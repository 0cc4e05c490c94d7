#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace fmnet {

// FNV-1a, used for graph fingerprints and seed derivation.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a_mix(uint64_t v, uint64_t h) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
    }
    return h;
}

// SplitMix64; stable seed expansion across platforms.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed, std::string_view stream) {
    uint64_t s = fnv1a(stream, seed ^ 0x9e3779b97f4a7c15ull);
    return Rng(s);
}

// SHA-1 over a byte buffer, hex string. Used for the run manifests.
std::string sha1_hex(const void* data, size_t len);
std::string sha1_file_hex(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// Fixed-precision float formatting so serialized artifacts are byte-stable.
std::string format_double(double v, int precision = 6);

}  // namespace fmnet
