#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace minesched {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to decorrelate (seed, stream) pairs.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Independent engine per (seed, stream). Streams with the same seed do not overlap
// in any way that matters at this scale.
inline Rng make_rng(uint64_t seed, uint64_t stream = 0) {
    return Rng(mix64(seed ^ mix64(stream + 0x517cc1b727220a95ull)));
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit hashing, used for solution state hashes and file content hashes.

constexpr uint64_t kFnvOffset = 14695981039346656037ull;
constexpr uint64_t kFnvPrime = 1099511628211ull;

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

struct Hasher {
    uint64_t h = kFnvOffset;

    void bytes(const void* data, size_t n) { h = fnv1a64(data, n, h); }

    template <typename T>
    void scalar(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(&v, sizeof(T));
    }

    template <typename T>
    void range(std::span<const T> v) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(v.data(), v.size_bytes());
    }

    uint64_t digest() const { return h; }
};

std::string hex64(uint64_t v);

// ---------------------------------------------------------------------------
// Empirical quantiles by linear interpolation over sorted values.
// q in (0,1); position q*(n-1) between order statistics.

double quantile_sorted(std::span<const double> sorted, double q);
std::vector<double> quantiles(std::vector<double> values, std::span<const double> probs);

// ---------------------------------------------------------------------------
// base64 (standard alphabet, padded) for weight blobs.

std::string base64_encode(std::span<const unsigned char> data);
std::vector<unsigned char> base64_decode(const std::string& text);

std::string encode_doubles(std::span<const double> v);
std::vector<double> decode_doubles(const std::string& text);

// ---------------------------------------------------------------------------
// Small file helpers.

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);
uint64_t file_hash(const std::string& path);

}  // namespace minesched
