#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace slicesec {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG. The mt19937_64 output sequence is pinned by the
// standard; the distributions here are our own so that runs reproduce
// bit-for-bit regardless of the standard library in use.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller, second value cached
    double next_normal();

    bool next_bernoulli(double p) { return next_double() < p; }

    // unbiased integer in [0, n) by rejection
    std::uint64_t next_below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// Stable sub-seed derivation (splitmix64 over base xor salt).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::string base64_encode(const std::string& text);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// FNV-1a 64-bit content digest, hex encoded. Plumbing, not crypto.
std::string fnv1a64_hex(std::span<const std::uint8_t> bytes);
std::string fnv1a64_hex(const std::string& text);
std::string file_digest(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
// write to <path>.tmp then rename
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// shortest round-trip decimal form (std::to_chars)
std::string format_double(double v);

}  // namespace slicesec
