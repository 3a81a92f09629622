#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace signvid {

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure surfaces as one of these; the CLI maps them
// onto exit codes (config 2, stage 3, compatibility 4).
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape/dimension mismatch between tensors or layers.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its contract (index out of range, negative sigma, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed by a numeric op.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operation attempted in an invalid state (missing checkpoint, empty codebook).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration file or unknown config key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Cross-stage artifact mismatch (config hashes disagree).
class CompatError : public Error {
 public:
  using Error::Error;
};

/// File I/O or format failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 is fully specified by the standard;
// the distributions are hand-rolled because the standard library's are
// implementation-defined and would break bit-reproducibility.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw ValueError("Rng::uniform_index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return v % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    if (hi < lo) throw ValueError("Rng::uniform_int: empty range");
    return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Standard normal via Box-Muller (no cached spare, so draws are
  /// position-independent and reproducible).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Derive an independent stream; used to give every consumer its own RNG.
  Rng split(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream))); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Small CSV writer: quoting-free (all emitted fields are plain tokens).
// ---------------------------------------------------------------------------

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw IoError("cannot open CSV for writing: " + path.string());
  }

  void header(const std::vector<std::string>& cols) { row_impl(cols); }

  void row(const std::vector<std::string>& cols) { row_impl(cols); }

  static std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream ss;
    ss.precision(12);
    ss << v;
    return ss.str();
  }

 private:
  void row_impl(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out_ << ',';
      out_ << cols[i];
    }
    out_ << '\n';
  }
  std::ofstream out_;
};

inline std::string hex_u64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

/// FNV-1a over bytes; used for config hashes and checkpoint comparisons.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace signvid
