#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace monomt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, corpora, vocabularies).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape incompatibility.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// FNV-1a, 64 bit. Used for content hashes and seed derivation.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::uint64_t splitmix64(std::uint64_t x);

/// Per-stage seed: splitmix64(global ^ fnv1a(stage)). Independent of stage order.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage);

/// Seeded generator with platform-independent sampling helpers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::vector<std::string> split_whitespace(std::string_view line);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Splits a UTF-8 string into code points (each returned as its byte sequence).
/// Invalid bytes are returned one at a time.
std::vector<std::string> utf8_chars(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
std::uint64_t file_hash(const std::string& path);

}  // namespace monomt
