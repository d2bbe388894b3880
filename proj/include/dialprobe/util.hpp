#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace dialprobe {

// 64-bit FNV-1a; used for file digests and for stable sub-seed derivation.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Derives an independent seed for a named component from a global seed.
// Adding a new component name never changes the seeds of existing ones.
std::uint64_t sub_seed(std::uint64_t seed, std::string_view component);

// Deterministic random source. The std:: distributions are implementation
// defined, so the few draws we need are spelled out here to keep outputs
// identical across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0.
  std::size_t index(std::size_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <class T> void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 engine_;
};

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

std::string read_file(const std::string& path);
// Writes via a temporary sibling file and rename, so readers never observe a
// partially written output.
void write_file_atomic(const std::string& path, std::string_view contents);

} // namespace dialprobe
