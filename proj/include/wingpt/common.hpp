#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wingpt {

// Base class for every error the library raises. Each module derives its
// own kinds so callers can catch narrowly or broadly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic 64-bit generator (splitmix64-seeded xoshiro256**). Output is
// identical across platforms and standard libraries, which the std
// distributions do not guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();

  // Independent stream keyed by a path of integers, e.g. (seed, step, prompt, rollout).
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

namespace text {

std::string_view trim(std::string_view s);
// ASCII case-fold; bytes >= 0x80 pass through so UTF-8 stays intact.
std::string casefold(std::string_view s);
std::string collapse_whitespace(std::string_view s);
// trim + casefold + collapse.
std::string normalize(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);
bool parse_double(std::string_view s, double& out);
std::optional<double> parse_double(std::string_view s);
// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace text

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace wingpt
