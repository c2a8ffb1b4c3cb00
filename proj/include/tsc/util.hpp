#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsc {

/// Bad configuration or bad user input; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Runtime failure (simulation contract violation, I/O, ...); exit code 3.
struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic per-purpose RNG stream derived from one master seed.
/// Distinct stream ids give decorrelated, reproducible generators.
std::mt19937_64 make_rng(std::uint64_t master_seed, std::uint64_t stream);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);

/// CSV float convention: 6 significant digits, '.' decimal separator.
std::string fmt_csv(double v);
/// Shortest round-trip-exact representation (event logs; replays must see
/// the identical double).
std::string fmt_exact(double v);
double parse_exact(const std::string& s);

/// Minimal CSV writer: comma separators, header row, LF line endings, UTF-8.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  const std::string& text() const { return text_; }
  void save(const std::string& path) const;

 private:
  std::size_t ncols_;
  std::string text_;
};

void write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

double mean_of(const std::vector<double>& v);
/// Sample standard deviation (n-1); 0 for n < 2.
double stddev_of(const std::vector<double>& v);

}  // namespace tsc
