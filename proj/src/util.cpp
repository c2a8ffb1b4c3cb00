#include "tsc/util.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tsc {

namespace {
std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace

std::mt19937_64 make_rng(std::uint64_t master_seed, std::uint64_t stream) {
  std::uint64_t x = master_seed ^ (0x6a09e667f3bcc909ull + stream * 0x100000001b3ull);
  std::uint64_t s0 = splitmix64(x);
  std::uint64_t s1 = splitmix64(x);
  std::seed_seq seq{static_cast<std::uint32_t>(s0), static_cast<std::uint32_t>(s0 >> 32),
                    static_cast<std::uint32_t>(s1), static_cast<std::uint32_t>(s1 >> 32)};
  return std::mt19937_64(seq);
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt_csv(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt_exact(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_exact(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw SimError("bad float in log: " + s);
  return v;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : ncols_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) text_ += ',';
    text_ += header[i];
  }
  text_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != ncols_) throw SimError("csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
}

void CsvWriter::save(const std::string& path) const { write_file(path, text_); }

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SimError("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw SimError("short write to " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SimError("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace tsc
