#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace longvid {

uint64_t fnv1a64(std::string_view data);
uint64_t splitmix64(uint64_t x);
std::string hex64(uint64_t value);

std::string trim(std::string_view s);
std::string to_lower(std::string s);
bool contains(std::string_view haystack, std::string_view needle);

// Lowercased alphanumeric runs; everything else is a separator.
std::vector<std::string> tokenize_words(std::string_view text);

bool is_valid_utf8(std::string_view bytes, size_t* bad_offset = nullptr);
std::string_view strip_utf8_bom(std::string_view text);

// Seconds rendered with millisecond precision, trailing zeros trimmed:
// 0 -> "0", 0.625 -> "0.625", 357.11 -> "357.11", 610.0 -> "610".
std::string format_seconds(double seconds);
int64_t round_ms(double seconds);

// Deterministic RNG. fork() derives an independent stream from the original
// seed and a label, so per-task streams do not depend on draw order.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  uint64_t u64() { return gen_(); }
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double in(double lo, double hi) { return lo + (hi - lo) * unit(); }
  int below(int n);
  Rng fork(std::string_view label) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
std::vector<std::string> read_lines(const std::string& path);
bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

// Runs fn(0..count-1) on `workers` threads; item order in any shared output
// must be handled by the caller (write results by index). Honors the global
// interrupt flag between items.
void parallel_for(size_t count, int workers, const std::function<void(size_t)>& fn);

bool interrupted();
void set_interrupted(bool value);
void install_interrupt_handler();

}  // namespace longvid
