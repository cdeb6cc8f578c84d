#include "skl/rng.hpp"

#include "skl/error.hpp"

namespace skl {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::file_not_found: return "file-not-found";
    case Errc::unsupported_format: return "unsupported-format";
    case Errc::corrupt_stream: return "corrupt-stream";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::out_of_range: return "out-of-range";
    case Errc::checksum_mismatch: return "checksum-mismatch";
    case Errc::non_finite: return "non-finite";
    case Errc::stale_cache: return "stale-cache";
    case Errc::io_failure: return "io-failure";
  }
  return "unknown";
}

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

SeededRng SeededRng::derive(std::uint64_t index) const noexcept {
  return SeededRng(seed_, mix64(stream_ ^ mix64(index + 0x632be59bd9b4e019ULL)));
}

std::uint64_t SeededRng::next_u64() noexcept {
  std::uint64_t key = mix64(seed_) ^ mix64(stream_ + 0xd1b54a32d192ed03ULL);
  return mix64(key ^ mix64(counter_++));
}

double SeededRng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) noexcept {
  if (lo == hi) return lo;
  return lo + (hi - lo) * uniform();
}

std::uint64_t SeededRng::below(std::uint64_t n) noexcept {
  // Rejection on the top of the range keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

}  // namespace skl
