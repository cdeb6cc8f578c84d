#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skl/manifest.hpp"

namespace skl {

struct SplitFraction {
  Split split;
  double fraction;
};

/// Largest-remainder apportionment of n items. Leftover units go to the
/// largest fractional remainders; equal remainders favour the earlier slot.
std::vector<std::size_t> apportion(std::size_t n, std::span<const double> fractions);

struct StratifiedSplitOptions {
  std::vector<SplitFraction> fractions;
  std::uint64_t seed = 0;
  /// Only entries whose current split is listed are reassigned; empty means all.
  std::vector<Split> scope;
};

/// Per class (ascending class-id) the in-scope entries are shuffled with a
/// stream derived from (seed, class-id) and cut into the apportioned counts,
/// in the order the fractions are listed.
Manifest stratified_split(const Manifest& manifest, const StratifiedSplitOptions& options);

struct ClassHistogram {
  std::vector<std::string> class_names;
  std::vector<std::size_t> counts;
  std::size_t total = 0;
};

ClassHistogram class_histogram(const Manifest& manifest, std::optional<Split> split = std::nullopt);

/// Lesion type x {Train, Validation, Test} table with a TOTAL row.
std::string render_split_table(const Manifest& manifest);

}  // namespace skl
