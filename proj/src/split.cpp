#include "skl/split.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "skl/error.hpp"
#include "skl/rng.hpp"

namespace skl {

std::vector<std::size_t> apportion(std::size_t n, std::span<const double> fractions) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<double> remainders(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < fractions.size(); ++s) {
    const double quota = fractions[s] * double(n);
    counts[s] = std::size_t(std::floor(quota));
    // Snap so that remainders equal in exact arithmetic compare equal here.
    remainders[s] = std::round((quota - std::floor(quota)) * 1e9) / 1e9;
    assigned += counts[s];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < n && k < order.size(); ++k, ++assigned) ++counts[order[k]];
  // Rounding of fractions summing to 1 within 1e-9 can still leave a unit over.
  for (std::size_t k = 0; assigned < n; k = (k + 1) % order.size(), ++assigned) ++counts[order[k]];
  return counts;
}

Manifest stratified_split(const Manifest& manifest, const StratifiedSplitOptions& options) {
  manifest.validate();
  if (options.fractions.empty()) fail(Errc::invalid_argument, "no split fractions given");
  double sum = 0;
  std::vector<double> fractions;
  for (const auto& f : options.fractions) {
    if (!(f.fraction >= 0.0) || !std::isfinite(f.fraction))
      fail(Errc::invalid_argument, "split fraction for " + std::string(to_string(f.split)) + " must be >= 0");
    sum += f.fraction;
    fractions.push_back(f.fraction);
  }
  if (std::abs(sum - 1.0) > 1e-9)
    fail(Errc::invalid_argument, "split fractions sum to " + std::to_string(sum) + ", expected 1");
  for (std::size_t a = 0; a < options.fractions.size(); ++a)
    for (std::size_t b = a + 1; b < options.fractions.size(); ++b)
      if (options.fractions[a].split == options.fractions[b].split)
        fail(Errc::invalid_argument, "split " + std::string(to_string(options.fractions[a].split)) + " listed twice");

  auto in_scope = [&](const ManifestEntry& e) {
    return options.scope.empty() || std::find(options.scope.begin(), options.scope.end(), e.split) != options.scope.end();
  };

  std::vector<std::vector<std::size_t>> by_class(manifest.num_classes());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (in_scope(manifest.entries[i])) by_class[std::size_t(manifest.entries[i].class_id)].push_back(i);

  Manifest out = manifest;
  const SeededRng root(options.seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) fail(Errc::invalid_argument, "class '" + manifest.class_names[c] + "' has no entries to split");
    SeededRng rng = root.derive(c);
    rng.shuffle(std::span<std::size_t>(members));
    const auto counts = apportion(members.size(), fractions);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < counts.size(); ++s)
      for (std::size_t k = 0; k < counts[s]; ++k) out.entries[members[pos++]].split = options.fractions[s].split;
  }
  std::string stamp = "split seed=" + std::to_string(options.seed);
  for (const auto& f : options.fractions) stamp += " " + std::string(to_string(f.split)) + "=" + std::to_string(f.fraction);
  out.provenance.push_back(stamp);
  return out;
}

ClassHistogram class_histogram(const Manifest& manifest, std::optional<Split> split) {
  ClassHistogram h;
  h.class_names = manifest.class_names;
  h.counts.assign(manifest.num_classes(), 0);
  for (const auto& e : manifest.entries) {
    if (split && e.split != *split) continue;
    if (e.class_id < 0 || std::size_t(e.class_id) >= h.counts.size())
      fail(Errc::invalid_argument, "entry " + e.path + " has an out-of-range class-id");
    ++h.counts[std::size_t(e.class_id)];
    ++h.total;
  }
  return h;
}

std::string render_split_table(const Manifest& manifest) {
  const auto train = class_histogram(manifest, Split::train);
  const auto val = class_histogram(manifest, Split::validation);
  const auto test = class_histogram(manifest, Split::test);
  std::size_t width = std::string("Lesion Type").size();
  for (const auto& n : manifest.class_names) width = std::max(width, n.size());
  std::string out;
  char line[512];
  auto row = [&](const std::string& name, std::size_t a, std::size_t b, std::size_t c) {
    std::snprintf(line, sizeof line, "%-*s %10zu %10zu %10zu\n", int(width), name.c_str(), a, b, c);
    out += line;
  };
  std::snprintf(line, sizeof line, "%-*s %10s %10s %10s\n", int(width), "Lesion Type", "Train", "Validation", "Test");
  out += line;
  for (std::size_t c = 0; c < manifest.num_classes(); ++c)
    row(manifest.class_names[c], train.counts[c], val.counts[c], test.counts[c]);
  row("TOTAL", train.total, val.total, test.total);
  return out;
}

}  // namespace skl
