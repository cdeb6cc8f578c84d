#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "skl/error.hpp"
#include "skl/rng.hpp"
#include "skl/split.hpp"

using namespace skl;

namespace {

Manifest by_counts(const std::vector<std::pair<std::string, int>>& classes, Split split = Split::unassigned) {
  Manifest m;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    m.class_names.push_back(classes[c].first);
    for (int i = 0; i < classes[c].second; ++i)
      m.entries.push_back({"c" + std::to_string(c) + "/" + std::to_string(i) + ".png", int(c), classes[c].first, split,
                           Origin::original, std::nullopt, "synthetic"});
  }
  return m;
}

std::size_t count(const Manifest& m, int cls, Split s) {
  return std::size_t(std::count_if(m.entries.begin(), m.entries.end(),
                                   [&](const ManifestEntry& e) { return e.class_id == cls && e.split == s; }));
}

// Independent largest-remainder: rank slots by remainder with exact rational
// arithmetic on quota = n * p / 100 where fractions are whole percents.
std::vector<std::size_t> apportion_percent(std::size_t n, const std::vector<int>& percents) {
  std::vector<std::size_t> out;
  std::vector<std::pair<std::size_t, std::size_t>> rem;  // (remainder*100, -slot)
  std::size_t given = 0;
  for (std::size_t s = 0; s < percents.size(); ++s) {
    out.push_back(n * percents[s] / 100);
    given += out.back();
    rem.push_back({n * percents[s] % 100, s});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t k = 0; given < n; ++k, ++given) ++out[rem[k].second];
  return out;
}

}  // namespace

TEST(Apportion, ExactCases) {
  const double f[] = {0.8, 0.2};
  EXPECT_EQ(apportion(10, f), (std::vector<std::size_t>{8, 2}));
  EXPECT_EQ(apportion(5, f), (std::vector<std::size_t>{4, 1}));
  EXPECT_EQ(apportion(0, f), (std::vector<std::size_t>{0, 0}));
  const double thirds[] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  EXPECT_EQ(apportion(4, thirds), (std::vector<std::size_t>{2, 1, 1}));
}

TEST(Apportion, MatchesRationalOracle) {
  const std::vector<std::vector<int>> mixes = {{80, 20}, {70, 10, 20}, {90, 10}, {50, 25, 25}};
  for (const auto& mix : mixes) {
    std::vector<double> f;
    for (int p : mix) f.push_back(p / 100.0);
    for (std::size_t n = 0; n < 400; ++n) ASSERT_EQ(apportion(n, f), apportion_percent(n, mix)) << n;
  }
}

TEST(StratifiedSplit, TenAndFive) {
  Manifest m = by_counts({{"A", 10}, {"B", 5}});
  Manifest out = stratified_split(m, {{{Split::train, 0.8}, {Split::validation, 0.2}}, 7, {}});
  EXPECT_EQ(count(out, 0, Split::train), 8u);
  EXPECT_EQ(count(out, 0, Split::validation), 2u);
  EXPECT_EQ(count(out, 1, Split::train), 4u);
  EXPECT_EQ(count(out, 1, Split::validation), 1u);
}

TEST(StratifiedSplit, AllTrain) {
  Manifest out = stratified_split(by_counts({{"A", 3}, {"B", 4}}), {{{Split::train, 1.0}}, 1, {}});
  for (const auto& e : out.entries) EXPECT_EQ(e.split, Split::train);
}

TEST(StratifiedSplit, TwelveClassesWithinOne) {
  SeededRng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<std::string, int>> classes;
    std::vector<int> sizes(12, 1);
    for (int i = 0; i < 1000 - 12; ++i) ++sizes[rng.below(12)];
    for (int c = 0; c < 12; ++c) classes.push_back({"class" + std::to_string(c), sizes[c]});
    Manifest out = stratified_split(by_counts(classes), {{{Split::train, 0.8}, {Split::validation, 0.2}}, rng.next_u64(), {}});
    ASSERT_EQ(out.entries.size(), 1000u);
    for (int c = 0; c < 12; ++c) {
      const auto expect = apportion_percent(std::size_t(sizes[c]), {80, 20});
      EXPECT_EQ(count(out, c, Split::train), expect[0]);
      EXPECT_LE(std::abs(double(count(out, c, Split::train)) - 0.8 * sizes[c]), 1.0);
      EXPECT_EQ(count(out, c, Split::train) + count(out, c, Split::validation), std::size_t(sizes[c]));
    }
  }
}

TEST(StratifiedSplit, DeterministicAndSeedSensitive) {
  Manifest m = by_counts({{"A", 40}, {"B", 30}});
  StratifiedSplitOptions opt{{{Split::train, 0.8}, {Split::validation, 0.2}}, 5, {}};
  EXPECT_EQ(stratified_split(m, opt).entries, stratified_split(m, opt).entries);
  opt.seed = 6;
  Manifest other = stratified_split(m, opt);
  opt.seed = 5;
  EXPECT_NE(stratified_split(m, opt).entries, other.entries);
}

TEST(StratifiedSplit, ScopeLeavesOthersAlone) {
  Manifest m = by_counts({{"A", 10}});
  for (int i = 0; i < 2; ++i) m.entries[i].split = Split::test;
  Manifest out = stratified_split(m, {{{Split::train, 0.75}, {Split::validation, 0.25}}, 3, {Split::unassigned}});
  EXPECT_EQ(out.entries[0].split, Split::test);
  EXPECT_EQ(out.entries[1].split, Split::test);
  EXPECT_EQ(count(out, 0, Split::train), 6u);
  EXPECT_EQ(count(out, 0, Split::validation), 2u);
}

TEST(StratifiedSplit, Errors) {
  Manifest m = by_counts({{"A", 4}, {"B", 0}});
  EXPECT_THROW(stratified_split(m, {{{Split::train, 1.0}}, 0, {}}), Error);
  Manifest ok = by_counts({{"A", 4}});
  EXPECT_THROW(stratified_split(ok, {{{Split::train, 0.9}, {Split::validation, 0.2}}, 0, {}}), Error);
  EXPECT_THROW(stratified_split(ok, {{{Split::train, 1.2}, {Split::validation, -0.2}}, 0, {}}), Error);
  EXPECT_THROW(stratified_split(ok, {{}, 0, {}}), Error);
}

TEST(Histogram, FinalExperimentTable) {
  const std::vector<std::tuple<std::string, int, int, int>> rows = {
      {"Actinic Keratosis", 742, 186, 8},          {"Basal Cell Carcinoma", 30067, 7517, 324},
      {"Dermatofibroma", 1067, 267, 12},           {"Hemangioma", 1601, 400, 18},
      {"Intraepithelial Carcinoma", 1299, 325, 14}, {"Lentigo", 1137, 284, 13},
      {"Malignant Melanoma", 6218, 1554, 68},      {"Melanocytic Nevus (mole)", 17632, 4408, 191},
      {"Pyogenic Granuloma", 371, 93, 5},          {"Seborrheic Keratosis", 19256, 4814, 208},
      {"Squamous Cell Carcinoma", 1462, 365, 16},  {"Wart", 7238, 1810, 79}};
  Manifest m;
  for (std::size_t c = 0; c < rows.size(); ++c) {
    const auto& [name, tr, va, te] = rows[c];
    m.class_names.push_back(name);
    auto add = [&](int n, Split s) {
      for (int i = 0; i < n; ++i) m.entries.push_back({"x.png", int(c), name, s, Origin::original, std::nullopt, ""});
    };
    add(tr, Split::train);
    add(va, Split::validation);
    add(te, Split::test);
  }
  EXPECT_EQ(class_histogram(m, Split::train).total, 88090u);
  EXPECT_EQ(class_histogram(m, Split::validation).total, 22023u);
  EXPECT_EQ(class_histogram(m, Split::test).total, 956u);
  EXPECT_EQ(class_histogram(m).total, 88090u + 22023u + 956u);
  const std::string table = render_split_table(m);
  EXPECT_NE(table.find("88090"), std::string::npos);
  EXPECT_NE(table.find("TOTAL"), std::string::npos);
}

TEST(Histogram, EdinburghSource) {
  Manifest m = by_counts({{"Actinic Keratosis", 45},
                          {"Basal Cell Carcinoma", 239},
                          {"Melanocytic Nevus (mole)", 331},
                          {"Seborrhoeic Keratosis", 257},
                          {"Squamous Cell Carcinoma", 88},
                          {"Intraepithelial Carcinoma", 78},
                          {"Pyogenic Granuloma", 24},
                          {"Haemangioma", 97},
                          {"Dermatofibroma", 65},
                          {"Malignant Melanoma", 76}});
  ClassHistogram h = class_histogram(m);
  EXPECT_EQ(h.total, 1300u);
  EXPECT_EQ(h.counts[2], 331u);
  EXPECT_EQ(h.counts[9], 76u);
}

TEST(Histogram, Empty) {
  Manifest m;
  m.class_names = {"a", "b"};
  ClassHistogram h = class_histogram(m);
  EXPECT_EQ(h.total, 0u);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{0, 0}));
}
