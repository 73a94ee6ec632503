// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <gtest/gtest.h>

#include "dime/stream.hpp"

namespace dime {
namespace {

// Largest remainder with a floor of one: ones first, then whole parts, then
// leftover seats by descending fractional part with ties to earlier steps.
std::vector<std::size_t> reference_allocation(const std::vector<double>& p, std::size_t c) {
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  std::vector<std::size_t> seats(p.size());
  std::vector<std::pair<double, std::size_t>> fractions;
  std::size_t used = 0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    const double quota = static_cast<double>(c) * p[t] / total;
    const auto whole = static_cast<std::size_t>(quota);
    if (whole == 0) {
      seats[t] = 1;
    } else {
      seats[t] = whole;
      fractions.emplace_back(quota - static_cast<double>(whole), t);
    }
    used += seats[t];
  }
  std::ranges::stable_sort(fractions, [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < c; ++k, ++used) ++seats[fractions.at(k).second];
  return seats;
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::ranges::sort(v);
  return v;
}

TEST(StepProportions, Examples) {
  EXPECT_EQ(step_proportions(1.0, 5), std::vector<double>(5, 1.0));
  const std::vector<double> s = step_proportions(0.01, 10);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_EQ(s.front(), 1.0);
  EXPECT_EQ(s.back(), 0.01);
  EXPECT_NEAR(s[1], 0.599484250318941, 1e-14);
  EXPECT_NEAR(s[1], 0.59948, 5e-6);
  EXPECT_EQ(step_proportions(0.3, 1), std::vector<double>{1.0});
}

TEST(StepProportions, NonincreasingWithEndpoints) {
  for (double rho : {1.0, 0.5, 0.1, 0.01, 0.001}) {
    for (std::size_t t = 2; t <= 20; ++t) {
      const std::vector<double> s = step_proportions(rho, t);
      EXPECT_EQ(s.front(), 1.0);
      EXPECT_EQ(s.back(), rho);
      for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LE(s[i], s[i - 1]);
    }
  }
}

TEST(StepProportions, RejectsBadRho) {
  EXPECT_THROW(step_proportions(0.0, 4), std::invalid_argument);
  EXPECT_THROW(step_proportions(1.5, 4), std::invalid_argument);
}

TEST(AllocateClasses, Examples) {
  EXPECT_EQ(allocate_classes(std::vector<double>(10, 1.0), 40), std::vector<std::size_t>(10, 4));
  EXPECT_EQ(allocate_classes(std::vector<double>{1.0, 0.01}, 101), (std::vector<std::size_t>{100, 1}));
}

TEST(AllocateClasses, MatchesReferenceForSteepSchedule) {
  const std::vector<double> p = step_proportions(0.01, 10);
  const std::vector<std::size_t> counts = allocate_classes(p, 186);
  EXPECT_EQ(counts, reference_allocation(p, 186));
  EXPECT_EQ(counts, (std::vector<std::size_t>{75, 45, 27, 16, 10, 6, 3, 2, 1, 1}));
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t{0}), 186u);
}

TEST(AllocateClasses, InvariantsAcrossSchedules) {
  for (double rho : {1.0, 0.5, 0.1, 0.01, 0.001}) {
    for (std::size_t t : {2u, 3u, 5u, 10u, 17u}) {
      for (std::size_t c : {t, t + 1, 2 * t + 3, std::size_t{40}, std::size_t{186}}) {
        if (c < t) continue;
        const std::vector<double> p = step_proportions(rho, t);
        const std::vector<std::size_t> counts = allocate_classes(p, c);
        EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t{0}), c);
        for (std::size_t i = 0; i < counts.size(); ++i) {
          EXPECT_GE(counts[i], 1u);
          if (i > 0) EXPECT_LE(counts[i], counts[i - 1]) << "rho " << rho << " T " << t << " C " << c;
        }
      }
    }
  }
}

TEST(AllocateClasses, RejectsTooFewClasses) {
  EXPECT_THROW(allocate_classes(std::vector<double>(5, 1.0), 4), std::invalid_argument);
}

TEST(PermuteSteps, Examples) {
  EXPECT_EQ(permute_steps(std::vector<std::size_t>{7}, 3), std::vector<std::size_t>{7});
  const std::vector<std::size_t> counts{16, 9, 5, 3, 2, 1, 1, 1, 1, 1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::vector<std::size_t> p = permute_steps(counts, seed);
    EXPECT_EQ(sorted(p), sorted(counts));
    EXPECT_EQ(p, permute_steps(counts, seed));
  }
  EXPECT_THROW(permute_steps(std::vector<std::size_t>{}, 1), std::invalid_argument);
}

TEST(PermuteSteps, FirstPositionRoughlyUniform) {
  std::vector<std::size_t> distinct(5);
  std::iota(distinct.begin(), distinct.end(), std::size_t{0});
  std::vector<int> hits(5, 0);
  for (std::uint64_t seed = 0; seed < 5000; ++seed) ++hits[permute_steps(distinct, seed)[0]];
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(LongtailCounts, Examples) {
  EXPECT_EQ(longtail_counts(12, 50, 1.0), std::vector<std::size_t>(12, 50));
  EXPECT_EQ(longtail_counts(2, 100, 0.01), (std::vector<std::size_t>{100, 1}));
  EXPECT_EQ(longtail_counts(1, 33, 0.01), std::vector<std::size_t>{33});
  const std::vector<std::size_t> expected{100, 89, 79, 70, 62, 55, 49, 44, 39, 35, 31, 27, 24, 22,
                                          19,  17, 15, 13, 12, 11, 9,  8,  7,  7,  6,  5,  5,  4,
                                          4,   3,  3,  3,  2,  2,  2,  2,  1,  1,  1,  1};
  const std::vector<std::size_t> lt = longtail_counts(40, 100, 0.01);
  EXPECT_EQ(lt, expected);
  for (std::size_t r = 1; r < lt.size(); ++r) EXPECT_LE(lt[r], lt[r - 1]);
}

TEST(LongtailCounts, FloorOfOne) {
  for (std::size_t c : {3u, 10u, 50u}) {
    for (std::size_t v : longtail_counts(c, 5, 0.001)) EXPECT_GE(v, 1u);
  }
  EXPECT_THROW(longtail_counts(4, 0, 0.5), std::invalid_argument);
}

StreamConfig small_config(std::uint64_t seed) {
  StreamConfig cfg;
  cfg.total_classes = 40;
  cfg.num_steps = 10;
  cfg.seed = seed;
  return cfg;
}

void expect_protocol_invariants(const Stream& s, const StreamConfig& cfg) {
  const StreamProtocol& p = s.protocol;
  EXPECT_NO_THROW(p.validate());
  ASSERT_EQ(p.steps.size(), cfg.num_steps);
  std::set<ClassId> seen;
  std::size_t sum = 0;
  for (std::size_t t = 0; t < p.steps.size(); ++t) {
    const StepSpec& step = p.steps[t];
    EXPECT_EQ(step.step_index, static_cast<int>(t + 1));
    EXPECT_FALSE(step.class_ids.empty());
    sum += step.class_ids.size();
    for (ClassId c : step.class_ids) EXPECT_TRUE(seen.insert(c).second) << "class " << c << " repeated";
  }
  EXPECT_EQ(sum, cfg.total_classes);
  EXPECT_EQ(seen.size(), cfg.total_classes);
  EXPECT_EQ(sorted(p.step_sizes()),
            sorted(allocate_classes(step_proportions(cfg.rho, cfg.num_steps), cfg.total_classes)));

  const std::vector<std::size_t> lt = longtail_counts(cfg.total_classes, cfg.n_max, cfg.class_rho);
  std::map<ClassId, std::size_t> train_count;
  std::map<ClassId, std::size_t> test_count;
  for (const Sample& smp : s.data.train) ++train_count[smp.label];
  for (const Sample& smp : s.data.test) ++test_count[smp.label];
  for (const StepSpec& step : p.steps) {
    for (std::size_t i = 0; i < step.class_ids.size(); ++i) {
      const ClassId c = step.class_ids[i];
      EXPECT_EQ(step.train_counts[i], lt[static_cast<std::size_t>(c)]);
      EXPECT_EQ(train_count[c], lt[static_cast<std::size_t>(c)]);
      EXPECT_EQ(test_count[c], cfg.test_per_class);
    }
  }
}

TEST(BuildStream, InvariantsOverSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const StreamConfig cfg = small_config(seed);
    expect_protocol_invariants(build_stream(cfg), cfg);
  }
}

TEST(BuildStream, FullyBalancedWhenNoImbalance) {
  StreamConfig cfg = small_config(3);
  cfg.rho = 1.0;
  cfg.class_rho = 1.0;
  const Stream s = build_stream(cfg);
  EXPECT_EQ(s.protocol.step_sizes(), std::vector<std::size_t>(10, 4));
  for (const StepSpec& step : s.protocol.steps) {
    EXPECT_EQ(step.train_counts, std::vector<std::size_t>(4, cfg.n_max));
  }
}

TEST(BuildStream, Deterministic) {
  const Stream a = build_stream(small_config(8));
  const Stream b = build_stream(small_config(8));
  EXPECT_EQ(a.protocol, b.protocol);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(build_stream(small_config(9)).protocol, a.protocol);
}

TEST(BuildStream, PrototypesHaveSeparationNorm) {
  StreamConfig cfg = small_config(1);
  cfg.separation = 2.5;
  for (const Vector& proto : build_stream(cfg).data.prototypes) {
    double sq = 0.0;
    for (double v : proto) sq += v * v;
    EXPECT_NEAR(std::sqrt(sq), 2.5, 1e-12);
  }
}

TEST(BuildStream, HeadClassesSpreadAcrossSteps) {
  // Over many seeds the rank-0 class should land in different steps.
  std::set<std::size_t> positions;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Stream s = build_stream(small_config(seed));
    for (std::size_t t = 0; t < s.protocol.steps.size(); ++t) {
      if (std::ranges::find(s.protocol.steps[t].class_ids, 0) != s.protocol.steps[t].class_ids.end()) {
        positions.insert(t);
      }
    }
  }
  EXPECT_GE(positions.size(), 5u);
}

TEST(BuildStream, RejectsTooFewClasses) {
  StreamConfig cfg = small_config(1);
  cfg.total_classes = 5;
  EXPECT_THROW(build_stream(cfg), std::invalid_argument);
}

TEST(StreamViews, StepAndAccumulatedSamples) {
  const Stream s = build_stream(small_config(4));
  std::size_t accumulated = 0;
  for (std::size_t t = 0; t < s.protocol.steps.size(); ++t) {
    const StepSpec& step = s.protocol.steps[t];
    const std::vector<Sample> train = step_train_samples(s, step);
    const std::size_t expected_train =
        std::accumulate(step.train_counts.begin(), step.train_counts.end(), std::size_t{0});
    EXPECT_EQ(train.size(), expected_train);
    for (const Sample& smp : train) {
      EXPECT_NE(std::ranges::find(step.class_ids, smp.label), step.class_ids.end());
    }
    accumulated += step.class_ids.size();
    EXPECT_EQ(accumulated_test_samples(s, t).size(), accumulated * 30);
  }
  EXPECT_THROW(accumulated_test_samples(s, 10), std::out_of_range);
}

TEST(ProtocolValidate, DetectsOverlap) {
  StreamProtocol p = build_stream(small_config(2)).protocol;
  p.steps[1].class_ids[0] = p.steps[0].class_ids[0];
  EXPECT_THROW(p.validate(), std::logic_error);
}

TEST(ProtocolDump, Format) {
  StreamProtocol p;
  p.total_classes = 5;
  p.num_steps = 2;
  p.steps = {{1, {0, 3, 4}, {9, 2, 1}}, {2, {1, 2}, {5, 5}}};
  std::ostringstream out;
  write_protocol(out, p);
  EXPECT_EQ(out.str(), "1 3 0 3 4\n2 2 1 2\n");
}

}  // namespace
}  // namespace dime
