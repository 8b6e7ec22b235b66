#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "xfer/sampling/masking.hpp"
#include "xfer/sampling/mixture.hpp"

using namespace xfer;
using namespace xfer::sampling;

namespace {

// Intermediate-task training set sizes without SQuAD.
const std::map<std::string, std::uint64_t> kIntermediateSizes = {
    {"anli", 1104934}, {"qqp", 363846}, {"hellaswag", 39905},
    {"ccg", 38015},    {"cosmosqa", 25588}, {"commonsenseqa", 9741}};

double sum_rates(const std::map<std::string, double>& r) {
  return std::accumulate(r.begin(), r.end(), 0.0, [](double a, const auto& kv) { return a + kv.second; });
}

std::map<std::string, std::uint64_t> random_sizes(SeededRng& rng, std::size_t n, std::uint64_t max) {
  std::map<std::string, std::uint64_t> m;
  for (std::size_t i = 0; i < n; ++i) m["t" + std::to_string(i)] = 1 + rng.below(max);
  return m;
}

}  // namespace

TEST(TaskRates, NoCapping) {
  const auto m = compute_task_rates({{"A", 100}, {"B", 300}}, 1000000);
  EXPECT_DOUBLE_EQ(m.rates.at("A"), 0.25);
  EXPECT_DOUBLE_EQ(m.rates.at("B"), 0.75);
}

TEST(TaskRates, SingletonIsOne) {
  EXPECT_DOUBLE_EQ(compute_task_rates({{"only", 5000000}}).rates.at("only"), 1.0);
}

TEST(TaskRates, IntermediateTaskSizesWithDefaultCap) {
  const auto m = compute_task_rates(kIntermediateSizes);
  EXPECT_EQ(m.cap, 131072u);
  // capped sum by hand: 131072 + 131072 + 39905 + 38015 + 25588 + 9741
  EXPECT_EQ(m.capped_total(), 375393u);
  EXPECT_NEAR(m.rates.at("anli"), 131072.0 / 375393.0, 1e-12);
  EXPECT_NEAR(m.rates.at("anli"), 0.34916, 5e-6);
  EXPECT_NEAR(m.rates.at("commonsenseqa"), 0.02595, 5e-6);
  EXPECT_DOUBLE_EQ(m.rates.at("anli"), m.rates.at("qqp"));
}

TEST(TaskRates, Errors) {
  EXPECT_THROW(compute_task_rates({}), ConfigError);
  EXPECT_THROW(compute_task_rates({{"a", 0}}), ConfigError);
  EXPECT_THROW(compute_task_rates({{"a", 1}}, 0), ConfigError);
}

TEST(TaskRates, NormalizationAndCapSaturationProperties) {
  SeededRng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t cap = 1 + rng.below(5000);
    auto sizes = random_sizes(rng, 1 + rng.below(8), 10000);
    const auto m = compute_task_rates(sizes, cap);
    ASSERT_NEAR(sum_rates(m.rates), 1.0, 1e-9);
    for (const auto& [name, e] : sizes) {
      const double numerator = m.rates.at(name) * static_cast<double>(m.capped_total());
      if (e >= cap) {
        ASSERT_NEAR(numerator, static_cast<double>(cap), 1e-6);
      }
      // growing a task never lowers its own rate
      auto grown = sizes;
      grown[name] = e + 1 + rng.below(1000);
      ASSERT_GE(compute_task_rates(grown, cap).rates.at(name), m.rates.at(name) - 1e-15);
    }
  }
}

TEST(LanguageRates, EqualCountsAreUniform) {
  for (double alpha : {0.1, 0.3, 1.0}) {
    const auto m = compute_language_rates({{"a", 50}, {"b", 50}, {"c", 50}}, alpha);
    for (const auto& [l, q] : m.rates) EXPECT_NEAR(q, 1.0 / 3.0, 1e-12);
  }
}

TEST(LanguageRates, AlphaOneIsProportional) {
  const auto m = compute_language_rates({{"L1", 1000}, {"L2", 8000}}, 1.0);
  EXPECT_NEAR(m.rates.at("L1"), 1.0 / 9.0, 1e-12);
  EXPECT_NEAR(m.rates.at("L2"), 8.0 / 9.0, 1e-12);
}

TEST(LanguageRates, AlphaPointThreeMatchesClosedForm) {
  const auto m = compute_language_rates({{"L1", 1000}, {"L2", 8000}}, 0.3);
  // two-language closed form: q1 = r / (1 + r) with r = (n1 / n2)^alpha
  const double r = std::pow(1000.0 / 8000.0, 0.3);
  EXPECT_NEAR(m.rates.at("L1"), r / (1.0 + r), 1e-12);
  EXPECT_NEAR(m.rates.at("L2"), 1.0 / (1.0 + r), 1e-12);
  EXPECT_NEAR(m.rates.at("L1"), 0.3489, 5e-5);
  EXPECT_NEAR(m.rates.at("L2"), 0.6511, 5e-5);
}

TEST(LanguageRates, Errors) {
  EXPECT_THROW(compute_language_rates({{"a", 0}, {"b", 4}}), ConfigError);
  EXPECT_THROW(compute_language_rates({}), ConfigError);
}

TEST(LanguageRates, SmallAlphaApproachesUniform) {
  const auto m = compute_language_rates({{"a", 10}, {"b", 1000000}}, 1e-6);
  EXPECT_NEAR(m.rates.at("a"), 0.5, 1e-4);
}

TEST(LanguageRates, NormalizationAndAlphaMonotonicity) {
  SeededRng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    auto counts = random_sizes(rng, 2 + rng.below(6), 100000);
    ASSERT_NEAR(sum_rates(compute_language_rates(counts, 0.01 + rng.uniform()).rates), 1.0, 1e-9);
    const std::uint64_t n1 = 1 + rng.below(1000);
    const std::uint64_t n2 = n1 + 1 + rng.below(100000);
    double previous = 0.0;
    for (double alpha = 1.0; alpha > 0.0; alpha -= 0.05) {
      const auto m = compute_language_rates({{"small", n1}, {"large", n2}}, alpha);
      const double ratio = m.rates.at("small") / m.rates.at("large");
      ASSERT_GE(ratio, previous - 1e-12);
      previous = ratio;
    }
  }
}

TEST(SampleSource, DegenerateMixture) {
  SeededRng rng(1);
  const auto m = compute_task_rates({{"A", 10}});
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_source(rng, m), "A");
}

TEST(SampleSource, EmpiricalFrequencyWithinBinomialBound) {
  SeededRng rng(2024);
  const auto m = compute_task_rates({{"A", 100}, {"B", 300}}, 1000000);
  constexpr int kDraws = 100000;
  int a = 0;
  for (int i = 0; i < kDraws; ++i) a += sample_source(rng, m) == "A";
  // 3 sigma of Binomial(1e5, 0.25) is ~0.0041 in frequency; the stated bound is 0.01
  EXPECT_NEAR(static_cast<double>(a) / kDraws, 0.25, 0.01);
}

TEST(SampleSource, IdenticalSeedsGiveIdenticalSequences) {
  const auto m = compute_language_rates({{"en", 100}, {"l1", 40}, {"l2", 7}});
  SeededRng a(77), b(77);
  for (int i = 0; i < 5000; ++i) ASSERT_EQ(sample_source(a, m), sample_source(b, m));
}

namespace {

const TokenSpace kSpace{100, corpus::special::mask, corpus::special::count};

std::vector<TokenId> regular_tokens(SeededRng& rng, std::size_t n) {
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = kSpace.first_regular + static_cast<TokenId>(rng.below(kSpace.vocab_size - 5));
  return ids;
}

}  // namespace

TEST(MaskTokens, NoOpPolicy) {
  SeededRng rng(3);
  const auto ids = regular_tokens(rng, 200);
  MaskingPolicy p;
  p.select_prob = 0.0;
  const auto out = mask_tokens(ids, p, rng, {}, kSpace);
  EXPECT_EQ(out.corrupted, ids);
  for (auto l : out.labels) EXPECT_EQ(l, kIgnoreLabel);
}

TEST(MaskTokens, SaturatingPolicy) {
  SeededRng rng(4);
  auto ids = regular_tokens(rng, 50);
  ids[0] = corpus::special::cls;
  ids[49] = corpus::special::sep;
  MaskingPolicy p{1.0, 1.0, 0.0, 0.0};
  const auto out = mask_tokens(ids, p, rng, {0, 49}, kSpace);
  for (std::size_t i = 1; i < 49; ++i) {
    EXPECT_EQ(out.corrupted[i], corpus::special::mask);
    EXPECT_EQ(out.labels[i], ids[i]);
  }
  EXPECT_EQ(out.corrupted[0], corpus::special::cls);
  EXPECT_EQ(out.labels[49], kIgnoreLabel);
}

TEST(MaskTokens, DefaultPolicyFractions) {
  SeededRng rng(5);
  const auto ids = regular_tokens(rng, 10000);
  const auto out = mask_tokens(ids, MaskingPolicy{}, rng, {}, kSpace);
  std::size_t selected = 0, masked = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (out.labels[i] == kIgnoreLabel) {
      ASSERT_EQ(out.corrupted[i], ids[i]);
      continue;
    }
    ASSERT_EQ(out.labels[i], ids[i]);
    ++selected;
    masked += out.corrupted[i] == corpus::special::mask;
  }
  const double sel = static_cast<double>(selected) / 10000.0;
  const double mfrac = static_cast<double>(masked) / static_cast<double>(selected);
  EXPECT_GE(sel, 0.14);
  EXPECT_LE(sel, 0.16);
  EXPECT_GE(mfrac, 0.78);
  EXPECT_LE(mfrac, 0.82);
}

TEST(MaskTokens, SpecialPositionsNeverChangeAndRandomIdsAreRegular) {
  SeededRng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ids = regular_tokens(rng, 64);
    std::unordered_set<std::size_t> special;
    for (std::size_t i = 0; i < ids.size(); i += 1 + rng.below(5)) special.insert(i);
    MaskingPolicy p{0.5, 0.2, 0.6, 0.2};
    const auto out = mask_tokens(ids, p, rng, special, kSpace);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (special.count(i)) {
        ASSERT_EQ(out.corrupted[i], ids[i]);
        ASSERT_EQ(out.labels[i], kIgnoreLabel);
      }
      ASSERT_GE(out.corrupted[i], corpus::special::mask);
      if (out.corrupted[i] != corpus::special::mask) {
        ASSERT_GE(out.corrupted[i], kSpace.first_regular);
      }
    }
  }
}

TEST(MaskTokens, InvalidPolicyRejected) {
  SeededRng rng(1);
  std::vector<TokenId> ids = {10, 11};
  MaskingPolicy p{0.15, 0.5, 0.1, 0.1};
  EXPECT_THROW(mask_tokens(ids, p, rng, {}, kSpace), ConfigError);
}
