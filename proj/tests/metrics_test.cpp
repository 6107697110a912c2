#include "milab/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <set>

#include "milab/error.hpp"
#include "milab/random.hpp"

namespace milab {
namespace {

// All-pairs comparison: P(score_pos > score_neg) + 0.5 P(equal).
double auroc_pairs(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

// Exhaustive sweep: recount TP/FP from scratch at every distinct threshold.
struct SweepResult {
  double auprc = 0.0;
  double best_f1 = 0.0;
};

SweepResult pr_sweep(const std::vector<double>& s, const std::vector<bool>& truth) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double positives = 0.0;
  for (bool t : truth) positives += t;
  SweepResult r;
  double prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (truth[i] ? tp : fp) += 1.0;
    }
    const double precision = tp / (tp + fp), recall = tp / positives;
    r.auprc += (recall - prev_recall) * precision;
    prev_recall = recall;
    if (tp > 0) r.best_f1 = std::max(r.best_f1, 2 * precision * recall / (precision + recall));
  }
  return r;
}

struct Case {
  std::vector<double> scores;
  std::vector<bool> labels;
  std::unique_ptr<bool[]> flags;
  std::span<const bool> span() const { return {flags.get(), labels.size()}; }
};

Case random_case(Rng& rng, bool need_negative) {
  std::uniform_int_distribution<std::size_t> size(2, 100);
  std::uniform_int_distribution<int> coarse(0, 9);
  std::bernoulli_distribution coin(0.4);
  Case c;
  const std::size_t n = size(rng);
  // Coarse scores produce plenty of ties.
  const bool tied = coin(rng);
  std::uniform_real_distribution<double> fine(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    c.scores.push_back(tied ? coarse(rng) / 10.0 : fine(rng));
    c.labels.push_back(coin(rng));
  }
  c.labels[0] = true;
  if (need_negative) c.labels[1] = false;
  c.flags = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) c.flags[i] = c.labels[i];
  return c;
}

TEST(Auroc, MatchesAllPairsOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const Case c = random_case(rng, true);
    EXPECT_NEAR(auroc_binary(c.scores, c.span()), auroc_pairs(c.scores, c.labels), 1e-12);
  }
}

TEST(Auroc, WorkedExamples) {
  const double up[] = {0.1, 0.2, 0.8, 0.9};
  const double flat[] = {0.5, 0.5, 0.5, 0.5};
  const bool truth[] = {false, false, true, true};
  const bool inverted[] = {true, true, false, false};
  EXPECT_EQ(auroc_binary(up, truth), 1.0);
  EXPECT_EQ(auroc_binary(up, inverted), 0.0);
  EXPECT_EQ(auroc_binary(flat, truth), 0.5);
  const bool all[] = {true, true, true, true};
  EXPECT_THROW(auroc_binary(up, all), UndefinedMetric);
}

TEST(Auroc, MacroAveragesIncludedClasses) {
  // Three slides, classes 0 and 1 present; class 2 has no positives.
  const Tensor scores = Tensor::matrix({{0.9, 0.1, 0.0}, {0.2, 0.8, 0.0}, {0.6, 0.4, 0.0}});
  const std::size_t labels[] = {0, 1, 0};
  const AurocResult r = auroc_macro(scores, labels);
  EXPECT_EQ(r.included, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(r.value, 1.0);
  EXPECT_TRUE(std::isnan(r.per_class[2]));
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("class 2"), std::string::npos);
  const std::size_t single[] = {1, 1, 1};
  EXPECT_THROW(auroc_macro(scores, single), UndefinedMetric);
}

TEST(PrCurve, MatchesExhaustiveSweepOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const Case c = random_case(rng, false);
    const PrCurve curve = patch_pr_curve(c.scores, c.span());
    const SweepResult oracle = pr_sweep(c.scores, c.labels);
    EXPECT_NEAR(curve.auprc, oracle.auprc, 1e-12);
    EXPECT_NEAR(curve.best_f1, oracle.best_f1, 1e-12);
  }
}

TEST(PrCurve, RecallFallsAsThresholdRises) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Case c = random_case(rng, false);
    const PrCurve curve = patch_pr_curve(c.scores, c.span());
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
      EXPECT_GT(curve.points[k - 1].threshold, curve.points[k].threshold);
      EXPECT_LE(curve.points[k - 1].recall, curve.points[k].recall);
    }
    EXPECT_EQ(curve.points.back().recall, 1.0);
  }
}

TEST(PrCurve, WorkedExamples) {
  const bool truth[] = {true, false};
  const double good[] = {0.9, 0.1};
  const double bad[] = {0.1, 0.9};
  PrCurve c = patch_pr_curve(good, truth);
  EXPECT_EQ(c.auprc, 1.0);
  EXPECT_EQ(c.best_f1, 1.0);
  c = patch_pr_curve(bad, truth);
  EXPECT_EQ(c.auprc, 0.5);
  EXPECT_DOUBLE_EQ(c.best_f1, 2.0 / 3.0);
  EXPECT_EQ(c.best_threshold, 0.1);

  const double flat[] = {0.3, 0.3, 0.3, 0.3};
  const bool half[] = {true, false, true, false};
  c = patch_pr_curve(flat, half);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_EQ(c.points[0].precision, 0.5);

  const bool none[] = {false, false};
  EXPECT_THROW(patch_pr_curve(good, none), UndefinedMetric);
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), UndefinedMetric);
}

}  // namespace
}  // namespace milab
