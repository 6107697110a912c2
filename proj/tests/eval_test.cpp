#include "milab/eval.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "milab/error.hpp"
#include "testing.hpp"

namespace milab {
namespace {

GenConfig eval_data() {
  GenConfig g;
  g.num_slides = 90;
  g.instances_per_slide = 30;
  g.bag_size = 10;
  g.bags_per_slide = 2;
  g.input_dim = 6;
  g.signal_fraction = 0.1;
  g.mimic_fraction = 0.1;
  g.split = {0.2, 0.1, 0.7};
  g.seed = 8;
  return g;
}

EvalConfig eval_config() {
  EvalConfig e;
  e.bag_size = 10;
  e.num_bags = 3;
  return e;
}

TEST(Linearity, AdditivePairsLieOnIdentity) {
  Rng rng(1);
  const MilModel model = testing::random_model(
      testing::small_config(Pooling::kAttention, Composition::kAdditive), 4);
  std::vector<Bag> bags;
  for (int b = 0; b < 6; ++b) bags.push_back(make_bag(testing::random_tensor({12, 6}, rng, 2.0)));
  const LinearityReport r = linearity_report(model, bags);
  ASSERT_EQ(r.rows.size(), 18u);
  ASSERT_TRUE(r.max_deviation);
  EXPECT_LE(*r.max_deviation, 1e-9);
  for (const auto& row : r.rows) {
    ASSERT_TRUE(row.contribution_sum);
    EXPECT_LE(std::abs(*row.contribution_sum - row.logit), 1e-9);
    EXPECT_TRUE(row.top_attention);
  }
  EXPECT_THROW(linearity_report(model, std::span<const Bag>(bags.data(), 1)), DimensionError);
}

TEST(Linearity, JointModelsReportAttentionOnly) {
  Rng rng(2);
  const MilModel model = testing::random_model(
      testing::small_config(Pooling::kAttention, Composition::kJoint), 4);
  std::vector<Bag> bags;
  for (int b = 0; b < 3; ++b) bags.push_back(make_bag(testing::random_tensor({5, 6}, rng)));
  const LinearityReport r = linearity_report(model, bags);
  EXPECT_FALSE(r.max_deviation);
  for (const auto& row : r.rows) EXPECT_FALSE(row.contribution_sum);
}

TEST(Linearity, TopTenPercent) {
  EXPECT_EQ(top_fraction_count(10), 1u);
  EXPECT_EQ(top_fraction_count(3), 1u);
  EXPECT_EQ(top_fraction_count(11), 2u);
  EXPECT_EQ(top_fraction_count(64), 7u);
  const double alpha[] = {0.05, 0.3, 0.05, 0.1, 0.1, 0.05, 0.1, 0.1, 0.1, 0.05};
  EXPECT_EQ(top_attention_median(alpha), 0.3);
  const double twenty[] = {0.9, 0.8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(top_attention_median(twenty), 0.85);
}

class Evaluation : public ::testing::Test {
 protected:
  SlideDataset ds = generate(eval_data());
};

TEST_F(Evaluation, UntrainedModelIsNearChance) {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MilModel model = MilModel::initialize(
        testing::small_config(Pooling::kAttention, Composition::kAdditive, 6), seed);
    total += evaluate(model, ds, eval_config()).accuracy;
  }
  EXPECT_NEAR(total / 5.0, 1.0 / 3.0, 0.1);
}

TEST_F(Evaluation, ReportStructureForAdditiveModel) {
  const MilModel model = testing::random_model(
      testing::small_config(Pooling::kAttention, Composition::kAdditive, 6), 1);
  const EvalReport r = evaluate(model, ds, eval_config());
  EXPECT_EQ(r.num_slides, ds.splits.test.size());
  ASSERT_TRUE(r.auroc);
  EXPECT_GE(r.auroc->value, 0.0);
  EXPECT_LE(r.auroc->value, 1.0);
  ASSERT_NE(r.heatmap("additive"), nullptr);
  ASSERT_NE(r.heatmap("attention"), nullptr);
  EXPECT_EQ(r.heatmap("additive")->pooled.num_instances, r.num_slides * 30);
  EXPECT_EQ(r.heatmap("additive")->per_class.size(), 3u);
  EXPECT_EQ(r.linearity.rows.size(), r.num_slides * 3 * 3);
  EXPECT_LE(*r.linearity.max_deviation, 1e-9);
  ASSERT_TRUE(r.mimic);
  EXPECT_EQ(r.mimic->slides, r.num_slides);
  EXPECT_GE(r.mimic->min_attention, 0.0);

  const Json j = to_json(r);
  EXPECT_EQ(j["split"], "test");
  EXPECT_TRUE(j["heatmaps"]["additive"]["auprc"].is_number());
  EXPECT_EQ(j["slides"].size(), r.num_slides);

  const std::string pr = encode_pr_csv(r);
  EXPECT_EQ(pr.rfind("method,class,threshold,precision,recall,true_positives,false_positives\n", 0), 0u);
  EXPECT_NE(pr.find("\nattention,all,"), std::string::npos);
  const std::string lin = encode_linearity_csv(r.linearity);
  EXPECT_EQ(std::count(lin.begin(), lin.end(), '\n'), static_cast<long>(r.linearity.rows.size() + 1));
}

TEST_F(Evaluation, JointMeanPoolingHasNoHeatmaps) {
  const MilModel model = MilModel::initialize(
      testing::small_config(Pooling::kMean, Composition::kJoint, 6), 1);
  const EvalReport r = evaluate(model, ds, eval_config());
  EXPECT_TRUE(r.heatmaps.empty());
  EXPECT_FALSE(r.mimic);
}

TEST_F(Evaluation, PatchScoresMatchWholeSlideForward) {
  const MilModel model = testing::random_model(
      testing::small_config(Pooling::kAttention, Composition::kAdditive, 6), 1);
  const Slide& slide = ds.slides[0];
  const BagOutput out = forward(model, slide.instances);
  const auto add = additive_patch_scores(model, slide, 2);
  const auto att = attention_patch_scores(model, slide);
  double lo = 1, hi = 0;
  for (std::size_t i = 0; i < slide.size(); ++i) {
    EXPECT_DOUBLE_EQ(add[i], 1.0 / (1.0 + std::exp(-out.contributions->at(2, i))));
    lo = std::min(lo, att[i]);
    hi = std::max(hi, att[i]);
  }
  EXPECT_EQ(lo, 0.0);
  EXPECT_EQ(hi, 1.0);
}

TEST_F(Evaluation, Deterministic) {
  const MilModel model = testing::random_model(
      testing::small_config(Pooling::kSelfAttention, Composition::kAdditive, 6), 1);
  EXPECT_EQ(to_json(evaluate(model, ds, eval_config(), kernels::Exec::kSerial)),
            to_json(evaluate(model, ds, eval_config(), kernels::Exec::kParallel)));
}

TEST_F(Evaluation, ConfigChecks) {
  const MilModel wrong = MilModel::initialize(MilConfig{}, 1);
  EXPECT_THROW(evaluate(wrong, ds, eval_config()), ConfigError);
  EXPECT_THROW(eval_config_from_json(Json{{"split", "holdout"}}), ConfigError);
  EXPECT_THROW(eval_config_from_json(Json{{"bags", 3}}), ConfigError);
}

}  // namespace
}  // namespace milab
