#include "milab/train.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "milab/error.hpp"
#include "milab/inference.hpp"
#include "testing.hpp"

namespace milab {
namespace {

GenConfig tiny_data() {
  GenConfig g;
  g.num_slides = 24;
  g.instances_per_slide = 20;
  g.bag_size = 8;
  g.bags_per_slide = 2;
  g.input_dim = 6;
  g.signal_fraction = 0.15;
  g.seed = 5;
  return g;
}

MilConfig tiny_model(Composition composition = Composition::kAdditive) {
  return testing::small_config(Pooling::kAttention, composition, 6);
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.bag_size = 8;
  t.batch_size = 4;
  t.epochs = 2;
  t.bags_per_slide = 2;
  t.eval_bags = 3;
  t.learning_rate = 1e-3;
  return t;
}

std::vector<Parameter> single_param(std::vector<double> w) {
  return {Parameter{"w", Tensor::vector(std::move(w))}};
}

TEST(Adam, ZeroGradientLeavesParamsAndDecaysMoments) {
  auto params = single_param({1.0, -2.0});
  AdamState state = adam_init(params);
  state.m[0] = Tensor::vector({0.5, 0.5});
  state.v[0] = Tensor::vector({0.25, 0.25});
  const TrainConfig config;
  const std::vector<Tensor> grads = {Tensor::vector({0.0, 0.0})};
  const auto before = params[0].value;
  // With m != 0 the update is not zero; a fresh state must leave w fixed.
  AdamState fresh = adam_init(params);
  adam_step(params, grads, fresh, config);
  EXPECT_EQ(params[0].value, before);
  adam_step(params, grads, state, config);
  EXPECT_DOUBLE_EQ(state.m[0][0], 0.45);
  EXPECT_DOUBLE_EQ(state.v[0][0], 0.25 * 0.999);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  for (double scale : {1.0, 1000.0}) {
    auto params = single_param({0.0, 0.0, 0.0});
    AdamState state = adam_init(params);
    TrainConfig config;
    const std::vector<Tensor> grads = {Tensor::vector({0.3 * scale, -2.0 * scale, 1e-3 * scale})};
    adam_step(params, grads, state, config);
    EXPECT_NEAR(params[0].value[0], -1e-4, 1e-10);
    EXPECT_NEAR(params[0].value[1], 1e-4, 1e-10);
    EXPECT_NEAR(params[0].value[2], -1e-4, 1e-8);
  }
}

TEST(Adam, ShapeMismatchIsDimensionError) {
  auto params = single_param({0.0, 0.0});
  AdamState state = adam_init(params);
  const std::vector<Tensor> wrong = {Tensor::vector({1.0})};
  EXPECT_THROW(adam_step(params, wrong, state, TrainConfig{}), DimensionError);
  EXPECT_THROW(adam_step(params, {}, state, TrainConfig{}), DimensionError);
}

TEST(BatchGradient, MatchesMeanOfSingleBagGradients) {
  const SlideDataset ds = generate(tiny_data());
  const MilModel model = MilModel::initialize(tiny_model(), 3);
  std::vector<Bag> bags = sample_bags(ds.slides[0], 8, 3, 1);
  const BatchGradient all = batch_gradient(model, bags, kernels::Exec::kSerial);
  double loss = 0.0;
  std::vector<Tensor> sum;
  for (const Bag& b : bags) {
    const BatchGradient one = batch_gradient(model, std::span<const Bag>(&b, 1));
    loss += one.loss / 3.0;
    if (sum.empty()) {
      sum = one.grads;
    } else {
      for (std::size_t k = 0; k < sum.size(); ++k) {
        for (std::size_t i = 0; i < sum[k].numel(); ++i) sum[k][i] += one.grads[k][i];
      }
    }
  }
  EXPECT_NEAR(all.loss, loss, 1e-12);
  for (std::size_t k = 0; k < sum.size(); ++k) {
    for (std::size_t i = 0; i < sum[k].numel(); ++i) {
      EXPECT_NEAR(all.grads[k][i], sum[k][i] / 3.0, 1e-12);
    }
  }
}

TEST(BatchGradient, SerialAndParallelAreBitIdentical) {
  const SlideDataset ds = generate(tiny_data());
  const MilModel model = MilModel::initialize(tiny_model(), 3);
  std::vector<Bag> bags = sample_bags(ds.slides[1], 8, 9, 2);
  const BatchGradient s = batch_gradient(model, bags, kernels::Exec::kSerial);
  const BatchGradient p = batch_gradient(model, bags, kernels::Exec::kParallel);
  EXPECT_EQ(s.loss, p.loss);
  EXPECT_EQ(s.grads, p.grads);
}

TEST(Train, OneAdamStepLowersLossOnFixedBatchOfDefaultTask) {
  GenConfig g;
  g.num_slides = 30;
  const SlideDataset ds = generate(g);
  for (Composition composition : {Composition::kAdditive, Composition::kJoint}) {
    MilConfig mc;
    mc.composition = composition;
    MilModel model = MilModel::initialize(mc, 1);
    std::vector<Bag> batch;
    for (std::size_t s = 0; s < 16; ++s) batch.push_back(ds.slides[s].bag(ds.slides[s].bags[0]));
    const BatchGradient before = batch_gradient(model, batch);
    AdamState state = adam_init(model.parameters());
    adam_step(model.parameters(), before.grads, state, TrainConfig{});
    EXPECT_LT(batch_gradient(model, batch).loss, before.loss) << to_string(composition);
  }
}

TEST(Train, ZeroLearningRateLeavesParametersBitIdentical) {
  const SlideDataset ds = generate(tiny_data());
  const MilModel init = MilModel::initialize(tiny_model(), 9);
  TrainConfig t = tiny_train();
  t.learning_rate = 0.0;
  const TrainResult r = train(init, ds, t);
  EXPECT_EQ(r.model, init);
  EXPECT_EQ(r.history.epochs.size(), 2u);
  t.learning_rate = -1e-3;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  const SlideDataset ds = generate(tiny_data());
  const MilModel init = MilModel::initialize(tiny_model(), 9);
  TrainConfig t = tiny_train();
  t.epochs = 0;
  const TrainResult r = train(init, ds, t);
  EXPECT_EQ(r.model, init);
  EXPECT_TRUE(r.history.epochs.empty());
}

TEST(Train, SameSeedSameHistoryAndParameters) {
  const SlideDataset ds = generate(tiny_data());
  const MilModel init = MilModel::initialize(tiny_model(), 9);
  const TrainResult a = train(init, ds, tiny_train(), kernels::Exec::kParallel);
  const TrainResult b = train(init, ds, tiny_train(), kernels::Exec::kSerial);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.history.epochs.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(a.history.epochs[e].train_loss, b.history.epochs[e].train_loss);
    EXPECT_EQ(a.history.epochs[e].val_accuracy, b.history.epochs[e].val_accuracy);
  }
  EXPECT_FALSE(a.model == init);
}

TEST(Train, NonFiniteDataAbortsWithContext) {
  SlideDataset ds = generate(tiny_data());
  for (auto& s : ds.slides) {
    for (std::size_t i = 0; i < s.size(); ++i) s.instances.at(i, 0) = std::numeric_limits<double>::quiet_NaN();
  }
  try {
    train(MilModel::initialize(tiny_model(), 1), ds, tiny_train());
    FAIL();
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, step 1"), std::string::npos) << e.what();
  }
}

TEST(Train, HugeLearningRateDivergesWithContext) {
  const SlideDataset ds = generate(tiny_data());
  TrainConfig t = tiny_train();
  t.learning_rate = 1e300;
  t.epochs = 3;
  EXPECT_THROW(train(MilModel::initialize(tiny_model(), 1), ds, t), TrainingDiverged);
}

TEST(Train, ModelAndDatasetMustAgree) {
  const SlideDataset ds = generate(tiny_data());
  MilConfig wrong_dim = tiny_model();
  wrong_dim.input_dim = 7;
  EXPECT_THROW(train(MilModel::initialize(wrong_dim, 1), ds, tiny_train()), ConfigError);
  MilConfig wrong_classes = tiny_model();
  wrong_classes.num_classes = 4;
  EXPECT_THROW(train(MilModel::initialize(wrong_classes, 1), ds, tiny_train()), ConfigError);
}

TEST(Train, HistoryJson) {
  TrainHistory h;
  h.epochs.push_back({1, 0.5, 0.75});
  h.epochs.push_back({2, 0.25, std::nullopt});
  h.best_epoch = 1;
  const Json j = to_json(h);
  EXPECT_EQ(j["epochs"][0]["val_accuracy"], 0.75);
  EXPECT_TRUE(j["epochs"][1]["val_accuracy"].is_null());
  EXPECT_EQ(j["best_epoch"], 1);
}

TEST(TrainConfigJson, StrictRoundTrip) {
  const TrainConfig t = tiny_train();
  EXPECT_EQ(train_config_from_json(to_json(t)), t);
  EXPECT_THROW(train_config_from_json(Json{{"lr", 0.1}}), ConfigError);
  EXPECT_THROW(train_config_from_json(Json{{"batch_size", 0}}), ConfigError);
}

Tensor logits(std::initializer_list<double> v) { return Tensor::vector(v); }

TEST(MajorityVote, WorkedExamples) {
  const std::vector<Tensor> aab = {logits({2, 0, 0}), logits({3, 1, 0}), logits({0, 1, 0})};
  VoteResult r = majority_vote(aab);
  EXPECT_EQ(r.label, 0u);
  EXPECT_DOUBLE_EQ(r.probability, 2.0 / 3.0);

  const std::vector<Tensor> one = {logits({0, 0, 5})};
  r = majority_vote(one);
  EXPECT_EQ(r.label, 2u);
  EXPECT_EQ(r.probability, 1.0);

  // Tie: class 1 has the larger mean logit across bags.
  const std::vector<Tensor> tie = {logits({1.0, 0.5, 0}), logits({-3.0, 4.0, 0})};
  r = majority_vote(tie);
  EXPECT_EQ(r.label, 1u);
  EXPECT_EQ(r.probability, 0.5);

  // Full tie on votes and mean logits: lowest index.
  const std::vector<Tensor> flat = {logits({1, 0, 0}), logits({0, 1, 0})};
  EXPECT_EQ(majority_vote(flat).label, 0u);
}

TEST(MajorityVote, InvariantToBagOrder) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> bags;
    for (std::size_t b = 0; b < testing::uniform_size(rng, 1, 9); ++b) {
      bags.push_back(testing::random_tensor({3}, rng));
    }
    const VoteResult base = majority_vote(bags);
    std::shuffle(bags.begin(), bags.end(), rng);
    const VoteResult shuffled = majority_vote(bags);
    EXPECT_EQ(base.label, shuffled.label);
    EXPECT_EQ(base.shares, shuffled.shares);
  }
}

TEST(InferSlide, SingleBagPassesThrough) {
  const SlideDataset ds = generate(tiny_data());
  const MilModel model = testing::random_model(tiny_model(), 2);
  const SlidePrediction p = infer_slide(model, ds.slides[0], 8, 1, 77);
  ASSERT_EQ(p.bags.size(), 1u);
  EXPECT_EQ(p.vote.probability, 1.0);
  EXPECT_EQ(p.vote.label, argmax(p.outputs[0].logits.data()));
  EXPECT_EQ(p.bags[0].size(), 8u);
  EXPECT_THROW(infer_slide(model, ds.slides[0], 8, 0, 77), ConfigError);
  // Bag size above the slide size uses the whole slide.
  EXPECT_EQ(infer_slide(model, ds.slides[0], 100, 1, 77).bags[0].size(), 20u);
}

}  // namespace
}  // namespace milab
