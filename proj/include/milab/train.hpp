#pragma once

// Adam training on bags sampled fresh from the training slides every epoch.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "milab/bag.hpp"
#include "milab/json_util.hpp"
#include "milab/kernels.hpp"
#include "milab/model.hpp"
#include "milab/synthdata.hpp"

namespace milab {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t bag_size = 32;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  // Bags drawn from each training slide per epoch.
  std::size_t bags_per_slide = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 11;
  // Consecutive epochs with val accuracy below the best before stopping;
  // 0 disables.
  std::size_t patience = 5;
  // Bags per slide for validation majority votes.
  std::size_t eval_bags = 5;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

Json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& json);

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

AdamState adam_init(std::span<const Parameter> params);

// One bias-corrected Adam update. Throws DimensionError when grads or state
// do not match params.
void adam_step(std::span<Parameter> params, std::span<const Tensor> grads,
               AdamState& state, const TrainConfig& config);

struct BatchGradient {
  double loss = 0.0;          // mean over bags
  std::vector<Tensor> grads;  // d(mean loss)/d(param), parameters() order
};

// Per-bag backward passes run concurrently on private tapes; the sum over
// bags is taken serially in bag order.
BatchGradient batch_gradient(const MilModel& model, std::span<const Bag> bags,
                             kernels::Exec exec = kernels::Exec::kParallel);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch ran or no val split
  bool stopped_early = false;
};

Json to_json(const TrainHistory& history);

struct TrainResult {
  MilModel model;
  TrainHistory history;
};

// Throws TrainingDiverged on a non-finite loss, ConfigError when the model
// and dataset disagree on input dim or class count. With a val split the
// parameters of the best val-accuracy epoch are returned.
TrainResult train(MilModel model, const SlideDataset& dataset, const TrainConfig& config,
                  kernels::Exec exec = kernels::Exec::kParallel);

}  // namespace milab
