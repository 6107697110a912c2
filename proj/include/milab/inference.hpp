#pragma once

// Slide-level prediction by majority vote over sampled bags.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "milab/kernels.hpp"
#include "milab/model.hpp"
#include "milab/synthdata.hpp"

namespace milab {

struct VoteResult {
  std::size_t label = 0;
  double probability = 0.0;          // vote share of the winner
  std::vector<double> shares;        // per class
  std::vector<std::size_t> votes;    // per bag
};

// Ties go to the class with the largest mean logit across bags, then the
// lowest class index.
VoteResult majority_vote(std::span<const Tensor> bag_logits);

struct SlidePrediction {
  VoteResult vote;
  std::vector<std::vector<std::size_t>> bags;
  std::vector<BagOutput> outputs;
};

// Bags hold min(bag_size, slide size) instances.
SlidePrediction infer_slide(const MilModel& model, const Slide& slide,
                            std::size_t bag_size, std::size_t num_bags,
                            std::uint64_t seed);

// Seed used for slide `index` of an evaluation pass.
std::uint64_t inference_seed(std::uint64_t base, std::size_t index);

std::vector<SlidePrediction> infer_slides(const MilModel& model,
                                          std::span<const Slide* const> slides,
                                          std::size_t bag_size, std::size_t num_bags,
                                          std::uint64_t seed,
                                          kernels::Exec exec = kernels::Exec::kParallel);

double accuracy(std::span<const Slide* const> slides,
                std::span<const SlidePrediction> predictions);

}  // namespace milab
