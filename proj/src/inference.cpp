#include "milab/inference.hpp"

#include <algorithm>
#include <numeric>

#include "milab/error.hpp"
#include "milab/random.hpp"

namespace milab {

namespace {

constexpr std::uint64_t kInferenceStream = 0x1f;

// Uniform subset without regard to instance labels.
std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

VoteResult majority_vote(std::span<const Tensor> bag_logits) {
  if (bag_logits.empty()) throw DimensionError("majority vote over zero bags");
  const std::size_t classes = bag_logits.front().numel();
  VoteResult r;
  std::vector<std::size_t> counts(classes, 0);
  std::vector<double> mean_logit(classes, 0.0);
  for (const Tensor& logits : bag_logits) {
    if (logits.numel() != classes) {
      throw DimensionError("majority vote: bags disagree on class count");
    }
    const std::size_t vote = argmax(logits.data());
    r.votes.push_back(vote);
    ++counts[vote];
    for (std::size_t c = 0; c < classes; ++c) mean_logit[c] += logits[c];
  }
  const double n = static_cast<double>(bag_logits.size());
  for (double& m : mean_logit) m /= n;
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes; ++c) {
    if (counts[c] > counts[best] ||
        (counts[c] == counts[best] && mean_logit[c] > mean_logit[best])) {
      best = c;
    }
  }
  r.label = best;
  for (std::size_t c = 0; c < classes; ++c) {
    r.shares.push_back(static_cast<double>(counts[c]) / n);
  }
  r.probability = r.shares[best];
  return r;
}

SlidePrediction infer_slide(const MilModel& model, const Slide& slide,
                            std::size_t bag_size, std::size_t num_bags,
                            std::uint64_t seed) {
  if (num_bags < 1) throw ConfigError("infer_slide: num_bags must be >= 1");
  if (bag_size < 1) throw ConfigError("infer_slide: bag_size must be >= 1");
  const std::size_t k = std::min(bag_size, slide.size());
  Rng rng(seed);
  SlidePrediction p;
  std::vector<Tensor> logits;
  for (std::size_t b = 0; b < num_bags; ++b) {
    p.bags.push_back(random_subset(slide.size(), k, rng));
    p.outputs.push_back(forward(model, slide.instances.gather_rows(p.bags.back())));
    logits.push_back(p.outputs.back().logits);
  }
  p.vote = majority_vote(logits);
  return p;
}

std::uint64_t inference_seed(std::uint64_t base, std::size_t index) {
  return derive_seed(base, kInferenceStream, index);
}

std::vector<SlidePrediction> infer_slides(const MilModel& model,
                                          std::span<const Slide* const> slides,
                                          std::size_t bag_size, std::size_t num_bags,
                                          std::uint64_t seed, kernels::Exec exec) {
  std::vector<SlidePrediction> out(slides.size());
  kernels::for_each_index(slides.size(), exec, [&](std::size_t i) {
    out[i] = infer_slide(model, *slides[i], bag_size, num_bags, inference_seed(seed, i));
  });
  return out;
}

double accuracy(std::span<const Slide* const> slides,
                std::span<const SlidePrediction> predictions) {
  if (slides.size() != predictions.size()) {
    throw DimensionError("accuracy: slide and prediction counts differ");
  }
  if (slides.empty()) throw UndefinedMetric("accuracy over zero slides");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < slides.size(); ++i) {
    correct += predictions[i].vote.label == slides[i]->label;
  }
  return static_cast<double>(correct) / static_cast<double>(slides.size());
}

}  // namespace milab
