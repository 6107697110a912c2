#include "milab/credit.hpp"

#include <cmath>
#include <numeric>

#include "milab/autodiff.hpp"
#include "milab/error.hpp"

namespace milab {

std::vector<double> ContributionMap::row_sums() const {
  std::vector<double> sums(num_classes(), 0.0);
  for (std::size_t c = 0; c < num_classes(); ++c) {
    for (double v : values.row(c)) sums[c] += v;
  }
  return sums;
}

std::vector<std::string> default_class_names(std::size_t num_classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes; ++c) {
    names.push_back("class_" + std::to_string(c));
  }
  return names;
}

ContributionMap extract_contributions(const MilModel& model, const Bag& bag) {
  if (!model.config().additive()) {
    throw UnsupportedComposition(
        "contributions exist only for additive models; retrain with "
        "composition = additive");
  }
  BagOutput out = forward(model, bag);
  ContributionMap map;
  map.values = std::move(*out.contributions);
  map.class_names = default_class_names(model.config().num_classes);
  if (!bag.instance_ids.empty()) {
    map.instance_ids = bag.instance_ids;
  } else {
    map.instance_ids.resize(bag.size());
    std::iota(map.instance_ids.begin(), map.instance_ids.end(), 0);
  }
  return map;
}

HeatmapScores bound_scores(const ContributionMap& raw) {
  HeatmapScores scores{raw.values};
  for (double& v : scores.values.data()) {
    if (!std::isfinite(v)) throw NumericError("bound_scores: non-finite contribution");
    v = ad::sigmoid(v);
  }
  return scores;
}

Tensor attention_baseline(const MilModel& model, const Bag& bag) {
  if (!model.config().uses_attention()) {
    throw UnsupportedVariant("mean-pooling models have no attention module");
  }
  return forward(model, bag).attention;
}

}  // namespace milab
