#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "milab/bag.hpp"
#include "milab/model.hpp"
#include "milab/tensor.hpp"

namespace milab {

// Raw per-class, per-instance logit contributions psi_p(m_i), C x N. Row c
// sums to logit c.
struct ContributionMap {
  Tensor values;
  std::vector<std::string> class_names;
  std::vector<std::size_t> instance_ids;

  std::size_t num_classes() const { return values.rows(); }
  std::size_t num_instances() const { return values.cols(); }
  std::vector<double> row_sums() const;
};

// sigmoid(raw), C x N. Above 0.5 is excitatory, below inhibitory.
struct HeatmapScores {
  Tensor values;
};

std::vector<std::string> default_class_names(std::size_t num_classes);

// Throws UnsupportedComposition for joint models.
ContributionMap extract_contributions(const MilModel& model, const Bag& bag);

HeatmapScores bound_scores(const ContributionMap& raw);

// Per-instance attention alpha_i (no class axis). Throws UnsupportedVariant
// for mean pooling.
Tensor attention_baseline(const MilModel& model, const Bag& bag);

}  // namespace milab
