#pragma once

// Slide-level and patch-level evaluation metrics.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "milab/tensor.hpp"

namespace milab {

// Rank AUROC for one binary problem; tied scores count one half.
// Throws UndefinedMetric without at least one positive and one negative.
double auroc_binary(std::span<const double> scores, std::span<const bool> positive);

struct AurocResult {
  double value = 0.0;
  // One entry per class; NaN for excluded classes.
  std::vector<double> per_class;
  std::vector<std::size_t> included;
  std::vector<std::string> warnings;
};

// scores is S x C (one row per slide), labels has S entries. Classes lacking
// positives or negatives are excluded with a warning; if every class is
// excluded, throws UndefinedMetric.
AurocResult auroc_macro(const Tensor& scores, std::span<const std::size_t> labels);

struct PrPoint {
  double threshold;
  double precision;
  double recall;
  std::size_t true_positives;
  std::size_t false_positives;
};

struct PrCurve {
  // One point per distinct score, thresholds descending; an instance is
  // predicted positive when score >= threshold.
  std::vector<PrPoint> points;
  std::size_t num_positives = 0;
  std::size_t num_instances = 0;
  double auprc = 0.0;
  double best_f1 = 0.0;
  double best_threshold = 0.0;
};

// Step-wise AUPRC: sum_k (R_k - R_{k-1}) P_k with R_0 = 0.
// Throws UndefinedMetric when no instance is positive.
PrCurve patch_pr_curve(std::span<const double> scores, std::span<const bool> truth);

double median(std::vector<double> values);

}  // namespace milab
