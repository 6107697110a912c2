#include "milab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "milab/error.hpp"

namespace milab {

double auroc_binary(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) {
    throw DimensionError("auroc: " + std::to_string(scores.size()) + " scores but " +
                         std::to_string(positive.size()) + " labels");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney U with midranks for ties.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetric("auroc: need at least one positive and one negative");
  }
  const double p = static_cast<double>(n_pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

AurocResult auroc_macro(const Tensor& scores, std::span<const std::size_t> labels) {
  if (scores.rank() != 2 || scores.rows() != labels.size()) {
    throw DimensionError("auroc_macro: scores " + shape_string(scores.shape()) +
                         " do not match " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = scores.cols();
  AurocResult result;
  result.per_class.assign(classes, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> column(labels.size());
  const auto positive = std::make_unique<bool[]>(labels.size());
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t n_pos = 0;
    for (std::size_t s = 0; s < labels.size(); ++s) {
      column[s] = scores.at(s, c);
      positive[s] = labels[s] == c;
      n_pos += labels[s] == c;
    }
    if (n_pos == 0 || n_pos == labels.size()) {
      result.warnings.push_back("class " + std::to_string(c) + " excluded: " +
                                (n_pos == 0 ? "no positive slides" : "no negative slides"));
      continue;
    }
    result.per_class[c] = auroc_binary(column, {positive.get(), labels.size()});
    result.included.push_back(c);
    total += result.per_class[c];
  }
  if (result.included.empty()) {
    throw UndefinedMetric("auroc_macro: every class lacks positives or negatives");
  }
  result.value = total / static_cast<double>(result.included.size());
  return result;
}

PrCurve patch_pr_curve(std::span<const double> scores, std::span<const bool> truth) {
  if (scores.size() != truth.size()) {
    throw DimensionError("pr curve: " + std::to_string(scores.size()) + " scores but " +
                         std::to_string(truth.size()) + " labels");
  }
  PrCurve curve;
  curve.num_instances = scores.size();
  curve.num_positives = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
  if (curve.num_positives == 0) {
    throw UndefinedMetric("pr curve: no positive instances");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("pr curve: NaN score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double positives = static_cast<double>(curve.num_positives);
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (truth[order[i]] ? tp : fp) += 1;
      ++i;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / positives;
    curve.points.push_back({threshold, precision, recall, tp, fp});
    curve.auprc += (recall - prev_recall) * precision;
    prev_recall = recall;
    const double f1 = tp == 0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    if (f1 > curve.best_f1) {
      curve.best_f1 = f1;
      curve.best_threshold = threshold;
    }
  }
  return curve;
}

double median(std::vector<double> values) {
  if (values.empty()) throw UndefinedMetric("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace milab
