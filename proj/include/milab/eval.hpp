#pragma once

// Slide classification metrics, patch-level heatmap quality and linearity
// tables for a trained model on one dataset split.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "milab/inference.hpp"
#include "milab/json_util.hpp"
#include "milab/kernels.hpp"
#include "milab/metrics.hpp"
#include "milab/model.hpp"
#include "milab/synthdata.hpp"

namespace milab {

struct EvalConfig {
  std::string split = "test";
  std::size_t bag_size = 32;
  std::size_t num_bags = 5;
  std::uint64_t seed = 13;

  void validate() const;
};

Json to_json(const EvalConfig& config);
EvalConfig eval_config_from_json(const Json& json);

struct LinearityRow {
  std::string slide_id;
  std::size_t bag = 0;
  std::size_t cls = 0;
  double logit = 0.0;
  std::optional<double> contribution_sum;  // additive models
  std::optional<double> top_attention;     // median of the top-10% alpha
};

struct LinearityReport {
  std::vector<LinearityRow> rows;
  // max |sum contributions - logit|; additive models only.
  std::optional<double> max_deviation;
};

// Size of the top-10% set of a bag of n instances.
std::size_t top_fraction_count(std::size_t n);
double top_attention_median(std::span<const double> alpha);

// Requires at least two bags.
LinearityReport linearity_report(const MilModel& model, std::span<const Bag> bags);

struct HeatmapMethodReport {
  std::string method;  // "additive" or "attention"
  PrCurve pooled;
  // Curves restricted to slides of each class; absent when that class has
  // no slides in the split.
  std::vector<std::optional<PrCurve>> per_class;
};

struct MimicReport {
  std::size_t slides = 0;           // mimic-bearing slides evaluated
  std::size_t negative_slides = 0;  // mean mimic contribution < 0
  double negative_fraction = 0.0;
  double mean_contribution = 0.0;   // over slides
  double min_attention = 0.0;       // min alpha over every evaluated instance
};

struct SlideResult {
  std::string id;
  std::size_t label = 0;
  std::size_t predicted = 0;
  std::vector<double> shares;
};

struct EvalReport {
  std::string split;
  std::size_t num_slides = 0;
  std::size_t num_classes = 0;
  double accuracy = 0.0;
  std::optional<AurocResult> auroc;
  std::vector<SlideResult> slides;
  std::vector<HeatmapMethodReport> heatmaps;
  LinearityReport linearity;
  std::optional<MimicReport> mimic;
  std::vector<std::string> warnings;

  const HeatmapMethodReport* heatmap(std::string_view method) const;
};

// Patch scores on a whole slide: the bounded contribution of the predicted
// class (additive) or min-max normalised alpha (attention).
std::vector<double> additive_patch_scores(const MilModel& model, const Slide& slide,
                                          std::size_t predicted);
std::vector<double> attention_patch_scores(const MilModel& model, const Slide& slide);

EvalReport evaluate(const MilModel& model, const SlideDataset& dataset,
                    const EvalConfig& config,
                    kernels::Exec exec = kernels::Exec::kParallel);

Json to_json(const EvalReport& report);
// Columns: method,class,threshold,precision,recall,true_positives,false_positives
std::string encode_pr_csv(const EvalReport& report);
// Columns: slide_id,bag,class,logit,contribution_sum,top10_median_attention
std::string encode_linearity_csv(const LinearityReport& report);

}  // namespace milab
