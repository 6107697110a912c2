#pragma once

// Exact Shapley values of bag instances by enumerating all 2^N coalitions.
//
// Coalition values V_S are stored as a (2^N x C) table indexed by the
// coalition bitmask (bit j set <=> instance j in S).
//
// Two value functions:
//   fixed-context  V_S = sum_{j in S} s_j + sum_{j not in S} E[s], where s_j
//                  is instance j's additive contribution with attention
//                  frozen from the full bag and E[s] is the mean background
//                  contribution. Here phi_j = s_j - E[s] exactly.
//   recomputed     V_S = mean over background draws b of g(bag with every
//                  excluded instance replaced by b); attention is recomputed
//                  for every coalition. Works for joint models too.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "milab/bag.hpp"
#include "milab/credit.hpp"
#include "milab/json_util.hpp"
#include "milab/kernels.hpp"
#include "milab/model.hpp"

namespace milab {

inline constexpr std::size_t kMaxEnumerationInstances = 12;

enum class ShapleyMode { kFixedContext, kRecomputed };

std::string to_string(ShapleyMode mode);

// Subset S of F = {0, ..., universe-1}.
class Coalition {
 public:
  Coalition(std::uint32_t mask, std::size_t universe);

  std::uint32_t mask() const { return mask_; }
  std::size_t universe() const { return universe_; }
  std::size_t size() const;
  bool contains(std::size_t i) const { return (mask_ >> i) & 1u; }
  Coalition with(std::size_t i) const;
  Coalition complement() const;

 private:
  std::uint32_t mask_;
  std::size_t universe_;
};

struct ShapleyReport {
  ShapleyMode mode = ShapleyMode::kFixedContext;
  Tensor phi;                          // C x N
  std::vector<double> background_mean; // C; fixed-context only
  std::size_t background_size = 0;
  // max |phi_enumerated - (s - E[s])|; fixed-context enumeration only.
  std::optional<double> max_discrepancy;
  // max_c |sum_i phi_i[c] - (V_F[c] - V_empty[c])|
  double efficiency_gap = 0.0;
  Tensor coalition_values;             // 2^N x C when enumerated
};

Json to_json(const ShapleyReport& report);

// |S|! (n - |S| - 1)! / n! for |S| = 0..n-1.
std::vector<double> shapley_weights(std::size_t n);

// Shapley values from a coalition table (2^n x C). Returns C x n.
Tensor shapley_from_values(const Tensor& values, std::size_t n);

// Fixed-context table from per-instance scores (C x N) and E[s] (C).
Tensor fixed_context_values(const Tensor& scores,
                            std::span<const double> background_mean);

// Per-instance contributions of the background instances, scored in
// consecutive chunks of `chunk` instances so alpha has the same scale as in a
// bag of that size. Returns C x M. Additive models only.
Tensor background_scores(const MilModel& model, const Bag& background,
                         std::size_t chunk);

// Closed form phi_i = s_i - mean(background). background is C x M.
ShapleyReport shapley_fixed_context(const ContributionMap& contribs,
                                    const Tensor& background);

struct ShapleyOptions {
  ShapleyMode mode = ShapleyMode::kFixedContext;
  // Recomputed mode: number of background instances used as replacements.
  std::size_t max_background_draws = 32;
  kernels::Exec exec = kernels::Exec::kParallel;
};

// Recomputed-mode table (2^N x C).
Tensor recomputed_values(const MilModel& model, const Bag& bag,
                         const Bag& background, std::size_t draws,
                         kernels::Exec exec);

// Throws InstanceCountError when the bag exceeds kMaxEnumerationInstances,
// UnsupportedComposition for fixed-context mode on a joint model.
ShapleyReport shapley_enumerate(const MilModel& model, const Bag& bag,
                                const Bag& background,
                                const ShapleyOptions& options = {});

}  // namespace milab
