#include "milab/shapley.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "milab/error.hpp"

namespace milab {

namespace {

void require_enumerable(std::size_t n) {
  if (n == 0) throw InstanceCountError("Shapley enumeration needs at least one instance");
  if (n > kMaxEnumerationInstances) {
    throw InstanceCountError(
        "exact Shapley enumeration is limited to " +
        std::to_string(kMaxEnumerationInstances) + " instances; bag has " +
        std::to_string(n) + " (no sampling fallback)");
  }
}

std::vector<double> row_means(const Tensor& m) {
  std::vector<double> mean(m.rows(), 0.0);
  for (std::size_t c = 0; c < m.rows(); ++c) {
    for (double v : m.row(c)) mean[c] += v;
    mean[c] /= static_cast<double>(m.cols());
  }
  return mean;
}

double efficiency_gap(const Tensor& phi, const Tensor& values) {
  const std::size_t full = values.rows() - 1;
  double gap = 0.0;
  for (std::size_t c = 0; c < phi.rows(); ++c) {
    double total = 0.0;
    for (double v : phi.row(c)) total += v;
    gap = std::max(gap, std::abs(total - (values.at(full, c) - values.at(0, c))));
  }
  return gap;
}

}  // namespace

std::string to_string(ShapleyMode mode) {
  return mode == ShapleyMode::kFixedContext ? "fixed-context" : "recomputed";
}

Coalition::Coalition(std::uint32_t mask, std::size_t universe)
    : mask_(mask), universe_(universe) {
  if (universe > 31 || (universe < 32 && (mask >> universe) != 0)) {
    throw DimensionError("coalition mask outside of its universe");
  }
}

std::size_t Coalition::size() const { return std::popcount(mask_); }

Coalition Coalition::with(std::size_t i) const {
  return Coalition(mask_ | (1u << i), universe_);
}

Coalition Coalition::complement() const {
  return Coalition(~mask_ & ((1u << universe_) - 1u), universe_);
}

std::vector<double> shapley_weights(std::size_t n) {
  // Factorials up to 12! are exact in double.
  std::vector<double> fact(n + 1, 1.0);
  for (std::size_t k = 1; k <= n; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  std::vector<double> w(n);
  for (std::size_t s = 0; s < n; ++s) w[s] = fact[s] * fact[n - s - 1] / fact[n];
  return w;
}

Tensor shapley_from_values(const Tensor& values, std::size_t n) {
  require_enumerable(n);
  const std::size_t count = std::size_t{1} << n;
  if (values.rank() != 2 || values.rows() != count) {
    throw DimensionError("coalition table " + shape_string(values.shape()) +
                         " does not have 2^" + std::to_string(n) + " rows");
  }
  const std::size_t classes = values.cols();
  const auto w = shapley_weights(n);
  Tensor phi = Tensor::zeros({classes, n});
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bit = 1u << i;
    for (std::uint32_t mask = 0; mask < count; ++mask) {
      if (mask & bit) continue;
      const double weight = w[std::popcount(mask)];
      for (std::size_t c = 0; c < classes; ++c) {
        phi.at(c, i) += weight * (values.at(mask | bit, c) - values.at(mask, c));
      }
    }
  }
  return phi;
}

Tensor fixed_context_values(const Tensor& scores,
                            std::span<const double> background_mean) {
  const std::size_t classes = scores.rows();
  const std::size_t n = scores.cols();
  require_enumerable(n);
  if (background_mean.size() != classes) {
    throw DimensionError("background mean has " +
                         std::to_string(background_mean.size()) +
                         " classes; scores have " + std::to_string(classes));
  }
  const std::size_t count = std::size_t{1} << n;
  Tensor values = Tensor::zeros({count, classes});
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    for (std::size_t c = 0; c < classes; ++c) {
      double v = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        v += ((mask >> j) & 1u) ? scores.at(c, j) : background_mean[c];
      }
      values.at(mask, c) = v;
    }
  }
  return values;
}

Tensor background_scores(const MilModel& model, const Bag& background,
                         std::size_t chunk) {
  if (!model.config().additive()) {
    throw UnsupportedComposition("background scores need an additive model");
  }
  const std::size_t m = background.size();
  if (m == 0) throw ConfigError("background bag is empty");
  chunk = std::max<std::size_t>(1, std::min(chunk, m));
  const std::size_t classes = model.config().num_classes;
  Tensor scores = Tensor::zeros({classes, m});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < m; start += chunk) {
    idx.clear();
    for (std::size_t j = start; j < std::min(m, start + chunk); ++j) idx.push_back(j);
    BagOutput out = forward(model, background.instances.gather_rows(idx));
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t k = 0; k < idx.size(); ++k)
        scores.at(c, idx[k]) = out.contributions->at(c, k);
  }
  return scores;
}

ShapleyReport shapley_fixed_context(const ContributionMap& contribs,
                                    const Tensor& background) {
  if (background.rank() != 2 || background.cols() == 0) {
    throw ConfigError("fixed-context Shapley values need a non-empty background");
  }
  if (background.rows() != contribs.num_classes()) {
    throw DimensionError("background has " + std::to_string(background.rows()) +
                         " classes; contributions have " +
                         std::to_string(contribs.num_classes()));
  }
  ShapleyReport report;
  report.mode = ShapleyMode::kFixedContext;
  report.background_mean = row_means(background);
  report.background_size = background.cols();
  report.phi = contribs.values;
  for (std::size_t c = 0; c < report.phi.rows(); ++c) {
    for (double& v : report.phi.row(c)) v -= report.background_mean[c];
  }
  // Efficiency against V_F and V_empty evaluated directly.
  double gap = 0.0;
  for (std::size_t c = 0; c < report.phi.rows(); ++c) {
    double total = 0.0, v_full = 0.0;
    for (double v : report.phi.row(c)) total += v;
    for (double s : contribs.values.row(c)) v_full += s;
    const double v_empty =
        static_cast<double>(contribs.num_instances()) * report.background_mean[c];
    gap = std::max(gap, std::abs(total - (v_full - v_empty)));
  }
  report.efficiency_gap = gap;
  return report;
}

Tensor recomputed_values(const MilModel& model, const Bag& bag,
                         const Bag& background, std::size_t draws,
                         kernels::Exec exec) {
  const std::size_t n = bag.size();
  require_enumerable(n);
  const std::size_t m = background.size();
  if (m == 0) throw ConfigError("recomputed Shapley values need a background");
  draws = std::max<std::size_t>(1, std::min(draws, m));
  const std::size_t classes = model.config().num_classes;
  const std::size_t dim = bag.dim();
  if (background.dim() != dim) {
    throw DimensionError("background dimension differs from the bag's");
  }
  const std::size_t count = std::size_t{1} << n;
  Tensor values = Tensor::zeros({count, classes});
  kernels::for_each_index(count, exec, [&](std::size_t mask) {
    std::vector<double> acc(classes, 0.0);
    for (std::size_t r = 0; r < draws; ++r) {
      const auto replacement = background.instances.row(r * m / draws);
      Tensor x = bag.instances;
      for (std::size_t j = 0; j < n; ++j) {
        if (!((mask >> j) & 1u)) {
          std::copy(replacement.begin(), replacement.end(), x.row(j).begin());
        }
      }
      BagOutput out = forward(model, x);
      for (std::size_t c = 0; c < classes; ++c) acc[c] += out.logits[c];
    }
    for (std::size_t c = 0; c < classes; ++c) {
      values.at(mask, c) = acc[c] / static_cast<double>(draws);
    }
  });
  return values;
}

ShapleyReport shapley_enumerate(const MilModel& model, const Bag& bag,
                                const Bag& background,
                                const ShapleyOptions& options) {
  const std::size_t n = bag.size();
  require_enumerable(n);
  ShapleyReport report;
  report.mode = options.mode;
  report.background_size = background.size();

  if (options.mode == ShapleyMode::kFixedContext) {
    if (!model.config().additive()) {
      throw UnsupportedComposition(
          "fixed-context Shapley values need an additive model");
    }
    const BagOutput full = forward(model, bag);
    // Per-instance scores with alpha frozen from the full bag.
    const BagOutput frozen =
        forward_fixed_attention(model, bag.instances, full.attention.data());
    const Tensor& scores = *frozen.contributions;
    const Tensor bg = background_scores(model, background, n);
    report.background_mean = row_means(bg);
    report.coalition_values = fixed_context_values(scores, report.background_mean);
    report.phi = shapley_from_values(report.coalition_values, n);

    double worst = 0.0;
    for (std::size_t c = 0; c < scores.rows(); ++c)
      for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(report.phi.at(c, i) -
                                         (scores.at(c, i) - report.background_mean[c])));
    report.max_discrepancy = worst;
  } else {
    report.coalition_values = recomputed_values(
        model, bag, background, options.max_background_draws, options.exec);
    report.phi = shapley_from_values(report.coalition_values, n);
  }
  report.efficiency_gap = efficiency_gap(report.phi, report.coalition_values);
  return report;
}

Json to_json(const ShapleyReport& report) {
  Json phi = Json::array();
  for (std::size_t c = 0; c < report.phi.rows(); ++c) {
    auto row = report.phi.row(c);
    phi.push_back(std::vector<double>(row.begin(), row.end()));
  }
  Json out{{"mode", to_string(report.mode)},
           {"num_classes", report.phi.rows()},
           {"num_instances", report.phi.cols()},
           {"phi", phi},
           {"background_size", report.background_size},
           {"background_mean", report.background_mean},
           {"efficiency_gap", report.efficiency_gap}};
  out["max_discrepancy"] =
      report.max_discrepancy ? Json(*report.max_discrepancy) : Json(nullptr);
  return out;
}

}  // namespace milab
