#include "milab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>

#include "milab/autodiff.hpp"
#include "milab/error.hpp"
#include "milab/fileio.hpp"

namespace milab {

namespace {

void add_rows(LinearityReport& report, const std::string& slide_id, std::size_t bag,
              const BagOutput& out, bool attention) {
  const std::size_t classes = out.logits.numel();
  std::optional<double> top;
  if (attention) top = top_attention_median(out.attention.data());
  for (std::size_t c = 0; c < classes; ++c) {
    LinearityRow row{slide_id, bag, c, out.logits[c], std::nullopt, top};
    if (out.contributions) {
      double sum = 0.0;
      for (double v : out.contributions->row(c)) sum += v;
      row.contribution_sum = sum;
      const double dev = std::abs(sum - out.logits[c]);
      report.max_deviation = std::max(report.max_deviation.value_or(0.0), dev);
    }
    report.rows.push_back(row);
  }
}

std::vector<double> min_max(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (*hi > *lo) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  }
  return out;
}

Json optional_number(const std::optional<double>& v) {
  return v ? Json(*v) : Json();
}

Json curve_json(const PrCurve& c) {
  return Json{{"auprc", c.auprc},
              {"best_f1", c.best_f1},
              {"best_threshold", c.best_threshold},
              {"num_positives", c.num_positives},
              {"num_instances", c.num_instances},
              {"num_points", c.points.size()}};
}

}  // namespace

void EvalConfig::validate() const {
  if (split != "train" && split != "val" && split != "test") {
    throw ConfigError("eval config: 'split' must be train, val or test");
  }
  if (bag_size < 1) throw ConfigError("eval config: 'bag_size' must be >= 1");
  if (num_bags < 1) throw ConfigError("eval config: 'num_bags' must be >= 1");
}

Json to_json(const EvalConfig& c) {
  return Json{{"split", c.split}, {"bag_size", c.bag_size}, {"num_bags", c.num_bags},
              {"seed", c.seed}};
}

EvalConfig eval_config_from_json(const Json& json) {
  EvalConfig c;
  JsonReader r(json, "eval config");
  r.optional("split", c.split);
  r.optional("bag_size", c.bag_size);
  r.optional("num_bags", c.num_bags);
  r.optional("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

std::size_t top_fraction_count(std::size_t n) { return std::max<std::size_t>(1, (n + 9) / 10); }

double top_attention_median(std::span<const double> alpha) {
  std::vector<double> sorted(alpha.begin(), alpha.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  sorted.resize(top_fraction_count(sorted.size()));
  return median(std::move(sorted));
}

LinearityReport linearity_report(const MilModel& model, std::span<const Bag> bags) {
  if (bags.size() < 2) throw DimensionError("linearity report needs at least two bags");
  LinearityReport report;
  for (std::size_t b = 0; b < bags.size(); ++b) {
    add_rows(report, bags[b].slide_id, b, forward(model, bags[b]),
             model.config().uses_attention());
  }
  return report;
}

const HeatmapMethodReport* EvalReport::heatmap(std::string_view method) const {
  for (const auto& h : heatmaps) {
    if (h.method == method) return &h;
  }
  return nullptr;
}

std::vector<double> additive_patch_scores(const MilModel& model, const Slide& slide,
                                          std::size_t predicted) {
  const BagOutput out = forward(model, slide.instances);
  if (!out.contributions) {
    throw UnsupportedComposition("additive patch scores need an additive model");
  }
  std::vector<double> scores;
  for (double v : out.contributions->row(predicted)) scores.push_back(ad::sigmoid(v));
  return scores;
}

std::vector<double> attention_patch_scores(const MilModel& model, const Slide& slide) {
  if (!model.config().uses_attention()) {
    throw UnsupportedVariant("attention patch scores need an attention model");
  }
  return min_max(forward(model, slide.instances).attention.data());
}

EvalReport evaluate(const MilModel& model, const SlideDataset& dataset,
                    const EvalConfig& config, kernels::Exec exec) {
  config.validate();
  const MilConfig& mc = model.config();
  if (mc.input_dim != dataset.config.input_dim || mc.num_classes != dataset.config.num_classes) {
    throw ConfigError("model (dim " + std::to_string(mc.input_dim) + ", " +
                      std::to_string(mc.num_classes) + " classes) does not match dataset (dim " +
                      std::to_string(dataset.config.input_dim) + ", " +
                      std::to_string(dataset.config.num_classes) + " classes)");
  }
  const auto slides = dataset.split(config.split);
  if (slides.empty()) throw ConfigError("split '" + config.split + "' has no slides");
  const std::size_t classes = mc.num_classes;

  EvalReport report;
  report.split = config.split;
  report.num_slides = slides.size();
  report.num_classes = classes;

  const auto preds = infer_slides(model, slides, config.bag_size, config.num_bags, config.seed, exec);
  report.accuracy = accuracy(slides, preds);
  Tensor shares = Tensor::zeros({slides.size(), classes});
  std::vector<std::size_t> labels;
  for (std::size_t s = 0; s < slides.size(); ++s) {
    report.slides.push_back({slides[s]->id, slides[s]->label, preds[s].vote.label,
                             preds[s].vote.shares});
    std::copy(preds[s].vote.shares.begin(), preds[s].vote.shares.end(), shares.row(s).begin());
    labels.push_back(slides[s]->label);
  }
  try {
    report.auroc = auroc_macro(shares, labels);
    for (const auto& w : report.auroc->warnings) report.warnings.push_back("auroc: " + w);
  } catch (const UndefinedMetric& e) {
    report.warnings.push_back(e.what());
  }

  for (std::size_t s = 0; s < slides.size(); ++s) {
    for (std::size_t b = 0; b < preds[s].outputs.size(); ++b) {
      add_rows(report.linearity, slides[s]->id, b, preds[s].outputs[b], mc.uses_attention());
    }
  }

  // Whole-slide heatmaps.
  std::vector<BagOutput> whole(slides.size());
  kernels::for_each_index(slides.size(), exec, [&](std::size_t s) {
    whole[s] = forward(model, slides[s]->instances);
  });

  std::vector<bool> truth;
  std::vector<std::size_t> owner;
  for (std::size_t s = 0; s < slides.size(); ++s) {
    const int label = static_cast<int>(slides[s]->label);
    for (const auto& l : slides[s]->instance_labels) {
      truth.push_back(l.is_signal_of(label));
      owner.push_back(s);
    }
  }
  const auto truth_flags = std::make_unique<bool[]>(truth.size());
  std::copy(truth.begin(), truth.end(), truth_flags.get());

  auto add_method = [&](const std::string& method, const std::vector<double>& scores) {
    HeatmapMethodReport h;
    h.method = method;
    h.pooled = patch_pr_curve(scores, {truth_flags.get(), truth.size()});
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<double> sc;
      std::vector<char> tr;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (slides[owner[i]]->label == c) {
          sc.push_back(scores[i]);
          tr.push_back(truth[i]);
        }
      }
      if (sc.empty()) {
        h.per_class.push_back(std::nullopt);
        continue;
      }
      const auto flags = std::make_unique<bool[]>(tr.size());
      std::copy(tr.begin(), tr.end(), flags.get());
      h.per_class.push_back(patch_pr_curve(sc, {flags.get(), tr.size()}));
    }
    report.heatmaps.push_back(std::move(h));
  };

  if (mc.additive()) {
    std::vector<double> scores;
    for (std::size_t s = 0; s < slides.size(); ++s) {
      for (double v : whole[s].contributions->row(preds[s].vote.label)) {
        scores.push_back(ad::sigmoid(v));
      }
    }
    add_method("additive", scores);
  }
  if (mc.uses_attention()) {
    std::vector<double> scores;
    for (std::size_t s = 0; s < slides.size(); ++s) {
      for (double v : min_max(whole[s].attention.data())) scores.push_back(v);
    }
    add_method("attention", scores);
  }

  if (mc.additive()) {
    MimicReport m;
    m.min_attention = std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (std::size_t s = 0; s < slides.size(); ++s) {
      for (double a : whole[s].attention.data()) m.min_attention = std::min(m.min_attention, a);
      double sum = 0.0;
      std::size_t count = 0;
      const auto& ls = slides[s]->instance_labels;
      for (std::size_t i = 0; i < ls.size(); ++i) {
        if (ls[i].kind != InstanceLabel::Kind::kMimic) continue;
        sum += whole[s].contributions->at(static_cast<std::size_t>(ls[i].cls), i);
        ++count;
      }
      if (count == 0) continue;
      const double mean = sum / static_cast<double>(count);
      ++m.slides;
      m.negative_slides += mean < 0.0;
      total += mean;
    }
    if (m.slides > 0) {
      m.negative_fraction = static_cast<double>(m.negative_slides) / static_cast<double>(m.slides);
      m.mean_contribution = total / static_cast<double>(m.slides);
      report.mimic = m;
    }
  }
  return report;
}

Json to_json(const EvalReport& r) {
  Json slides = Json::array();
  for (const auto& s : r.slides) {
    slides.push_back({{"id", s.id}, {"label", s.label}, {"predicted", s.predicted},
                      {"vote_shares", s.shares}});
  }
  Json auroc;
  if (r.auroc) {
    Json per_class = Json::array();
    for (double v : r.auroc->per_class) per_class.push_back(std::isnan(v) ? Json() : Json(v));
    auroc = {{"macro", r.auroc->value}, {"per_class", per_class},
             {"included_classes", r.auroc->included}};
  }
  Json heatmaps = Json::object();
  for (const auto& h : r.heatmaps) {
    Json per_class = Json::array();
    for (const auto& c : h.per_class) per_class.push_back(c ? curve_json(*c) : Json());
    Json entry = curve_json(h.pooled);
    entry["per_class"] = per_class;
    heatmaps[h.method] = entry;
  }
  Json mimic;
  if (r.mimic) {
    mimic = {{"slides", r.mimic->slides},
             {"negative_slides", r.mimic->negative_slides},
             {"negative_fraction", r.mimic->negative_fraction},
             {"mean_contribution", r.mimic->mean_contribution},
             {"min_attention", r.mimic->min_attention}};
  }
  return Json{{"split", r.split},
              {"num_slides", r.num_slides},
              {"num_classes", r.num_classes},
              {"accuracy", r.accuracy},
              {"auroc", auroc},
              {"heatmaps", heatmaps},
              {"linearity", {{"rows", r.linearity.rows.size()},
                             {"max_additive_deviation", optional_number(r.linearity.max_deviation)}}},
              {"mimic", mimic},
              {"slides", slides},
              {"warnings", r.warnings}};
}

std::string encode_pr_csv(const EvalReport& r) {
  std::string out = "method,class,threshold,precision,recall,true_positives,false_positives\n";
  auto emit = [&](const std::string& method, const std::string& cls, const PrCurve& c) {
    for (const auto& p : c.points) {
      out += method + ',' + cls + ',';
      append_double(out, p.threshold);
      out += ',';
      append_double(out, p.precision);
      out += ',';
      append_double(out, p.recall);
      out += ',' + std::to_string(p.true_positives) + ',' + std::to_string(p.false_positives) + '\n';
    }
  };
  for (const auto& h : r.heatmaps) {
    emit(h.method, "all", h.pooled);
    for (std::size_t c = 0; c < h.per_class.size(); ++c) {
      if (h.per_class[c]) emit(h.method, std::to_string(c), *h.per_class[c]);
    }
  }
  return out;
}

std::string encode_linearity_csv(const LinearityReport& report) {
  std::string out = "slide_id,bag,class,logit,contribution_sum,top10_median_attention\n";
  for (const auto& row : report.rows) {
    out += row.slide_id + ',' + std::to_string(row.bag) + ',' + std::to_string(row.cls) + ',';
    append_double(out, row.logit);
    out += ',';
    if (row.contribution_sum) append_double(out, *row.contribution_sum);
    out += ',';
    if (row.top_attention) append_double(out, *row.top_attention);
    out += '\n';
  }
  return out;
}

}  // namespace milab
