#include "milab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>

#include "milab/autodiff.hpp"
#include "milab/checkpoint.hpp"
#include "milab/credit.hpp"
#include "milab/error.hpp"
#include "milab/eval.hpp"
#include "milab/fileio.hpp"
#include "milab/heatmap.hpp"
#include "milab/random.hpp"
#include "milab/shapley.hpp"
#include "milab/synthdata.hpp"
#include "milab/train.hpp"

namespace milab::cli {

namespace fs = std::filesystem;

namespace {

struct Invocation {
  std::string command;
  fs::path config_path;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
};

// The parsed config file plus the pieces shared by every command.
class RunConfig {
 public:
  explicit RunConfig(const Invocation& inv) : inv_(inv) {
    try {
      json_ = Json::parse(read_file(inv.config_path));
    } catch (const Json::exception& e) {
      throw ConfigError(inv.config_path.string() + ": invalid JSON: " + e.what());
    }
    reader_.emplace(json_, inv.config_path.filename().string());
  }

  JsonReader& reader() { return *reader_; }

  fs::path path(const char* key) {
    std::string value;
    reader_->required(key, value);
    return resolve(value);
  }

  fs::path out_dir() {
    std::string value;
    reader_->optional("out", value);
    if (inv_.out) return *inv_.out;
    if (value.empty()) throw ConfigError("no output directory: set \"out\" or pass --out");
    return resolve(value);
  }

  Json section(const char* key) {
    const Json* s = reader_->find(key);
    return s ? *s : Json::object();
  }

  const std::optional<std::uint64_t>& seed() const { return inv_.seed; }

 private:
  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : inv_.config_path.parent_path() / path;
  }

  Invocation inv_;
  Json json_;
  std::optional<JsonReader> reader_;
};

void require_dataset(const fs::path& dir) {
  for (const char* name : {kDatasetCsv, kManifestJson}) {
    if (!fs::is_regular_file(dir / name)) {
      throw IoError("dataset directory " + dir.string() + " lacks " + name);
    }
  }
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path.string());
}

void require_output_dir(const fs::path& dir) {
  for (fs::path p = dir; !p.empty(); p = p.parent_path()) {
    std::error_code ec;
    const auto status = fs::status(p, ec);
    if (fs::exists(status)) {
      if (!fs::is_directory(status)) {
        throw IoError("output path " + dir.string() + " is blocked by the file " + p.string());
      }
      break;
    }
    if (p == p.parent_path()) break;
  }
}

std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

void check_compatible(const MilModel& model, const SlideDataset& ds) {
  const MilConfig& mc = model.config();
  if (mc.input_dim != ds.config.input_dim) {
    throw ConfigError("model input_dim " + std::to_string(mc.input_dim) +
                      " does not match dataset dim " + std::to_string(ds.config.input_dim));
  }
  if (mc.num_classes != ds.config.num_classes) {
    throw ConfigError("model num_classes " + std::to_string(mc.num_classes) +
                      " does not match dataset classes " + std::to_string(ds.config.num_classes));
  }
}

int cmd_gen(RunConfig& rc, std::ostream& out) {
  GenConfig gc = gen_config_from_json(rc.section("generator"));
  if (rc.seed()) gc.seed = *rc.seed();
  const fs::path dir = rc.out_dir();
  rc.reader().finish();
  require_output_dir(dir);

  const SlideDataset ds = generate(gc);
  save_dataset(ds, dir);
  out << "slides " << ds.slides.size() << "\n"
      << "bags " << ds.num_bags() << "\n"
      << "instances " << ds.num_instances() << "\n"
      << "split train=" << ds.splits.train.size() << " val=" << ds.splits.val.size()
      << " test=" << ds.splits.test.size() << "\n"
      << "config_hash " << config_hash(to_json(gc)) << "\n";
  return kOk;
}

int cmd_train(RunConfig& rc, std::ostream& out) {
  const fs::path dataset_dir = rc.path("dataset");
  const MilConfig mc = mil_config_from_json(rc.section("model"));
  TrainConfig tc = train_config_from_json(rc.section("train"));
  if (rc.seed()) tc.seed = *rc.seed();
  const fs::path dir = rc.out_dir();
  rc.reader().finish();
  require_dataset(dataset_dir);
  require_output_dir(dir);

  const SlideDataset ds = load_dataset(dataset_dir);
  const Json effective{{"command", "train"},
                       {"dataset_config_hash", config_hash(to_json(ds.config))},
                       {"model", to_json(mc)},
                       {"train", to_json(tc)}};
  const std::string hash = config_hash(effective);
  MilModel model = MilModel::initialize(mc, tc.seed);
  check_compatible(model, ds);

  TrainResult result = train(std::move(model), ds, tc);
  const Json provenance{{"config_hash", hash},
                        {"dataset_config_hash", config_hash(to_json(ds.config))},
                        {"train", to_json(tc)},
                        {"best_epoch", result.history.best_epoch}};
  OutputStage stage(dir);
  stage.add("model.ckpt", encode_checkpoint(result.model, provenance));
  stage.add("history.json", json_text({{"config_hash", hash},
                                       {"config", effective},
                                       {"history", to_json(result.history)}}));
  stage.commit();

  const auto& epochs = result.history.epochs;
  out << "epochs " << epochs.size() << "\n";
  if (!epochs.empty()) {
    out << "final_train_loss " << format_double(epochs.back().train_loss) << "\n";
  }
  out << "best_epoch " << result.history.best_epoch << "\n";
  if (result.history.best_epoch > 0 && epochs[result.history.best_epoch - 1].val_accuracy) {
    out << "best_val_accuracy "
        << format_double(*epochs[result.history.best_epoch - 1].val_accuracy) << "\n";
  }
  out << "config_hash " << hash << "\n";
  return kOk;
}

struct Loaded {
  Checkpoint checkpoint;
  SlideDataset dataset;
};

Loaded load_inputs(const fs::path& checkpoint_path, const fs::path& dataset_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  SlideDataset ds = load_dataset(dataset_dir);
  check_compatible(ckpt.model, ds);
  return {std::move(ckpt), std::move(ds)};
}

int cmd_eval(RunConfig& rc, std::ostream& out) {
  const fs::path dataset_dir = rc.path("dataset");
  const fs::path checkpoint_path = rc.path("checkpoint");
  EvalConfig ec = eval_config_from_json(rc.section("eval"));
  if (rc.seed()) ec.seed = *rc.seed();
  const fs::path dir = rc.out_dir();
  rc.reader().finish();
  require_dataset(dataset_dir);
  require_file(checkpoint_path, "checkpoint");
  require_output_dir(dir);

  const Loaded in = load_inputs(checkpoint_path, dataset_dir);
  const Json effective{{"command", "eval"},
                       {"checkpoint_config_hash", in.checkpoint.provenance.value("config_hash", "")},
                       {"dataset_config_hash", config_hash(to_json(in.dataset.config))},
                       {"eval", to_json(ec)}};
  const std::string hash = config_hash(effective);
  const EvalReport report = evaluate(in.checkpoint.model, in.dataset, ec);

  Json doc = to_json(report);
  doc["config_hash"] = hash;
  doc["config"] = effective;
  doc["model"] = to_json(in.checkpoint.model.config());
  OutputStage stage(dir);
  stage.add("report.json", json_text(doc));
  stage.add("pr_curves.csv", encode_pr_csv(report));
  stage.add("linearity.csv", encode_linearity_csv(report.linearity));
  stage.commit();

  out << "accuracy " << format_double(report.accuracy) << "\n";
  if (report.auroc) out << "auroc " << format_double(report.auroc->value) << "\n";
  for (const auto& h : report.heatmaps) {
    out << h.method << " auprc " << format_double(h.pooled.auprc) << " best_f1 "
        << format_double(h.pooled.best_f1) << "\n";
  }
  for (const auto& w : report.warnings) out << "warning: " << w << "\n";
  out << "config_hash " << hash << "\n";
  return kOk;
}

int cmd_explain(RunConfig& rc, std::ostream& out) {
  const fs::path dataset_dir = rc.path("dataset");
  const fs::path checkpoint_path = rc.path("checkpoint");
  std::string slide_id;
  rc.reader().required("slide", slide_id);
  const fs::path dir = rc.out_dir();
  rc.reader().finish();
  require_dataset(dataset_dir);
  require_file(checkpoint_path, "checkpoint");
  require_output_dir(dir);

  const Loaded in = load_inputs(checkpoint_path, dataset_dir);
  const MilModel& model = in.checkpoint.model;
  if (!model.config().additive()) {
    throw UnsupportedComposition(
        "explain needs an additive checkpoint; joint models have no per-class contributions");
  }
  const Slide& slide = in.dataset.slide(slide_id);
  const Json effective{{"command", "explain"},
                       {"checkpoint_config_hash", in.checkpoint.provenance.value("config_hash", "")},
                       {"dataset_config_hash", config_hash(to_json(in.dataset.config))},
                       {"slide", slide_id}};
  const std::string hash = config_hash(effective);

  const Bag bag = slide.whole();
  const BagOutput output = forward(model, bag);
  const ContributionMap contribs = extract_contributions(model, bag);
  const HeatmapScores bounded = bound_scores(contribs);
  const std::size_t classes = contribs.num_classes();

  OutputStage stage(dir);
  Json files = Json::array();
  const std::string comment = "milab config_hash=" + hash;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::string name = "class_" + std::to_string(c) + ".pgm";
    stage.add(name, encode_pgm(render_heatmap(bag.coords, bounded.values.row(c)), comment));
    files.push_back(name);
  }
  std::vector<double> alpha(output.attention.data().begin(), output.attention.data().end());
  const auto [lo, hi] = std::minmax_element(alpha.begin(), alpha.end());
  std::vector<double> alpha_scores(alpha.size(), 0.0);
  if (*hi > *lo) {
    for (std::size_t i = 0; i < alpha.size(); ++i) alpha_scores[i] = (alpha[i] - *lo) / (*hi - *lo);
  }
  stage.add("attention.pgm", encode_pgm(render_heatmap(bag.coords, alpha_scores), comment));
  files.push_back("attention.pgm");

  std::string csv = "instance_id,row,col,instance_label,attention";
  for (std::size_t c = 0; c < classes; ++c) csv += ",raw_class_" + std::to_string(c);
  for (std::size_t c = 0; c < classes; ++c) csv += ",bounded_class_" + std::to_string(c);
  csv += '\n';
  for (std::size_t i = 0; i < bag.size(); ++i) {
    csv += std::to_string(bag.instance_ids[i]) + ',' + std::to_string(bag.coords[i].row) + ',' +
           std::to_string(bag.coords[i].col) + ',' + bag.instance_labels[i].token() + ',';
    append_double(csv, alpha[i]);
    for (std::size_t c = 0; c < classes; ++c) {
      csv += ',';
      append_double(csv, contribs.values.at(c, i));
    }
    for (std::size_t c = 0; c < classes; ++c) {
      csv += ',';
      append_double(csv, bounded.values.at(c, i));
    }
    csv += '\n';
  }
  stage.add("contributions.csv", csv);
  files.push_back("contributions.csv");

  const std::size_t predicted = argmax(output.logits.data());
  stage.add("explain.json", json_text({{"config_hash", hash},
                                       {"config", effective},
                                       {"slide", slide_id},
                                       {"label", slide.label},
                                       {"predicted", predicted},
                                       {"logits", output.logits.values()},
                                       {"files", files}}));
  stage.commit();

  out << "slide " << slide_id << " label " << slide.label << " predicted " << predicted << "\n";
  out << "wrote " << files.size() << " files to " << dir.string() << "\n";
  out << "config_hash " << hash << "\n";
  return kOk;
}

int cmd_verify_shapley(RunConfig& rc, std::ostream& out) {
  const fs::path dataset_dir = rc.path("dataset");
  const fs::path checkpoint_path = rc.path("checkpoint");
  std::size_t n_max = 8, bags_per_size = 2, background_size = 256;
  std::string split = "test";
  std::uint64_t seed = 17;
  auto& r = rc.reader();
  r.optional("n_max", n_max);
  r.optional("bags_per_size", bags_per_size);
  r.optional("background_size", background_size);
  r.optional("split", split);
  r.optional("seed", seed);
  if (rc.seed()) seed = *rc.seed();
  const fs::path dir = rc.out_dir();
  r.finish();
  if (n_max > kMaxEnumerationInstances) {
    throw InstanceCountError("n_max " + std::to_string(n_max) + " exceeds the enumeration cap of " +
                             std::to_string(kMaxEnumerationInstances) + " instances");
  }
  if (n_max < 1) throw ConfigError("n_max must be >= 1");
  if (bags_per_size < 1) throw ConfigError("bags_per_size must be >= 1");
  if (background_size < 1) throw ConfigError("background_size must be >= 1");
  require_dataset(dataset_dir);
  require_file(checkpoint_path, "checkpoint");
  require_output_dir(dir);

  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (!ckpt.model.config().additive()) {
    throw UnsupportedComposition(
        "verify-shapley needs an additive checkpoint; the fixed-context closed form does not "
        "apply to joint models");
  }
  const SlideDataset ds = load_dataset(dataset_dir);
  check_compatible(ckpt.model, ds);
  const auto slides = ds.split(split);
  const auto train_slides = ds.split("train");
  if (slides.empty()) throw ConfigError("split '" + split + "' has no slides");
  if (train_slides.empty()) throw ConfigError("train split is empty; no background instances");

  const Json effective{{"command", "verify-shapley"},
                       {"checkpoint_config_hash", ckpt.provenance.value("config_hash", "")},
                       {"dataset_config_hash", config_hash(to_json(ds.config))},
                       {"n_max", n_max},
                       {"bags_per_size", bags_per_size},
                       {"background_size", background_size},
                       {"split", split},
                       {"seed", seed}};
  const std::string hash = config_hash(effective);

  // Background: instances drawn uniformly from the training slides.
  Rng rng(derive_seed(seed, 1));
  Tensor background = Tensor::zeros({background_size, ds.config.input_dim});
  std::uniform_int_distribution<std::size_t> pick_train(0, train_slides.size() - 1);
  for (std::size_t k = 0; k < background_size; ++k) {
    const Slide& s = *train_slides[pick_train(rng)];
    std::uniform_int_distribution<std::size_t> pick_inst(0, s.size() - 1);
    const auto src = s.instances.row(pick_inst(rng));
    std::copy(src.begin(), src.end(), background.row(k).begin());
  }
  const Bag background_bag = make_bag(std::move(background));

  Json runs = Json::array();
  double worst = 0.0, worst_efficiency = 0.0;
  std::uniform_int_distribution<std::size_t> pick_slide(0, slides.size() - 1);
  for (std::size_t n = 1; n <= n_max; ++n) {
    for (std::size_t b = 0; b < bags_per_size; ++b) {
      const Slide& s = *slides[pick_slide(rng)];
      const std::size_t size = std::min(n, s.size());
      std::vector<std::size_t> idx(s.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(size);
      std::sort(idx.begin(), idx.end());
      const ShapleyReport rep = shapley_enumerate(ckpt.model, s.bag(idx), background_bag);
      worst = std::max(worst, rep.max_discrepancy.value_or(0.0));
      worst_efficiency = std::max(worst_efficiency, rep.efficiency_gap);
      runs.push_back({{"slide", s.id},
                      {"instances", idx},
                      {"max_discrepancy", rep.max_discrepancy.value_or(0.0)},
                      {"efficiency_gap", rep.efficiency_gap}});
    }
  }
  const bool passed = worst <= kShapleyTolerance;
  OutputStage stage(dir);
  stage.add("shapley_verification.json", json_text({{"config_hash", hash},
                                                    {"config", effective},
                                                    {"mode", "fixed-context"},
                                                    {"tolerance", kShapleyTolerance},
                                                    {"max_discrepancy", worst},
                                                    {"max_efficiency_gap", worst_efficiency},
                                                    {"passed", passed},
                                                    {"runs", runs}}));
  stage.commit();
  out << "bags " << runs.size() << "\n"
      << "max_discrepancy " << format_double(worst) << "\n"
      << "max_efficiency_gap " << format_double(worst_efficiency) << "\n"
      << (passed ? "PASS" : "FAIL") << " tolerance " << format_double(kShapleyTolerance) << "\n"
      << "config_hash " << hash << "\n";
  return passed ? kOk : kInternalError;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const UnsupportedComposition*>(&e)) return kUnsupportedComposition;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const ParseError*>(&e) || dynamic_cast<const VersionError*>(&e) ||
      dynamic_cast<const InstanceCountError*>(&e) || dynamic_cast<const UnsupportedVariant*>(&e)) {
    return kConfigError;
  }
  return kInternalError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Attention and additive multiple-instance learning lab", "milab");
  app.require_subcommand(1);
  Invocation inv;
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  for (const char* name : {"gen", "train", "eval", "explain", "verify-shapley"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides \"out\")");
    sub->add_option("--seed", seed, "seed override");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "milab: " << e.what() << "\n";
    return kConfigError;
  }

  CLI::App* sub = app.get_subcommands().front();
  inv.command = sub->get_name();
  inv.config_path = config;
  if (sub->count("--out")) inv.out = fs::path(out_dir);
  if (sub->count("--seed")) inv.seed = seed;

  try {
    RunConfig rc(inv);
    if (inv.command == "gen") return cmd_gen(rc, out);
    if (inv.command == "train") return cmd_train(rc, out);
    if (inv.command == "eval") return cmd_eval(rc, out);
    if (inv.command == "explain") return cmd_explain(rc, out);
    return cmd_verify_shapley(rc, out);
  } catch (const std::exception& e) {
    err << "milab " << inv.command << ": " << e.what() << "\n";
    return exit_code(e);
  }
}

}  // namespace milab::cli
