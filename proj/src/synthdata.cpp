#include "milab/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "milab/error.hpp"
#include "milab/fileio.hpp"
#include "milab/random.hpp"

namespace milab {

namespace {

constexpr std::size_t kMaxResamples = 1000;
constexpr int kDatasetVersion = 1;

// Stream ids for derive_seed.
enum Stream : std::uint64_t {
  kDirections = 1,
  kLabels,
  kMixing,
  kSlide,
  kBags,
  kSplits,
};

std::size_t round_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

// Unit directions: first C for class means, next C for mimic offsets.
// Orthonormal when D >= 2C.
std::vector<std::vector<double>> class_directions(const GenConfig& c) {
  Rng rng(derive_seed(c.seed, kDirections));
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = c.input_dim;
  const bool orthogonal = d >= 2 * c.num_classes;
  std::vector<std::vector<double>> dirs;
  for (std::size_t k = 0; k < 2 * c.num_classes; ++k) {
    std::vector<double> v(d);
    for (double& x : v) x = normal(rng);
    if (orthogonal) {
      for (const auto& u : dirs) {
        const double dot = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
        for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
      }
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (double& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

GridCoord grid_position(std::size_t index, std::size_t n) {
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  return {static_cast<int>(index / cols), static_cast<int>(index % cols)};
}

std::string slide_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "slide_%04zu", index);
  return buf;
}

Slide make_slide(const GenConfig& c, std::size_t index, std::size_t label,
                 int secondary, const std::vector<std::vector<double>>& dirs) {
  Rng rng(derive_seed(c.seed, kSlide, index));
  const std::size_t n = c.instances_per_slide;
  const std::size_t n_signal = c.signal_per_slide();
  const std::size_t n_secondary = secondary >= 0 ? n_signal / 2 : 0;

  std::vector<int> mimic_classes;
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    if (k != label && static_cast<int>(k) != secondary) mimic_classes.push_back(static_cast<int>(k));
  }
  const std::size_t n_mimic = mimic_classes.empty() ? 0 : c.mimics_per_slide();

  std::vector<InstanceLabel> roles;
  roles.reserve(n);
  for (std::size_t i = 0; i < n_signal; ++i) roles.push_back(InstanceLabel::signal(static_cast<int>(label)));
  for (std::size_t i = 0; i < n_secondary; ++i) roles.push_back(InstanceLabel::signal(secondary));
  std::uniform_int_distribution<std::size_t> pick(0, mimic_classes.empty() ? 0 : mimic_classes.size() - 1);
  for (std::size_t i = 0; i < n_mimic; ++i) roles.push_back(InstanceLabel::mimic(mimic_classes[pick(rng)]));
  while (roles.size() < n) roles.push_back(InstanceLabel::background());
  std::shuffle(roles.begin(), roles.end(), rng);

  Slide slide;
  slide.id = slide_name(index);
  slide.label = label;
  slide.mixed = secondary >= 0;
  slide.instances = Tensor::zeros({n, c.input_dim});
  slide.instance_labels = roles;
  std::normal_distribution<double> noise(0.0, c.noise_sigma);
  for (std::size_t i = 0; i < n; ++i) {
    slide.coords.push_back(grid_position(i, n));
    auto row = slide.instances.row(i);
    for (double& x : row) x = noise(rng);
    const InstanceLabel& role = roles[i];
    if (role.kind == InstanceLabel::Kind::kBackground) continue;
    const auto& mean_dir = dirs[static_cast<std::size_t>(role.cls)];
    for (std::size_t d = 0; d < c.input_dim; ++d) row[d] += c.class_separation * mean_dir[d];
    if (role.kind == InstanceLabel::Kind::kMimic) {
      const auto& offset_dir = dirs[c.num_classes + static_cast<std::size_t>(role.cls)];
      for (std::size_t d = 0; d < c.input_dim; ++d) row[d] += c.mimic_offset * offset_dir[d];
    }
  }
  return slide;
}

void assign_splits(SlideDataset& ds) {
  const GenConfig& c = ds.config;
  std::vector<std::vector<std::size_t>> by_class(c.num_classes);
  for (std::size_t i = 0; i < ds.slides.size(); ++i) by_class[ds.slides[i].label].push_back(i);
  Rng rng(derive_seed(c.seed, kSplits));
  std::vector<std::size_t> train, val, test;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n = members.size();
    const std::size_t n_train = round_count(c.split.train, n);
    const std::size_t n_val = std::min(n - n_train, round_count(c.split.val, n));
    for (std::size_t k = 0; k < n; ++k) {
      (k < n_train ? train : k < n_train + n_val ? val : test).push_back(members[k]);
    }
  }
  auto names = [&](std::vector<std::size_t>& idx) {
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    for (std::size_t i : idx) out.push_back(ds.slides[i].id);
    return out;
  };
  ds.splits = {names(train), names(val), names(test)};
}

// ---- CSV parsing helpers ----

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& msg) {
  throw ParseError("dataset.csv line " + std::to_string(line) + ": " + msg);
}

template <class T>
T parse_number(std::string_view s, std::size_t line, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    parse_fail(line, std::string("invalid ") + what + " '" + std::string(s) + "'");
  }
  return value;
}

std::map<std::string, std::string> parse_header(std::string_view line) {
  constexpr std::string_view prefix = "# milab-dataset ";
  if (line.substr(0, prefix.size()) != prefix) {
    parse_fail(1, "missing '# milab-dataset' header");
  }
  std::map<std::string, std::string> kv;
  std::string_view rest = line.substr(prefix.size());
  while (!rest.empty()) {
    const std::size_t space = rest.find(' ');
    std::string_view token = rest.substr(0, space);
    const std::size_t eq = token.find('=');
    if (eq == std::string_view::npos) parse_fail(1, "malformed header token '" + std::string(token) + "'");
    kv.emplace(std::string(token.substr(0, eq)), std::string(token.substr(eq + 1)));
    if (space == std::string_view::npos) break;
    rest = rest.substr(space + 1);
  }
  return kv;
}

std::vector<long> bag_hints(const Slide& slide) {
  std::vector<long> hint(slide.size(), -1);
  for (std::size_t b = slide.bags.size(); b-- > 0;) {
    for (std::size_t i : slide.bags[b]) hint[i] = static_cast<long>(b);
  }
  return hint;
}

}  // namespace

void GenConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("generator config: '" + key + "' " + why);
  };
  if (num_slides < 1) fail("num_slides", "must be >= 1");
  if (instances_per_slide < 1) fail("instances_per_slide", "must be >= 1");
  if (input_dim < 1) fail("input_dim", "must be >= 1");
  if (num_classes < 2) fail("num_classes", "must be >= 2");
  if (bags_per_slide < 1) fail("bags_per_slide", "must be >= 1");
  if (bag_size < 1 || bag_size > instances_per_slide) {
    fail("bag_size", "must be in [1, instances_per_slide]");
  }
  auto fraction = [&](double v, const char* key) {
    if (!(v >= 0.0 && v <= 1.0)) fail(key, "must be in [0, 1]");
  };
  fraction(signal_fraction, "signal_fraction");
  fraction(mimic_fraction, "mimic_fraction");
  fraction(mixed_fraction, "mixed_fraction");
  fraction(split.train, "split.train");
  fraction(split.val, "split.val");
  fraction(split.test, "split.test");
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    fail("split", "fractions must sum to 1");
  }
  if (!(signal_fraction > 0.0)) fail("signal_fraction", "must be > 0");
  if (signal_fraction * static_cast<double>(instances_per_slide) < 1.0) {
    fail("signal_fraction", "plants fewer than one signal instance per slide");
  }
  if (!(class_separation >= 0.0)) fail("class_separation", "must be >= 0");
  if (!(noise_sigma > 0.0)) fail("noise_sigma", "must be > 0");
  if (!(mimic_offset >= 0.0)) fail("mimic_offset", "must be >= 0");
  const std::size_t secondary = mixed_fraction > 0.0 ? signal_per_slide() / 2 : 0;
  if (signal_per_slide() + secondary + mimics_per_slide() > instances_per_slide) {
    fail("signal_fraction", "signal and mimic instances exceed instances_per_slide");
  }
  if (mixed_fraction > 0.0 && signal_per_slide() < 2) {
    fail("mixed_fraction", "mixed slides need at least two signal instances per slide");
  }
}

std::size_t GenConfig::signal_per_slide() const {
  return std::max<std::size_t>(1, round_count(signal_fraction, instances_per_slide));
}

std::size_t GenConfig::mimics_per_slide() const {
  return round_count(mimic_fraction, instances_per_slide);
}

Json to_json(const GenConfig& c) {
  return Json{{"num_slides", c.num_slides},
              {"instances_per_slide", c.instances_per_slide},
              {"bag_size", c.bag_size},
              {"bags_per_slide", c.bags_per_slide},
              {"input_dim", c.input_dim},
              {"num_classes", c.num_classes},
              {"signal_fraction", c.signal_fraction},
              {"mimic_fraction", c.mimic_fraction},
              {"mimic_offset", c.mimic_offset},
              {"mixed_fraction", c.mixed_fraction},
              {"class_separation", c.class_separation},
              {"noise_sigma", c.noise_sigma},
              {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
              {"seed", c.seed}};
}

GenConfig gen_config_from_json(const Json& json) {
  GenConfig c;
  JsonReader r(json, "generator config");
  r.optional("num_slides", c.num_slides);
  r.optional("instances_per_slide", c.instances_per_slide);
  r.optional("bag_size", c.bag_size);
  r.optional("bags_per_slide", c.bags_per_slide);
  r.optional("input_dim", c.input_dim);
  r.optional("num_classes", c.num_classes);
  r.optional("signal_fraction", c.signal_fraction);
  r.optional("mimic_fraction", c.mimic_fraction);
  r.optional("mimic_offset", c.mimic_offset);
  r.optional("mixed_fraction", c.mixed_fraction);
  r.optional("class_separation", c.class_separation);
  r.optional("noise_sigma", c.noise_sigma);
  r.optional("seed", c.seed);
  if (const Json* split = r.find("split")) {
    JsonReader s(*split, "generator config split");
    s.optional("train", c.split.train);
    s.optional("val", c.split.val);
    s.optional("test", c.split.test);
    s.finish();
  }
  r.finish();
  c.validate();
  return c;
}

Bag Slide::bag(std::span<const std::size_t> indices) const {
  Bag b;
  b.instances = instances.gather_rows(indices);
  b.label = label;
  b.slide_id = id;
  for (std::size_t i : indices) {
    b.instance_labels.push_back(instance_labels[i]);
    b.coords.push_back(coords[i]);
    b.instance_ids.push_back(i);
  }
  return b;
}

Bag Slide::whole() const {
  std::vector<std::size_t> all(size());
  std::iota(all.begin(), all.end(), 0);
  return bag(all);
}

const Slide& SlideDataset::slide(std::string_view id) const {
  for (const auto& s : slides) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown slide id '" + std::string(id) + "'");
}

std::vector<const Slide*> SlideDataset::split(std::string_view name) const {
  const std::vector<std::string>* ids = nullptr;
  if (name == "train") ids = &splits.train;
  else if (name == "val") ids = &splits.val;
  else if (name == "test") ids = &splits.test;
  else throw ConfigError("unknown split '" + std::string(name) + "' (train, val or test)");
  std::map<std::string_view, const Slide*> by_id;
  for (const auto& s : slides) by_id.emplace(s.id, &s);
  std::vector<const Slide*> out;
  for (const auto& id : *ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError("split references unknown slide '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

std::size_t SlideDataset::num_instances() const {
  std::size_t n = 0;
  for (const auto& s : slides) n += s.size();
  return n;
}

std::size_t SlideDataset::num_bags() const {
  std::size_t n = 0;
  for (const auto& s : slides) n += s.bags.size();
  return n;
}

SlideDataset generate(const GenConfig& config, kernels::Exec exec) {
  config.validate();
  SlideDataset ds;
  ds.config = config;

  std::vector<std::size_t> labels(config.num_slides);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % config.num_classes;
  Rng label_rng(derive_seed(config.seed, kLabels));
  std::shuffle(labels.begin(), labels.end(), label_rng);

  std::vector<int> secondary(config.num_slides, -1);
  Rng mix_rng(derive_seed(config.seed, kMixing));
  std::bernoulli_distribution is_mixed(config.mixed_fraction);
  std::uniform_int_distribution<std::size_t> other(1, config.num_classes - 1);
  for (std::size_t i = 0; i < secondary.size(); ++i) {
    if (is_mixed(mix_rng)) {
      secondary[i] = static_cast<int>((labels[i] + other(mix_rng)) % config.num_classes);
    }
  }

  const auto dirs = class_directions(config);
  ds.slides.resize(config.num_slides);
  kernels::for_each_index(config.num_slides, exec, [&](std::size_t i) {
    Slide s = make_slide(config, i, labels[i], secondary[i], dirs);
    s.bags = sample_bag_indices(s, config.bag_size, config.bags_per_slide,
                                derive_seed(config.seed, kBags, i));
    ds.slides[i] = std::move(s);
  });
  assign_splits(ds);
  return ds;
}

std::vector<std::vector<std::size_t>> sample_bag_indices(const Slide& slide,
                                                         std::size_t bag_size,
                                                         std::size_t num_bags,
                                                         std::uint64_t seed) {
  const std::size_t n = slide.size();
  if (bag_size < 1 || bag_size > n) {
    throw GenerationError("bag size " + std::to_string(bag_size) + " invalid for " +
                          slide.id + " with " + std::to_string(n) + " instances");
  }
  const int label = static_cast<int>(slide.label);
  const bool has_signal =
      std::any_of(slide.instance_labels.begin(), slide.instance_labels.end(),
                  [&](const InstanceLabel& l) { return l.is_signal_of(label); });
  if (!has_signal) {
    throw GenerationError(slide.id + " has no signal instance of its label " +
                          std::to_string(label) + "; cannot build label-preserving bags");
  }
  Rng rng(seed);
  std::vector<std::size_t> pool(n);
  std::vector<std::vector<std::size_t>> bags;
  for (std::size_t b = 0; b < num_bags; ++b) {
    bool ok = false;
    for (std::size_t attempt = 0; attempt < kMaxResamples && !ok; ++attempt) {
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t i = 0; i < bag_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      ok = std::any_of(pool.begin(), pool.begin() + static_cast<long>(bag_size),
                       [&](std::size_t i) { return slide.instance_labels[i].is_signal_of(label); });
    }
    if (!ok) {
      throw GenerationError("could not sample a bag of " + std::to_string(bag_size) +
                            " containing a signal instance from " + slide.id);
    }
    std::vector<std::size_t> bag(pool.begin(), pool.begin() + static_cast<long>(bag_size));
    std::sort(bag.begin(), bag.end());
    bags.push_back(std::move(bag));
  }
  return bags;
}

std::vector<Bag> sample_bags(const Slide& slide, std::size_t bag_size,
                             std::size_t num_bags, std::uint64_t seed) {
  std::vector<Bag> bags;
  for (const auto& idx : sample_bag_indices(slide, bag_size, num_bags, seed)) {
    bags.push_back(slide.bag(idx));
  }
  return bags;
}

bool satisfies_mil_assumption(const Bag& bag, bool mixed) {
  const int label = static_cast<int>(bag.label);
  bool has_own = false;
  for (const auto& l : bag.instance_labels) {
    if (l.is_signal_of(label)) has_own = true;
    else if (l.kind == InstanceLabel::Kind::kSignal && !mixed) return false;
  }
  return has_own;
}

std::string encode_dataset_csv(const SlideDataset& ds) {
  const GenConfig& c = ds.config;
  std::string out;
  out += "# milab-dataset version=" + std::to_string(kDatasetVersion) +
         " slides=" + std::to_string(ds.slides.size()) +
         " instances=" + std::to_string(ds.num_instances()) +
         " dim=" + std::to_string(c.input_dim) +
         " classes=" + std::to_string(c.num_classes) +
         " seed=" + std::to_string(c.seed) +
         " config_hash=" + config_hash(to_json(c)) + "\n";
  for (const auto& s : ds.slides) {
    const auto hint = bag_hints(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      out += s.id;
      out += ',';
      out += std::to_string(hint[i]);
      out += ',';
      out += std::to_string(i);
      out += ',';
      out += std::to_string(s.coords[i].row);
      out += ',';
      out += std::to_string(s.coords[i].col);
      out += ',';
      out += s.instance_labels[i].token();
      for (double v : s.instances.row(i)) {
        out += ',';
        append_double(out, v);
      }
      out += '\n';
    }
  }
  return out;
}

Json encode_manifest(const SlideDataset& ds) {
  Json slides = Json::array();
  for (const auto& s : ds.slides) {
    slides.push_back({{"id", s.id}, {"label", s.label}, {"mixed", s.mixed},
                      {"instances", s.size()}, {"bags", s.bags}});
  }
  const Json config = to_json(ds.config);
  return Json{{"format", "milab-dataset"},
              {"version", kDatasetVersion},
              {"config", config},
              {"config_hash", config_hash(config)},
              {"counts", {{"slides", ds.slides.size()},
                          {"instances", ds.num_instances()},
                          {"bags", ds.num_bags()}}},
              {"slides", slides},
              {"splits", {{"train", ds.splits.train},
                          {"val", ds.splits.val},
                          {"test", ds.splits.test}}}};
}

SlideDataset decode_dataset(std::string_view csv, const Json& manifest) {
  SlideDataset ds;
  try {
    if (manifest.value("format", "") != "milab-dataset") {
      throw ParseError("manifest: not a milab dataset manifest");
    }
    if (manifest.value("version", 0) != kDatasetVersion) {
      throw VersionError("manifest: unsupported dataset version");
    }
    ds.config = gen_config_from_json(manifest.at("config"));
    for (const auto& js : manifest.at("slides")) {
      Slide s;
      s.id = js.at("id").get<std::string>();
      s.label = js.at("label").get<std::size_t>();
      s.mixed = js.at("mixed").get<bool>();
      s.bags = js.at("bags").get<std::vector<std::vector<std::size_t>>>();
      s.instances = Tensor::zeros({js.at("instances").get<std::size_t>(), ds.config.input_dim});
      ds.slides.push_back(std::move(s));
    }
    const Json& sp = manifest.at("splits");
    ds.splits = {sp.at("train").get<std::vector<std::string>>(),
                 sp.at("val").get<std::vector<std::string>>(),
                 sp.at("test").get<std::vector<std::string>>()};
  } catch (const Json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }

  std::size_t pos = 0, line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= csv.size()) return false;
    const std::size_t nl = csv.find('\n', pos);
    if (nl == std::string_view::npos) {
      ++line_no;
      parse_fail(line_no, "truncated line (missing newline)");
    }
    line = csv.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) parse_fail(1, "empty file");
  const auto header = parse_header(line);
  auto header_count = [&](const char* key) {
    auto it = header.find(key);
    if (it == header.end()) parse_fail(1, std::string("header lacks ") + key);
    return parse_number<std::size_t>(it->second, 1, key);
  };
  const std::size_t declared_slides = header_count("slides");
  const std::size_t declared_instances = header_count("instances");
  if (header_count("version") != static_cast<std::size_t>(kDatasetVersion)) {
    throw VersionError("dataset.csv: unsupported version");
  }
  if (header_count("dim") != ds.config.input_dim ||
      header_count("classes") != ds.config.num_classes ||
      header_count("seed") != ds.config.seed) {
    parse_fail(1, "header disagrees with manifest config");
  }
  if (auto it = header.find("config_hash");
      it != header.end() && it->second != config_hash(to_json(ds.config))) {
    parse_fail(1, "config_hash disagrees with manifest config");
  }
  if (declared_slides != ds.slides.size()) {
    parse_fail(1, "header declares " + std::to_string(declared_slides) +
                      " slides; manifest lists " + std::to_string(ds.slides.size()));
  }
  std::size_t expected_instances = 0;
  for (const auto& s : ds.slides) expected_instances += s.size();
  if (declared_instances != expected_instances) {
    parse_fail(1, "header declares " + std::to_string(declared_instances) +
                      " instances; manifest implies " + std::to_string(expected_instances));
  }

  std::vector<std::vector<long>> expected_hints;
  for (const auto& s : ds.slides) {
    for (const auto& bag : s.bags) {
      for (std::size_t i : bag) {
        if (i >= s.size()) throw ParseError("manifest: bag index out of range in " + s.id);
      }
    }
    expected_hints.push_back(bag_hints(s));
  }

  const std::size_t dim = ds.config.input_dim;
  std::size_t rows = 0;
  std::size_t slide_idx = 0, inst = 0;
  while (next_line(line)) {
    const auto f = split_fields(line);
    if (f.size() != 6 + dim) {
      parse_fail(line_no, "expected " + std::to_string(6 + dim) + " fields, found " +
                              std::to_string(f.size()));
    }
    while (slide_idx < ds.slides.size() && inst == ds.slides[slide_idx].size()) {
      ++slide_idx;
      inst = 0;
    }
    if (slide_idx >= ds.slides.size()) {
      parse_fail(line_no, "more rows than the header declares (" +
                              std::to_string(declared_instances) + ")");
    }
    Slide& s = ds.slides[slide_idx];
    if (f[0] != s.id) parse_fail(line_no, "expected slide '" + s.id + "', found '" + std::string(f[0]) + "'");
    if (parse_number<std::size_t>(f[2], line_no, "instance_id") != inst) {
      parse_fail(line_no, "instance ids must be consecutive within a slide");
    }
    const long hint = parse_number<long>(f[1], line_no, "bag_hint");
    s.coords.push_back({parse_number<int>(f[3], line_no, "row"),
                        parse_number<int>(f[4], line_no, "col")});
    try {
      s.instance_labels.push_back(InstanceLabel::parse(f[5]));
    } catch (const ParseError& e) {
      parse_fail(line_no, e.what());
    }
    auto row = s.instances.row(inst);
    for (std::size_t d = 0; d < dim; ++d) row[d] = parse_number<double>(f[6 + d], line_no, "feature");
    if (hint != expected_hints[slide_idx][inst]) {
      parse_fail(line_no, "bag_hint " + std::to_string(hint) + " disagrees with manifest bags (" +
                              std::to_string(expected_hints[slide_idx][inst]) + ")");
    }
    ++inst;
    ++rows;
  }
  if (rows != declared_instances) {
    parse_fail(line_no, "header declares " + std::to_string(declared_instances) +
                            " instance rows; file has " + std::to_string(rows));
  }
  return ds;
}

void save_dataset(const SlideDataset& dataset, const std::filesystem::path& dir) {
  OutputStage stage(dir);
  stage.add(kDatasetCsv, encode_dataset_csv(dataset));
  stage.add(kManifestJson, encode_manifest(dataset).dump(1) + "\n");
  stage.commit();
}

SlideDataset load_dataset(const std::filesystem::path& dir) {
  const std::string manifest_text = read_file(dir / kManifestJson);
  Json manifest;
  try {
    manifest = Json::parse(manifest_text);
  } catch (const Json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }
  return decode_dataset(read_file(dir / kDatasetCsv), manifest);
}

}  // namespace milab
