#include "milab/model.hpp"

#include <cmath>
#include <random>

#include "milab/error.hpp"
#include "milab/random.hpp"

namespace milab {

namespace {

std::string layer_name(const char* group, const char* kind, std::size_t k) {
  return std::string(group) + "." + kind + std::to_string(k);
}

std::size_t head_dim(const MilConfig& c) {
  return c.feature_dim / c.self_attention_heads;
}

ad::Var mlp_layer(std::span<const ad::Var> params, const MilModel& model,
                  ad::Var x, const std::string& w, const std::string& b) {
  return ad::add_bias(ad::matmul(x, params[model.index_of(w)]),
                      params[model.index_of(b)]);
}

ad::Var featurizer(const MilModel& model, std::span<const ad::Var> params,
                   ad::Var x) {
  ad::Var h = x;
  for (std::size_t k = 1; k <= model.config().featurizer_layers; ++k) {
    h = ad::relu(mlp_layer(params, model, h, layer_name("f", "w", k),
                           layer_name("f", "b", k)));
  }
  return h;
}

ad::Var mixer(const MilModel& model, std::span<const ad::Var> params,
              ad::Var h) {
  const MilConfig& c = model.config();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim(c)));
  ad::Var out = h;
  for (std::size_t head = 0; head < c.self_attention_heads; ++head) {
    const std::string prefix = "mix.h" + std::to_string(head) + ".";
    auto p = [&](const char* n) { return params[model.index_of(prefix + n)]; };
    ad::Var q = ad::matmul(h, p("wq"));
    ad::Var k = ad::matmul(h, p("wk"));
    ad::Var v = ad::matmul(h, p("wv"));
    ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt);
    ad::Var weights = ad::softmax(scores, 1);
    out = ad::add(out, ad::matmul(ad::matmul(weights, v), p("wo")));
  }
  return out;
}

ad::Var attention_scores(const MilModel& model, std::span<const ad::Var> params,
                         ad::Var h) {
  ad::Var a = ad::tanh(mlp_layer(params, model, h, "m.w1", "m.b1"));
  ad::Var s = mlp_layer(params, model, a, "m.w2", "m.b2");
  const std::size_t n = h.value().rows();
  return ad::reshape(ad::softmax(s, 0), {n});
}

ad::Var predictor(const MilModel& model, std::span<const ad::Var> params,
                  ad::Var m) {
  ad::Var hidden = ad::relu(mlp_layer(params, model, m, "p.w1", "p.b1"));
  return mlp_layer(params, model, hidden, "p.w2", "p.b2");
}

void require_input_dim(const MilModel& model, const Tensor& instances) {
  if (instances.rank() != 2 || instances.rows() == 0) {
    throw DimensionError("bag must be a non-empty N x D matrix, got " +
                         shape_string(instances.shape()));
  }
  if (instances.cols() != model.config().input_dim) {
    throw DimensionError("bag instances have dimension " +
                         std::to_string(instances.cols()) +
                         " but the model expects " +
                         std::to_string(model.config().input_dim));
  }
}

BagOutput collect(const ForwardGraph& g) {
  BagOutput out;
  out.logits = g.logits.value();
  out.attention = g.attention.value();
  if (g.contributions) out.contributions = g.contributions->value();
  return out;
}

}  // namespace

std::string to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::kMean: return "mean";
    case Pooling::kAttention: return "attention";
    case Pooling::kSelfAttention: return "self-attention";
  }
  return "attention";
}

std::string to_string(Composition composition) {
  return composition == Composition::kJoint ? "joint" : "additive";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "attention") return Pooling::kAttention;
  if (name == "self-attention") return Pooling::kSelfAttention;
  throw ConfigError("unknown pooling '" + std::string(name) +
                    "' (expected mean, attention or self-attention)");
}

Composition parse_composition(std::string_view name) {
  if (name == "joint") return Composition::kJoint;
  if (name == "additive") return Composition::kAdditive;
  throw ConfigError("unknown composition '" + std::string(name) +
                    "' (expected joint or additive)");
}

void MilConfig::validate() const {
  auto positive = [](std::size_t v, const char* key) {
    if (v < 1) throw ConfigError(std::string("model config: ") + key + " must be >= 1");
  };
  positive(input_dim, "input_dim");
  positive(feature_dim, "feature_dim");
  positive(featurizer_layers, "featurizer_layers");
  positive(attention_hidden, "attention_hidden");
  positive(predictor_hidden, "predictor_hidden");
  positive(self_attention_heads, "self_attention_heads");
  if (num_classes < 2) throw ConfigError("model config: num_classes must be >= 2");
  if (pooling == Pooling::kSelfAttention &&
      feature_dim % self_attention_heads != 0) {
    throw ConfigError(
        "model config: feature_dim must be divisible by self_attention_heads");
  }
}

Json to_json(const MilConfig& c) {
  return Json{{"input_dim", c.input_dim},
              {"feature_dim", c.feature_dim},
              {"featurizer_layers", c.featurizer_layers},
              {"attention_hidden", c.attention_hidden},
              {"predictor_hidden", c.predictor_hidden},
              {"num_classes", c.num_classes},
              {"pooling", to_string(c.pooling)},
              {"composition", to_string(c.composition)},
              {"self_attention_heads", c.self_attention_heads}};
}

MilConfig mil_config_from_json(const Json& json) {
  MilConfig c;
  JsonReader r(json, "model config");
  r.optional("input_dim", c.input_dim);
  r.optional("feature_dim", c.feature_dim);
  r.optional("featurizer_layers", c.featurizer_layers);
  r.optional("attention_hidden", c.attention_hidden);
  r.optional("predictor_hidden", c.predictor_hidden);
  r.optional("num_classes", c.num_classes);
  std::string pooling = to_string(c.pooling);
  std::string composition = to_string(c.composition);
  r.optional("pooling", pooling);
  r.optional("composition", composition);
  r.optional("self_attention_heads", c.self_attention_heads);
  r.finish();
  c.pooling = parse_pooling(pooling);
  c.composition = parse_composition(composition);
  c.validate();
  return c;
}

std::string Parameter::group() const { return name.substr(0, name.find('.')); }

std::vector<std::pair<std::string, Shape>> parameter_layout(
    const MilConfig& c) {
  c.validate();
  std::vector<std::pair<std::string, Shape>> layout;
  for (std::size_t k = 1; k <= c.featurizer_layers; ++k) {
    const std::size_t in = k == 1 ? c.input_dim : c.feature_dim;
    layout.emplace_back(layer_name("f", "w", k), Shape{in, c.feature_dim});
    layout.emplace_back(layer_name("f", "b", k), Shape{c.feature_dim});
  }
  if (c.pooling == Pooling::kSelfAttention) {
    const std::size_t dh = head_dim(c);
    for (std::size_t h = 0; h < c.self_attention_heads; ++h) {
      const std::string prefix = "mix.h" + std::to_string(h) + ".";
      layout.emplace_back(prefix + "wq", Shape{c.feature_dim, dh});
      layout.emplace_back(prefix + "wk", Shape{c.feature_dim, dh});
      layout.emplace_back(prefix + "wv", Shape{c.feature_dim, dh});
      layout.emplace_back(prefix + "wo", Shape{dh, c.feature_dim});
    }
  }
  if (c.uses_attention()) {
    layout.emplace_back("m.w1", Shape{c.feature_dim, c.attention_hidden});
    layout.emplace_back("m.b1", Shape{c.attention_hidden});
    layout.emplace_back("m.w2", Shape{c.attention_hidden, 1});
    layout.emplace_back("m.b2", Shape{1});
  }
  layout.emplace_back("p.w1", Shape{c.feature_dim, c.predictor_hidden});
  layout.emplace_back("p.b1", Shape{c.predictor_hidden});
  layout.emplace_back("p.w2", Shape{c.predictor_hidden, c.num_classes});
  layout.emplace_back("p.b2", Shape{c.num_classes});
  return layout;
}

MilModel::MilModel(MilConfig config, std::vector<Parameter> parameters)
    : config_(std::move(config)), params_(std::move(parameters)) {
  const auto layout = parameter_layout(config_);
  if (layout.size() != params_.size()) {
    throw ConfigError("model has " + std::to_string(params_.size()) +
                      " parameters; configuration requires " +
                      std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params_[i].name != layout[i].first ||
        params_[i].value.shape() != layout[i].second) {
      throw ConfigError("parameter " + std::to_string(i) + " is '" +
                        params_[i].name + "' " +
                        shape_string(params_[i].value.shape()) + "; expected '" +
                        layout[i].first + "' " + shape_string(layout[i].second));
    }
  }
}

MilModel MilModel::initialize(const MilConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Parameter> params;
  for (auto& [name, shape] : parameter_layout(config)) {
    Tensor t = Tensor::zeros(shape);
    if (shape.size() == 2) {
      // ReLU-fed layers use the Kaiming bound sqrt(6 / fan_in); the rest
      // sqrt(3 / fan_in), i.e. unit-variance preserving.
      const bool relu_fed = name[0] == 'f' || name == "p.w1";
      const double fan_in = static_cast<double>(shape[0]);
      const double bound = std::sqrt((relu_fed ? 6.0 : 3.0) / fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.data()) v = dist(rng);
    }
    params.push_back({name, std::move(t)});
  }
  return MilModel(config, std::move(params));
}

std::size_t MilModel::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw ConfigError("model has no parameter '" + std::string(name) + "'");
}

const Tensor& MilModel::param(std::string_view name) const {
  return params_[index_of(name)].value;
}

Tensor& MilModel::param(std::string_view name) {
  return params_[index_of(name)].value;
}

std::size_t MilModel::num_weights() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

bool operator==(const MilModel& a, const MilModel& b) {
  if (!(a.config_ == b.config_) || a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    if (a.params_[i].name != b.params_[i].name ||
        !(a.params_[i].value == b.params_[i].value)) {
      return false;
    }
  }
  return true;
}

std::vector<ad::Var> bind_parameters(ad::Tape& tape, const MilModel& model,
                                     bool differentiable) {
  std::vector<ad::Var> vars;
  vars.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) {
    vars.push_back(differentiable ? tape.variable(p.value)
                                  : tape.constant(p.value));
  }
  return vars;
}

ForwardGraph build_forward(ad::Tape& tape, const MilModel& model,
                           std::span<const ad::Var> params, ad::Var instances,
                           const std::optional<Tensor>& fixed_attention) {
  const MilConfig& c = model.config();
  require_input_dim(model, instances.value());
  const std::size_t n = instances.value().rows();

  ForwardGraph g;
  g.features = featurizer(model, params, instances);
  g.mixed = c.pooling == Pooling::kSelfAttention
                ? mixer(model, params, g.features)
                : g.features;

  if (fixed_attention) {
    if (fixed_attention->numel() != n) {
      throw DimensionError("fixed attention has " +
                           std::to_string(fixed_attention->numel()) +
                           " weights for a bag of " + std::to_string(n));
    }
    g.attention = tape.constant(fixed_attention->reshaped({n}));
  } else if (c.uses_attention()) {
    g.attention = attention_scores(model, params, g.mixed);
  } else {
    g.attention = tape.constant(Tensor::filled({n}, 1.0 / static_cast<double>(n)));
  }
  g.attended = ad::mul_rows(g.mixed, g.attention);

  if (c.additive()) {
    ad::Var per_instance = predictor(model, params, g.attended);  // N x C
    g.contributions = ad::transpose(per_instance);
    g.logits = ad::sum_axis(per_instance, 0);
  } else {
    ad::Var pooled = ad::reshape(ad::sum_axis(g.attended, 0), {1, c.feature_dim});
    g.logits = ad::reshape(predictor(model, params, pooled), {c.num_classes});
  }
  return g;
}

Tensor featurize(const MilModel& model, const Bag& bag) {
  require_input_dim(model, bag.instances);
  ad::Tape tape;
  const auto params = bind_parameters(tape, model, false);
  return featurizer(model, params, tape.constant(bag.instances)).value();
}

Tensor attention_weights(const MilModel& model, const Tensor& features) {
  if (!model.config().uses_attention()) {
    throw UnsupportedVariant("attention weights are undefined for mean pooling");
  }
  if (features.rank() != 2 || features.cols() != model.config().feature_dim) {
    throw DimensionError("attention_weights: features " +
                         shape_string(features.shape()) + " do not have " +
                         std::to_string(model.config().feature_dim) + " columns");
  }
  ad::Tape tape;
  const auto params = bind_parameters(tape, model, false);
  return attention_scores(model, params, tape.constant(features)).value();
}

PooledRepresentation pool(const MilModel& model, const Tensor& features,
                          const Tensor& alpha) {
  if (features.rank() != 2 || features.cols() != model.config().feature_dim) {
    throw DimensionError("pool: features " + shape_string(features.shape()) +
                         " do not have " +
                         std::to_string(model.config().feature_dim) + " columns");
  }
  if (alpha.numel() != features.rows()) {
    throw DimensionError("pool: " + std::to_string(alpha.numel()) +
                         " attention weights for " +
                         std::to_string(features.rows()) + " instances");
  }
  ad::Tape tape;
  ad::Var attended = ad::mul_rows(tape.constant(features), tape.constant(alpha));
  return {attended.value(), ad::sum_axis(attended, 0).value()};
}

Tensor self_attention_mix(const MilModel& model, const Tensor& features) {
  if (model.config().pooling != Pooling::kSelfAttention) {
    throw UnsupportedVariant("self-attention mixing needs self-attention pooling");
  }
  if (features.rank() != 2 || features.cols() != model.config().feature_dim) {
    throw DimensionError("self_attention_mix: features " +
                         shape_string(features.shape()) + " do not have " +
                         std::to_string(model.config().feature_dim) + " columns");
  }
  ad::Tape tape;
  const auto params = bind_parameters(tape, model, false);
  return mixer(model, params, tape.constant(features)).value();
}

BagOutput forward(const MilModel& model, const Tensor& instances) {
  ad::Tape tape;
  const auto params = bind_parameters(tape, model, false);
  return collect(build_forward(tape, model, params, tape.constant(instances)));
}

BagOutput forward(const MilModel& model, const Bag& bag) {
  return forward(model, bag.instances);
}

BagOutput forward_fixed_attention(const MilModel& model, const Tensor& instances,
                                  std::span<const double> alpha) {
  ad::Tape tape;
  const auto params = bind_parameters(tape, model, false);
  Tensor fixed = Tensor::vector(std::vector<double>(alpha.begin(), alpha.end()));
  return collect(
      build_forward(tape, model, params, tape.constant(instances), fixed));
}

ad::Var bag_loss(ad::Tape& tape, const MilModel& model,
                 std::span<const ad::Var> params, const Bag& bag) {
  ForwardGraph g = build_forward(tape, model, params, tape.constant(bag.instances));
  return ad::cross_entropy(g.logits, bag.label);
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace milab
