#pragma once

// Attention-MIL models in two compositions.
//
//   f      per-instance featurizer (ReLU MLP)
//   mixer  optional single self-attention layer with residual (self-attention
//          pooling only)
//   psi_m  tanh MLP -> one score per instance; alpha = softmax over the bag
//   m_i    alpha_i * f(x_i)
//   psi_p  ReLU MLP -> C logits
//
// joint:     logits = psi_p(sum_i m_i)
// additive:  logits = sum_i psi_p(m_i); the C x N matrix of summands is the
//            contribution map.
//
// Mean pooling uses alpha_i = 1/N and has no psi_m.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "milab/autodiff.hpp"
#include "milab/bag.hpp"
#include "milab/json_util.hpp"
#include "milab/tensor.hpp"

namespace milab {

enum class Pooling { kMean, kAttention, kSelfAttention };
enum class Composition { kJoint, kAdditive };

std::string to_string(Pooling pooling);
std::string to_string(Composition composition);
Pooling parse_pooling(std::string_view name);
Composition parse_composition(std::string_view name);

struct MilConfig {
  std::size_t input_dim = 16;
  std::size_t feature_dim = 32;
  std::size_t featurizer_layers = 2;
  std::size_t attention_hidden = 32;
  std::size_t predictor_hidden = 32;
  std::size_t num_classes = 3;
  Pooling pooling = Pooling::kAttention;
  Composition composition = Composition::kAdditive;
  std::size_t self_attention_heads = 1;

  // Throws ConfigError.
  void validate() const;

  bool uses_attention() const { return pooling != Pooling::kMean; }
  bool additive() const { return composition == Composition::kAdditive; }

  friend bool operator==(const MilConfig&, const MilConfig&) = default;
};

Json to_json(const MilConfig& config);
// Strict: unknown keys are a ConfigError.
MilConfig mil_config_from_json(const Json& json);

struct Parameter {
  std::string name;
  Tensor value;

  // Parameter group: "f", "mix", "m" or "p".
  std::string group() const;
};

// Names and shapes of every parameter, in canonical order.
std::vector<std::pair<std::string, Shape>> parameter_layout(
    const MilConfig& config);

class MilModel {
 public:
  // Parameters must match parameter_layout(config) exactly.
  MilModel(MilConfig config, std::vector<Parameter> parameters);

  // Seeded uniform fan-in initialisation; biases start at zero.
  static MilModel initialize(const MilConfig& config, std::uint64_t seed);

  const MilConfig& config() const { return config_; }
  std::span<const Parameter> parameters() const { return params_; }
  std::span<Parameter> parameters() { return params_; }

  std::size_t index_of(std::string_view name) const;
  const Tensor& param(std::string_view name) const;
  Tensor& param(std::string_view name);
  std::size_t num_weights() const;

  friend bool operator==(const MilModel& a, const MilModel& b);

 private:
  MilConfig config_;
  std::vector<Parameter> params_;
};

struct BagOutput {
  Tensor logits;                        // C
  Tensor attention;                     // N, sums to 1
  std::optional<Tensor> contributions;  // C x N, additive only
};

// Recorded computation for one bag. `mixed` equals `features` unless the
// model uses self-attention pooling.
struct ForwardGraph {
  ad::Var features;
  ad::Var mixed;
  ad::Var attention;
  ad::Var attended;
  ad::Var logits;
  std::optional<ad::Var> contributions;
};

// Puts the model parameters on a tape, in parameters() order.
std::vector<ad::Var> bind_parameters(ad::Tape& tape, const MilModel& model,
                                     bool differentiable);

// Builds the forward pass on `tape`. When fixed_attention is given it
// replaces the computed alpha (values only; no gradient flows into it).
ForwardGraph build_forward(ad::Tape& tape, const MilModel& model,
                           std::span<const ad::Var> params, ad::Var instances,
                           const std::optional<Tensor>& fixed_attention = {});

// Inference entry points.
Tensor featurize(const MilModel& model, const Bag& bag);
// features are the representations fed to psi_m (post-mixer for
// self-attention pooling). Throws UnsupportedVariant for mean pooling.
Tensor attention_weights(const MilModel& model, const Tensor& features);

struct PooledRepresentation {
  Tensor attended;  // N x D', row i = alpha_i * features_i
  Tensor pooled;    // D', sum of rows
};
PooledRepresentation pool(const MilModel& model, const Tensor& features,
                          const Tensor& alpha);

// Throws UnsupportedVariant unless pooling is self-attention.
Tensor self_attention_mix(const MilModel& model, const Tensor& features);

BagOutput forward(const MilModel& model, const Bag& bag);
BagOutput forward(const MilModel& model, const Tensor& instances);
// Same as forward() with alpha frozen to the given values.
BagOutput forward_fixed_attention(const MilModel& model, const Tensor& instances,
                                  std::span<const double> alpha);

// Mean cross-entropy training loss of one bag, recorded on the tape.
ad::Var bag_loss(ad::Tape& tape, const MilModel& model,
                 std::span<const ad::Var> params, const Bag& bag);

std::size_t argmax(std::span<const double> values);

}  // namespace milab
