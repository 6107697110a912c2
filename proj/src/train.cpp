#include "milab/train.hpp"

#include <algorithm>
#include <cmath>

#include "milab/autodiff.hpp"
#include "milab/error.hpp"
#include "milab/inference.hpp"
#include "milab/random.hpp"

namespace milab {

namespace {

enum Stream : std::uint64_t {
  kEpochBags = 0x21,
  kEpochOrder,
  kValidation,
};

std::string step_context(std::size_t epoch, std::size_t step) {
  return "epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("train config: '" + key + "' " + why);
  };
  // Zero is accepted so a run can be checked to leave parameters untouched.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail("learning_rate", "must be finite and >= 0");
  }
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (bag_size < 1) fail("bag_size", "must be >= 1");
  if (bags_per_slide < 1) fail("bags_per_slide", "must be >= 1");
  if (eval_bags < 1) fail("eval_bags", "must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must be in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon", "must be > 0");
}

Json to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate}, {"bag_size", c.bag_size},
              {"batch_size", c.batch_size},       {"epochs", c.epochs},
              {"bags_per_slide", c.bags_per_slide}, {"beta1", c.beta1},
              {"beta2", c.beta2},                 {"epsilon", c.epsilon},
              {"seed", c.seed},                   {"patience", c.patience},
              {"eval_bags", c.eval_bags}};
}

TrainConfig train_config_from_json(const Json& json) {
  TrainConfig c;
  JsonReader r(json, "train config");
  r.optional("learning_rate", c.learning_rate);
  r.optional("bag_size", c.bag_size);
  r.optional("batch_size", c.batch_size);
  r.optional("epochs", c.epochs);
  r.optional("bags_per_slide", c.bags_per_slide);
  r.optional("beta1", c.beta1);
  r.optional("beta2", c.beta2);
  r.optional("epsilon", c.epsilon);
  r.optional("seed", c.seed);
  r.optional("patience", c.patience);
  r.optional("eval_bags", c.eval_bags);
  r.finish();
  c.validate();
  return c;
}

AdamState adam_init(std::span<const Parameter> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p.value.shape()));
    s.v.push_back(Tensor::zeros(p.value.shape()));
  }
  return s;
}

void adam_step(std::span<Parameter> params, std::span<const Tensor> grads,
               AdamState& state, const TrainConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.m.size()) + " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Shape& shape = params[k].value.shape();
    if (grads[k].shape() != shape || state.m[k].shape() != shape || state.v[k].shape() != shape) {
      throw DimensionError("adam: gradient for " + params[k].name + " has shape " +
                           shape_string(grads[k].shape()) + ", expected " + shape_string(shape));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].value.data();
    auto g = grads[k].data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

BatchGradient batch_gradient(const MilModel& model, std::span<const Bag> bags,
                             kernels::Exec exec) {
  if (bags.empty()) throw DimensionError("batch_gradient over zero bags");
  const auto params = model.parameters();
  std::vector<double> losses(bags.size());
  std::vector<std::vector<std::vector<double>>> per_bag(bags.size());
  kernels::for_each_index(bags.size(), exec, [&](std::size_t b) {
    ad::Tape tape;
    const auto vars = bind_parameters(tape, model, true);
    const ad::Var loss = bag_loss(tape, model, vars, bags[b]);
    tape.backward(loss);
    losses[b] = loss.value()[0];
    per_bag[b].reserve(vars.size());
    for (const auto& v : vars) per_bag[b].push_back(tape.grad(v));
  });

  BatchGradient out;
  const double scale = 1.0 / static_cast<double>(bags.size());
  for (const auto& p : params) out.grads.push_back(Tensor::zeros(p.value.shape()));
  for (std::size_t b = 0; b < bags.size(); ++b) {
    out.loss += losses[b];
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto dst = out.grads[k].data();
      const auto& src = per_bag[b][k];
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  out.loss *= scale;
  for (auto& g : out.grads) {
    for (double& x : g.data()) x *= scale;
  }
  return out;
}

Json to_json(const TrainHistory& h) {
  Json epochs = Json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_accuracy", e.val_accuracy ? Json(*e.val_accuracy) : Json()}});
  }
  return Json{{"epochs", epochs}, {"best_epoch", h.best_epoch}, {"stopped_early", h.stopped_early}};
}

TrainResult train(MilModel model, const SlideDataset& dataset, const TrainConfig& config,
                  kernels::Exec exec) {
  config.validate();
  const MilConfig& mc = model.config();
  if (mc.input_dim != dataset.config.input_dim) {
    throw ConfigError("model input_dim " + std::to_string(mc.input_dim) +
                      " does not match dataset dim " + std::to_string(dataset.config.input_dim));
  }
  if (mc.num_classes != dataset.config.num_classes) {
    throw ConfigError("model num_classes " + std::to_string(mc.num_classes) +
                      " does not match dataset classes " +
                      std::to_string(dataset.config.num_classes));
  }
  const auto train_slides = dataset.split("train");
  const auto val_slides = dataset.split("val");
  if (train_slides.empty() && config.epochs > 0) {
    throw ConfigError("train split is empty");
  }

  TrainResult result{model, {}};
  AdamState state = adam_init(model.parameters());
  std::optional<double> best_accuracy;
  std::size_t since_best = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<Bag> bags;
    for (std::size_t s = 0; s < train_slides.size(); ++s) {
      const Slide& slide = *train_slides[s];
      const std::size_t k = std::min(config.bag_size, slide.size());
      for (auto& bag : sample_bags(slide, k, config.bags_per_slide,
                                   derive_seed(config.seed, kEpochBags, epoch, s))) {
        bags.push_back(std::move(bag));
      }
    }
    Rng order_rng(derive_seed(config.seed, kEpochOrder, epoch));
    std::shuffle(bags.begin(), bags.end(), order_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < bags.size(); start += config.batch_size) {
      ++step;
      const std::size_t end = std::min(bags.size(), start + config.batch_size);
      const std::span<const Bag> batch(bags.data() + start, end - start);
      BatchGradient g;
      try {
        g = batch_gradient(model, batch, exec);
      } catch (const NumericError& e) {
        throw TrainingDiverged(std::string(e.what()) + " at " + step_context(epoch, step));
      }
      if (!std::isfinite(g.loss)) {
        throw TrainingDiverged("non-finite loss at " + step_context(epoch, step));
      }
      for (const auto& t : g.grads) {
        for (double x : t.data()) {
          if (!std::isfinite(x)) {
            throw TrainingDiverged("non-finite gradient at " + step_context(epoch, step));
          }
        }
      }
      loss_sum += g.loss * static_cast<double>(batch.size());
      adam_step(model.parameters(), g.grads, state, config);
    }

    EpochRecord record{epoch, loss_sum / static_cast<double>(bags.size()), std::nullopt};
    if (!val_slides.empty()) {
      const auto preds = infer_slides(model, val_slides, config.bag_size, config.eval_bags,
                                      derive_seed(config.seed, kValidation), exec);
      record.val_accuracy = accuracy(val_slides, preds);
    }
    result.history.epochs.push_back(record);

    if (record.val_accuracy) {
      // Ties count as progress: the later epoch has seen more data.
      if (!best_accuracy || *record.val_accuracy >= *best_accuracy) {
        best_accuracy = record.val_accuracy;
        result.history.best_epoch = epoch;
        result.model = model;
        since_best = 0;
      } else if (config.patience > 0 && ++since_best >= config.patience) {
        result.history.stopped_early = epoch < config.epochs;
        break;
      }
    }
  }
  if (!best_accuracy) {
    result.model = model;
    result.history.best_epoch = result.history.epochs.size();
  }
  return result;
}

}  // namespace milab
