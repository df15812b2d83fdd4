#include "fps/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include <json.hpp>

#include "fps/autograd.hpp"
#include "fps/errors.hpp"
#include "fps/hash.hpp"
#include "fps/ops.hpp"

namespace fps {
namespace {

std::vector<std::vector<char>> update_masks(const Model& model,
                                            const SelectionMask& mask,
                                            bool train_head) {
  std::vector<std::vector<char>> masks;
  for (const auto& l : model.tapped_layers()) {
    masks.emplace_back(l.fan_in() * l.fan_out(), 0);
    masks.emplace_back(l.fan_out(), 0);
  }
  const auto& head = model.head();
  masks.emplace_back(head.fan_in() * head.fan_out(), train_head ? 1 : 0);
  masks.emplace_back(head.fan_out(), train_head ? 1 : 0);
  for (const auto& a : mask.addresses) {
    const auto& l = model.layer(a.layer_id);
    const std::size_t tensor = 2 * a.layer_id + (a.is_bias() ? 1 : 0);
    const std::size_t offset =
        a.is_bias() ? a.out_index : a.in_index * l.fan_out() + a.out_index;
    masks[tensor][offset] = 1;
  }
  return masks;
}

class TrainableScope {
 public:
  explicit TrainableScope(std::vector<Tensor>& params) : params_(params) {
    for (auto& p : params_) {
      previous_.push_back(p.requires_grad());
      p.set_requires_grad(true);
    }
  }
  ~TrainableScope() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      params_[i].set_requires_grad(previous_[i]);
    }
  }
  TrainableScope(const TrainableScope&) = delete;
  TrainableScope& operator=(const TrainableScope&) = delete;

 private:
  std::vector<Tensor>& params_;
  std::vector<bool> previous_;
};

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

void MaskedSgd::step(std::span<Tensor> params, std::span<const Tensor> grads,
                     std::span<const std::vector<char>> masks,
                     double learning_rate) {
  if (params.size() != grads.size() || params.size() != masks.size()) {
    throw ContractError("optimizer step needs one gradient and mask per parameter");
  }
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.numel(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto g = grads[i].data();
    const auto& m = masks[i];
    auto& v = velocity_[i];
    if (g.size() != w.size() || m.size() != w.size()) {
      throw DimensionError("gradient or mask size disagrees with parameter");
    }
    for (std::size_t e = 0; e < w.size(); ++e) {
      if (!m[e]) continue;
      const double grad = g[e] + weight_decay_ * w[e];
      v[e] = momentum_ * v[e] + grad;
      w[e] -= learning_rate * v[e];
    }
  }
}

double scheduled_rate(const TrainConfig& cfg, std::size_t step,
                      std::size_t total_steps) {
  if (cfg.schedule == Schedule::kConstant || total_steps == 0) {
    return cfg.learning_rate;
  }
  const double progress =
      static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainResult finetune(Model& model, const SelectionMask& mask,
                     const Dataset& train, const Dataset& val,
                     const TrainConfig& cfg) {
  cfg.validate();
  mask.validate(model);
  if (train.empty() || val.empty()) {
    throw ContractError("finetune needs non-empty train and validation sets");
  }
  train.validate();
  val.validate();
  if (train.num_classes > model.num_classes()) {
    throw DataError("dataset has more classes than the model head");
  }

  std::vector<Tensor> params = model.parameters();
  const auto masks = update_masks(model, mask, cfg.train_head);
  TrainableScope trainable(params);
  MaskedSgd optimizer(cfg.momentum, cfg.weight_decay);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  const std::size_t batches_per_epoch =
      (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches_per_epoch * cfg.epochs;
  std::size_t step = 0;

  TrainResult result;
  result.budget_k = mask.k();
  std::vector<Tensor> grads(params.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      Dataset batch = train.subset(
          std::span<const std::size_t>(order).subspan(begin, end - begin));
      double loss_value = 0.0;
      try {
        Tensor loss = cross_entropy(model.forward(batch.features), batch.labels);
        loss_value = loss.item();
        GradientMap grad_map = backward(loss);
        for (std::size_t i = 0; i < params.size(); ++i) {
          const Tensor* g = grad_map.find(params[i]);
          grads[i] = g ? *g : Tensor::zeros(params[i].shape());
        }
      } catch (const NumericError& e) {
        GradTape::current().clear();
        throw DivergenceError("training diverged in epoch " +
                                  std::to_string(epoch) + ": " + e.what(),
                              static_cast<int>(epoch));
      }
      optimizer.step(params, grads, masks,
                     scheduled_rate(cfg, step++, total_steps));
      loss_sum += loss_value * static_cast<double>(end - begin);
    }
    const double train_loss = loss_sum / static_cast<double>(train.size());
    const double acc = evaluate(model, val);
    result.curve.push_back({epoch, train_loss, acc});
  }
  result.final_train_loss = result.curve.back().train_loss;
  result.val_accuracy = result.curve.back().val_accuracy;
  result.l0_non_head = l0_distance(model, false);
  result.l0_total = l0_distance(model, true);
  return result;
}

double evaluate(const Model& model, const Dataset& dataset,
                std::size_t batch_size) {
  if (dataset.empty()) throw ContractError("evaluate needs a non-empty dataset");
  dataset.validate();
  if (dataset.num_classes > model.num_classes()) {
    throw DataError("dataset has more classes than the model head");
  }
  NoGradGuard no_grad;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    const std::size_t end = std::min(dataset.size(), begin + batch_size);
    Tensor logits = model.forward(dataset.batch_features(begin, end));
    const std::size_t classes = logits.extent(1);
    auto values = logits.data();
    for (std::size_t r = 0; r < end - begin; ++r) {
      const double* row = values.data() + r * classes;
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (row[c] > row[best]) best = c;
      }
      if (static_cast<int>(best) == dataset.labels[begin + r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

std::size_t l0_distance(const Model& model, bool include_head) {
  const auto params = model.parameters();
  const auto& snapshot = model.snapshot();
  const std::size_t tensors = include_head ? params.size() : params.size() - 2;
  std::size_t changed = 0;
  for (std::size_t i = 0; i < tensors; ++i) {
    auto now = params[i].data();
    for (std::size_t e = 0; e < now.size(); ++e) {
      if (now[e] != snapshot[i][e]) ++changed;
    }
  }
  return changed;
}

std::uint64_t frozen_slice_hash(const Model& model, const SelectionMask& mask,
                                bool from_snapshot) {
  ContentHash h;
  for (const auto& a : model.addresses(true)) {
    if (mask.contains(a)) continue;
    h.update(a.flat());
    h.update(std::span<const double>(
        std::vector<double>{from_snapshot ? model.snapshot_value(a)
                                          : model.parameter(a)}));
  }
  return h.digest();
}

std::string to_json(const TrainResult& result) {
  nlohmann::json doc;
  doc["final_train_loss"] = result.final_train_loss;
  doc["val_accuracy"] = result.val_accuracy;
  doc["budget_k"] = result.budget_k;
  doc["l0_non_head"] = result.l0_non_head;
  doc["l0_total"] = result.l0_total;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : result.curve) {
    curve.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"val_acc", e.val_accuracy}});
  }
  doc["curve"] = std::move(curve);
  return doc.dump(2);
}

TrainResult train_result_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    TrainResult r;
    r.final_train_loss = doc.at("final_train_loss").get<double>();
    r.val_accuracy = doc.at("val_accuracy").get<double>();
    r.budget_k = doc.at("budget_k").get<std::size_t>();
    r.l0_non_head = doc.at("l0_non_head").get<std::size_t>();
    r.l0_total = doc.at("l0_total").get<std::size_t>();
    for (const auto& e : doc.at("curve")) {
      r.curve.push_back({e.at("epoch").get<std::size_t>(),
                         e.at("train_loss").get<double>(),
                         e.at("val_acc").get<double>()});
    }
    return r;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("train result: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("train result: ") + e.what(), 0);
  }
}

void write_curves_csv(const TrainResult& result, std::ostream& out) {
  out << "epoch,train_loss,val_acc\n";
  char line[96];
  for (const auto& e : result.curve) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", e.epoch, e.train_loss,
                  e.val_accuracy);
    out << line;
  }
}

}  // namespace fps
