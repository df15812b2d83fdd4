#include <cmath>

#include "fps/autograd.hpp"
#include "fps/errors.hpp"
#include "fps/ops.hpp"
#include "fps/selector.hpp"

namespace fps {

double ImportanceScore::at(const ParameterAddress& a) const {
  for (const auto& l : layers) {
    if (l.layer_id != a.layer_id) continue;
    if (a.out_index >= l.fan_out || (!a.is_bias() && a.in_index >= l.fan_in)) {
      break;
    }
    return a.is_bias() ? l.bias.data()[a.out_index]
                       : l.weight.data()[a.in_index * l.fan_out + a.out_index];
  }
  throw ContractError("no score for address " + a.to_string());
}

std::size_t ImportanceScore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.fan_in * l.fan_out + l.fan_out;
  return n;
}

std::size_t ImportanceScore::neuron_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.fan_out;
  return n;
}

std::size_t ImportanceScore::bytes() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.bytes() + l.bias.bytes();
  return n;
}

std::string fps_variant_tag(Norm norm, bool use_weight_magnitude) {
  std::string tag = use_weight_magnitude ? "fps-" : "fps-act-";
  return tag + (norm == Norm::kL1 ? "l1" : "l2");
}

ImportanceScore score_fps(const Model& model, const ActivationStats& stats,
                          Norm norm, bool use_weight_magnitude) {
  NoGradGuard no_grad;
  if (stats.model_hash() != model.hash()) {
    throw ContractError("activation statistics belong to a different model");
  }
  ImportanceScore scores;
  scores.model_hash = model.hash();
  scores.variant = fps_variant_tag(norm, use_weight_magnitude);

  for (const auto& layer : model.tapped_layers()) {
    const std::size_t fan_in = layer.fan_in(), fan_out = layer.fan_out();
    std::vector<double> agg(fan_in);
    for (std::size_t k = 0; k < fan_in; ++k) {
      agg[k] = norm == Norm::kL1 ? mean_abs(stats, layer.id(), k)
                                 : rms(stats, layer.id(), k);
    }
    std::vector<double> w_scores(fan_in * fan_out);
    std::vector<double> b_scores(fan_out);
    auto w = layer.weight().data();
    auto b = layer.bias().data();
    for (std::size_t k = 0; k < fan_in; ++k) {
      for (std::size_t j = 0; j < fan_out; ++j) {
        const std::size_t at = k * fan_out + j;
        w_scores[at] = use_weight_magnitude ? std::abs(w[at]) * agg[k] : agg[k];
      }
    }
    for (std::size_t j = 0; j < fan_out; ++j) {
      b_scores[j] = use_weight_magnitude ? std::abs(b[j]) : 1.0;
    }
    scores.layers.push_back(
        {layer.id(), fan_in, fan_out,
         make_op_output({fan_in, fan_out}, std::move(w_scores), "score_fps"),
         make_op_output({fan_out}, std::move(b_scores), "score_fps")});
  }
  return scores;
}

namespace {

// Restores requires_grad flags on exit.
class RequiresGradScope {
 public:
  explicit RequiresGradScope(std::vector<Tensor> params)
      : params_(std::move(params)) {
    for (auto& p : params_) {
      previous_.push_back(p.requires_grad());
      p.set_requires_grad(true);
    }
  }
  ~RequiresGradScope() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      params_[i].set_requires_grad(previous_[i]);
    }
  }
  RequiresGradScope(const RequiresGradScope&) = delete;
  RequiresGradScope& operator=(const RequiresGradScope&) = delete;

 private:
  std::vector<Tensor> params_;
  std::vector<bool> previous_;
};

void add_abs(Tensor& total, const Tensor& grad) {
  auto t = total.mutable_data();
  auto g = grad.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += std::abs(g[i]);
}

}  // namespace

ImportanceScore score_gps(Model& model, const Dataset& dataset,
                          const GpsOptions& options) {
  if (dataset.empty()) throw ContractError("score_gps needs a non-empty dataset");
  if (options.batch_size == 0) throw ContractError("batch size must be >= 1");
  if (!grad_enabled()) {
    throw StateError("gradient-based scoring needs grad mode on");
  }
  const LossFn loss_fn =
      options.loss ? options.loss
                   : LossFn([](const Tensor& logits, std::span<const int> labels) {
                       return cross_entropy(logits, labels);
                     });

  ImportanceScore scores;
  scores.model_hash = model.hash();
  scores.variant = "gps";
  for (const auto& layer : model.tapped_layers()) {
    scores.layers.push_back({layer.id(), layer.fan_in(), layer.fan_out(),
                             Tensor::zeros({layer.fan_in(), layer.fan_out()}),
                             Tensor::zeros({layer.fan_out()})});
  }

  RequiresGradScope unfrozen(model.parameters());
  for (std::size_t begin = 0; begin < dataset.size();
       begin += options.batch_size) {
    const std::size_t end = std::min(dataset.size(), begin + options.batch_size);
    GradientMap grads = [&] {
      Tensor logits = model.forward(dataset.batch_features(begin, end));
      Tensor loss = loss_fn(logits, dataset.batch_labels(begin, end));
      return backward(loss);
    }();
    for (std::size_t i = 0; i < scores.layers.size(); ++i) {
      const LinearLayer& layer = model.tapped_layers()[i];
      if (const Tensor* g = grads.find(layer.weight())) add_abs(scores.layers[i].weight, *g);
      if (const Tensor* g = grads.find(layer.bias())) add_abs(scores.layers[i].bias, *g);
    }
    if (options.accumulation == GpsAccumulation::kSingleBatch) break;
  }
  return scores;
}

}  // namespace fps
