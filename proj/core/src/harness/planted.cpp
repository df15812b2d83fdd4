#include "fps/harness/planted.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fps/autograd.hpp"
#include "fps/errors.hpp"

namespace fps::harness {
namespace {

std::vector<int> argmax_labels(const Model& model, const Tensor& inputs) {
  NoGradGuard no_grad;
  const Tensor logits = model.forward(inputs);
  const std::size_t n = logits.extent(0);
  const std::size_t c = logits.extent(1);
  auto v = logits.data();
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (v[i * c + j] > v[i * c + best]) best = j;
    }
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace

PlantedTask make_planted_task(const PlantedSpec& spec) {
  if (!(spec.plant_fraction > 0.0 && spec.plant_fraction <= 0.05)) {
    throw ContractError("plant_fraction must be in (0, 0.05]");
  }
  if (!(spec.shift_magnitude >= 0.0) || !std::isfinite(spec.shift_magnitude)) {
    throw ContractError("shift_magnitude must be finite and >= 0");
  }
  if (spec.samples == 0) throw ContractError("planted task needs samples");

  Model student = build_model(spec.architecture, spec.model_seed);
  const std::size_t width = student.input_size();
  const std::size_t active =
      spec.active_features == 0 ? width : std::min(spec.active_features, width);
  const bool mlp = std::holds_alternative<MlpConfig>(spec.architecture);

  // Candidates: weights whose input can be non-zero.
  std::vector<ParameterAddress> candidates;
  for (const ParameterAddress& a : student.addresses(true)) {
    if (a.is_bias()) continue;
    if (mlp && a.layer_id == 0 && a.in_index >= active) continue;
    candidates.push_back(a);
  }
  const auto wanted = static_cast<std::size_t>(std::llround(
      spec.plant_fraction * static_cast<double>(student.eligible_parameter_count())));
  const std::size_t count =
      std::clamp<std::size_t>(wanted, 1, candidates.size());

  std::mt19937_64 rng(spec.data_seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  candidates.resize(count);
  std::sort(candidates.begin(), candidates.end());

  Model teacher = student.clone();
  std::bernoulli_distribution coin(0.5);
  for (const ParameterAddress& a : candidates) {
    const double shift = coin(rng) ? spec.shift_magnitude : -spec.shift_magnitude;
    teacher.set_parameter(a, teacher.parameter(a) + shift);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(spec.samples * width, 0.0);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    for (std::size_t f = 0; f < active; ++f) x[i * width + f] = normal(rng);
  }
  Dataset data;
  data.features = Tensor::from_vector({spec.samples, width}, std::move(x));
  data.labels = argmax_labels(teacher, data.features);
  data.num_classes = student.num_classes();

  return PlantedTask{std::move(student), std::move(teacher),
                     std::move(candidates), std::move(data)};
}

double recovery_rate(const SelectionMask& mask,
                     std::span<const ParameterAddress> planted) {
  if (planted.empty()) throw ContractError("planted set is empty");
  std::size_t hit = 0;
  for (const ParameterAddress& a : planted) hit += mask.contains(a) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(planted.size());
}

}  // namespace fps::harness
