#include <algorithm>
#include <cmath>
#include <random>

#include "fps/autograd.hpp"
#include "fps/errors.hpp"
#include "fps/selector.hpp"

namespace fps {
namespace {

struct Candidate {
  double score;
  std::uint64_t code;
};

// Higher score first; ties go to the lowest flat address.
bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.code < b.code;
}

// Per-layer flags of which parameters are already selected; weights at
// k * fan_out + j, biases after all weights.
class Picks {
 public:
  explicit Picks(const ImportanceScore& scores) : scores_(scores) {
    for (const auto& l : scores.layers) {
      flags_.emplace_back(l.fan_in * l.fan_out + l.fan_out, 0);
    }
  }

  Candidate weight(std::size_t layer, std::size_t k, std::size_t j) const {
    const auto& l = scores_.layers[layer];
    return {l.weight.data()[k * l.fan_out + j],
            ParameterAddress::weight(l.layer_id, static_cast<std::uint32_t>(j),
                                     static_cast<std::uint32_t>(k))
                .flat()};
  }
  Candidate bias(std::size_t layer, std::size_t j) const {
    const auto& l = scores_.layers[layer];
    return {l.bias.data()[j],
            ParameterAddress::bias(l.layer_id, static_cast<std::uint32_t>(j)).flat()};
  }

  void take(std::size_t layer, const Candidate& c) {
    const auto& l = scores_.layers[layer];
    const auto a = ParameterAddress::from_flat(c.code);
    const std::size_t slot = a.is_bias() ? l.fan_in * l.fan_out + a.out_index
                                         : a.in_index * l.fan_out + a.out_index;
    flags_[layer][slot] = 1;
    chosen_.push_back(c.code);
  }

  // Every candidate not taken yet, across all layers.
  std::vector<std::pair<std::size_t, Candidate>> remaining() const {
    std::vector<std::pair<std::size_t, Candidate>> out;
    for (std::size_t i = 0; i < scores_.layers.size(); ++i) {
      const auto& l = scores_.layers[i];
      for (std::size_t k = 0; k < l.fan_in; ++k) {
        for (std::size_t j = 0; j < l.fan_out; ++j) {
          if (!flags_[i][k * l.fan_out + j]) out.emplace_back(i, weight(i, k, j));
        }
      }
      for (std::size_t j = 0; j < l.fan_out; ++j) {
        if (!flags_[i][l.fan_in * l.fan_out + j]) out.emplace_back(i, bias(i, j));
      }
    }
    return out;
  }

  std::size_t count() const { return chosen_.size(); }
  std::vector<std::uint64_t>& chosen() { return chosen_; }

 private:
  const ImportanceScore& scores_;
  std::vector<std::vector<char>> flags_;
  std::vector<std::uint64_t> chosen_;
};

// Moves the best `m` candidates to the front (unordered) and returns how many
// were kept.
std::size_t keep_best(std::vector<Candidate>& pool, std::size_t m) {
  if (m >= pool.size()) return pool.size();
  std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m),
                   pool.end(), ranks_before);
  return m;
}

void fill_residual(Picks& picks, std::size_t k) {
  if (picks.count() >= k) return;
  auto rest = picks.remaining();
  const std::size_t need = k - picks.count();
  auto by_rank = [](const auto& a, const auto& b) {
    return ranks_before(a.second, b.second);
  };
  if (need < rest.size()) {
    std::nth_element(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(need),
                     rest.end(), by_rank);
  }
  for (std::size_t i = 0; i < need; ++i) picks.take(rest[i].first, rest[i].second);
}

SelectionMask finish(const ImportanceScore& scores, Scheme scheme,
                     std::size_t k, std::vector<std::uint64_t>& codes) {
  std::sort(codes.begin(), codes.end());
  SelectionMask mask;
  mask.model_hash = scores.model_hash;
  mask.scheme = scheme;
  mask.variant = scores.variant;
  mask.budget = k;
  mask.addresses.reserve(codes.size());
  for (auto c : codes) mask.addresses.push_back(ParameterAddress::from_flat(c));
  return mask;
}

std::size_t resolve_budget(const ImportanceScore& scores, const BudgetSpec& budget) {
  const std::size_t total = scores.parameter_count();
  const std::size_t k = budget.resolve(total);
  if (k > total) {
    throw ContractError("budget k=" + std::to_string(k) + " exceeds the " +
                        std::to_string(total) + " eligible parameters");
  }
  return k;
}

}  // namespace

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kNeuronLevel: return "neuron-level";
    case Scheme::kLayerLevel: return "layer-level";
    case Scheme::kGlobal: return "global";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view text) {
  if (text == "neuron-level" || text == "neuron") return Scheme::kNeuronLevel;
  if (text == "layer-level" || text == "layer") return Scheme::kLayerLevel;
  if (text == "global") return Scheme::kGlobal;
  throw ConfigError("unknown selection scheme '" + std::string(text) + "'");
}

BudgetSpec BudgetSpec::fraction(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ContractError("budget fraction must be in (0, 1], got " +
                        std::to_string(p));
  }
  BudgetSpec b;
  b.is_fraction_ = true;
  b.fraction_ = p;
  return b;
}

BudgetSpec BudgetSpec::absolute(std::size_t k) {
  if (k == 0) throw ContractError("budget k must be >= 1");
  BudgetSpec b;
  b.count_ = k;
  return b;
}

std::size_t BudgetSpec::resolve(std::size_t eligible) const {
  if (!is_fraction_) return count_;
  const auto k = static_cast<std::size_t>(
      std::llround(fraction_ * static_cast<double>(eligible)));
  return std::max<std::size_t>(k, 1);
}

SelectionMask select_neuron_level(const ImportanceScore& scores,
                                  const BudgetSpec& budget) {
  const std::size_t k = resolve_budget(scores, budget);
  const std::size_t neurons = scores.neuron_count();
  if (neurons == 0 || k < neurons) {
    throw ContractError("neuron-level selection needs k >= " +
                        std::to_string(neurons) + " (one per neuron), got k=" +
                        std::to_string(k));
  }
  const std::size_t per_neuron = k / neurons;

  Picks picks(scores);
  std::vector<Candidate> pool;
  for (std::size_t i = 0; i < scores.layers.size(); ++i) {
    const auto& l = scores.layers[i];
    for (std::size_t j = 0; j < l.fan_out; ++j) {
      pool.clear();
      for (std::size_t in = 0; in < l.fan_in; ++in) pool.push_back(picks.weight(i, in, j));
      pool.push_back(picks.bias(i, j));
      const std::size_t kept = keep_best(pool, per_neuron);
      for (std::size_t t = 0; t < kept; ++t) picks.take(i, pool[t]);
    }
  }
  fill_residual(picks, k);
  return finish(scores, Scheme::kNeuronLevel, k, picks.chosen());
}

SelectionMask select_layer_level(const ImportanceScore& scores,
                                 const BudgetSpec& budget) {
  const std::size_t k = resolve_budget(scores, budget);
  const std::size_t layers = scores.layers.size();
  if (layers == 0 || k < layers) {
    throw ContractError("layer-level selection needs k >= " +
                        std::to_string(layers) + " (one per layer), got k=" +
                        std::to_string(k));
  }
  const std::size_t per_layer = k / layers;

  Picks picks(scores);
  std::vector<Candidate> pool;
  for (std::size_t i = 0; i < layers; ++i) {
    const auto& l = scores.layers[i];
    pool.clear();
    for (std::size_t in = 0; in < l.fan_in; ++in) {
      for (std::size_t j = 0; j < l.fan_out; ++j) pool.push_back(picks.weight(i, in, j));
    }
    for (std::size_t j = 0; j < l.fan_out; ++j) pool.push_back(picks.bias(i, j));
    const std::size_t kept = keep_best(pool, per_layer);
    for (std::size_t t = 0; t < kept; ++t) picks.take(i, pool[t]);
  }
  fill_residual(picks, k);
  return finish(scores, Scheme::kLayerLevel, k, picks.chosen());
}

SelectionMask select(const ImportanceScore& scores, const BudgetSpec& budget,
                     Scheme scheme) {
  switch (scheme) {
    case Scheme::kNeuronLevel: return select_neuron_level(scores, budget);
    case Scheme::kLayerLevel: return select_layer_level(scores, budget);
    case Scheme::kGlobal: break;
  }
  throw ContractError("score-based selection needs a neuron- or layer-level scheme");
}

SelectionMask select_baseline(BaselineKind kind, const Model& model,
                              const BudgetSpec& budget, std::uint64_t seed) {
  SelectionMask mask;
  mask.model_hash = model.hash();
  mask.scheme = Scheme::kGlobal;

  switch (kind) {
    case BaselineKind::kRandom: {
      auto eligible = model.addresses(true);
      const std::size_t k = budget.resolve(eligible.size());
      if (k > eligible.size()) {
        throw ContractError("random baseline: k=" + std::to_string(k) +
                            " exceeds the " + std::to_string(eligible.size()) +
                            " eligible parameters");
      }
      std::mt19937_64 rng(seed);
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
        std::swap(eligible[i], eligible[pick(rng)]);
      }
      eligible.resize(k);
      std::sort(eligible.begin(), eligible.end());
      mask.variant = "random";
      mask.addresses = std::move(eligible);
      break;
    }
    case BaselineKind::kBiasOnly: {
      for (const auto& a : model.addresses(false)) {
        if (a.is_bias()) mask.addresses.push_back(a);
      }
      if (mask.addresses.empty()) throw ContractError("model has no biases");
      mask.variant = "bias";
      break;
    }
    case BaselineKind::kLinearHeadOnly:
      mask.variant = "linear";
      break;
  }
  mask.budget = mask.addresses.size();
  return mask;
}

SelectionMask select_fps(Model& model, const Dataset& dataset,
                         const BudgetSpec& budget, const FpsOptions& options) {
  return with_grad_disabled([&] {
    ActivationStats stats = collect(model, dataset, options.batch_size);
    ImportanceScore scores =
        score_fps(model, stats, options.norm, options.use_weight_magnitude);
    return select(scores, budget, options.scheme);
  });
}

bool SelectionMask::contains(const ParameterAddress& address) const {
  return std::binary_search(addresses.begin(), addresses.end(), address);
}

void SelectionMask::validate(const Model& model) const {
  if (model_hash != model.hash()) {
    throw ContractError("mask was built for a different model");
  }
  if (addresses.size() != budget) {
    throw ContractError("mask holds " + std::to_string(addresses.size()) +
                        " addresses but declares k=" + std::to_string(budget));
  }
  for (std::size_t i = 0; i < addresses.size(); ++i) {
    if (!model.contains(addresses[i])) {
      throw ContractError("mask address " + addresses[i].to_string() +
                          " not in model");
    }
    if (i > 0 && !(addresses[i - 1] < addresses[i])) {
      throw ContractError("mask addresses must be sorted and unique");
    }
  }
}

}  // namespace fps
