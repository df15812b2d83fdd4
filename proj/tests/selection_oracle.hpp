#pragma once

// Brute-force reference for neuron- and layer-level selection: full sorts, no
// partial selection, no shared code with the library's selector.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "fps/model.hpp"
#include "fps/selector.hpp"

namespace fps::testing {

struct Scored {
  double score;
  std::uint64_t code;
  std::size_t layer;   // position in scores.layers
  std::size_t neuron;  // global output-neuron index
};

inline std::vector<Scored> flatten(const ImportanceScore& s) {
  std::vector<Scored> all;
  std::size_t neuron_base = 0;
  for (std::size_t li = 0; li < s.layers.size(); ++li) {
    const auto& l = s.layers[li];
    for (std::size_t j = 0; j < l.fan_out; ++j) {
      for (std::size_t k = 0; k < l.fan_in; ++k) {
        all.push_back({l.weight.data()[k * l.fan_out + j],
                       (std::uint64_t(l.layer_id) << 48) | (std::uint64_t(j) << 24) | k,
                       li, neuron_base + j});
      }
      all.push_back({l.bias.data()[j],
                     (std::uint64_t(l.layer_id) << 48) | (std::uint64_t(j) << 24) | 0xFFFFFFu,
                     li, neuron_base + j});
    }
    neuron_base += l.fan_out;
  }
  return all;
}

inline void sort_by_rank(std::vector<Scored>& v) {
  std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) {
    return std::tie(b.score, a.code) < std::tie(a.score, b.code);
  });
}

// `group` maps a parameter to its unit (neuron or layer); every unit keeps
// its best `per_unit`, then the globally best leftovers fill up to k.
template <typename Group>
std::vector<std::uint64_t> oracle_select(const ImportanceScore& s, std::size_t k,
                                         std::size_t per_unit, Group group) {
  std::map<std::size_t, std::vector<Scored>> units;
  for (const Scored& p : flatten(s)) units[group(p)].push_back(p);
  std::vector<std::uint64_t> chosen;
  std::vector<Scored> rest;
  for (auto& [unit, members] : units) {
    sort_by_rank(members);
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i < per_unit) {
        chosen.push_back(members[i].code);
      } else {
        rest.push_back(members[i]);
      }
    }
  }
  sort_by_rank(rest);
  for (std::size_t i = 0; chosen.size() < k; ++i) chosen.push_back(rest[i].code);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline std::vector<std::uint64_t> oracle_neuron_level(const ImportanceScore& s,
                                                      std::size_t k) {
  return oracle_select(s, k, k / s.neuron_count(),
                       [](const Scored& p) { return p.neuron; });
}

inline std::vector<std::uint64_t> oracle_layer_level(const ImportanceScore& s,
                                                     std::size_t k) {
  return oracle_select(s, k, k / s.layers.size(),
                       [](const Scored& p) { return p.layer; });
}

inline std::vector<std::uint64_t> codes(const SelectionMask& m) {
  std::vector<std::uint64_t> out;
  for (const auto& a : m.addresses) out.push_back(a.flat());
  return out;
}

// Scores laid out like `model`, drawn from {0, 1, ..., levels - 1} when
// levels > 0 (many ties) or uniform in [0, 1) otherwise.
inline ImportanceScore synthetic_scores(const Model& model, std::mt19937_64& rng,
                                        int levels) {
  ImportanceScore s;
  s.model_hash = model.hash();
  s.variant = "synthetic";
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, std::max(levels - 1, 0));
  auto draw = [&] { return levels > 0 ? double(level(rng)) : uni(rng); };
  for (const auto& l : model.tapped_layers()) {
    std::vector<double> w(l.fan_in() * l.fan_out()), b(l.fan_out());
    for (double& v : w) v = draw();
    for (double& v : b) v = draw();
    s.layers.push_back({l.id(), l.fan_in(), l.fan_out(),
                        Tensor::from_vector({l.fan_in(), l.fan_out()}, std::move(w)),
                        Tensor::from_vector({l.fan_out()}, std::move(b))});
  }
  return s;
}

// Random MLP with 2 to 4 tapped layers and at most ~10k eligible parameters.
inline Model random_mlp(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> depth(2, 4), width(1, 40);
  std::vector<std::size_t> dims;
  const std::size_t layers = depth(rng);
  for (std::size_t i = 0; i <= layers; ++i) dims.push_back(width(rng));
  dims.push_back(3);
  return build_mlp(dims, rng());
}

}  // namespace fps::testing
