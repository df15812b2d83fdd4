#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fps/address.hpp"
#include "fps/dataset.hpp"
#include "fps/model.hpp"
#include "fps/selector.hpp"

namespace fps::harness {

struct PlantedSpec {
  Architecture architecture;
  std::uint64_t model_seed = 0;
  double plant_fraction = 0.01;  // in (0, 0.05]
  double shift_magnitude = 2.0;
  std::uint64_t data_seed = 0;
  std::size_t samples = 2000;
  // Inputs outside the first `active_features` are always zero; 0 keeps all.
  std::size_t active_features = 0;
};

// The student is theta_0. The teacher copies it and moves every weight in
// `planted` by +-shift_magnitude; labels are the teacher's argmax.
struct PlantedTask {
  Model student;
  Model teacher;
  std::vector<ParameterAddress> planted;
  Dataset data;
};

// Planted weights are drawn among tapped-layer weights whose input is not
// constantly zero. |S| = round(plant_fraction * eligible), at least 1.
PlantedTask make_planted_task(const PlantedSpec& spec);

// |mask & planted| / |planted|.
double recovery_rate(const SelectionMask& mask,
                     std::span<const ParameterAddress> planted);

}  // namespace fps::harness
