#include "fps/stats.hpp"

#include <cmath>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "fps/autograd.hpp"
#include "fps/errors.hpp"
#include "fps/hash.hpp"

namespace fps {
namespace {

using nlohmann::json;

constexpr const char* kStatsFormat = "fps-activation-stats";
constexpr int kStatsVersion = 1;

class StatsSink final : public ActivationSink {
 public:
  explicit StatsSink(ActivationStats& stats) : stats_(stats) {}
  void observe(std::uint32_t layer_id, const Tensor& rows) override {
    stats_.accumulate(layer_id, rows);
  }

 private:
  ActivationStats& stats_;
};

// Disarms taps when collection ends, including by exception.
class TapScope {
 public:
  TapScope(Model& model, ActivationSink& sink) : model_(model) {
    model_.arm_taps(sink);
  }
  ~TapScope() { model_.disarm_taps(); }
  TapScope(const TapScope&) = delete;
  TapScope& operator=(const TapScope&) = delete;

 private:
  Model& model_;
};

const ActivationStats::LayerMoments& checked_layer(const ActivationStats& s,
                                                   std::uint32_t layer_id,
                                                   std::size_t k) {
  const auto& m = s.layer(layer_id);
  if (m.count == 0) {
    throw ContractError("no observations for layer " + std::to_string(layer_id));
  }
  if (k >= m.sum_abs.numel()) {
    throw ContractError("input index " + std::to_string(k) +
                        " out of range for layer " + std::to_string(layer_id));
  }
  return m;
}

}  // namespace

ActivationStats::ActivationStats(const Model& model) : model_hash_(model.hash()) {
  for (const auto& l : model.tapped_layers()) {
    layers_.push_back(
        {l.id(), Tensor::zeros({l.fan_in()}), Tensor::zeros({l.fan_in()}), 0});
  }
}

const ActivationStats::LayerMoments& ActivationStats::layer(
    std::uint32_t layer_id) const {
  for (const auto& m : layers_) {
    if (m.layer_id == layer_id) return m;
  }
  throw ContractError("no statistics for layer " + std::to_string(layer_id));
}

ActivationStats::LayerMoments& ActivationStats::mutable_layer(
    std::uint32_t layer_id) {
  return const_cast<LayerMoments&>(std::as_const(*this).layer(layer_id));
}

void ActivationStats::accumulate(std::uint32_t layer_id, const Tensor& rows) {
  LayerMoments& m = mutable_layer(layer_id);
  const std::size_t width = m.sum_abs.numel();
  if (rows.dim() != 2 || rows.extent(1) != width) {
    throw DimensionError("layer " + std::to_string(layer_id) +
                         " statistics expect [n, " + std::to_string(width) +
                         "] rows, got " + to_string(rows.shape()));
  }
  auto x = rows.data();
  auto abs_sum = m.sum_abs.mutable_data();
  auto sq_sum = m.sum_sq.mutable_data();
  const std::size_t n = rows.extent(0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data() + r * width;
    for (std::size_t k = 0; k < width; ++k) {
      abs_sum[k] += std::abs(row[k]);
      sq_sum[k] += row[k] * row[k];
    }
  }
  m.count += n;
}

ActivationStats& ActivationStats::merge(const ActivationStats& other) {
  if (other.model_hash_ != model_hash_ || other.layers_.size() != layers_.size()) {
    throw ContractError("cannot merge statistics of different models");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& mine = layers_[i];
    const auto& theirs = other.layers_[i];
    if (mine.layer_id != theirs.layer_id ||
        mine.sum_abs.numel() != theirs.sum_abs.numel()) {
      throw ContractError("statistics layouts disagree");
    }
    auto a = mine.sum_abs.mutable_data();
    auto s = mine.sum_sq.mutable_data();
    auto oa = theirs.sum_abs.data();
    auto os = theirs.sum_sq.data();
    for (std::size_t k = 0; k < a.size(); ++k) {
      a[k] += oa[k];
      s[k] += os[k];
    }
    mine.count += theirs.count;
  }
  return *this;
}

std::size_t ActivationStats::neuron_count() const {
  std::size_t n = 0;
  for (const auto& m : layers_) n += m.sum_abs.numel();
  return n;
}

std::size_t ActivationStats::bytes() const {
  std::size_t n = 0;
  for (const auto& m : layers_) n += m.sum_abs.bytes() + m.sum_sq.bytes();
  return n;
}

bool ActivationStats::operator==(const ActivationStats& other) const {
  if (model_hash_ != other.model_hash_ || layers_.size() != other.layers_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.layer_id != b.layer_id || a.count != b.count ||
        a.sum_abs.to_vector() != b.sum_abs.to_vector() ||
        a.sum_sq.to_vector() != b.sum_sq.to_vector()) {
      return false;
    }
  }
  return true;
}

void ActivationStats::save(const std::filesystem::path& path) const {
  json doc;
  doc["format"] = kStatsFormat;
  doc["version"] = kStatsVersion;
  doc["model_hash"] = to_hex(model_hash_);
  json layers = json::array();
  for (const auto& m : layers_) {
    layers.push_back({{"layer_id", m.layer_id},
                      {"count", m.count},
                      {"sum_abs", m.sum_abs.to_vector()},
                      {"sum_sq", m.sum_sq.to_vector()}});
  }
  doc["layers"] = std::move(layers);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write statistics file " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("failed writing statistics file " + path.string());
}

ActivationStats ActivationStats::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read statistics file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("statistics file: ") + e.what(), e.byte);
  }
  try {
    if (doc.at("format") != kStatsFormat || doc.at("version") != kStatsVersion) {
      throw ParseError("unsupported statistics file format", 0);
    }
    ActivationStats stats;
    stats.model_hash_ = from_hex(doc.at("model_hash").get<std::string>());
    for (const auto& l : doc.at("layers")) {
      auto abs_values = l.at("sum_abs").get<std::vector<double>>();
      auto sq_values = l.at("sum_sq").get<std::vector<double>>();
      if (abs_values.size() != sq_values.size() || abs_values.empty()) {
        throw ParseError("moment vectors disagree in length", 0);
      }
      const std::size_t width = abs_values.size();
      stats.layers_.push_back(
          {l.at("layer_id").get<std::uint32_t>(),
           Tensor::from_vector({width}, std::move(abs_values)),
           Tensor::from_vector({width}, std::move(sq_values)),
           l.at("count").get<std::uint64_t>()});
    }
    return stats;
  } catch (const json::exception& e) {
    throw ParseError(std::string("statistics file: ") + e.what(), 0);
  }
}

ActivationStats collect(Model& model, const Dataset& dataset,
                        std::size_t batch_size) {
  if (dataset.empty()) throw ContractError("collect needs a non-empty dataset");
  if (batch_size == 0) throw ContractError("batch size must be >= 1");
  if (grad_enabled()) {
    throw StateError("activation statistics must be collected with grad mode off");
  }
  ActivationStats stats(model);
  StatsSink sink(stats);
  TapScope taps(model, sink);
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    const std::size_t end = std::min(dataset.size(), begin + batch_size);
    model.forward(dataset.batch_features(begin, end));
  }
  return stats;
}

double mean_abs(const ActivationStats& stats, std::uint32_t layer_id,
                std::size_t k) {
  const auto& m = checked_layer(stats, layer_id, k);
  return m.sum_abs.data()[k] / static_cast<double>(m.count);
}

double rms(const ActivationStats& stats, std::uint32_t layer_id, std::size_t k) {
  const auto& m = checked_layer(stats, layer_id, k);
  return std::sqrt(m.sum_sq.data()[k] / static_cast<double>(m.count));
}

}  // namespace fps
