#include "fps/harness/config.hpp"

#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <sstream>

#include "fps/errors.hpp"

namespace fps::harness {

using nlohmann::json;

std::string Strategy::variant() const {
  switch (kind) {
    case StrategyKind::kFps: return fps_variant_tag(norm, use_weight_magnitude);
    case StrategyKind::kGps: return "gps";
    case StrategyKind::kRandom: return "random";
    case StrategyKind::kBiasOnly: return "bias-only";
    case StrategyKind::kLinearHeadOnly: return "linear-head-only";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  Strategy s;
  s.name = std::string(name);
  auto scheme_of = [&](std::string_view tail) {
    if (tail == "neuron") return Scheme::kNeuronLevel;
    if (tail == "layer") return Scheme::kLayerLevel;
    throw ConfigError("unknown strategy '" + s.name + "'");
  };
  if (name == "random") {
    s.kind = StrategyKind::kRandom;
    s.scheme = Scheme::kGlobal;
  } else if (name == "bias") {
    s.kind = StrategyKind::kBiasOnly;
    s.scheme = Scheme::kGlobal;
  } else if (name == "linear") {
    s.kind = StrategyKind::kLinearHeadOnly;
    s.scheme = Scheme::kGlobal;
  } else if (name == "gps") {
    s.kind = StrategyKind::kGps;
  } else if (name.starts_with("gps-")) {
    s.kind = StrategyKind::kGps;
    s.scheme = scheme_of(name.substr(4));
  } else if (name.starts_with("fps-")) {
    std::string_view rest = name.substr(4);
    if (rest.starts_with("act-")) {
      s.use_weight_magnitude = false;
      rest.remove_prefix(4);
    }
    if (rest.starts_with("l1-")) {
      s.norm = Norm::kL1;
    } else if (rest.starts_with("l2-")) {
      s.norm = Norm::kL2;
    } else {
      throw ConfigError("unknown strategy '" + s.name + "'");
    }
    s.scheme = scheme_of(rest.substr(3));
  } else {
    throw ConfigError("unknown strategy '" + s.name + "'");
  }
  return s;
}

void ExperimentConfig::reseed(std::uint64_t new_seed) {
  seed = new_seed;
  if (!dataset_seed_explicit) dataset.seed = new_seed;
  if (!train_seed_explicit) train.seed = new_seed;
}

namespace {

void only_keys(const json& obj, std::string_view where,
               std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw ConfigError(std::string(where) + " must be an object");
  }
  for (const auto& item : obj.items()) {
    bool known = false;
    for (std::string_view k : allowed) known = known || item.key() == k;
    if (!known) {
      throw ConfigError("unknown key '" + item.key() + "' in " + std::string(where));
    }
  }
}

template <typename T>
T get(const json& obj, const char* key, std::string_view where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + "." + key + " is missing or has the wrong type");
  }
}

template <typename T>
void maybe(const json& obj, const char* key, std::string_view where, T& out) {
  if (obj.contains(key)) out = get<T>(obj, key, where);
}

std::size_t count_of(const json& obj, const char* key, std::string_view where) {
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError(std::string(where) + "." + key + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

void maybe_count(const json& obj, const char* key, std::string_view where,
                 std::size_t& out) {
  if (obj.contains(key)) out = count_of(obj, key, where);
}

ModelSpec parse_model(const json& j) {
  ModelSpec spec;
  if (j.contains("checkpoint")) {
    only_keys(j, "model", {"checkpoint"});
    spec.checkpoint = get<std::string>(j, "checkpoint", "model");
    return spec;
  }
  const auto arch = get<std::string>(j, "arch", "model");
  if (arch == "mlp") {
    only_keys(j, "model", {"arch", "dims"});
    MlpConfig cfg;
    cfg.dims = get<std::vector<std::size_t>>(j, "dims", "model");
    if (cfg.dims.size() < 2) throw ConfigError("model.dims needs at least 2 widths");
    spec.architecture = cfg;
  } else if (arch == "mini-transformer") {
    only_keys(j, "model", {"arch", "d_model", "d_ff", "n_classes", "seq_len"});
    TransformerConfig cfg;
    cfg.d_model = count_of(j, "d_model", "model");
    cfg.d_ff = count_of(j, "d_ff", "model");
    cfg.n_classes = count_of(j, "n_classes", "model");
    cfg.seq_len = count_of(j, "seq_len", "model");
    spec.architecture = cfg;
  } else {
    throw ConfigError("unknown model.arch '" + arch + "'");
  }
  return spec;
}

void parse_dataset(const json& j, ExperimentConfig& cfg) {
  constexpr std::string_view where = "dataset";
  only_keys(j, where,
            {"source", "seed", "split", "standardize", "samples", "features",
             "classes", "separation", "plant_fraction", "shift_magnitude",
             "active_features", "images", "labels", "csv", "label_column"});
  DatasetSpec& d = cfg.dataset;
  d.source = parse_data_source(get<std::string>(j, "source", where));
  if (j.contains("seed")) {
    d.seed = get<std::uint64_t>(j, "seed", where);
    cfg.dataset_seed_explicit = true;
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    only_keys(s, "dataset.split", {"train", "val", "test"});
    d.split = SplitFractions{0.0, 0.0, 0.0};
    maybe(s, "train", "dataset.split", d.split.train);
    maybe(s, "val", "dataset.split", d.split.val);
    maybe(s, "test", "dataset.split", d.split.test);
  }
  maybe(j, "standardize", where, d.standardize);
  maybe_count(j, "samples", where, d.samples);
  maybe_count(j, "features", where, d.features);
  maybe_count(j, "classes", where, d.classes);
  maybe(j, "separation", where, d.separation);
  maybe(j, "plant_fraction", where, d.plant_fraction);
  maybe(j, "shift_magnitude", where, d.shift_magnitude);
  maybe_count(j, "active_features", where, d.active_features);
  if (j.contains("images")) d.images = get<std::string>(j, "images", where);
  if (j.contains("labels")) d.labels = get<std::string>(j, "labels", where);
  if (j.contains("csv")) d.csv = get<std::string>(j, "csv", where);
  maybe(j, "label_column", where, d.label_column);
}

BudgetSpec parse_budget(const json& j) {
  only_keys(j, "budget", {"fraction", "k"});
  if (j.contains("fraction") == j.contains("k")) {
    throw ConfigError("budget needs exactly one of 'fraction' or 'k'");
  }
  try {
    if (j.contains("k")) return BudgetSpec::absolute(count_of(j, "k", "budget"));
    return BudgetSpec::fraction(get<double>(j, "fraction", "budget"));
  } catch (const ContractError& e) {
    throw ConfigError(std::string("budget: ") + e.what());
  }
}

void parse_train(const json& j, ExperimentConfig& cfg) {
  constexpr std::string_view where = "train";
  only_keys(j, where,
            {"epochs", "batch_size", "learning_rate", "momentum",
             "weight_decay", "seed", "schedule", "train_head"});
  TrainConfig& t = cfg.train;
  maybe_count(j, "epochs", where, t.epochs);
  maybe_count(j, "batch_size", where, t.batch_size);
  maybe(j, "learning_rate", where, t.learning_rate);
  maybe(j, "momentum", where, t.momentum);
  maybe(j, "weight_decay", where, t.weight_decay);
  if (j.contains("seed")) {
    t.seed = get<std::uint64_t>(j, "seed", where);
    cfg.train_seed_explicit = true;
  }
  if (j.contains("schedule")) {
    const auto s = get<std::string>(j, "schedule", where);
    if (s == "cosine") {
      t.schedule = Schedule::kCosine;
    } else if (s == "constant") {
      t.schedule = Schedule::kConstant;
    } else {
      throw ConfigError("train.schedule must be 'cosine' or 'constant'");
    }
  }
  maybe(j, "train_head", where, t.train_head);
  try {
    t.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
}

void parse_selection(const json& j, SelectionSettings& s) {
  only_keys(j, "selection", {"batch_size", "gps_accumulation"});
  maybe_count(j, "batch_size", "selection", s.batch_size);
  if (s.batch_size == 0) throw ConfigError("selection.batch_size must be positive");
  if (j.contains("gps_accumulation")) {
    const auto a = get<std::string>(j, "gps_accumulation", "selection");
    if (a == "full-epoch") {
      s.accumulation = GpsAccumulation::kFullEpoch;
    } else if (a == "single-batch") {
      s.accumulation = GpsAccumulation::kSingleBatch;
    } else {
      throw ConfigError("selection.gps_accumulation must be 'full-epoch' or 'single-batch'");
    }
  }
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
  only_keys(root, "config",
            {"seed", "model", "dataset", "budget", "train", "selection",
             "strategies", "parallel", "timing_repetitions"});

  ExperimentConfig cfg;
  maybe(root, "seed", "config", cfg.seed);
  if (!root.contains("model")) throw ConfigError("config.model is required");
  cfg.model = parse_model(root.at("model"));
  if (!root.contains("dataset")) throw ConfigError("config.dataset is required");
  parse_dataset(root.at("dataset"), cfg);
  if (root.contains("budget")) cfg.budget = parse_budget(root.at("budget"));
  if (root.contains("train")) parse_train(root.at("train"), cfg);
  if (root.contains("selection")) parse_selection(root.at("selection"), cfg.selection);
  if (root.contains("strategies")) {
    for (const auto& name : get<std::vector<std::string>>(root, "strategies", "config")) {
      cfg.strategies.push_back(parse_strategy(name));
    }
  }
  maybe(root, "parallel", "config", cfg.parallel);
  maybe_count(root, "timing_repetitions", "config", cfg.timing_repetitions);
  if (cfg.timing_repetitions == 0) {
    throw ConfigError("config.timing_repetitions must be positive");
  }
  cfg.reseed(cfg.seed);
  try {
    cfg.dataset.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  ExperimentConfig cfg = parse_config(text.str());

  // Relative paths inside the config are relative to the config file.
  const std::filesystem::path base = path.parent_path();
  for (auto* p : {&cfg.model.checkpoint, &cfg.dataset.images,
                  &cfg.dataset.labels, &cfg.dataset.csv}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return cfg;
}

}  // namespace fps::harness
