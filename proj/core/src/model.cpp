#include "fps/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "fps/errors.hpp"
#include "fps/hash.hpp"
#include "fps/ops.hpp"

namespace fps {
namespace {

constexpr char kCheckpointMagic[8] = {'F', 'P', 'S', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kCheckpointVersion = 1;

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t offset() const { return offset_; }
  void need(std::size_t n, const char* what) const {
    if (offset_ + n > bytes_.size()) {
      throw ParseError(std::string("checkpoint truncated while reading ") + what,
                       offset_);
    }
  }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t offset_ = 0;
};

void require_dims(bool ok, const std::string& message) {
  if (!ok) throw ContractError(message);
}

void init_uniform(Tensor& weight, std::size_t fan_in, std::size_t fan_out,
                  std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : weight.mutable_data()) w = dist(rng);
}

}  // namespace

LinearLayer::LinearLayer(std::uint32_t layer_id, std::size_t fan_in,
                         std::size_t fan_out)
    : id_(layer_id), fan_in_(fan_in), fan_out_(fan_out) {
  require_dims(fan_in >= 1 && fan_out >= 1,
               "linear layer " + std::to_string(layer_id) +
                   " needs fan_in, fan_out >= 1");
  weight_ = Tensor::zeros({fan_in, fan_out});
  bias_ = Tensor::zeros({fan_out});
}

LinearLayer LinearLayer::clone() const {
  LinearLayer copy(id_, fan_in_, fan_out_);
  copy.weight_ = weight_.clone().set_requires_grad(weight_.requires_grad());
  copy.bias_ = bias_.clone().set_requires_grad(bias_.requires_grad());
  return copy;
}

Tensor LinearLayer::forward(const Tensor& input) const {
  if (input.dim() != 2 || input.extent(1) != fan_in_) {
    throw DimensionError("layer " + std::to_string(id_) + " expects [n, " +
                         std::to_string(fan_in_) + "] input, got " +
                         to_string(input.shape()));
  }
  if (tap_) tap_->observe(id_, input);
  return add(matmul(input, weight_), bias_);
}

Model::Model(Architecture arch, std::vector<LinearLayer> layers, LinearLayer head)
    : arch_(std::move(arch)), layers_(std::move(layers)), head_(std::move(head)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].id() != i) throw ContractError("layer ids must be 0..L-1");
  }
  if (head_.id() != layers_.size()) throw ContractError("head id must be L");
  capture_snapshot();
}

void Model::capture_snapshot() {
  snapshot_.clear();
  for (const Tensor& p : parameters()) snapshot_.push_back(p.to_vector());

  ContentHash h;
  h.update(kind());
  std::visit(
      [&](const auto& cfg) {
        using T = std::decay_t<decltype(cfg)>;
        if constexpr (std::is_same_v<T, MlpConfig>) {
          h.update(static_cast<std::uint64_t>(cfg.dims.size()));
          for (auto d : cfg.dims) h.update(static_cast<std::uint64_t>(d));
        } else {
          for (auto d : {cfg.d_model, cfg.d_ff, cfg.n_classes, cfg.seq_len}) {
            h.update(static_cast<std::uint64_t>(d));
          }
        }
      },
      arch_);
  for (const auto& values : snapshot_) {
    h.update(static_cast<std::uint64_t>(values.size()));
    h.update(std::span<const double>(values));
  }
  hash_ = h.digest();
}

Model Model::clone() const {
  std::vector<LinearLayer> layers;
  layers.reserve(layers_.size());
  for (const auto& l : layers_) layers.push_back(l.clone());
  Model copy(arch_, std::move(layers), head_.clone());
  copy.snapshot_ = snapshot_;
  copy.hash_ = hash_;
  return copy;
}

Model Model::rebased() const {
  std::vector<LinearLayer> layers;
  layers.reserve(layers_.size());
  for (const auto& l : layers_) layers.push_back(l.clone());
  return Model(arch_, std::move(layers), head_.clone());
}

std::string Model::kind() const {
  return std::holds_alternative<MlpConfig>(arch_) ? "mlp" : "mini-transformer";
}

std::size_t Model::input_size() const {
  if (const auto* mlp = std::get_if<MlpConfig>(&arch_)) return mlp->dims.front();
  const auto& t = std::get<TransformerConfig>(arch_);
  return t.seq_len * t.d_model;
}

std::size_t Model::num_classes() const { return head_.fan_out(); }

LinearLayer& Model::layer(std::uint32_t id) {
  if (id < layers_.size()) return layers_[id];
  if (id == head_.id()) return head_;
  throw ContractError("no layer with id " + std::to_string(id));
}

const LinearLayer& Model::layer(std::uint32_t id) const {
  return const_cast<Model*>(this)->layer(id);
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> params;
  params.reserve(2 * layer_count());
  for (const auto& l : layers_) {
    params.push_back(l.weight());
    params.push_back(l.bias());
  }
  params.push_back(head_.weight());
  params.push_back(head_.bias());
  return params;
}

std::size_t Model::parameter_count() const {
  return eligible_parameter_count() + head_.parameter_count();
}

std::size_t Model::eligible_parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

bool Model::contains(const ParameterAddress& a) const {
  if (a.layer_id > head_.id()) return false;
  const LinearLayer& l = layer(a.layer_id);
  if (a.out_index >= l.fan_out()) return false;
  return a.is_bias() || a.in_index < l.fan_in();
}

bool Model::is_eligible(const ParameterAddress& a) const {
  return contains(a) && !is_head(a.layer_id);
}

std::pair<const Tensor*, std::size_t> Model::locate(
    const ParameterAddress& a) const {
  if (!contains(a)) {
    throw ContractError("address " + a.to_string() + " not in model");
  }
  const LinearLayer& l = layer(a.layer_id);
  if (a.is_bias()) return {&l.bias(), a.out_index};
  return {&l.weight(), a.in_index * l.fan_out() + a.out_index};
}

std::size_t Model::snapshot_index(std::uint32_t layer_id) const {
  return 2 * static_cast<std::size_t>(layer_id);
}

double Model::parameter(const ParameterAddress& a) const {
  auto [tensor, offset] = locate(a);
  return tensor->data()[offset];
}

void Model::set_parameter(const ParameterAddress& a, double value) {
  auto [tensor, offset] = locate(a);
  const_cast<Tensor*>(tensor)->mutable_data()[offset] = value;
}

double Model::snapshot_value(const ParameterAddress& a) const {
  auto [tensor, offset] = locate(a);
  (void)tensor;
  return snapshot_[snapshot_index(a.layer_id) + (a.is_bias() ? 1 : 0)][offset];
}

std::vector<ParameterAddress> Model::addresses(bool eligible_only) const {
  std::vector<ParameterAddress> out;
  out.reserve(eligible_only ? eligible_parameter_count() : parameter_count());
  auto emit = [&](const LinearLayer& l) {
    for (std::uint32_t j = 0; j < l.fan_out(); ++j) {
      for (std::uint32_t k = 0; k < l.fan_in(); ++k) {
        out.push_back(ParameterAddress::weight(l.id(), j, k));
      }
      out.push_back(ParameterAddress::bias(l.id(), j));
    }
  };
  for (const auto& l : layers_) emit(l);
  if (!eligible_only) emit(head_);
  return out;
}

std::uint64_t Model::parameter_hash() const {
  ContentHash h;
  for (const Tensor& p : parameters()) h.update(p.data());
  return h.digest();
}

void Model::arm_taps(ActivationSink& sink) {
  for (auto& l : layers_) l.set_tap(&sink);
}

void Model::disarm_taps() {
  for (auto& l : layers_) l.set_tap(nullptr);
}

bool Model::taps_armed() const {
  for (const auto& l : layers_) {
    if (l.tap()) return true;
  }
  return false;
}

Tensor Model::forward(const Tensor& batch) const {
  return head_.forward(features(batch));
}

Tensor Model::features(const Tensor& batch) const {
  if (batch.dim() < 2 || batch.extent(0) < 1) {
    throw DimensionError("batch needs a leading sample axis, got " +
                         to_string(batch.shape()));
  }
  if (batch.numel() / batch.extent(0) != input_size()) {
    throw DimensionError("batch rows have " +
                         std::to_string(batch.numel() / batch.extent(0)) +
                         " features, model expects " +
                         std::to_string(input_size()));
  }
  return std::holds_alternative<MlpConfig>(arch_) ? forward_mlp(batch)
                                                  : forward_transformer(batch);
}

Tensor Model::forward_mlp(const Tensor& batch) const {
  Tensor x = batch.dim() == 2 ? batch
                              : reshape(batch, {batch.extent(0), input_size()});
  for (const auto& l : layers_) x = relu(l.forward(x));
  return x;
}

Tensor Model::forward_transformer(const Tensor& batch) const {
  const auto& cfg = std::get<TransformerConfig>(arch_);
  const std::size_t n = batch.extent(0);
  const std::size_t rows = n * cfg.seq_len;
  const Shape per_sequence{n, cfg.seq_len, cfg.d_model};

  Tensor x = reshape(batch, {rows, cfg.d_model});
  Tensor normed = layer_norm(x);
  Tensor q = reshape(layers_[0].forward(normed), per_sequence);
  Tensor k = reshape(layers_[1].forward(normed), per_sequence);
  Tensor v = reshape(layers_[2].forward(normed), per_sequence);
  Tensor scores = scale(matmul(q, transpose(k)),
                        1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
  Tensor attended = reshape(matmul(softmax(scores), v), {rows, cfg.d_model});
  Tensor h = add(x, layers_[3].forward(attended));

  Tensor hidden = gelu(layers_[4].forward(layer_norm(h)));
  h = add(h, layers_[5].forward(hidden));

  return mean_pool(reshape(layer_norm(h), per_sequence));
}

Model build_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  require_dims(dims.size() >= 2, "an MLP needs at least two widths");
  for (std::size_t d : dims) require_dims(d >= 1, "MLP widths must be >= 1");
  require_dims(dims.size() - 1 <= ParameterAddress::kMaxLayerId,
               "too many layers");

  std::mt19937_64 rng(seed);
  std::vector<LinearLayer> layers;
  for (std::size_t i = 0; i + 2 < dims.size(); ++i) {
    LinearLayer l(static_cast<std::uint32_t>(i), dims[i], dims[i + 1]);
    init_uniform(l.weight(), dims[i], dims[i + 1], rng);
    layers.push_back(std::move(l));
  }
  const std::size_t last = dims.size() - 2;
  LinearLayer head(static_cast<std::uint32_t>(last), dims[last], dims[last + 1]);
  init_uniform(head.weight(), dims[last], dims[last + 1], rng);
  return Model(MlpConfig{dims}, std::move(layers), std::move(head));
}

Model build_mini_transformer(std::size_t d_model, std::size_t d_ff,
                             std::size_t n_classes, std::size_t seq_len,
                             std::uint64_t seed) {
  require_dims(d_model >= 1 && d_ff >= 1 && n_classes >= 1 && seq_len >= 1,
               "transformer dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<LinearLayer> layers;
  const std::size_t shapes[6][2] = {{d_model, d_model}, {d_model, d_model},
                                    {d_model, d_model}, {d_model, d_model},
                                    {d_model, d_ff},    {d_ff, d_model}};
  for (std::uint32_t id = 0; id < 6; ++id) {
    LinearLayer l(id, shapes[id][0], shapes[id][1]);
    init_uniform(l.weight(), shapes[id][0], shapes[id][1], rng);
    layers.push_back(std::move(l));
  }
  LinearLayer head(6, d_model, n_classes);
  init_uniform(head.weight(), d_model, n_classes, rng);
  return Model(TransformerConfig{d_model, d_ff, n_classes, seq_len},
               std::move(layers), std::move(head));
}

Model build_model(const Architecture& arch, std::uint64_t seed) {
  if (const auto* mlp = std::get_if<MlpConfig>(&arch)) {
    return build_mlp(mlp->dims, seed);
  }
  const auto& t = std::get<TransformerConfig>(arch);
  return build_mini_transformer(t.d_model, t.d_ff, t.n_classes, t.seq_len, seed);
}

void Model::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  if (const auto* mlp = std::get_if<MlpConfig>(&arch_)) {
    w.u32(0);
    w.u32(static_cast<std::uint32_t>(mlp->dims.size()));
    for (auto d : mlp->dims) w.u64(d);
  } else {
    const auto& t = std::get<TransformerConfig>(arch_);
    w.u32(1);
    for (auto d : {t.d_model, t.d_ff, t.n_classes, t.seq_len}) w.u64(d);
  }
  const auto params = parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Tensor& p : params) {
    w.u32(static_cast<std::uint32_t>(p.dim()));
    for (auto e : p.shape()) w.u64(e);
    for (double v : p.data()) w.f64(v);
  }
  ContentHash h;
  h.update(std::span<const unsigned char>(w.bytes()));
  w.u64(h.digest());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kCheckpointMagic + 8 ||
      !std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic),
                  bytes.begin())) {
    throw ParseError("not a model checkpoint (bad magic)", 0);
  }
  const std::size_t body = bytes.size() - 8;
  ContentHash h;
  h.update(std::span<const unsigned char>(bytes.data(), body));
  ByteReader trailer(std::span<const unsigned char>(bytes).subspan(body));
  if (trailer.u64() != h.digest()) {
    throw ParseError("checkpoint content hash mismatch", body);
  }

  ByteReader r(std::span<const unsigned char>(bytes.data(), body));
  r.u64();  // magic
  const std::size_t version_at = r.offset();
  if (r.u32() != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version", version_at);
  }
  const std::size_t kind_at = r.offset();
  const std::uint32_t kind = r.u32();
  Model model = [&] {
    if (kind == 0) {
      const std::uint32_t n = r.u32();
      std::vector<std::size_t> dims(n);
      for (auto& d : dims) d = r.u64();
      return build_mlp(dims, 0);
    }
    if (kind == 1) {
      std::size_t d[4];
      for (auto& v : d) v = r.u64();
      return build_mini_transformer(d[0], d[1], d[2], d[3], 0);
    }
    throw ParseError("unknown architecture tag " + std::to_string(kind), kind_at);
  }();

  const std::size_t count_at = r.offset();
  auto params = model.parameters();
  if (r.u32() != params.size()) {
    throw ParseError("parameter tensor count mismatch", count_at);
  }
  for (Tensor& p : params) {
    const std::size_t shape_at = r.offset();
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& e : shape) e = r.u64();
    if (shape != p.shape()) {
      throw ParseError("tensor shape " + to_string(shape) + " disagrees with " +
                           to_string(p.shape()),
                       shape_at);
    }
    for (double& v : p.mutable_data()) v = r.f64();
  }
  model.capture_snapshot();
  return model;
}

}  // namespace fps
