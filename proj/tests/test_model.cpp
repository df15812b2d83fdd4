#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "fps/autograd.hpp"
#include "fps/errors.hpp"
#include "fps/model.hpp"
#include "support.hpp"

using namespace fps;
using fps::testing::naive_matmul;
using fps::testing::random_tensor;

namespace {

struct CountingSink : ActivationSink {
  std::map<std::uint32_t, std::size_t> rows;
  std::map<std::uint32_t, std::size_t> widths;
  void observe(std::uint32_t id, const Tensor& r) override {
    rows[id] += r.extent(0);
    widths[id] = r.extent(1);
  }
};

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fps_test_model_" + name);
}

}  // namespace

TEST_CASE("address flat codes round-trip and order") {
  const auto w = ParameterAddress::weight(3, 70000, 12);
  CHECK(w.flat() == ((3ull << 48) | (70000ull << 24) | 12ull));
  CHECK(ParameterAddress::from_flat(w.flat()) == w);
  const auto b = ParameterAddress::bias(3, 70000);
  CHECK(b.is_bias());
  CHECK(ParameterAddress::from_flat(b.flat()) == b);
  CHECK(w < b);
  CHECK(w.flat() < b.flat());
  CHECK(ParameterAddress::weight(0, 1, 0).flat() > ParameterAddress::bias(0, 0).flat());
}

TEST_CASE("MLP layout and counts") {
  const Model m = build_mlp({5, 4, 3, 2}, 1);
  CHECK(m.kind() == "mlp");
  CHECK(m.tapped_layers().size() == 2);
  CHECK(m.head().id() == 2);
  CHECK(m.eligible_parameter_count() == 5 * 4 + 4 + 4 * 3 + 3);
  CHECK(m.head_parameter_count() == 3 * 2 + 2);
  CHECK(m.parameter_count() == m.eligible_parameter_count() + 8);
  CHECK(m.addresses(true).size() == m.eligible_parameter_count());
  CHECK(m.addresses(false).size() == m.parameter_count());
  CHECK(m.is_eligible(ParameterAddress::weight(1, 2, 3)));
  CHECK(m.contains(ParameterAddress::weight(2, 1, 2)));
  CHECK_FALSE(m.is_eligible(ParameterAddress::weight(2, 1, 2)));
  CHECK_FALSE(m.contains(ParameterAddress::weight(0, 4, 0)));
  CHECK_FALSE(m.contains(ParameterAddress::weight(0, 0, 5)));
  CHECK_THROWS_AS(m.parameter(ParameterAddress::weight(9, 0, 0)), ContractError);
}

TEST_CASE("initialization: Glorot-uniform weights, zero biases") {
  const Model m = build_mlp({30, 20, 10}, 4);
  for (const LinearLayer* l : {&m.tapped_layers()[0], &m.head()}) {
    const double bound = std::sqrt(6.0 / double(l->fan_in() + l->fan_out()));
    for (double v : l->weight().data()) CHECK(std::abs(v) <= bound);
    for (double v : l->bias().data()) CHECK(v == 0.0);
  }
}

TEST_CASE("mini-transformer layer ids and counts") {
  const Model m = build_mini_transformer(8, 16, 3, 4, 2);
  CHECK(m.kind() == "mini-transformer");
  REQUIRE(m.tapped_layers().size() == 6);
  const std::size_t fan_in[] = {8, 8, 8, 8, 8, 16};
  const std::size_t fan_out[] = {8, 8, 8, 8, 16, 8};
  for (std::uint32_t id = 0; id < 6; ++id) {
    CHECK(m.layer(id).fan_in() == fan_in[id]);
    CHECK(m.layer(id).fan_out() == fan_out[id]);
  }
  CHECK(m.head().id() == 6);
  CHECK(m.input_size() == 32);
  CHECK(m.num_classes() == 3);
  CHECK(m.eligible_parameter_count() == 4 * (64 + 8) + (128 + 16) + (128 + 8));
}

TEST_CASE("MLP forward equals the hand-written computation") {
  Model m = build_mlp({3, 4, 2}, 9);
  // Non-zero biases so they are exercised.
  m.set_parameter(ParameterAddress::bias(0, 1), 0.3);
  m.set_parameter(ParameterAddress::bias(1, 0), -0.2);
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({5, 3}, rng);

  const auto& l0 = m.tapped_layers()[0];
  auto h = naive_matmul(x.to_vector(), l0.weight().to_vector(), 5, 3, 4);
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] = std::max(0.0, h[i] + l0.bias().data()[i % 4]);
  }
  auto y = naive_matmul(h, m.head().weight().to_vector(), 5, 4, 2);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += m.head().bias().data()[i % 2];

  const Tensor logits = with_grad_disabled([&] { return m.forward(x); });
  REQUIRE(logits.shape() == Shape{5, 2});
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(logits.data()[i] == doctest::Approx(y[i]).epsilon(1e-14));
  }
}

TEST_CASE("weight element (k, j) sits at k * fan_out + j") {
  Model m = build_mlp({3, 4, 2}, 9);
  m.set_parameter(ParameterAddress::weight(0, 2, 1), 7.5);
  CHECK(m.tapped_layers()[0].weight().data()[1 * 4 + 2] == 7.5);
}

TEST_CASE("same seed, same model; different seed, different hash") {
  const Model a = build_mlp({4, 6, 3}, 11);
  const Model b = build_mlp({4, 6, 3}, 11);
  const Model c = build_mlp({4, 6, 3}, 12);
  CHECK(a.hash() == b.hash());
  CHECK(a.parameter_hash() == b.parameter_hash());
  CHECK(a.hash() != c.hash());
}

TEST_CASE("theta_0 is fixed at build time") {
  Model m = build_mlp({4, 6, 3}, 11);
  const auto addr = ParameterAddress::weight(0, 1, 2);
  const double before = m.parameter(addr);
  const std::uint64_t hash = m.hash();
  const std::uint64_t params = m.parameter_hash();
  m.set_parameter(addr, before + 1.0);
  CHECK(m.snapshot_value(addr) == before);
  CHECK(m.hash() == hash);
  CHECK(m.parameter_hash() != params);

  const Model copy = m.clone();
  CHECK(copy.hash() == hash);
  CHECK(copy.parameter(addr) == before + 1.0);
  m.set_parameter(addr, 0.0);
  CHECK(copy.parameter(addr) == before + 1.0);

  const Model rebased = copy.rebased();
  CHECK(rebased.hash() != hash);
  CHECK(rebased.snapshot_value(addr) == before + 1.0);
}

TEST_CASE("taps see every tapped input and nothing else") {
  Model mlp = build_mlp({5, 4, 3, 2}, 1);
  CountingSink sink;
  mlp.arm_taps(sink);
  CHECK(mlp.taps_armed());
  with_grad_disabled([&] { mlp.forward(Tensor::zeros({7, 5})); });
  mlp.disarm_taps();
  CHECK_FALSE(mlp.taps_armed());
  CHECK(sink.rows.size() == 2);
  CHECK(sink.rows[0] == 7);
  CHECK(sink.widths[0] == 5);
  CHECK(sink.widths[1] == 4);

  Model tf = build_mini_transformer(4, 8, 2, 3, 1);
  CountingSink tsink;
  tf.arm_taps(tsink);
  with_grad_disabled([&] { tf.forward(Tensor::zeros({2, 12})); });
  tf.disarm_taps();
  CHECK(tsink.rows.size() == 6);
  for (std::uint32_t id = 0; id < 6; ++id) CHECK(tsink.rows[id] == 2 * 3);
  CHECK(tsink.widths[5] == 8);
}

TEST_CASE("forward rejects the wrong input width") {
  const Model m = build_mlp({5, 3}, 1);
  NoGradGuard off;
  CHECK_THROWS_AS(m.forward(Tensor::zeros({2, 4})), DimensionError);
}

TEST_CASE("checkpoint round-trip") {
  for (int which = 0; which < 2; ++which) {
    Model m = which == 0 ? build_mlp({6, 5, 3}, 3) : build_mini_transformer(4, 8, 3, 2, 3);
    const auto path = temp_file("roundtrip.bin");
    m.save(path);
    const Model back = Model::load(path);
    CHECK(back.hash() == m.hash());
    CHECK(back.parameter_hash() == m.parameter_hash());
    CHECK(back.kind() == m.kind());
    const Tensor x = Tensor::full({2, m.input_size()}, 0.25);
    NoGradGuard off;
    CHECK(back.forward(x).to_vector() == m.forward(x).to_vector());
    std::filesystem::remove(path);
  }
}

TEST_CASE("checkpoint corruption is a parse error") {
  const Model m = build_mlp({6, 5, 3}, 3);
  const auto path = temp_file("corrupt.bin");
  m.save(path);
  const auto size = std::filesystem::file_size(path);

  auto rewrite = [&](auto edit) {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    edit(bytes);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };

  rewrite([](std::vector<char>& b) { b[40] ^= 0x01; });
  CHECK_THROWS_AS(Model::load(path), ParseError);

  m.save(path);
  rewrite([&](std::vector<char>& b) { b.resize(size - 9); });
  CHECK_THROWS_AS(Model::load(path), ParseError);

  m.save(path);
  rewrite([](std::vector<char>& b) { b[0] = 'X'; });
  try {
    Model::load(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset() == 0);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Model::load(path), IoError);
}
