#include "fps/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <utility>

#include "fps/errors.hpp"

namespace fps {
namespace {

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           to_string(shape));
    }
  }
  if (element_count(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " needs " +
                         std::to_string(element_count(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->id = next_id();
  node->shape = std::move(shape);
  node->buffer = std::make_shared<detail::Buffer>(std::move(values));
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

Buffer::Buffer(std::vector<double> values)
    : values_(std::move(values)), meter_(AllocationMeter::current()) {
  meter_->on_allocate(bytes());
}

Buffer::~Buffer() { meter_->on_release(bytes()); }

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(element_count(shape), value);
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_vector({}, {value}, requires_grad);
}

const detail::Node& Tensor::node() const {
  if (!node_) throw StateError("use of an undefined tensor");
  return *node_;
}

detail::Node& Tensor::node() {
  if (!node_) throw StateError("use of an undefined tensor");
  return *node_;
}

std::uint64_t Tensor::id() const { return node().id; }
const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::extent(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return element_count(shape()); }
std::size_t Tensor::bytes() const { return numel() * sizeof(double); }

std::span<const double> Tensor::data() const {
  return std::as_const(*node().buffer).values();
}

std::span<double> Tensor::mutable_data() {
  if (!node().is_leaf) {
    throw StateError("mutable_data() on a tensor produced by a recorded op");
  }
  return node().buffer->values();
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + to_string(shape()));
  }
  return data()[0];
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

bool Tensor::requires_grad() const { return node().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (!node().is_leaf) {
    throw StateError("requires_grad can only be set on leaf tensors");
  }
  node().requires_grad = value;
  return *this;
}

bool Tensor::is_leaf() const { return node().is_leaf; }

Tensor Tensor::clone() const {
  return Tensor(make_node(shape(), to_vector(), false));
}

Tensor Tensor::share_storage(Shape new_shape) const {
  if (element_count(new_shape) != numel()) {
    throw DimensionError("cannot view " + to_string(shape()) + " as " +
                         to_string(new_shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->id = next_id();
  node->shape = std::move(new_shape);
  node->buffer = node_->buffer;
  return Tensor(std::move(node));
}

Tensor make_op_output(Shape shape, std::vector<double> values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
  return Tensor(make_node(std::move(shape), std::move(values), false));
}

}  // namespace fps
