#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fps/alloc_meter.hpp"

namespace fps {

// Extents of a tensor, outermost first. An empty shape is a scalar.
using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

// Contiguous double storage whose size is reported to an AllocationMeter for
// as long as it lives.
class Buffer {
 public:
  explicit Buffer(std::vector<double> values);
  ~Buffer();
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t bytes() const { return values_.size() * sizeof(double); }

 private:
  std::vector<double> values_;
  std::shared_ptr<AllocationMeter> meter_;
};

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::shared_ptr<Buffer> buffer;
  bool requires_grad = false;
  // False once the tensor is the output of a recorded op.
  bool is_leaf = true;
};

}  // namespace detail

// Dense row-major double tensor with value semantics for its contents: ops
// never modify their operands. Copies of a Tensor share the same node, which
// is how the gradient tape identifies parameters.
//
// mutable_data() exists for leaves (parameters, optimizer state) and must not
// be used on a tensor while a recorded graph still references it.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::uint64_t id() const;
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const;
  std::size_t bytes() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;

  // Deep copy with a fresh identity and no grad history.
  Tensor clone() const;

  // Same storage viewed with another shape. Only for use by ops.
  Tensor share_storage(Shape shape) const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const detail::Node& node() const;
  detail::Node& node();

  std::shared_ptr<detail::Node> node_;

  friend class GradTape;
  friend Tensor make_op_output(Shape shape, std::vector<double> values,
                               const char* op);
};

// Creates the output of a primitive op. Throws NumericError when any value is
// not finite.
Tensor make_op_output(Shape shape, std::vector<double> values, const char* op);

}  // namespace fps
