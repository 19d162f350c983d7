#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace smf::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
class Tape;

// Dense row-major array. Storage is shared and immutable, so copies are cheap
// and a tensor saved by a backward rule can never be modified underneath it.
// A tensor that lives on a tape carries the id of the node that produced it.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_ ? data_->size() : 0; }
  // Negative indices count from the back.
  std::size_t dim(int axis) const;

  std::span<const T> values() const noexcept {
    return data_ ? std::span<const T>(*data_) : std::span<const T>();
  }
  const T* data() const noexcept { return data_ ? data_->data() : nullptr; }
  T operator[](std::size_t i) const { return (*data_)[i]; }
  T item() const;
  std::vector<T> to_vector() const { return data_ ? *data_ : std::vector<T>{}; }

  bool requires_grad() const noexcept { return tape_ != nullptr; }
  Tape<T>* tape() const noexcept { return tape_; }
  int node() const noexcept { return node_; }

  // Same values, no tape linkage.
  Tensor detach() const;
  // Shares storage under a new shape with the same element count; no tape linkage.
  Tensor with_shape(Shape shape) const;

 private:
  friend class Tape<T>;
  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

// Gradients of a scalar loss with respect to every leaf that received one.
template <typename T>
class Gradients {
 public:
  bool has(const Tensor<T>& leaf) const;
  // Throws if the leaf received no gradient.
  const std::vector<T>& of(const Tensor<T>& leaf) const;
  const std::map<int, std::vector<T>>& by_node() const noexcept { return grads_; }

 private:
  friend class Tape<T>;
  std::map<int, std::vector<T>> grads_;
};

// Append-only record of differentiable operations. Backward walks the nodes
// in strictly decreasing append order, so a node's gradient is complete
// before its rule runs (every consumer was appended after it).
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const T> grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a value as a differentiable leaf. Storage is shared, not copied.
  Tensor<T> leaf(const Tensor<T>& value);

  // Creates the result of an op. A node is appended only when some input is
  // on this tape; otherwise the result is a plain constant.
  Tensor<T> record(std::string_view op, Tensor<T> value,
                   std::initializer_list<const Tensor<T>*> inputs, BackwardFn backward);

  // Gradient accumulator of an input inside a backward rule. Empty when the
  // input is a constant, which lets rules skip work for it.
  std::span<T> grad_of(const Tensor<T>& input);

  Gradients<T> backward(const Tensor<T>& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }
  const std::string& op_name(int node) const { return nodes_.at(node).op; }

  // Test hook for the gradient-check harness: scales the output of every
  // backward rule of `op` by `factor`.
  void inject_fault(std::string op, T factor);

 private:
  struct Node {
    std::string op;
    std::size_t size = 0;
    bool is_leaf = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool consumed_ = false;
  std::string fault_op_;
  T fault_factor_ = T(1);
};

// Picks the tape shared by the inputs; null when all inputs are constants.
template <typename T>
Tape<T>* common_tape(std::string_view op, std::initializer_list<const Tensor<T>*> inputs);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace smf::ad
