#include "smf/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace smf::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + to_string(shape_));
  }
  if (numel(shape_) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape_) + " needs " +
                     std::to_string(numel(shape_)) + " values, got " +
                     std::to_string(values.size()));
  }
  data_ = std::make_shared<const std::vector<T>>(std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
std::size_t Tensor<T>::dim(int axis) const {
  const int r = static_cast<int>(shape_.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(shape_));
  }
  return shape_[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape_) + " is not a scalar");
  return (*data_)[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = -1;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::with_shape(Shape shape) const {
  if (numel(shape) != size()) {
    throw ShapeError("tensor: cannot view shape " + to_string(shape_) + " as " + to_string(shape));
  }
  Tensor out = detach();
  out.shape_ = std::move(shape);
  return out;
}

template <typename T>
bool Gradients<T>::has(const Tensor<T>& leaf) const {
  return leaf.node() >= 0 && grads_.count(leaf.node()) > 0;
}

template <typename T>
const std::vector<T>& Gradients<T>::of(const Tensor<T>& leaf) const {
  auto it = grads_.find(leaf.node());
  if (leaf.node() < 0 || it == grads_.end()) {
    throw std::runtime_error("gradients: no gradient recorded for this tensor");
  }
  return it->second;
}

template <typename T>
Tape<T>* common_tape(std::string_view op, std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = nullptr;
  for (const auto* in : inputs) {
    if (!in->tape()) continue;
    if (tape && tape != in->tape()) {
      throw std::logic_error(std::string(op) + ": inputs belong to different tapes");
    }
    tape = in->tape();
  }
  return tape;
}

template <typename T>
Tensor<T> Tape<T>::leaf(const Tensor<T>& value) {
  if (consumed_) throw std::logic_error("tape: cannot add leaves after backward()");
  if (value.tape()) throw std::logic_error("tape: value is already on a tape");
  Tensor<T> out = value;
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{"leaf", value.size(), true, {}});
  return out;
}

template <typename T>
Tensor<T> Tape<T>::record(std::string_view op, Tensor<T> value,
                          std::initializer_list<const Tensor<T>*> inputs, BackwardFn backward) {
  Tensor<T> out = value.detach();
  bool tracked = false;
  for (const auto* in : inputs) {
    if (in->tape() == this) tracked = true;
  }
  if (!tracked) return out;
  if (consumed_) throw std::logic_error(std::string(op) + ": tape already consumed by backward()");
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{std::string(op), out.size(), false, std::move(backward)});
  return out;
}

template <typename T>
std::span<T> Tape<T>::grad_of(const Tensor<T>& input) {
  if (input.tape() != this) return {};
  auto& g = grads_[static_cast<std::size_t>(input.node())];
  if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(input.node())].size, T(0));
  return g;
}

template <typename T>
Gradients<T> Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  if (loss.tape() != this) throw std::logic_error("backward: loss is not on this tape");
  if (consumed_) throw std::logic_error("backward: tape already consumed");
  consumed_ = true;

  grads_.assign(nodes_.size(), {});
  grads_[static_cast<std::size_t>(loss.node())] = {T(1)};

  Gradients<T> out;
  for (int i = loss.node(); i >= 0; --i) {
    auto idx = static_cast<std::size_t>(i);
    if (grads_[idx].empty()) continue;
    Node& node = nodes_[idx];
    if (node.is_leaf) {
      out.grads_[i] = std::move(grads_[idx]);
      continue;
    }
    std::vector<T> g = std::move(grads_[idx]);
    grads_[idx] = {};
    if (!fault_op_.empty() && node.op == fault_op_) {
      for (auto& v : g) v *= fault_factor_;
    }
    node.backward(g, *this);
    node.backward = nullptr;  // release saved forward values early
  }
  grads_.clear();
  for (auto& n : nodes_) n.backward = nullptr;
  return out;
}

template <typename T>
void Tape<T>::inject_fault(std::string op, T factor) {
  fault_op_ = std::move(op);
  fault_factor_ = factor;
}

template class Tensor<float>;
template class Tensor<double>;
template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;
template Tape<float>* common_tape(std::string_view, std::initializer_list<const Tensor<float>*>);
template Tape<double>* common_tape(std::string_view, std::initializer_list<const Tensor<double>*>);

}  // namespace smf::ad
