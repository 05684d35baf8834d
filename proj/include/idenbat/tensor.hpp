#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace idenbat {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
}

// Dense row-major tensor. Layout for feature maps is (N, C, spatial...).
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(Array::Constant(shape_size(shape_), fill)) {}
  Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw ShapeError("Tensor: data size does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const { return shape_; }
  Index dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& data() { return data_; }
  const Array& data() const { return data_; }
  Scalar* ptr() { return data_.data(); }
  const Scalar* ptr() const { return data_.data(); }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // Elements per sample for (N, ...) tensors.
  Index sample_size() const { return shape_.empty() ? 1 : size() / shape_[0]; }
  // Product of spatial extents for (N, C, spatial...) tensors.
  Index spatial_size() const {
    Index s = 1;
    for (std::size_t i = 2; i < shape_.size(); ++i) s *= shape_[i];
    return s;
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw ShapeError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_;
  Array data_;
};

// Reverse-mode autodiff handle. Copies share the underlying node.
template <typename Scalar>
class Var {
 public:
  using TensorT = Tensor<Scalar>;
  using Array = typename TensorT::Array;

  struct Node {
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    void accumulate(const Array& g) {
      if (grad.empty())
        grad = TensorT(value.shape(), g);
      else
        grad.data() += g;
    }
    Node& input(std::size_t i) { return *inputs[i]; }
  };

  Var() : node_(std::make_shared<Node>()) {}
  explicit Var(TensorT value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  // Output of an operation. `backward` receives the output node, reads its grad and
  // accumulates into the inputs that require gradient.
  static Var make(TensorT value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    Var out(std::move(value));
    for (const auto& in : inputs) {
      if (in.requires_grad()) out.node_->requires_grad = true;
    }
    if (out.node_->requires_grad) {
      out.node_->inputs.reserve(inputs.size());
      for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
      out.node_->backward = std::move(backward);
    }
    return out;
  }

  const TensorT& value() const { return node_->value; }
  TensorT& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const TensorT& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad = TensorT(); }
  Scalar item() const { return node_->value[0]; }

  // Fresh leaf holding a copy of the value; gradient never flows back through it.
  Var detach() const { return Var(node_->value, false); }

  // Backpropagate from a scalar output.
  void backward() const {
    if (!node_->requires_grad) return;
    if (node_->value.size() != 1) throw ShapeError("backward: root must be a scalar");
    // Iterative post-order DFS gives a topological order of the graph.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen{node_.get()};
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        Node* child = n->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->accumulate(Array::Ones(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward && !n->grad.empty()) n->backward(*n);
    }
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

}  // namespace idenbat
