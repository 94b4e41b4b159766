#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dctx::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass touches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Shared handle to a node of the computation graph.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const;
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  /// Gradient after backward; all zeros if the node was never reached.
  std::span<const double> grad() const;
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  double item() const;
  void zero_grad() { node_->grad.clear(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode accumulation from a scalar.
void backward(const Tensor& loss);

// ---- elementwise (add/sub/mul broadcast numpy-style from the right)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor gelu(const Tensor& a);

// ---- reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---- linear algebra
/// a: [..., M, K], b: [..., K, N] with identical leading dims, or b: [K, N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x: [..., in] times w: [in, out] plus bias [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// ---- shape and indexing
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor transpose_last(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int length);
/// out[i] = a.flat[index[i]]; duplicate indices accumulate gradient.
Tensor gather(const Tensor& a, Shape out_shape, std::vector<std::uint32_t> index);
/// Rows of a [R, D] selected by `rows` -> [rows.size(), D].
Tensor index_select(const Tensor& a, const std::vector<int>& rows);

// ---- normalisation / attention pieces
Tensor softmax(const Tensor& a);  // over the last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// ---- spatial ops on channel-first (C, H, W) tensors
/// w: [Cout, Cin, k, k] with odd k, zero padding k/2, stride 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);
/// w: [C, 1, 3, 3], one filter per channel.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);
/// w: [Cin, Cout, 2, 2], stride 2: output spatial dims are exactly doubled.
Tensor transpose_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);

// ---- window ops on channel-last (H, W, C) tensors
Tensor window_partition(const Tensor& x, int window);           // -> [nW, M*M, C]
Tensor window_reverse(const Tensor& windows, int h, int w);     // -> [H, W, C]
Tensor cyclic_shift(const Tensor& x, int shift_h, int shift_w); // torch.roll semantics

}  // namespace dctx::ad
