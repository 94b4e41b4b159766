#include "dctx/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_set>

#include "dctx/error.hpp"

namespace dctx::ad {

namespace {

void shape_fail(const std::string& op, const std::string& what) {
  fail(ErrorKind::ShapeMismatch, op + ": " + what);
}

/// Creates an op result; records parents and the backward rule only when some
/// input needs a gradient.
Tensor make_result(Shape shape, std::vector<double> value, const std::vector<const Tensor*>& inputs,
                   std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  const bool rg = std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
  if (rg) {
    n->requires_grad = true;
    for (const Tensor* t : inputs) n->parents.push_back(t->shared());
    n->backward = std::move(bw);
  }
  return Tensor(std::move(n));
}

// C[M,N] += A[M,K] B[K,N]
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[M,N] += A[M,K] B[N,K]^T
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[K,N] += A[M,K]^T B[M,N]
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* bi = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

struct Broadcast {
  Shape out;
  bool same = false;
  std::vector<std::uint32_t> ia, ib;
};

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t r = std::max(a.size(), b.size());
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<long>(r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<long>(r - b.size()));
  bc.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1)
      shape_fail(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    bc.out[i] = std::max(pa[i], pb[i]);
  }
  std::vector<std::size_t> sa(r), sb(r);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t i = r; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : acc_a;
    sb[i] = pb[i] == 1 ? 0 : acc_b;
    acc_a *= static_cast<std::size_t>(pa[i]);
    acc_b *= static_cast<std::size_t>(pb[i]);
  }
  const std::size_t total = numel(bc.out);
  bc.ia.resize(total);
  bc.ib.resize(total);
  std::vector<int> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    bc.ia[flat] = static_cast<std::uint32_t>(oa);
    bc.ib[flat] = static_cast<std::uint32_t>(ob);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < bc.out[d]) break;
      oa -= sa[d] * static_cast<std::size_t>(idx[d]);
      ob -= sb[d] * static_cast<std::size_t>(idx[d]);
      idx[d] = 0;
    }
  }
  return bc;
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, GradA ga, GradB gb) {
  auto bc = std::make_shared<Broadcast>(broadcast(a.shape(), b.shape(), op));
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(numel(bc->out));
  if (bc->same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[bc->ia[i]], bv[bc->ib[i]]);
  }
  Node* pa = a.node();
  Node* pb = b.node();
  return make_result(bc->out, std::move(out), {&a, &b}, [pa, pb, bc, ga, gb](Node& self) {
    const auto& g = self.grad;
    const auto& av = pa->value;
    const auto& bv = pb->value;
    if (pa->requires_grad) {
      auto& da = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t ia = bc->same ? i : bc->ia[i], ib = bc->same ? i : bc->ib[i];
        da[ia] += ga(g[i], av[ia], bv[ib]);
      }
    }
    if (pb->requires_grad) {
      auto& db = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t ia = bc->same ? i : bc->ia[i], ib = bc->same ? i : bc->ib[i];
        db[ib] += gb(g[i], av[ia], bv[ib]);
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  Node* pa = a.node();
  return make_result(a.shape(), std::move(out), {&a}, [pa, deriv](Node& self) {
    auto& da = pa->grad_buffer();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i] * deriv(pa->value[i], self.value[i]);
  });
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size());
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= static_cast<std::size_t>(s[i]);
  }
  return st;
}

void require_rank(const Tensor& t, int r, const char* op) {
  if (t.rank() != r) shape_fail(op, "expected rank " + std::to_string(r) + ", got " + shape_str(t.shape()));
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != ad::numel(shape))
    shape_fail("from", std::to_string(values.size()) + " values for shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) shape_fail("dim", "axis out of range for " + shape_str(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

std::span<const double> Tensor::grad() const {
  return node_->grad_buffer();
}

double Tensor::item() const {
  if (numel() != 1) shape_fail("item", "tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->value[0];
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) fail(ErrorKind::NonScalarLoss, "loss has shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  // iterative post-order DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) {
      n->grad_buffer();
      n->backward(*n);
    }
  }
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor sqrt(const Tensor& a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  const auto v = a.values();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  Node* pa = a.node();
  return make_result({1}, {s}, {&a}, [pa](Node& self) {
    auto& da = pa->grad_buffer();
    for (double& d : da) d += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) shape_fail("mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// ---------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) shape_fail("matmul", "operands need rank >= 2");
  const int m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) shape_fail("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const bool shared_b = b.rank() == 2;
  if (!shared_b) {
    if (b.rank() != a.rank() || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()))
      shape_fail("matmul", "batch dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t batch = a.numel() / (static_cast<std::size_t>(m) * k);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  const std::size_t sa = static_cast<std::size_t>(m) * k, sb = shared_b ? 0 : static_cast<std::size_t>(k) * n,
                    sc = static_cast<std::size_t>(m) * n;
  for (std::size_t i = 0; i < batch; ++i) gemm_nn(av + i * sa, bv + i * sb, out.data() + i * sc, m, k, n);
  Node* pa = a.node();
  Node* pb = b.node();
  return make_result(std::move(out_shape), std::move(out), {&a, &b},
                     [pa, pb, batch, m, k, n, sa, sb, sc](Node& self) {
                       const double* g = self.grad.data();
                       if (pa->requires_grad) {
                         double* da = pa->grad_buffer().data();
                         for (std::size_t i = 0; i < batch; ++i)
                           gemm_nt(g + i * sc, pb->value.data() + i * sb, da + i * sa, m, n, k);
                       }
                       if (pb->requires_grad) {
                         double* db = pb->grad_buffer().data();
                         for (std::size_t i = 0; i < batch; ++i)
                           gemm_tn(pa->value.data() + i * sa, g + i * sc, db + i * sb, m, k, n);
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(w, 2, "linear");
  const int in = w.dim(0), outd = w.dim(1);
  if (x.dim(-1) != in) shape_fail("linear", "input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (bias.numel() != static_cast<std::size_t>(outd)) shape_fail("linear", "bias size");
  const int rows = static_cast<int>(x.numel() / in);
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  std::vector<double> out(static_cast<std::size_t>(rows) * outd);
  const auto bv = bias.values();
  for (int r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<long>(r) * outd);
  gemm_nn(x.values().data(), w.values().data(), out.data(), rows, in, outd);
  Node* px = x.node();
  Node* pw = w.node();
  Node* pb = bias.node();
  return make_result(std::move(out_shape), std::move(out), {&x, &w, &bias},
                     [px, pw, pb, rows, in, outd](Node& self) {
                       const double* g = self.grad.data();
                       if (px->requires_grad) gemm_nt(g, pw->value.data(), px->grad_buffer().data(), rows, outd, in);
                       if (pw->requires_grad) gemm_tn(px->value.data(), g, pw->grad_buffer().data(), rows, in, outd);
                       if (pb->requires_grad) {
                         auto& db = pb->grad_buffer();
                         for (int r = 0; r < rows; ++r)
                           for (int j = 0; j < outd; ++j) db[j] += g[static_cast<std::size_t>(r) * outd + j];
                       }
                     });
}

// ---------------------------------------------------------------- shape / indexing

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel())
    shape_fail("reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> v(a.values().begin(), a.values().end());
  Node* pa = a.node();
  return make_result(std::move(shape), std::move(v), {&a}, [pa](Node& self) {
    auto& da = pa->grad_buffer();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i];
  });
}

Tensor gather(const Tensor& a, Shape out_shape, std::vector<std::uint32_t> index) {
  if (index.size() != numel(out_shape)) shape_fail("gather", "index count does not match output shape");
  const auto av = a.values();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.size()) shape_fail("gather", "index out of range");
    out[i] = av[index[i]];
  }
  auto idx = std::make_shared<std::vector<std::uint32_t>>(std::move(index));
  Node* pa = a.node();
  return make_result(std::move(out_shape), std::move(out), {&a}, [pa, idx](Node& self) {
    auto& da = pa->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i) da[(*idx)[i]] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
  const std::size_t r = a.shape().size();
  if (axes.size() != r) shape_fail("permute", "axes count");
  std::vector<int> check(axes);
  std::sort(check.begin(), check.end());
  for (std::size_t i = 0; i < r; ++i)
    if (check[i] != static_cast<int>(i)) shape_fail("permute", "axes are not a permutation");
  const auto in_strides = strides_of(a.shape());
  Shape out_shape(r);
  std::vector<std::size_t> st(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = a.shape()[static_cast<std::size_t>(axes[i])];
    st[i] = in_strides[static_cast<std::size_t>(axes[i])];
  }
  std::vector<std::uint32_t> index(a.numel());
  std::vector<int> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < index.size(); ++flat) {
    index[flat] = static_cast<std::uint32_t>(off);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += st[d];
      if (idx[d] < out_shape[d]) break;
      off -= st[d] * static_cast<std::size_t>(idx[d]);
      idx[d] = 0;
    }
  }
  return gather(a, std::move(out_shape), std::move(index));
}

Tensor transpose_last(const Tensor& a) {
  std::vector<int> axes(a.shape().size());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(a, axes);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  Shape out_shape = parts[0].shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) shape_fail("concat", "rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != axis && p.shape()[d] != parts[0].shape()[d])
        shape_fail("concat", shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    out_shape[static_cast<std::size_t>(axis)] += p.shape()[static_cast<std::size_t>(axis)];
  }
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(out_shape[d]);
  for (int d = axis + 1; d < r; ++d) inner *= static_cast<std::size_t>(out_shape[d]);
  const std::size_t out_row = static_cast<std::size_t>(out_shape[static_cast<std::size_t>(axis)]) * inner;
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t row = static_cast<std::size_t>(p.shape()[static_cast<std::size_t>(axis)]) * inner;
    const auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(pv.begin() + static_cast<long>(o * row), pv.begin() + static_cast<long>((o + 1) * row),
                out.begin() + static_cast<long>(o * out_row + off));
    off += row;
  }
  std::vector<const Tensor*> inputs;
  std::vector<Node*> nodes;
  for (const auto& p : parts) {
    inputs.push_back(&p);
    nodes.push_back(p.node());
  }
  return make_result(std::move(out_shape), std::move(out), inputs,
                     [nodes, offsets, outer, out_row](Node& self) {
                       for (std::size_t i = 0; i < nodes.size(); ++i) {
                         Node* p = nodes[i];
                         if (!p->requires_grad) continue;
                         auto& dp = p->grad_buffer();
                         const std::size_t row = dp.size() / outer;
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t j = 0; j < row; ++j) dp[o * row + j] += self.grad[o * out_row + offsets[i] + j];
                       }
                     });
}

Tensor slice(const Tensor& a, int axis, int start, int length) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) shape_fail("slice", "axis out of range");
  const int extent = a.shape()[static_cast<std::size_t>(axis)];
  if (start < 0 || length < 0 || start + length > extent)
    shape_fail("slice", "range [" + std::to_string(start) + "," + std::to_string(start + length) + ") of " +
                            std::to_string(extent));
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(a.shape()[d]);
  for (int d = axis + 1; d < r; ++d) inner *= static_cast<std::size_t>(a.shape()[d]);
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  std::vector<std::uint32_t> index;
  index.reserve(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o)
    for (int s = 0; s < length; ++s)
      for (std::size_t i = 0; i < inner; ++i)
        index.push_back(static_cast<std::uint32_t>((o * extent + start + s) * inner + i));
  return gather(a, std::move(out_shape), std::move(index));
}

Tensor index_select(const Tensor& a, const std::vector<int>& rows) {
  require_rank(a, 2, "index_select");
  const int nrows = a.dim(0), d = a.dim(1);
  std::vector<std::uint32_t> index;
  index.reserve(rows.size() * static_cast<std::size_t>(d));
  for (int r : rows) {
    if (r < 0 || r >= nrows) shape_fail("index_select", "row out of range");
    for (int j = 0; j < d; ++j) index.push_back(static_cast<std::uint32_t>(r * d + j));
  }
  return gather(a, {static_cast<int>(rows.size()), d}, std::move(index));
}

// ---------------------------------------------------------------- softmax / layer norm

Tensor softmax(const Tensor& a) {
  const int n = a.dim(-1);
  const std::size_t rows = a.numel() / static_cast<std::size_t>(n);
  const auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      y[i] = std::exp(x[i] - mx);
      s += y[i];
    }
    for (int i = 0; i < n; ++i) y[i] /= s;
  }
  Node* pa = a.node();
  return make_result(a.shape(), std::move(out), {&a}, [pa, rows, n](Node& self) {
    auto& da = pa->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += g[i] * y[i];
      for (int i = 0; i < n; ++i) da[r * n + i] += y[i] * (g[i] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int d = x.dim(-1);
  if (gamma.numel() != static_cast<std::size_t>(d) || beta.numel() != static_cast<std::size_t>(d))
    shape_fail("layer_norm", "affine parameters must have " + std::to_string(d) + " entries");
  const std::size_t rows = x.numel() / static_cast<std::size_t>(d);
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += xr[i];
    mu /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int i = 0; i < d; ++i) {
      const double h = (xr[i] - mu) * is;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = gv[i] * h + bv[i];
    }
  }
  Node* px = x.node();
  Node* pg = gamma.node();
  Node* pb = beta.node();
  return make_result(x.shape(), std::move(out), {&x, &gamma, &beta},
                     [px, pg, pb, xhat, inv_std, rows, d](Node& self) {
                       const auto& g = self.grad;
                       if (pg->requires_grad || pb->requires_grad) {
                         auto& dg = pg->grad_buffer();
                         auto& db = pb->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (int i = 0; i < d; ++i) {
                             dg[i] += g[r * d + i] * (*xhat)[r * d + i];
                             db[i] += g[r * d + i];
                           }
                       }
                       if (px->requires_grad) {
                         auto& dx = px->grad_buffer();
                         std::vector<double> dh(static_cast<std::size_t>(d));
                         for (std::size_t r = 0; r < rows; ++r) {
                           double m1 = 0.0, m2 = 0.0;
                           for (int i = 0; i < d; ++i) {
                             dh[i] = g[r * d + i] * pg->value[i];
                             m1 += dh[i];
                             m2 += dh[i] * (*xhat)[r * d + i];
                           }
                           m1 /= d;
                           m2 /= d;
                           for (int i = 0; i < d; ++i)
                             dx[r * d + i] += (*inv_std)[r] * (dh[i] - m1 - (*xhat)[r * d + i] * m2);
                         }
                       }
                     });
}

// ---------------------------------------------------------------- convolutions

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != k || k % 2 == 0)
    shape_fail("conv2d", "weight " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  if (bias.numel() != static_cast<std::size_t>(cout)) shape_fail("conv2d", "bias size");
  const int pad = k / 2, hw = h * wd, ckk = cin * k * k;
  // im2col: col[(ci*k + ky)*k + kx, y*W + x]
  auto col = std::make_shared<std::vector<double>>(static_cast<std::size_t>(ckk) * hw, 0.0);
  const auto xv = x.values();
  for (int ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col->data() + static_cast<std::size_t>((ci * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const double* src = xv.data() + (static_cast<std::size_t>(ci) * h + sy) * wd;
          for (int xx = 0; xx < wd; ++xx) {
            const int sx = xx + kx - pad;
            if (sx >= 0 && sx < wd) row[y * wd + xx] = src[sx];
          }
        }
      }
  std::vector<double> out(static_cast<std::size_t>(cout) * hw);
  const auto bv = bias.values();
  for (int co = 0; co < cout; ++co) std::fill_n(out.begin() + static_cast<long>(co) * hw, hw, bv[co]);
  gemm_nn(w.values().data(), col->data(), out.data(), cout, ckk, hw);
  Node* px = x.node();
  Node* pw = w.node();
  Node* pb = bias.node();
  return make_result({cout, h, wd}, std::move(out), {&x, &w, &bias},
                     [px, pw, pb, col, cin, cout, h, wd, k, pad, hw, ckk](Node& self) {
                       const double* g = self.grad.data();
                       if (pb->requires_grad) {
                         auto& db = pb->grad_buffer();
                         for (int co = 0; co < cout; ++co)
                           for (int i = 0; i < hw; ++i) db[co] += g[static_cast<std::size_t>(co) * hw + i];
                       }
                       if (pw->requires_grad) gemm_nt(g, col->data(), pw->grad_buffer().data(), cout, hw, ckk);
                       if (px->requires_grad) {
                         std::vector<double> dcol(static_cast<std::size_t>(ckk) * hw, 0.0);
                         gemm_tn(pw->value.data(), g, dcol.data(), cout, ckk, hw);
                         auto& dx = px->grad_buffer();
                         for (int ci = 0; ci < cin; ++ci)
                           for (int ky = 0; ky < k; ++ky)
                             for (int kx = 0; kx < k; ++kx) {
                               const double* row = dcol.data() + static_cast<std::size_t>((ci * k + ky) * k + kx) * hw;
                               for (int y = 0; y < h; ++y) {
                                 const int sy = y + ky - pad;
                                 if (sy < 0 || sy >= h) continue;
                                 double* dst = dx.data() + (static_cast<std::size_t>(ci) * h + sy) * wd;
                                 for (int xx = 0; xx < wd; ++xx) {
                                   const int sx = xx + kx - pad;
                                   if (sx >= 0 && sx < wd) dst[sx] += row[y * wd + xx];
                                 }
                               }
                             }
                       }
                     });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 3, "depthwise_conv2d");
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  if (w.shape() != Shape{c, 1, 3, 3}) shape_fail("depthwise_conv2d", "weight " + shape_str(w.shape()));
  if (bias.numel() != static_cast<std::size_t>(c)) shape_fail("depthwise_conv2d", "bias size");
  const auto xv = x.values();
  const auto wv = w.values();
  std::vector<double> out(x.numel());
  for (int ch = 0; ch < c; ++ch) {
    const double* src = xv.data() + static_cast<std::size_t>(ch) * h * wd;
    double* dst = out.data() + static_cast<std::size_t>(ch) * h * wd;
    const double* k = wv.data() + ch * 9;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < wd; ++xx) {
        double acc = bias.values()[ch];
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            if (sx >= 0 && sx < wd) acc += k[ky * 3 + kx] * src[sy * wd + sx];
          }
        }
        dst[y * wd + xx] = acc;
      }
  }
  Node* px = x.node();
  Node* pw = w.node();
  Node* pb = bias.node();
  return make_result(x.shape(), std::move(out), {&x, &w, &bias}, [px, pw, pb, c, h, wd](Node& self) {
    const auto& g = self.grad;
    std::vector<double>* dx = px->requires_grad ? &px->grad_buffer() : nullptr;
    std::vector<double>* dw = pw->requires_grad ? &pw->grad_buffer() : nullptr;
    std::vector<double>* db = pb->requires_grad ? &pb->grad_buffer() : nullptr;
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = static_cast<std::size_t>(ch) * h * wd;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < wd; ++xx) {
          const double go = g[base + y * wd + xx];
          if (db) (*db)[ch] += go;
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = xx + kx - 1;
              if (sx < 0 || sx >= wd) continue;
              if (dw) (*dw)[ch * 9 + ky * 3 + kx] += go * px->value[base + sy * wd + sx];
              if (dx) (*dx)[base + sy * wd + sx] += go * pw->value[ch * 9 + ky * 3 + kx];
            }
          }
        }
    }
  });
}

Tensor transpose_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 3, "transpose_conv2d");
  require_rank(w, 4, "transpose_conv2d");
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(1);
  if (w.dim(0) != cin || w.dim(2) != 2 || w.dim(3) != 2)
    shape_fail("transpose_conv2d", "weight " + shape_str(w.shape()) + " for input " + shape_str(x.shape()));
  if (bias.numel() != static_cast<std::size_t>(cout)) shape_fail("transpose_conv2d", "bias size");
  const int hw = h * wd, oh = 2 * h, ow = 2 * wd;
  // per-offset packed weights: wk[off][ci * cout + co]
  auto packed = [cin, cout](const std::vector<double>& wv) {
    std::vector<double> p(static_cast<std::size_t>(4) * cin * cout);
    for (int ci = 0; ci < cin; ++ci)
      for (int co = 0; co < cout; ++co)
        for (int off = 0; off < 4; ++off)
          p[(static_cast<std::size_t>(off) * cin + ci) * cout + co] = wv[(static_cast<std::size_t>(ci) * cout + co) * 4 + off];
    return p;
  };
  const std::vector<double> wk = packed(w.node()->value);
  std::vector<double> out(static_cast<std::size_t>(cout) * oh * ow);
  std::vector<double> yk(static_cast<std::size_t>(cout) * hw);
  const auto bv = bias.values();
  for (int off = 0; off < 4; ++off) {
    std::fill(yk.begin(), yk.end(), 0.0);
    gemm_tn(wk.data() + static_cast<std::size_t>(off) * cin * cout, x.values().data(), yk.data(), cin, cout, hw);
    const int ky = off / 2, kx = off % 2;
    for (int co = 0; co < cout; ++co)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < wd; ++xx)
          out[(static_cast<std::size_t>(co) * oh + 2 * y + ky) * ow + 2 * xx + kx] =
              yk[static_cast<std::size_t>(co) * hw + y * wd + xx] + bv[co];
  }
  Node* px = x.node();
  Node* pw = w.node();
  Node* pb = bias.node();
  return make_result({cout, oh, ow}, std::move(out), {&x, &w, &bias},
                     [px, pw, pb, packed, cin, cout, h, wd, hw, oh, ow](Node& self) {
                       const auto& g = self.grad;
                       const std::vector<double> wk = packed(pw->value);
                       std::vector<double> gk(static_cast<std::size_t>(cout) * hw);
                       std::vector<double> dwk(static_cast<std::size_t>(cin) * cout);
                       for (int off = 0; off < 4; ++off) {
                         const int ky = off / 2, kx = off % 2;
                         for (int co = 0; co < cout; ++co)
                           for (int y = 0; y < h; ++y)
                             for (int xx = 0; xx < wd; ++xx)
                               gk[static_cast<std::size_t>(co) * hw + y * wd + xx] =
                                   g[(static_cast<std::size_t>(co) * oh + 2 * y + ky) * ow + 2 * xx + kx];
                         if (pb->requires_grad) {
                           auto& db = pb->grad_buffer();
                           for (int co = 0; co < cout; ++co)
                             for (int i = 0; i < hw; ++i) db[co] += gk[static_cast<std::size_t>(co) * hw + i];
                         }
                         if (px->requires_grad)
                           gemm_nn(wk.data() + static_cast<std::size_t>(off) * cin * cout, gk.data(),
                                   px->grad_buffer().data(), cin, cout, hw);
                         if (pw->requires_grad) {
                           std::fill(dwk.begin(), dwk.end(), 0.0);
                           gemm_nt(px->value.data(), gk.data(), dwk.data(), cin, hw, cout);
                           auto& dw = pw->grad_buffer();
                           for (int ci = 0; ci < cin; ++ci)
                             for (int co = 0; co < cout; ++co)
                               dw[(static_cast<std::size_t>(ci) * cout + co) * 4 + off] +=
                                   dwk[static_cast<std::size_t>(ci) * cout + co];
                         }
                       }
                     });
}

// ---------------------------------------------------------------- windows

Tensor window_partition(const Tensor& x, int m) {
  require_rank(x, 3, "window_partition");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (m <= 0 || h % m != 0 || w % m != 0)
    fail(ErrorKind::DimNotDivisibleByWindow,
         std::to_string(h) + "x" + std::to_string(w) + " not divisible by window " + std::to_string(m));
  const int nwx = w / m, nw = (h / m) * nwx;
  std::vector<std::uint32_t> index(x.numel());
  std::size_t o = 0;
  for (int win = 0; win < nw; ++win)
    for (int t = 0; t < m * m; ++t) {
      const int y = (win / nwx) * m + t / m, xx = (win % nwx) * m + t % m;
      for (int ch = 0; ch < c; ++ch) index[o++] = static_cast<std::uint32_t>((y * w + xx) * c + ch);
    }
  return gather(x, {nw, m * m, c}, std::move(index));
}

Tensor window_reverse(const Tensor& windows, int h, int w) {
  require_rank(windows, 3, "window_reverse");
  const int tokens = windows.dim(1), c = windows.dim(2);
  const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tokens))));
  if (m * m != tokens || h % m != 0 || w % m != 0 || windows.dim(0) != (h / m) * (w / m))
    fail(ErrorKind::DimNotDivisibleByWindow, "window_reverse: " + shape_str(windows.shape()) + " into " +
                                                 std::to_string(h) + "x" + std::to_string(w));
  const int nwx = w / m;
  std::vector<std::uint32_t> index(windows.numel());
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const int win = (y / m) * nwx + xx / m, t = (y % m) * m + xx % m;
      for (int ch = 0; ch < c; ++ch)
        index[(static_cast<std::size_t>(y) * w + xx) * c + ch] =
            static_cast<std::uint32_t>((static_cast<std::size_t>(win) * tokens + t) * c + ch);
    }
  return gather(windows, {h, w, c}, std::move(index));
}

Tensor cyclic_shift(const Tensor& x, int sh, int sw) {
  require_rank(x, 3, "cyclic_shift");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  std::vector<std::uint32_t> index(x.numel());
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const int sy = ((y - sh) % h + h) % h, sx = ((xx - sw) % w + w) % w;
      for (int ch = 0; ch < c; ++ch)
        index[(static_cast<std::size_t>(y) * w + xx) * c + ch] =
            static_cast<std::uint32_t>((static_cast<std::size_t>(sy) * w + sx) * c + ch);
    }
  return gather(x, {h, w, c}, std::move(index));
}

}  // namespace dctx::ad
