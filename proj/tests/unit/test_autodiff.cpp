#include <cmath>

#include "doctest.h"
#include "dctx/autodiff.hpp"
#include "dctx/error.hpp"
#include "support/op_gradients.hpp"
#include "support/oracles.hpp"

using namespace dctx;
using namespace dctx::ad;
using oracle::random_tensor;

namespace {

constexpr double kTol = 1e-4;

/// Finite-difference check of op(inputs) through a random projection.
void check_op(const std::function<Tensor(const std::vector<Tensor>&)>& op, const std::vector<Tensor>& inputs) {
  const auto rep = oracle::grad_check([&] { return oracle::random_projection(op(inputs)); }, inputs);
  CHECK(rep.checked > 0);
  CHECK(rep.max_rel <= kTol);
}

Tensor away_from_zero(Rng& rng, Shape s) {
  Tensor t = random_tensor(rng, std::move(s), 0.2, 1.5);
  for (double& v : t.mutable_values())
    if (rng.uniform() < 0.5) v = -v;
  return t;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("backward basics") {
  Tensor x = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
  x.zero_grad();
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == -4.0);
  CHECK(x.grad()[2] == 1.0);

  Tensor unused = Tensor::from({2}, {1.0, 1.0}, true);
  x.zero_grad();
  backward(sum(x));
  for (double g : unused.grad()) CHECK(g == 0.0);

  CHECK_THROWS_AS(backward(mul(x, x)), Error);
  try {
    backward(x);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonScalarLoss);
  }
}

TEST_CASE("shared subexpressions accumulate") {
  Tensor x = Tensor::from({2}, {3.0, 4.0}, true);
  const Tensor y = mul(x, x);
  backward(sum(add(y, y)));
  CHECK(x.grad()[0] == 12.0);
  CHECK(x.grad()[1] == 16.0);
}

TEST_CASE("elementwise and broadcasting ops") {
  Rng rng(1);
  const std::vector<std::pair<Shape, Shape>> shapes = {{{3, 4}, {3, 4}}, {{2, 3, 4}, {4}}, {{2, 1, 5}, {3, 1}}};
  for (const auto& [sa, sb] : shapes) {
    const Tensor a = random_tensor(rng, sa), b = random_tensor(rng, sb);
    check_op([](auto& in) { return add(in[0], in[1]); }, {a, b});
    check_op([](auto& in) { return sub(in[0], in[1]); }, {a, b});
    check_op([](auto& in) { return mul(in[0], in[1]); }, {a, b});
  }
  for (const Shape& s : {Shape{5}, Shape{2, 3}, Shape{2, 2, 3}}) {
    check_op([](auto& in) { return scale(in[0], -2.5); }, {random_tensor(rng, s)});
    check_op([](auto& in) { return add_scalar(in[0], 0.7); }, {random_tensor(rng, s)});
    check_op([](auto& in) { return ad::sqrt(in[0]); }, {random_tensor(rng, s, 0.5, 2.0)});
    check_op([](auto& in) { return ad::abs(in[0]); }, {away_from_zero(rng, s)});
    check_op([](auto& in) { return gelu(in[0]); }, {random_tensor(rng, s, -3, 3)});
    check_op([](auto& in) { return sum(in[0]); }, {random_tensor(rng, s)});
    check_op([](auto& in) { return mean(in[0]); }, {random_tensor(rng, s)});
  }
  CHECK_THROWS_AS(add(random_tensor(rng, {3, 4}), random_tensor(rng, {3})), Error);
}

TEST_CASE("gelu uses the exact erf form") {
  const Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  const auto y_t = gelu(x);
  const auto y = y_t.values();
  CHECK(y[0] == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
  CHECK(y[1] == 0.0);
  CHECK(y[2] == doctest::Approx(1.9544997361036416).epsilon(1e-14));
}

TEST_CASE("matmul and linear") {
  Rng rng(2);
  for (const auto& [sa, sb] : std::vector<std::pair<Shape, Shape>>{
           {{3, 4}, {4, 2}}, {{2, 3, 4}, {2, 4, 5}}, {{2, 2, 3, 2}, {2, 3}}}) {
    check_op([](auto& in) { return matmul(in[0], in[1]); }, {random_tensor(rng, sa), random_tensor(rng, sb)});
  }
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}), b = Tensor::from({2, 2}, {5, 6, 7, 8});
  const auto c_t = matmul(a, b);
  const auto c = c_t.values();
  CHECK(c[0] == 19);
  CHECK(c[1] == 22);
  CHECK(c[2] == 43);
  CHECK(c[3] == 50);
  CHECK_THROWS_AS(matmul(random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})), Error);

  for (const Shape& xs : {Shape{4, 3}, Shape{2, 5, 3}, Shape{3}}) {
    check_op([](auto& in) { return linear(in[0], in[1], in[2]); },
             {random_tensor(rng, xs), random_tensor(rng, {3, 6}), random_tensor(rng, {6})});
  }
}

TEST_CASE("shape and indexing ops") {
  Rng rng(3);
  for (const Shape& s : {Shape{2, 3, 4}, Shape{4, 1, 5}, Shape{3, 3, 2}}) {
    const Tensor t = random_tensor(rng, s);
    check_op([](auto& in) { return reshape(in[0], {static_cast<int>(in[0].numel())}); }, {t});
    check_op([](auto& in) { return permute(in[0], {2, 0, 1}); }, {t});
    check_op([](auto& in) { return transpose_last(in[0]); }, {t});
    check_op([](auto& in) { return concat({in[0], in[1]}, 1); }, {t, random_tensor(rng, {s[0], 2, s[2]})});
    check_op([](auto& in) { return slice(in[0], 2, 1, 1); }, {t});
    check_op([](auto& in) { return gather(in[0], {5}, {0, 3, 3, 1, 0}); }, {t});
  }
  for (int rows : {3, 5, 7})
    check_op([](auto& in) { return index_select(in[0], {0, 2, 2, 1}); }, {random_tensor(rng, {rows, 4})});

  const Tensor t = Tensor::from({2, 3}, {0, 1, 2, 3, 4, 5});
  const auto p_t = permute(t, {1, 0});
  const auto p = p_t.values();
  CHECK(std::vector<double>(p.begin(), p.end()) == std::vector<double>{0, 3, 1, 4, 2, 5});
  const auto s_t = slice(t, 1, 1, 2);
  const auto s = s_t.values();
  CHECK(std::vector<double>(s.begin(), s.end()) == std::vector<double>{1, 2, 4, 5});
  CHECK_THROWS_AS(slice(t, 1, 2, 2), Error);
  CHECK_THROWS_AS(reshape(t, {4}), Error);
  CHECK_THROWS_AS(permute(t, {0, 0}), Error);
}

TEST_CASE("softmax and layer norm") {
  Rng rng(4);
  for (const Shape& s : {Shape{4}, Shape{3, 5}, Shape{2, 2, 6}}) {
    check_op([](auto& in) { return softmax(in[0]); }, {random_tensor(rng, s, -3, 3)});
    const int d = s.back();
    check_op([](auto& in) { return layer_norm(in[0], in[1], in[2]); },
             {random_tensor(rng, s, -2, 2), random_tensor(rng, {d}), random_tensor(rng, {d})});
  }
  const auto u_t = softmax(Tensor::full({2, 5}, 3.0));
  const auto u = u_t.values();
  for (double v : u) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));

  const Tensor r = softmax(random_tensor(rng, {4, 7}, -10, 10));
  for (int i = 0; i < 4; ++i) {
    double acc = 0;
    for (int j = 0; j < 7; ++j) acc += r.values()[i * 7 + j];
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-14));
  }
  const Tensor n = layer_norm(random_tensor(rng, {3, 8}, -5, 5), Tensor::full({8}, 1.0), Tensor::zeros({8}));
  for (int i = 0; i < 3; ++i) {
    double m = 0, v = 0;
    for (int j = 0; j < 8; ++j) m += n.values()[i * 8 + j] / 8;
    for (int j = 0; j < 8; ++j) v += std::pow(n.values()[i * 8 + j] - m, 2) / 8;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("convolutions") {
  Rng rng(5);
  for (const auto& [cin, cout, h, w] : std::vector<std::array<int, 4>>{{1, 1, 3, 3}, {2, 3, 4, 5}, {3, 2, 5, 4}}) {
    const Tensor x = random_tensor(rng, {cin, h, w});
    check_op([](auto& in) { return conv2d(in[0], in[1], in[2]); },
             {x, random_tensor(rng, {cout, cin, 3, 3}), random_tensor(rng, {cout})});
    check_op([](auto& in) { return conv2d(in[0], in[1], in[2]); },
             {x, random_tensor(rng, {cout, cin, 1, 1}), random_tensor(rng, {cout})});
    check_op([](auto& in) { return depthwise_conv2d(in[0], in[1], in[2]); },
             {x, random_tensor(rng, {cin, 1, 3, 3}), random_tensor(rng, {cin})});
    check_op([](auto& in) { return transpose_conv2d(in[0], in[1], in[2]); },
             {x, random_tensor(rng, {cin, cout, 2, 2}), random_tensor(rng, {cout})});
  }
}

TEST_CASE("identity kernel, transpose conv dims and conv reference values") {
  Rng rng(6);
  const Tensor x = random_tensor(rng, {2, 5, 6});
  std::vector<double> w(2 * 2 * 9, 0.0);
  w[0 * 18 + 0 * 9 + 4] = 1.0;
  w[1 * 18 + 1 * 9 + 4] = 1.0;
  const Tensor id = conv2d(x, Tensor::from({2, 2, 3, 3}, w), Tensor::zeros({2}));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(id.values()[i] == x.values()[i]);

  const Tensor up = transpose_conv2d(x, random_tensor(rng, {2, 3, 2, 2}), Tensor::zeros({3}));
  CHECK(up.shape() == Shape{3, 10, 12});

  // 3x3 box filter on a ones image: corners see 4 taps, edges 6, interior 9
  const Tensor ones = Tensor::full({1, 4, 4}, 1.0);
  const auto box_t = conv2d(ones, Tensor::full({1, 1, 3, 3}, 1.0), Tensor::zeros({1}));
  const auto box = box_t.values();
  CHECK(box[0] == 4.0);
  CHECK(box[1] == 6.0);
  CHECK(box[5] == 9.0);
  CHECK_THROWS_AS(conv2d(ones, Tensor::full({1, 2, 3, 3}, 1.0), Tensor::zeros({1})), Error);
}

TEST_CASE("window and shift ops") {
  Rng rng(7);
  for (const auto& [h, w, c, m] : std::vector<std::array<int, 4>>{{2, 2, 3, 2}, {4, 6, 2, 2}, {8, 4, 3, 4}}) {
    const Tensor x = random_tensor(rng, {h, w, c});
    check_op([m](auto& in) { return window_partition(in[0], m); }, {x});
    check_op([h, w](auto& in) { return window_reverse(in[0], h, w); }, {random_tensor(rng, {h * w / (m * m), m * m, c})});
    check_op([m](auto& in) { return cyclic_shift(in[0], -m / 2, m / 2); }, {x});

    const Tensor round = window_reverse(window_partition(x, m), h, w);
    CHECK(round.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(round.values()[i] == x.values()[i]);
    const Tensor back = cyclic_shift(cyclic_shift(x, m / 2, -m / 2), -m / 2, m / 2);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.values()[i] == x.values()[i]);
  }
  const Tensor one = random_tensor(rng, {2, 2, 3});
  const Tensor win = window_partition(one, 2);
  CHECK(win.shape() == Shape{1, 4, 3});
  for (std::size_t i = 0; i < one.numel(); ++i) CHECK(win.values()[i] == one.values()[i]);

  // roll semantics: out[(y + s) mod H] = in[y]
  const Tensor seq = Tensor::from({3, 1, 1}, {0, 1, 2});
  const auto rolled_t = cyclic_shift(seq, 1, 0);
  const auto rolled = rolled_t.values();
  CHECK(std::vector<double>(rolled.begin(), rolled.end()) == std::vector<double>{2, 0, 1});
  CHECK_THROWS_AS(window_partition(random_tensor(rng, {6, 4, 1}), 4), Error);
}

}  // TEST_SUITE

TEST_SUITE("autodiff") {
TEST_CASE("operator sweep covers every op within tolerance") {
  const auto results = oracle::operator_gradient_sweep();
  CHECK(results.size() == 27);
  for (const auto& r : results) {
    CAPTURE(r.op);
    CHECK(r.checked > 0);
    CHECK(r.max_rel <= kTol);
  }
}
}
