#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "minikd/gradcheck.hpp"
#include "minikd/ops.hpp"
#include "minikd/tensor.hpp"

using namespace minikd;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and hand product") {
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, a);
  CHECK(r.values() == a.values());

  Tensor row = Tensor::from_values({1, 2}, {1, 2});
  Tensor col = Tensor::from_values({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul dimension mismatch names both shapes") {
  Tensor a = Tensor::zeros({3, 4});
  Tensor b = Tensor::zeros({5, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("[3 x 4]"), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
  std::mt19937_64 rng(7);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor a0 = random_tensor({3, 4}, rng);
  double err = finite_diff_check(
      [&](const Tensor& a) { return sum_all(matmul(a, b)); }, a0, 1e-5);
  CHECK(err < 1e-6);
  Tensor a1 = random_tensor({3, 4}, rng);
  err = finite_diff_check(
      [&](const Tensor& bb) { return sum_all(matmul(a1, bb)); }, b, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("softmax_rows symmetry and stability") {
  Tensor r0 = softmax_rows(Tensor::from_values({1, 2}, {0, 0}));
  CHECK(r0.values()[0] == doctest::Approx(0.5));
  CHECK(r0.values()[1] == doctest::Approx(0.5));

  Tensor r1 = softmax_rows(Tensor::from_values({1, 2}, {1000, 1000}));
  CHECK(r1.all_finite());
  CHECK(r1.values()[0] == doctest::Approx(0.5));

  Tensor r2 = softmax_rows(Tensor::from_values({1, 3}, {1, 2, 3}));
  CHECK(r2.values()[0] == doctest::Approx(0.09003).epsilon(1e-3));
  CHECK(r2.values()[1] == doctest::Approx(0.24473).epsilon(1e-3));
  CHECK(r2.values()[2] == doctest::Approx(0.66524).epsilon(1e-3));
}

TEST_CASE("softmax_rows rows sum to one and are non-negative") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({5, 7}, rng);
    for (double& v : a.values_mut()) v *= 50.0;
    Tensor p = softmax_rows(a);
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(p.at(i, j) >= 0.0);
        s += p.at(i, j);
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("softmax_rows_masked zeroes invalid columns, rest sums to one") {
  std::mt19937_64 rng(13);
  Tensor a = random_tensor({3, 6}, rng);
  std::vector<std::uint8_t> valid = {1, 1, 0, 1, 0, 1};
  Tensor p = softmax_rows_masked(a, valid);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      if (!valid[j]) CHECK(p.at(i, j) == 0.0);
      s += p.at(i, j);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax gradient vs finite differences") {
  std::mt19937_64 rng(17);
  Tensor a = random_tensor({3, 5}, rng);
  Tensor w = random_tensor({3, 5}, rng);  // weigh entries so the grad is not trivial
  double err = finite_diff_check(
      [&](const Tensor& x) { return sum_all(mul(softmax_rows(x), w)); }, a, 1e-6);
  CHECK(err < 1e-6);
  std::vector<std::uint8_t> valid = {1, 0, 1, 1, 0};
  err = finite_diff_check(
      [&](const Tensor& x) { return sum_all(mul(softmax_rows_masked(x, valid), w)); }, a, 1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("layer_norm constant row is eps-dominated zero") {
  Tensor a = Tensor::from_values({1, 4}, {5, 5, 5, 5});
  Tensor g = Tensor::full({4}, 1.0);
  Tensor b = Tensor::zeros({4});
  Tensor r = layer_norm(a, g, b, 1e-12);
  for (double v : r.values()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("layer_norm standardizes a two-element row") {
  Tensor a = Tensor::from_values({1, 2}, {1, 3});
  Tensor g = Tensor::full({2}, 1.0);
  Tensor b = Tensor::zeros({2});
  Tensor r = layer_norm(a, g, b, 1e-15);
  CHECK(r.values()[0] == doctest::Approx(-1.0));
  CHECK(r.values()[1] == doctest::Approx(1.0));
}

TEST_CASE("layer_norm gradient vs finite differences") {
  std::mt19937_64 rng(19);
  Tensor a = random_tensor({2, 8}, rng);
  Tensor g = random_tensor({8}, rng);
  Tensor b = random_tensor({8}, rng);
  Tensor w = random_tensor({2, 8}, rng);
  auto f = [&](const Tensor& x) { return sum_all(mul(layer_norm(x, g, b, 1e-12), w)); };
  CHECK(finite_diff_check(f, a, 1e-6) < 1e-5);
  auto fg = [&](const Tensor& gg) { return sum_all(mul(layer_norm(a, gg, b, 1e-12), w)); };
  CHECK(finite_diff_check(fg, g, 1e-6) < 1e-5);
  auto fb = [&](const Tensor& bb) { return sum_all(mul(layer_norm(a, g, bb, 1e-12), w)); };
  CHECK(finite_diff_check(fb, b, 1e-6) < 1e-5);
}

TEST_CASE("gelu point values and asymptotes") {
  Tensor z = gelu(Tensor::scalar(0.0));
  CHECK(z.item() == 0.0);
  CHECK(gelu(Tensor::scalar(1.0)).item() == doctest::Approx(0.8412).epsilon(1.5e-3));
  CHECK(gelu(Tensor::scalar(8.0)).item() == doctest::Approx(8.0));
  CHECK(std::abs(gelu(Tensor::scalar(-8.0)).item()) < 1e-6);
}

TEST_CASE("gelu gradient vs finite differences") {
  std::mt19937_64 rng(23);
  Tensor a = random_tensor({4, 4}, rng);
  for (double& v : a.values_mut()) v *= 3.0;
  CHECK(finite_diff_check([](const Tensor& x) { return sum_all(gelu(x)); }, a, 1e-6) < 1e-6);
}

TEST_CASE("mse values and symmetry") {
  std::mt19937_64 rng(29);
  Tensor t = random_tensor({3, 3}, rng);
  CHECK(mse(t, t).item() == 0.0);

  Tensor a = Tensor::from_values({2}, {1, 2});
  Tensor b = Tensor::from_values({2}, {1, 4});
  CHECK(mse(a, b).item() == doctest::Approx(2.0));

  Tensor x = random_tensor({4, 2}, rng);
  Tensor y = random_tensor({4, 2}, rng);
  CHECK(mse(x, y).item() == mse(y, x).item());

  CHECK_THROWS_AS(mse(x, Tensor::zeros({2, 4})), ShapeError);
}

TEST_CASE("mse gradient vs finite differences") {
  std::mt19937_64 rng(31);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  CHECK(finite_diff_check([&](const Tensor& x) { return mse(x, b); }, a, 1e-6) < 1e-7);
  CHECK(finite_diff_check([&](const Tensor& y) { return mse(a, y); }, b, 1e-6) < 1e-7);
}

TEST_CASE("kl_div closed form and non-negativity") {
  Tensor same = Tensor::from_values({1, 3}, {0.3, -1.0, 2.0});
  CHECK(kl_div(same, same).item() == doctest::Approx(0.0).epsilon(1e-12));

  const double ln2 = std::log(2.0);
  Tensor p = Tensor::from_values({1, 2}, {ln2, 0.0});
  Tensor q = Tensor::from_values({1, 2}, {0.0, ln2});
  CHECK(kl_div(p, q).item() == doctest::Approx(ln2 / 3.0).epsilon(1e-4));

  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({4, 5}, rng);
    Tensor y = random_tensor({4, 5}, rng);
    CHECK(kl_div(x, y).item() >= 0.0);
  }
}

TEST_CASE("kl_div gradient vs finite differences on both sides") {
  std::mt19937_64 rng(41);
  Tensor p = random_tensor({3, 4}, rng);
  Tensor q = random_tensor({3, 4}, rng);
  CHECK(finite_diff_check([&](const Tensor& x) { return kl_div(x, q); }, p, 1e-6) < 1e-6);
  CHECK(finite_diff_check([&](const Tensor& y) { return kl_div(p, y); }, q, 1e-6) < 1e-6);
}

TEST_CASE("cross_entropy uniform and confident cases") {
  Tensor uniform = Tensor::zeros({1, 2});
  CHECK(cross_entropy(uniform, {0}).item() == doctest::Approx(std::log(2.0)));

  Tensor confident = Tensor::from_values({1, 2}, {50.0, -50.0});
  CHECK(cross_entropy(confident, {0}).item() == doctest::Approx(0.0));

  CHECK_THROWS_AS(cross_entropy(uniform, {2}), std::out_of_range);
  CHECK_THROWS_AS(cross_entropy(uniform, {-1}), std::out_of_range);
}

TEST_CASE("cross_entropy gradient vs finite differences") {
  std::mt19937_64 rng(43);
  Tensor logits = random_tensor({4, 3}, rng);
  std::vector<int> labels = {0, 2, 1, 2};
  CHECK(finite_diff_check([&](const Tensor& x) { return cross_entropy(x, labels); }, logits,
                          1e-6) < 1e-5);
}

TEST_CASE("backward: sum gives all-ones gradient") {
  Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum_all(t));
  }
  for (double g : t.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: detached tensor receives no grad") {
  Tensor a = Tensor::from_values({2}, {1, 2}, true);
  Tensor b = Tensor::from_values({2}, {3, 4}, false);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum_all(mul(a, b)));
  }
  CHECK(a.has_grad());
  CHECK_FALSE(b.has_grad());
}

TEST_CASE("backward twice without reset doubles every gradient") {
  Tensor a = Tensor::from_values({3}, {0.5, -1.0, 2.0}, true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor y = mul(a, a);
  Tensor loss = sum_all(y);
  tape.backward(loss);
  const std::vector<double> once = a.grad();
  const std::vector<double> y_once = y.grad();
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(a.grad()[i] == doctest::Approx(2.0 * once[i]));
  }
  for (std::size_t i = 0; i < y_once.size(); ++i) {
    CHECK(y.grad()[i] == doctest::Approx(2.0 * y_once[i]));
  }
}

TEST_CASE("backward handles fan-out (tensor consumed twice)") {
  Tensor a = Tensor::from_values({2}, {3.0, -2.0}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = sum_all(add(mul(a, a), a));  // d/da (a^2 + a) = 2a + 1
    tape.backward(loss);
  }
  CHECK(a.grad()[0] == doctest::Approx(7.0));
  CHECK(a.grad()[1] == doctest::Approx(-3.0));
}

TEST_CASE("backward rejects non-scalar and foreign losses") {
  Tensor a = Tensor::from_values({2}, {1, 2}, true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor y = mul(a, a);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
  Tape other;
  CHECK_THROWS_AS(other.backward(sum_all(y)), std::invalid_argument);
}

TEST_CASE("no active tape means no recording") {
  Tensor a = Tensor::from_values({2}, {1, 2}, true);
  Tensor y = mul(a, a);
  CHECK_FALSE(y.requires_grad());
  Tape tape;
  CHECK(tape.op_count() == 0);
}

TEST_CASE("finite_diff_check: linear function is exact to roundoff") {
  std::mt19937_64 rng(47);
  Tensor a = random_tensor({6}, rng);
  CHECK(finite_diff_check([](const Tensor& x) { return scale(sum_all(x), 3.0); }, a, 1e-5) <
        1e-9);
}

TEST_CASE("finite_diff_check: quadratic truncation error is tiny") {
  std::mt19937_64 rng(53);
  Tensor a = random_tensor({6}, rng);
  CHECK(finite_diff_check([](const Tensor& x) { return sum_all(mul(x, x)); }, a, 1e-5) < 1e-7);
}

TEST_CASE("layout ops: reshape, slice, concat, stack, transpose gradients") {
  std::mt19937_64 rng(59);
  Tensor a = random_tensor({4, 6}, rng);
  Tensor w1 = random_tensor({2, 12}, rng);
  CHECK(finite_diff_check(
            [&](const Tensor& x) { return sum_all(mul(reshape(x, {2, 12}), w1)); }, a, 1e-6) <
        1e-7);
  Tensor w2 = random_tensor({4, 2}, rng);
  CHECK(finite_diff_check(
            [&](const Tensor& x) { return sum_all(mul(slice_cols(x, 1, 2), w2)); }, a, 1e-6) <
        1e-7);
  Tensor w3 = random_tensor({2, 6}, rng);
  CHECK(finite_diff_check(
            [&](const Tensor& x) { return sum_all(mul(slice_rows(x, 1, 2), w3)); }, a, 1e-6) <
        1e-7);
  Tensor w4 = random_tensor({4, 12}, rng);
  CHECK(finite_diff_check(
            [&](const Tensor& x) {
              return sum_all(mul(concat_cols({x, slice_cols(x, 0, 6)}), w4));
            },
            a, 1e-6) < 1e-7);
  Tensor w5 = random_tensor({2, 4, 6}, rng);
  CHECK(finite_diff_check(
            [&](const Tensor& x) { return sum_all(mul(stack({x, x}), w5)); }, a, 1e-6) < 1e-7);
  Tensor w6 = random_tensor({6, 4}, rng);
  CHECK(finite_diff_check(
            [&](const Tensor& x) { return sum_all(mul(transpose(x), w6)); }, a, 1e-6) < 1e-7);
}

TEST_CASE("add_rowvec, tanh, embedding gradients") {
  std::mt19937_64 rng(61);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor v = random_tensor({4}, rng);
  Tensor w = random_tensor({3, 4}, rng);
  CHECK(finite_diff_check(
            [&](const Tensor& x) { return sum_all(mul(add_rowvec(x, v), w)); }, a, 1e-6) < 1e-7);
  CHECK(finite_diff_check(
            [&](const Tensor& vv) { return sum_all(mul(add_rowvec(a, vv), w)); }, v, 1e-6) <
        1e-7);
  CHECK(finite_diff_check([&](const Tensor& x) { return sum_all(tanh_op(x)); }, a, 1e-6) < 1e-7);

  Tensor table = random_tensor({5, 3}, rng);
  std::vector<int> ids = {0, 2, 2, 4};
  Tensor w2 = random_tensor({4, 3}, rng);
  CHECK(finite_diff_check(
            [&](const Tensor& t) { return sum_all(mul(embedding_rows(t, ids), w2)); }, table,
            1e-6) < 1e-7);
  CHECK_THROWS_AS(embedding_rows(table, {5}), std::out_of_range);
}

TEST_CASE("dropout: zero rate is identity, mask is reproducible") {
  std::mt19937_64 rng(67);
  Tensor a = random_tensor({4, 4}, rng);
  std::mt19937_64 r1(123);
  Tensor d0 = dropout(a, 0.0, r1);
  CHECK(d0.values() == a.values());

  std::mt19937_64 r2(123), r3(123);
  Tensor d1 = dropout(a, 0.5, r2);
  Tensor d2 = dropout(a, 0.5, r3);
  CHECK(d1.values() == d2.values());
  CHECK_THROWS_AS(dropout(a, 1.0, r2), std::invalid_argument);
}

TEST_CASE("public ops keep finite values on finite input") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = random_tensor({4, 8}, rng);
    for (double& v : a.values_mut()) v *= 200.0;
    Tensor g = Tensor::full({8}, 1.0);
    Tensor b = Tensor::zeros({8});
    CHECK(softmax_rows(a).all_finite());
    CHECK(layer_norm(a, g, b, 1e-12).all_finite());
    CHECK(gelu(a).all_finite());
    CHECK(kl_div(a, scale(a, -1.0)).all_finite());
  }
}
