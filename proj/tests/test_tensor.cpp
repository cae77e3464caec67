#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "oa/gradcheck.hpp"
#include "oa/rng.hpp"
#include "oa/tensor.hpp"

using namespace oa;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void check_close(std::span<const double> got, const std::vector<double>& want, double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("tensor construction validates shapes") {
  CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.dim(-1) == 3);
  CHECK(t.grad().empty());
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    Tensor a({2, 2}, {1, 0, 0, 1});
    Tensor b({2, 2}, {3, 4, 5, 6});
    CHECK(values(matmul(a, b)) == std::vector<double>{3, 4, 5, 6});
  }
  SUBCASE("dot product") {
    CHECK(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})).item() == 11.0);
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(Tensor({2, 3}), Tensor({2, 3}));
      FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2,3]") != std::string::npos);
    }
  }
  SUBCASE("gradient of sum equals ones * b^T") {
    Rng rng(11);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    sum(matmul(a, b)).backward();
    // closed form: d sum(ab) / d a_ik = sum_j b_kj
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 4; ++k) {
        const double want = b.at({k, 0}) + b.at({k, 1});
        CHECK(a.grad()[i * 4 + k] == doctest::Approx(want).epsilon(1e-14));
      }
    // and central differences agree
    auto report = check_gradients([&] { return sum(matmul(a, b)); }, {a}, {.probes = 12});
    CHECK(report.max_rel_error < 1e-6);
  }
  SUBCASE("batched broadcast") {
    Rng rng(3);
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 3, 5});
    double want = 0.0;
    for (std::size_t k = 0; k < 4; ++k) want += a.at({1, 2, k}) * b.at({k, 3});
    CHECK(c.at({1, 2, 3}) == doctest::Approx(want));
  }
}

TEST_CASE("softmax") {
  check_close(softmax(Tensor({2}, {0, 0}), 0).data(), {0.5, 0.5});
  check_close(softmax(Tensor({2}, {std::log(2.0), 0}), 0).data(), {2.0 / 3.0, 1.0 / 3.0});
  auto big = softmax(Tensor({2}, {1000, 0}), 0);
  CHECK(std::abs(big.data()[0] - 1.0) < 1e-12);
  CHECK(std::abs(big.data()[1]) < 1e-12);
  CHECK_THROWS_AS(softmax(Tensor({2}, {NAN, 0}), 0), std::domain_error);
  CHECK_THROWS_AS(softmax(Tensor({2}), 1), std::invalid_argument);

  SUBCASE("property: nonnegative, sums to one along the axis") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t r = 1 + rng.below(5), c = 1 + rng.below(6);
      Tensor x = random_tensor({r, c}, rng, false, -30.0, 30.0);
      const std::ptrdiff_t axis = static_cast<std::ptrdiff_t>(rng.below(2));
      Tensor y = softmax(x, axis);
      Tensor s = sum_axis(y, axis);
      for (double v : y.data()) CHECK(v >= 0.0);
      for (double v : s.data()) CHECK(std::abs(v - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("elementwise with broadcasting") {
  CHECK(values(mul(Tensor({3}, {1, 2, 3}), Tensor({3}, {2, 2, 2}))) == std::vector<double>{2, 4, 6});
  Tensor a({3}, {1, 2, 3});
  CHECK(values(add(a, Tensor({3}, 0.0))) == values(a));
  Tensor m({4, 1, 5}, 1.0);
  Tensor n({1, 3, 5}, 2.0);
  CHECK(mul(m, n).shape() == Shape{4, 3, 5});
  CHECK_THROWS_AS(add(Tensor({2, 3}), Tensor({4})), std::invalid_argument);

  SUBCASE("broadcast gradients reduce over expanded axes") {
    Rng rng(8);
    Tensor x = random_tensor({3, 1, 4}, rng);
    Tensor y = random_tensor({1, 2, 4}, rng);
    sum(mul(x, y)).backward();
    // d/dx[i,0,k] = sum_j y[0,j,k]
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 4; ++k)
        CHECK(x.grad()[i * 4 + k] == doctest::Approx(y.at({0, 0, k}) + y.at({0, 1, k})));
  }
}

TEST_CASE("layer_norm, dropout, concat") {
  Tensor ln = layer_norm(Tensor({1, 2}, {1, 3}), Tensor({2}, 1.0), Tensor({2}, 0.0), 1e-15);
  check_close(ln.data(), {-1.0, 1.0});
  CHECK_THROWS_AS(layer_norm(Tensor({1, 2}), Tensor({2}, 1.0), Tensor({2}), 0.0), std::invalid_argument);

  Rng rng(1);
  Tensor x = random_tensor({4, 5}, rng);
  Tensor same = dropout(x, 0.3, nullptr, false);
  CHECK(same.node() == x.node());
  CHECK_THROWS_AS(dropout(x, 1.0, &rng, true), std::invalid_argument);
  CHECK_THROWS_AS(dropout(x, -0.1, &rng, true), std::invalid_argument);

  Rng r1(99), r2(99);
  Tensor d1 = dropout(x, 0.3, &r1, true);
  Tensor d2 = dropout(x, 0.3, &r2, true);
  CHECK(values(d1) == values(d2));
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = d1.data()[i];
    CHECK((v == 0.0 || std::abs(v - x.data()[i] / 0.7) < 1e-15));
  }

  std::vector<Tensor> parts{Tensor({3, 8}, 1.0), Tensor({3, 8}, 2.0)};
  Tensor c = concat(parts, 1);
  CHECK(c.shape() == Shape{3, 16});
  CHECK(c.at({2, 7}) == 1.0);
  CHECK(c.at({2, 8}) == 2.0);
}

TEST_CASE("conv1d_dynamic") {
  Tensor in({1, 4}, {1, 2, 3, 4});
  SUBCASE("window sums") {
    Tensor out = conv1d_dynamic(in, Tensor({1, 1, 2}, {1, 1}), Tensor({1, 1}, 0.0), 2);
    CHECK(out.shape() == Shape{1, 1, 2});
    CHECK(values(out) == std::vector<double>{3, 7});
  }
  SUBCASE("two filters flatten filter-major") {
    Tensor out = conv1d_dynamic(in, Tensor({1, 2, 2}, {1, 1, 1, -1}), Tensor({1, 1}, 0.0), 2);
    CHECK(values(out) == std::vector<double>{3, 7, -1, -1});
  }
  SUBCASE("L=16, S=4, F=4 gives width 16") {
    Tensor out = conv1d_dynamic(Tensor({3, 16}, 1.0), Tensor({2, 4, 4}, 1.0), Tensor({2, 1}, 0.0), 4);
    CHECK(out.shape() == Shape{3, 2, 16});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(conv1d_dynamic(Tensor({1, 5}), Tensor({1, 1, 2}), Tensor({1, 1}), 2), std::invalid_argument);
    CHECK_THROWS_AS(conv1d_dynamic(in, Tensor({1, 1, 3}), Tensor({1, 1}), 2), std::invalid_argument);
    CHECK_THROWS_AS(conv1d_dynamic(in, Tensor({2, 1, 2}), Tensor({2, 1}), 2, ConvPairing::kRowWise),
                    std::invalid_argument);
  }
  SUBCASE("property: all-ones filters equal brute-force window sums") {
    Rng rng(21);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t s = 1 + rng.below(4);
      const std::size_t len = s * (1 + rng.below(64 / s));
      const std::size_t rows = 1 + rng.below(3);
      Tensor x = random_tensor({rows, len}, rng, false);
      Tensor out = conv1d_dynamic(x, Tensor({1, 1, s}, 1.0), Tensor({1, 1}, 0.0), s);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t w = 0; w < len / s; ++w) {
          double want = 0.0;
          for (std::size_t t = 0; t < s; ++t) want += x.at({r, w * s + t});
          CHECK(std::abs(out.at({r, 0, w}) - want) < 1e-12);
        }
    }
  }
  SUBCASE("row-wise pairing uses each row's own filters") {
    Tensor x({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
    Tensor f({2, 1, 2}, {1, 0, 0, 1});
    Tensor out = conv1d_dynamic(x, f, Tensor({2, 1}, {0.5, -0.5}), 2, ConvPairing::kRowWise);
    CHECK(out.shape() == Shape{2, 2});
    CHECK(values(out) == std::vector<double>{1.5, 3.5, 5.5, 7.5});
  }
}

TEST_CASE("backward") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(x).backward();
  CHECK(values(Tensor({2, 3}, std::vector<double>(x.grad().begin(), x.grad().end()))) ==
        std::vector<double>(6, 1.0));

  Tensor r({2}, {-1, 2}, true);
  sum(relu(r)).backward();
  CHECK(r.grad()[0] == 0.0);
  CHECK(r.grad()[1] == 1.0);

  CHECK_THROWS_AS(relu(r).backward(), std::invalid_argument);

  SUBCASE("repeated calls accumulate") {
    Tensor w({2}, {1, 1}, true);
    Tensor loss = sum(mul(w, Tensor({2}, {3, 4})));
    loss.backward();
    loss.backward();
    CHECK(w.grad()[0] == 6.0);
    CHECK(w.grad()[1] == 8.0);
    w.zero_grad();
    CHECK(w.grad()[0] == 0.0);
  }
}

TEST_CASE("gradient checks per op (>= 100 probes)") {
  Rng rng(2024);
  const GradCheckOptions opts{.probes = 100};
  auto expect_pass = [](const GradCheckReport& rep) {
    INFO(rep.worst);
    CHECK(rep.passed());
    CHECK(rep.probes >= 100);
  };
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 5}, rng);
  Tensor c = random_tensor({3, 1, 4}, rng);
  Tensor d = random_tensor({1, 2, 4}, rng);
  Tensor g = random_tensor({4}, rng);
  Tensor bias = random_tensor({4}, rng);
  Tensor w = random_tensor({5, 4}, rng);
  Tensor wb = random_tensor({5}, rng);

  expect_pass(check_gradients([&] { return projection_loss(matmul(a, b), 1); }, {a, b}, opts));
  expect_pass(check_gradients([&] { return projection_loss(add(c, d), 2); }, {c, d}, opts));
  expect_pass(check_gradients([&] { return projection_loss(sub(c, d), 2); }, {c, d}, opts));
  expect_pass(check_gradients([&] { return projection_loss(mul(c, d), 3); }, {c, d}, opts));
  expect_pass(check_gradients([&] { return projection_loss(linear(a, w, wb), 4); }, {a, w, wb}, opts));
  expect_pass(check_gradients([&] { return projection_loss(relu(a), 5); }, {a}, opts));
  expect_pass(check_gradients([&] { return projection_loss(softmax(c, 1), 6); }, {c}, opts));
  expect_pass(check_gradients([&] { return projection_loss(softmax(a, -1), 6); }, {a}, opts));
  expect_pass(check_gradients([&] { return projection_loss(layer_norm(a, g, bias), 7); }, {a, g, bias}, opts));
  expect_pass(check_gradients(
      [&] {
        Rng drop(5);
        return projection_loss(dropout(a, 0.3, &drop, true), 8);
      },
      {a}, opts));
  expect_pass(check_gradients(
      [&] {
        std::vector<Tensor> parts{a, a, matmul(a, transpose(a))};
        return projection_loss(concat(parts, 1), 9);
      },
      {a}, opts));
  expect_pass(check_gradients([&] { return projection_loss(transpose(c), 10); }, {c}, opts));
  expect_pass(check_gradients([&] { return projection_loss(reshape(a, {2, 6}), 11); }, {a}, opts));
  expect_pass(check_gradients([&] { return projection_loss(sum_axis(c, 2), 12); }, {c}, opts));
  expect_pass(check_gradients([&] { return projection_loss(scale(c, -0.7), 13); }, {c}, opts));
  const std::vector<std::size_t> rows{2, 0, 2};
  expect_pass(check_gradients([&] { return projection_loss(gather_rows(a, rows), 14); }, {a}, opts));

  Tensor conv_in = random_tensor({3, 8}, rng);
  Tensor filt = random_tensor({2, 2, 2}, rng);
  Tensor fb = random_tensor({2, 1}, rng);
  Tensor fb2 = random_tensor({2, 2}, rng);
  expect_pass(check_gradients([&] { return projection_loss(conv1d_dynamic(conv_in, filt, fb, 2), 15); },
                              {conv_in, filt, fb}, opts));
  expect_pass(check_gradients([&] { return projection_loss(conv1d_dynamic(conv_in, filt, fb2, 2), 15); },
                              {conv_in, filt, fb2}, opts));
  Tensor pair_in = random_tensor({2, 8}, rng);
  expect_pass(check_gradients(
      [&] { return projection_loss(conv1d_dynamic(pair_in, filt, fb, 2, ConvPairing::kRowWise), 16); },
      {pair_in, filt, fb}, opts));
  const std::vector<int> labels{0, 1, 1};
  Tensor logits = random_tensor({3, 2}, rng);
  expect_pass(check_gradients([&] { return cross_entropy(logits, labels); }, {logits}, opts));
}

TEST_CASE("backward is bitwise deterministic") {
  auto run = [] {
    Rng rng(77);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor w = random_tensor({3, 6}, rng);
    Rng drop(3);
    Tensor y = softmax(linear(dropout(x, 0.3, &drop, true), w), -1);
    projection_loss(y, 4).backward();
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("cross_entropy") {
  Tensor uniform({3, 2}, 0.0);
  const std::vector<int> labels{0, 1, 1};
  CHECK(cross_entropy(uniform, labels).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const std::vector<int> bad{0, 2, 1};
  CHECK_THROWS_AS(cross_entropy(uniform, bad), std::invalid_argument);
}
