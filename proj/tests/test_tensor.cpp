#include <doctest.h>

#include <cmath>

#include "hypervae/rng.hpp"
#include "hypervae/tensor.hpp"
#include "test_util.hpp"

using hypervae::Rng;
using hypervae::Shape;
using hypervae::Tensor;
using hvtest::check_gradients;

namespace {

Tensor randn_away_from_zero(Shape shape, Rng& rng, double margin = 0.08) {
  Tensor t = Tensor::randn(shape, rng, 1.0, true);
  for (auto& v : t.mutable_data())
    if (std::abs(v) < margin) v += v >= 0 ? margin : -margin;
  return t;
}

}  // namespace

TEST_CASE("relu forward matches definition") {
  Tensor x({3}, {-1.0, 0.0, 2.0});
  Tensor y = x.relu();
  CHECK(y.data() == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("softmax of equal logits is uniform") {
  Tensor x({2}, {0.0, 0.0});
  Tensor y = x.softmax();
  CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.at(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("matmul with identity returns the operand") {
  Rng rng(7);
  Tensor a = Tensor::randn({3, 3}, rng);
  Tensor eye = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.mutable_data()[i * 3 + i] = 1.0;
  Tensor out = eye.matmul(a);
  for (std::size_t i = 0; i < 9; ++i) CHECK(out.at(i) == doctest::Approx(a.at(i)).epsilon(1e-15));
}

TEST_CASE("matmul shape mismatch raises a descriptive error") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(a.matmul(b), doctest::Contains("matmul"), std::invalid_argument);
}

TEST_CASE("elementwise add shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 4});
  CHECK_THROWS_WITH_AS(a.add(b), doctest::Contains("[2,4]"), std::invalid_argument);
}

TEST_CASE("backward of sum of squares") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor loss = x.mul(x).sum();
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward of sum of relu") {
  Tensor x({2}, {-1.0, 3.0}, true);
  Tensor loss = x.relu().sum();
  loss.backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("backward requires scalar loss") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor y = x.mul(x);
  CHECK_THROWS_AS(y.backward(), std::runtime_error);
}

TEST_CASE("diamond graph accumulates both contributions") {
  // loss = sum(x*x + x) uses x twice at the top level and once nested
  Tensor x({1}, {3.0}, true);
  Tensor a = x.mul(x);
  Tensor loss = a.add(x).sum();
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0 * 3.0 + 1.0));
}

TEST_CASE("broadcast add of bias sums gradient over rows") {
  Tensor x({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b({2}, {10, 20}, true);
  Tensor loss = x.add(b).sum();
  loss.backward();
  CHECK(b.grad()[0] == doctest::Approx(3.0));
  CHECK(b.grad()[1] == doctest::Approx(3.0));
  CHECK(x.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("random MLP gradients match finite differences") {
  Rng rng(42);
  Tensor x = Tensor::randn({4, 3}, rng, 1.0, true);
  Tensor w1 = Tensor::randn({3, 8}, rng, 0.7, true);
  Tensor b1 = Tensor::randn({1, 8}, rng, 0.3, true);
  Tensor w2 = Tensor::randn({8, 8}, rng, 0.7, true);
  Tensor b2 = Tensor::randn({1, 8}, rng, 0.3, true);
  Tensor w3 = Tensor::randn({8, 2}, rng, 0.7, true);
  auto loss = [&]() {
    Tensor h1 = x.matmul(w1).add(b1).tanh_();
    Tensor h2 = h1.matmul(w2).add(b2).sigmoid();
    return h2.matmul(w3).square().mean();
  };
  auto r = check_gradients({x, w1, b1, w2, b2, w3}, loss);
  CHECK(r.max_rel_err < 1e-4);
  CHECK(r.checked > 100);
}

TEST_CASE("per-op gradients match finite differences") {
  Rng rng(1234);
  SUBCASE("exp log sqrt clamp chain") {
    Tensor x({5}, {0.5, 1.5, 2.5, 0.9, 3.0}, true);
    auto loss = [&]() { return x.exp_().log_().sqrt_().clamp(0.2, 10.0).sum(); };
    CHECK(check_gradients({x}, loss).max_rel_err < 1e-4);
  }
  SUBCASE("div") {
    Tensor a = randn_away_from_zero({6}, rng);
    Tensor b = randn_away_from_zero({6}, rng, 0.3);
    auto loss = [&]() { return a.div(b).square().mean(); };
    CHECK(check_gradients({a, b}, loss).max_rel_err < 1e-4);
  }
  SUBCASE("softmax and logsumexp") {
    Tensor x = Tensor::randn({3, 5}, rng, 1.2, true);
    auto l1 = [&]() { return x.softmax().square().sum(); };
    CHECK(check_gradients({x}, l1).max_rel_err < 1e-4);
    auto l2 = [&]() { return x.logsumexp().sum(); };
    CHECK(check_gradients({x}, l2).max_rel_err < 1e-4);
  }
  SUBCASE("reductions over axes") {
    Tensor x = Tensor::randn({2, 3, 4}, rng, 1.0, true);
    auto l1 = [&]() { return x.sum_axes({0, 2}, false).square().sum(); };
    CHECK(check_gradients({x}, l1).max_rel_err < 1e-4);
    auto l2 = [&]() { return x.mean_axes({1}, true).square().sum(); };
    CHECK(check_gradients({x}, l2).max_rel_err < 1e-4);
  }
  SUBCASE("slice concat reshape tile repeat") {
    Tensor x = Tensor::randn({4, 6}, rng, 1.0, true);
    auto loss = [&]() {
      Tensor a = x.slice(1, 0, 2);
      Tensor b = x.slice(1, 2, 4);
      Tensor c = Tensor::concat({b, a}, 1).reshape({2, 12});
      return c.tile_cols(2).repeat_rows(3).square().mean();
    };
    CHECK(check_gradients({x}, loss).max_rel_err < 1e-4);
  }
  SUBCASE("rowwise_linear") {
    Tensor x = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor w = Tensor::randn({3, 4 * 2}, rng, 0.8, true);
    Tensor b = Tensor::randn({3, 2}, rng, 0.5, true);
    auto loss = [&]() { return Tensor::rowwise_linear(x, w, b, 4, 2).square().sum(); };
    CHECK(check_gradients({x, w, b}, loss).max_rel_err < 1e-4);
  }
  SUBCASE("conv2d and maxpool") {
    Tensor x = Tensor::randn({2, 3, 6, 6}, rng, 1.0, true);
    Tensor k = Tensor::randn({4, 3, 3, 3}, rng, 0.5, true);
    auto loss = [&]() { return x.conv2d(k, 1, 1).maxpool2d(2, 2).square().mean(); };
    // maxpool kinks excluded by random continuous inputs (ties have measure zero)
    CHECK(check_gradients({x, k}, loss).max_rel_err < 1e-4);
  }
  SUBCASE("strided conv no padding") {
    Tensor x = Tensor::randn({1, 2, 7, 7}, rng, 1.0, true);
    Tensor k = Tensor::randn({3, 2, 3, 3}, rng, 0.5, true);
    auto loss = [&]() { return x.conv2d(k, 2, 0).square().sum(); };
    CHECK(check_gradients({x, k}, loss).max_rel_err < 1e-4);
  }
}

TEST_CASE("rowwise_linear agrees with per-row matmul") {
  Rng rng(5);
  const int N = 4, in = 3, out = 5;
  Tensor x = Tensor::randn({N, in}, rng);
  Tensor w = Tensor::randn({N, in * out}, rng);
  Tensor b = Tensor::randn({N, out}, rng);
  Tensor y = Tensor::rowwise_linear(x, w, b, in, out);
  for (int n = 0; n < N; ++n) {
    Tensor xr = x.slice(0, n, 1);
    Tensor wr = w.slice(0, n, 1).reshape({in, out});
    Tensor br = b.slice(0, n, 1);
    Tensor yr = xr.matmul(wr).add(br);
    for (int o = 0; o < out; ++o)
      CHECK(y.at(static_cast<std::size_t>(n) * out + o) == doctest::Approx(yr.at(o)).epsilon(1e-12));
  }
}

TEST_CASE("logsumexp is stable for large logits") {
  Tensor x({1, 3}, {1000.0, 1000.0, 1000.0});
  CHECK(x.logsumexp().value() == doctest::Approx(1000.0 + std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("seeded graph construction is bit-reproducible") {
  auto run = [](std::uint64_t seed) {
    Rng rng = Rng::substream(seed, "t");
    Tensor x = Tensor::randn({4, 4}, rng, 1.0, true);
    Tensor w = Tensor::randn({4, 4}, rng, 1.0, true);
    Tensor loss = x.matmul(w).tanh_().square().sum();
    loss.backward();
    return std::make_pair(loss.value(), w.grad());
  };
  auto [l1, g1] = run(99);
  auto [l2, g2] = run(99);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}
