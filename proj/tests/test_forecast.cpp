#include <doctest.h>

#include <cmath>

#include "hypervae/forecast.hpp"
#include "hypervae/optim.hpp"
#include "test_util.hpp"

using namespace hypervae;
using namespace hypervae::forecast;
using hvtest::check_gradients;

namespace {

// scaled-down widths so the finite-difference checks stay fast
ForecastArch tiny_arch() {
  ForecastArch a;
  a.vae = {.target_dim = 2, .latent_dim = 3, .mixture_components = 2, .encoder_hidden = {8, 8, 8},
           .decoder_hidden = {8, 8, 8}};
  a.raster_size = 16;
  a.spatial_channels = {3, 4, 4, 5};
  a.social_ref_hidden = 24;
  a.social_traffic_hidden = 40;
  a.spatial_out = 96;
  a.time_hidden = 8;
  a.head_hidden = 12;
  return a;
}

Instance random_instance(Rng& rng, int raster_size, int agents_present = 4) {
  Instance inst;
  inst.raster.assign(static_cast<std::size_t>(3) * raster_size * raster_size, 0.0);
  for (auto& v : inst.raster) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  inst.histories.assign(5 * 10 * 2, kSentinel);
  inst.mask.fill(0.0);
  for (int a = 0; a < std::min(agents_present + 1, 5); ++a) {
    for (int k = 0; k < 10; ++k) {
      inst.histories[(static_cast<std::size_t>(a) * 10 + k) * 2] = rng.uniform(-20, 20);
      inst.histories[(static_cast<std::size_t>(a) * 10 + k) * 2 + 1] = rng.uniform(-20, 20);
    }
    if (a > 0) inst.mask[static_cast<std::size_t>(a) - 1] = 1.0;
  }
  for (auto& p : inst.future) p = {rng.uniform(-10, 10), rng.uniform(-10, 10)};
  return inst;
}

}  // namespace

TEST_CASE("zeroed social module maps anything to the zero encoding") {
  Rng rng(70);
  ForecastArch arch = tiny_arch();
  ParamStore ps;
  SocialModule social(ps, arch, rng);
  for (auto& [name, t] : ps.items())
    for (auto& v : t.mutable_data()) v = 0.0;
  Tensor hist = Tensor::zeros({2, 5, 10, 2});
  Tensor mask = Tensor::full({2, 4}, 1.0);
  Tensor out = social.forward(hist, mask);
  CHECK(out.shape() == Shape{2, 64});
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("social encoding dims are 24 + 40 for any input") {
  Rng rng(71);
  ForecastArch arch = tiny_arch();
  ParamStore ps;
  SocialModule social(ps, arch, rng);
  Tensor hist = Tensor::randn({3, 5, 10, 2}, rng);
  Tensor mask({3, 4}, {1, 1, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1});
  Tensor out = social.forward(hist, mask);
  CHECK(out.shape() == Shape{3, 64});
  Tensor bad = Tensor::randn({3, 5, 7, 2}, rng);
  CHECK_THROWS_AS(social.forward(bad, mask), std::invalid_argument);
}

TEST_CASE("permuting the non-target agents leaves the traffic encoding unchanged") {
  Rng rng(72);
  ForecastArch arch = tiny_arch();
  ParamStore ps;
  SocialModule social(ps, arch, rng);
  Instance inst = random_instance(rng, arch.raster_size);
  auto hist_of = [&](const std::vector<int>& order) {
    std::vector<double> h(5 * 10 * 2);
    for (int k = 0; k < 20; ++k) h[static_cast<std::size_t>(k)] = inst.histories[static_cast<std::size_t>(k)];
    for (int a = 0; a < 4; ++a)
      for (int k = 0; k < 20; ++k)
        h[static_cast<std::size_t>(a + 1) * 20 + k] =
            inst.histories[static_cast<std::size_t>(order[static_cast<std::size_t>(a)] + 1) * 20 + k];
    return Tensor({1, 5, 10, 2}, h);
  };
  Tensor mask = Tensor::full({1, 4}, 1.0);
  Tensor a = social.forward(hist_of({0, 1, 2, 3}), mask);
  Tensor b = social.forward(hist_of({2, 0, 3, 1}), mask);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-9));
}

TEST_CASE("spatial module emits 96 features for 64 and 200 pixel rasters") {
  Rng rng(73);
  ForecastArch arch = tiny_arch();
  ParamStore ps, buf;
  SpatialModule spatial(ps, buf, arch, rng);
  Tensor r64 = Tensor::randn({1, 3, 64, 64}, rng);
  CHECK(spatial.forward(r64, false).shape() == Shape{1, 96});
  Tensor r200 = Tensor::randn({1, 3, 200, 200}, rng);
  CHECK(spatial.forward(r200, false).shape() == Shape{1, 96});
  Tensor bad_ch = Tensor::randn({1, 2, 64, 64}, rng);
  CHECK_THROWS_AS(spatial.forward(bad_ch, false), std::invalid_argument);
  Tensor bad_sz = Tensor::randn({1, 3, 8, 8}, rng);
  CHECK_THROWS_AS(spatial.forward(bad_sz, false), std::invalid_argument);
}

TEST_CASE("coordinate channels break translation invariance") {
  Rng rng(74);
  ForecastArch arch = tiny_arch();
  arch.raster_size = 32;
  ParamStore ps, buf;
  SpatialModule spatial(ps, buf, arch, rng);
  auto blob_at = [&](int cx, int cy) {
    Tensor r = Tensor::zeros({1, 3, 32, 32});
    for (int c = 0; c < 3; ++c)
      for (int i = -2; i <= 2; ++i)
        for (int j = -2; j <= 2; ++j)
          r.mutable_data()[(static_cast<std::size_t>(c) * 32 + cy + i) * 32 + cx + j] = 1.0;
    return r;
  };
  Tensor a = spatial.forward(blob_at(10, 16), false);
  Tensor b = spatial.forward(blob_at(18, 16), false);  // 8-pixel shift
  double l2 = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) l2 += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
  CHECK(std::sqrt(l2) > 1e-6);
}

TEST_CASE("spatial gradients pass finite differences on a tiny raster") {
  Rng rng(75);
  ForecastArch arch = tiny_arch();
  arch.spatial_channels = {3, 3, 4, 4};
  ParamStore ps, buf;
  SpatialModule spatial(ps, buf, arch, rng);
  Tensor raster = Tensor::randn({2, 3, 16, 16}, rng, 1.0, true);
  auto loss = [&]() { return spatial.forward(raster, true).square().mean(); };
  std::vector<Tensor> leaves{raster};
  for (auto& [n, t] : ps.items()) leaves.push_back(t);
  auto r = check_gradients(leaves, loss, 1e-5, 8);
  CHECK(r.max_rel_err < 1e-3);
}

TEST_CASE("time module: dim 10, sensitive to its input, deterministic") {
  Rng rng(76);
  ForecastArch arch = tiny_arch();
  ParamStore ps;
  TimeModule tm(ps, arch, rng);
  Tensor t0({2, 1}, {-1.0, 1.0});  // scaled t=0 and t=4
  Tensor out = tm.forward(t0);
  CHECK(out.shape() == Shape{2, 10});
  double l2 = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double d = out.at(i) - out.at(10 + i);
    l2 += d * d;
  }
  CHECK(std::sqrt(l2) > 1e-9);
  Tensor out2 = tm.forward(t0);
  CHECK(out.data() == out2.data());
}

TEST_CASE("hypernet emits rows tiling the generated-weight layouts exactly") {
  Rng rng(77);
  ForecastArch arch = tiny_arch();
  Hypernet net(arch, rng);
  Instance inst = random_instance(rng, arch.raster_size);
  auto thetas = net.forward({&inst}, 3, {0.2, 1.0, 4.0}, false);
  const WeightLayout enc = WeightLayout::for_widths(arch.vae.encoder_widths());
  const WeightLayout dec = WeightLayout::for_widths(arch.vae.decoder_widths());
  CHECK(thetas.enc.rows.shape() == Shape{3, enc.total});
  CHECK(thetas.dec.rows.shape() == Shape{3, dec.total});
  // encode/decode must accept them
  Tensor x = Tensor::randn({3, 2}, rng);
  Posterior q = encode(x, thetas.enc, arch.vae);
  CHECK(q.mean.shape() == Shape{3, arch.vae.latent_dim});
  Tensor z = Tensor::randn({3, arch.vae.latent_dim}, rng);
  GmmHeads heads = decode(z, thetas.dec, arch.vae);
  CHECK(heads.logits.shape() == Shape{3, arch.vae.mixture_components});
}

TEST_CASE("query times out of range are rejected") {
  Rng rng(78);
  ForecastArch arch = tiny_arch();
  Hypernet net(arch, rng);
  Instance inst = random_instance(rng, arch.raster_size);
  CHECK_THROWS_AS(net.forward({&inst}, 1, {5.0}, false), std::invalid_argument);
  CHECK_THROWS_AS(net.forward({&inst}, 1, {-0.2}, false), std::invalid_argument);
}

TEST_CASE("changing the raster changes the emitted decoder weights") {
  Rng rng(79);
  ForecastArch arch = tiny_arch();
  Hypernet net(arch, rng);
  Instance a = random_instance(rng, arch.raster_size);
  Instance b = a;
  for (std::size_t i = 0; i < b.raster.size(); ++i) b.raster[i] = 1.0 - b.raster[i];
  Tensor ta = net.forward({&a}, 1, {1.0}, false).dec.rows;
  Tensor tb = net.forward({&b}, 1, {1.0}, false).dec.rows;
  double l2 = 0.0;
  for (std::size_t i = 0; i < ta.numel(); ++i) l2 += (ta.at(i) - tb.at(i)) * (ta.at(i) - tb.at(i));
  CHECK(std::sqrt(l2) > 1e-9);
}

TEST_CASE("the padding rule serves any number of present agents") {
  Rng rng(80);
  ForecastArch arch = tiny_arch();
  Hypernet net(arch, rng);
  for (int present = 0; present <= 4; ++present) {
    Instance inst = random_instance(rng, arch.raster_size, present);
    auto thetas = net.forward({&inst}, 1, {2.0}, false);
    CHECK(thetas.dec.rows.shape()[0] == 1);
    for (double v : thetas.dec.rows.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("elbo gradients reach every submodule") {
  Rng rng(81);
  ForecastArch arch = tiny_arch();
  Hypernet net(arch, rng);
  std::vector<Instance> insts;
  for (int i = 0; i < 2; ++i) insts.push_back(random_instance(rng, arch.raster_size));
  Adam adam(net.params(), {.lr = 1e-3});
  for (int step = 0; step < 10; ++step) {
    net.params().zero_grads();
    auto thetas = net.forward({&insts[0], &insts[1]}, 2, {0.4, 1.2, 2.0, 3.6}, true);
    Tensor x = Tensor::randn({4, 2}, rng);
    Tensor eps = Tensor::randn({4, arch.vae.latent_dim}, rng);
    ElboGraph g = elbo_graph(x, thetas.enc, thetas.dec, arch.vae, eps);
    g.loss.backward();
    if (step == 9) {
      auto grad_norm_of = [&](const std::string& prefix) {
        double s = 0.0;
        for (auto& [name, t] : net.params().items())
          if (name.rfind(prefix, 0) == 0 && t.has_grad())
            for (double gv : t.grad()) s += gv * gv;
        return std::sqrt(s);
      };
      CHECK(grad_norm_of("social.") > 0.0);
      CHECK(grad_norm_of("spatial.") > 0.0);
      CHECK(grad_norm_of("time.") > 0.0);
      CHECK(grad_norm_of("head.") > 0.0);
    }
    adam.step();
  }
}

TEST_CASE("full tiny hypernet passes the finite-difference oracle") {
  Rng rng(82);
  ForecastArch arch = tiny_arch();
  arch.spatial_channels = {3, 3, 3, 3};
  arch.head_hidden = 8;
  arch.vae.encoder_hidden = {5, 5, 5};
  arch.vae.decoder_hidden = {5, 5, 5};
  Hypernet net(arch, rng);
  Instance inst = random_instance(rng, arch.raster_size);
  Tensor x = Tensor::randn({2, 2}, rng);
  Tensor eps = Tensor::randn({2, arch.vae.latent_dim}, rng);
  auto loss = [&]() {
    auto thetas = net.forward({&inst}, 2, {0.6, 2.4}, true);
    return elbo_graph(x, thetas.enc, thetas.dec, arch.vae, eps).loss;
  };
  std::vector<Tensor> leaves;
  for (auto& [name, t] : net.params().items()) leaves.push_back(t);
  auto r = check_gradients(leaves, loss, 1e-5, 4);
  CHECK(r.max_rel_err < 1e-3);
  CHECK(r.checked >= 100);
}

TEST_CASE("instances built from episodes keep the target in slot zero") {
  Rng rng(83);
  scenes::Episode e = scenes::generate_scene(scenes::ScenarioTag::FourWay, rng);
  for (std::size_t target = 0; target < e.agents.size(); ++target) {
    Instance inst = make_instance(e, static_cast<int>(target));
    // target history ends at the origin
    CHECK(inst.histories[9 * 2] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(inst.histories[9 * 2 + 1] == doctest::Approx(0.0).epsilon(1e-12));
    int present = 0;
    for (double m : inst.mask) present += m > 0.5 ? 1 : 0;
    CHECK(present == static_cast<int>(e.agents.size()) - 1);
    CHECK(inst.raster.size() == static_cast<std::size_t>(3) * 64 * 64);
  }
}

TEST_CASE("sampled trajectories share Z across the horizon deterministically") {
  Rng rng(84);
  ForecastArch arch = tiny_arch();
  arch.raster_size = 64;
  Hypernet net(arch, rng);
  scenes::Episode e = scenes::generate_scene(scenes::ScenarioTag::Cruise, rng);
  Instance inst = make_instance(e, 0);
  Rng s1(5), s2(5);
  auto a = sample_trajectories(net, inst, 3, s1);
  auto b = sample_trajectories(net, inst, 3, s2);
  REQUIRE(a.size() == 3);
  CHECK(a == b);
  CHECK(a[0].size() == static_cast<std::size_t>(scenes::kFutureSteps));
}
