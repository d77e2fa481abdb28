#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hypervae/scenes.hpp"

using namespace hypervae;
using namespace hypervae::scenes;

TEST_CASE("seeded generation is deterministic") {
  Rng a(100), b(100);
  Episode e1 = generate_scene(ScenarioTag::FourWay, a);
  Episode e2 = generate_scene(ScenarioTag::FourWay, b);
  CHECK(e1 == e2);
}

TEST_CASE("four-way mode frequencies match the configured probabilities") {
  Rng rng(101);
  long counts[3] = {0, 0, 0};  // straight, left, right
  long total = 0;
  for (int i = 0; i < 1000; ++i) {
    Episode e = generate_scene(ScenarioTag::FourWay, rng);
    for (const auto& a : e.agents) {
      if (a.role != "approach") continue;
      ++total;
      if (a.mode == AgentMode::Straight) ++counts[0];
      if (a.mode == AgentMode::Left) ++counts[1];
      if (a.mode == AgentMode::Right) ++counts[2];
    }
  }
  const double probs[3] = {0.4, 0.3, 0.3};
  for (int m = 0; m < 3; ++m) {
    const double freq = static_cast<double>(counts[m]) / total;
    // 99% binomial bound (2.58 sigma)
    const double bound = 2.58 * std::sqrt(probs[m] * (1 - probs[m]) / total);
    CHECK(std::abs(freq - probs[m]) < bound);
  }
}

TEST_CASE("generated positions stay inside the drivable area") {
  Rng rng(102);
  for (auto tag : {ScenarioTag::FourWay, ScenarioTag::ThreeWay, ScenarioTag::Curve, ScenarioTag::Queue,
                   ScenarioTag::Cruise}) {
    for (int i = 0; i < 20; ++i) {
      Episode e = generate_scene(tag, rng);
      for (const auto& a : e.agents)
        for (const auto& p : a.traj) CHECK(inside_any(p, e.drivable));
    }
  }
}

TEST_CASE("speeds and curvature stay bounded") {
  Rng rng(103);
  for (auto tag : {ScenarioTag::FourWay, ScenarioTag::Curve, ScenarioTag::Queue}) {
    for (int i = 0; i < 15; ++i) {
      Episode e = generate_scene(tag, rng);
      for (const auto& a : e.agents)
        for (int k = 1; k < kTotalSteps; ++k) {
          const double vx = (a.traj[k].x - a.traj[k - 1].x) / kDt;
          const double vy = (a.traj[k].y - a.traj[k - 1].y) / kDt;
          CHECK(std::hypot(vx, vy) <= 15.0);
        }
    }
  }
}

TEST_CASE("queue motion propagates from the lead backwards") {
  Rng rng(104);
  for (int i = 0; i < 30; ++i) {
    Episode e = generate_scene(ScenarioTag::Queue, rng);
    double prev_disp = 1e9;
    for (const auto& a : e.agents) {
      if (a.role == "cruise") continue;
      const double disp = std::hypot(a.traj[kTotalSteps - 1].x - a.traj[kPastSteps - 1].x,
                                     a.traj[kTotalSteps - 1].y - a.traj[kPastSteps - 1].y);
      CHECK(disp <= prev_disp + 1e-6);
      prev_disp = disp;
      if (a.role == "lead") CHECK(disp > 3.0);
      if (a.role == "blocked") CHECK(disp < 1.0);
    }
  }
}

TEST_CASE("identity transform when the target is already canonical") {
  Rng rng(105);
  Episode e = generate_scene(ScenarioTag::Cruise, rng);
  // construct an agent at the origin moving along +x
  Agent a;
  for (int k = 0; k < kTotalSteps; ++k) a.traj[k] = {5.0 * time_of(k), 0.0};
  a.role = "cruise";
  e.agents[0] = a;
  auto [t, pose] = to_target_centric(e, 0);
  CHECK(pose.origin.x == doctest::Approx(0.0));
  CHECK(pose.origin.y == doctest::Approx(0.0));
  CHECK(pose.heading == doctest::Approx(0.0));
  for (int k = 0; k < kTotalSteps; ++k) {
    CHECK(t.agents[0].traj[k].x == doctest::Approx(e.agents[0].traj[k].x).epsilon(1e-12));
    CHECK(t.agents[0].traj[k].y == doctest::Approx(e.agents[0].traj[k].y).epsilon(1e-12));
  }
}

TEST_CASE("target lands at the origin with zero lateral velocity") {
  Rng rng(106);
  for (auto tag : {ScenarioTag::FourWay, ScenarioTag::Curve, ScenarioTag::Queue}) {
    for (int i = 0; i < 10; ++i) {
      Episode e = generate_scene(tag, rng);
      for (std::size_t k = 0; k < e.agents.size(); ++k) {
        auto [t, pose] = to_target_centric(e, static_cast<int>(k));
        const Vec2 at0 = t.agents[k].traj[kPastSteps - 1];
        CHECK(std::abs(at0.x) < 1e-9);
        CHECK(std::abs(at0.y) < 1e-9);
        // velocity at t=0 in the new frame has no lateral component (when moving)
        const Vec2 prev = t.agents[k].traj[kPastSteps - 2];
        const double vy = (at0.y - prev.y) / kDt;
        const double speed = std::hypot((at0.x - prev.x) / kDt, vy);
        if (speed >= 0.1) CHECK(std::abs(vy) < 1e-9);
        CHECK(pose.heading <= M_PI);
        CHECK(pose.heading > -M_PI);
      }
    }
  }
}

TEST_CASE("round trip through the target frame is exact to 1e-9") {
  Rng rng(107);
  double max_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto tag = static_cast<ScenarioTag>(rng.index(5));
    Episode e = generate_scene(tag, rng);
    const int target = static_cast<int>(rng.index(e.agents.size()));
    auto [t, pose] = to_target_centric(e, target);
    Episode back = from_target_centric(t, pose);
    for (std::size_t a = 0; a < e.agents.size(); ++a)
      for (int k = 0; k < kTotalSteps; ++k) {
        max_err = std::max(max_err, std::abs(back.agents[a].traj[k].x - e.agents[a].traj[k].x));
        max_err = std::max(max_err, std::abs(back.agents[a].traj[k].y - e.agents[a].traj[k].y));
      }
  }
  CHECK(max_err < 1e-9);
}

TEST_CASE("rigid transforms preserve pairwise distances") {
  Rng rng(108);
  for (int i = 0; i < 50; ++i) {
    Episode e = generate_scene(ScenarioTag::FourWay, rng);
    if (e.agents.size() < 2) continue;
    auto [t, pose] = to_target_centric(e, 0);
    for (int k = 0; k < kTotalSteps; k += 7) {
      const double before = std::hypot(e.agents[0].traj[k].x - e.agents[1].traj[k].x,
                                       e.agents[0].traj[k].y - e.agents[1].traj[k].y);
      const double after = std::hypot(t.agents[0].traj[k].x - t.agents[1].traj[k].x,
                                      t.agents[0].traj[k].y - t.agents[1].traj[k].y);
      CHECK(std::abs(before - after) < 1e-9);
    }
  }
}

TEST_CASE("double rotation by pi returns the original orientation") {
  Rng rng(109);
  Episode e = generate_scene(ScenarioTag::Cruise, rng);
  FramePose pose{{0.0, 0.0}, M_PI};
  Episode once = from_target_centric(e, pose);
  Episode twice = from_target_centric(once, pose);
  for (std::size_t a = 0; a < e.agents.size(); ++a)
    for (int k = 0; k < kTotalSteps; ++k) {
      CHECK(twice.agents[a].traj[k].x == doctest::Approx(e.agents[a].traj[k].x).epsilon(1e-9));
      CHECK(twice.agents[a].traj[k].y == doctest::Approx(e.agents[a].traj[k].y).epsilon(1e-9));
    }
}

TEST_CASE("missing target agent is an error") {
  Rng rng(110);
  Episode e = generate_scene(ScenarioTag::Cruise, rng);
  CHECK_THROWS_AS(to_target_centric(e, static_cast<int>(e.agents.size())), std::invalid_argument);
}

TEST_CASE("raster geometry: empty map, centered agent, channel count") {
  Episode e;
  Agent a;
  for (int k = 0; k < kTotalSteps; ++k) a.traj[k] = {0.0, 0.0};
  e.agents.push_back(a);
  auto grid = rasterize(e);
  CHECK(grid.size() == static_cast<std::size_t>(3 * 64 * 64));
  double drivable_sum = 0.0;
  for (int i = 0; i < 64 * 64; ++i) drivable_sum += grid[i];
  CHECK(drivable_sum == 0.0);  // no map
  // center cells of the occupancy channel are set
  const std::size_t c2 = 2 * 64 * 64;
  CHECK(grid[c2 + 31 * 64 + 31] == 1.0);
  CHECK(grid[c2 + 32 * 64 + 32] == 1.0);
}

TEST_CASE("raster is invariant under agent reordering") {
  Rng rng(111);
  Episode e = generate_scene(ScenarioTag::FourWay, rng);
  if (e.agents.size() >= 2) {
    Episode shuffled = e;
    std::swap(shuffled.agents[0], shuffled.agents[1]);
    CHECK(rasterize(e) == rasterize(shuffled));
  }
}

TEST_CASE("dataset round trip over random episodes is exact") {
  Rng rng(112);
  std::vector<Episode> eps;
  for (int i = 0; i < 100; ++i) eps.push_back(generate_scene(static_cast<ScenarioTag>(rng.index(5)), rng));
  const auto path = (std::filesystem::temp_directory_path() / "hv_scenes.ndjson").string();
  save_dataset(eps, path);
  const auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) CHECK(loaded[i] == eps[i]);
  // stability: a second save of the loaded data is byte-identical
  const auto path2 = (std::filesystem::temp_directory_path() / "hv_scenes2.ndjson").string();
  save_dataset(loaded, path2);
  std::ifstream f1(path), f2(path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("empty dataset file loads as empty") {
  const auto path = (std::filesystem::temp_directory_path() / "hv_empty.ndjson").string();
  std::ofstream(path).close();
  CHECK(load_dataset(path).empty());
  std::filesystem::remove(path);
}

TEST_CASE("corrupted dataset line reports its line number") {
  Rng rng(113);
  std::vector<Episode> eps{generate_scene(ScenarioTag::Cruise, rng)};
  const auto path = (std::filesystem::temp_directory_path() / "hv_corrupt.ndjson").string();
  save_dataset(eps, path);
  {
    std::ofstream f(path, std::ios::app);
    f << "{this is not json\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("line 2"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("dataset split is disjoint and reproducible") {
  Rng a(114), b(114);
  SplitIndices s1 = split_dataset(1000, a);
  SplitIndices s2 = split_dataset(1000, b);
  CHECK(s1.train == s2.train);
  CHECK(s1.val == s2.val);
  CHECK(s1.test == s2.test);
  CHECK(s1.train.size() == 800);
  CHECK(s1.val.size() == 100);
  CHECK(s1.test.size() == 100);
  std::vector<bool> seen(1000, false);
  for (auto grp : {&s1.train, &s1.val, &s1.test})
    for (int i : *grp) {
      CHECK(!seen[static_cast<std::size_t>(i)]);
      seen[static_cast<std::size_t>(i)] = true;
    }
}

TEST_CASE("stationary queue targets keep a defined frame") {
  Rng rng(115);
  for (int i = 0; i < 20; ++i) {
    Episode e = generate_scene(ScenarioTag::Queue, rng);
    for (std::size_t k = 0; k < e.agents.size(); ++k) {
      if (e.agents[k].role != "blocked") continue;
      auto [t, pose] = to_target_centric(e, static_cast<int>(k));
      CHECK(std::isfinite(pose.heading));
      // a blocked car has been stationary its whole history: fallback heading 0
      CHECK(pose.heading == 0.0);
    }
  }
}
