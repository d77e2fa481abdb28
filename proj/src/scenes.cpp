#include "hypervae/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace hypervae::scenes {

using json = nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a <= -kPi) a += 2 * kPi;
  return a;
}

Vec2 rot(const Vec2& p, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c * p.x - s * p.y, c * p.y + s * p.x};
}

// --- path machinery -------------------------------------------------------

struct Seg {
  Vec2 start;
  double heading;
  double len;
  double curv;  // 0 straight; signed 1/R, positive = left
};

Vec2 seg_point(const Seg& g, double s) {
  if (g.curv == 0.0) return {g.start.x + s * std::cos(g.heading), g.start.y + s * std::sin(g.heading)};
  const double r = 1.0 / g.curv;
  const Vec2 center{g.start.x - r * std::sin(g.heading), g.start.y + r * std::cos(g.heading)};
  const double a = g.heading + g.curv * s;
  return {center.x + r * std::sin(a), center.y - r * std::cos(a)};
}

struct Path {
  std::vector<Seg> segs;
  double total = 0.0;

  void start(Vec2 p, double heading) {
    segs.clear();
    segs.push_back({p, heading, 0.0, 0.0});
    total = 0.0;
  }
  Vec2 end_point() const {
    const Seg& g = segs.back();
    return seg_point(g, g.len);
  }
  double end_heading() const { return wrap_angle(segs.back().heading + segs.back().curv * segs.back().len); }
  void straight(double len) {
    segs.push_back({end_point(), end_heading(), len, 0.0});
    total += len;
  }
  // sweep > 0 turns left
  void arc(double radius, double sweep) {
    const double len = radius * std::abs(sweep);
    segs.push_back({end_point(), end_heading(), len, (sweep >= 0 ? 1.0 : -1.0) / radius});
    total += len;
  }
  Vec2 at(double s) const {
    s = std::clamp(s, 0.0, total);
    for (const Seg& g : segs) {
      if (s <= g.len || &g == &segs.back()) return seg_point(g, std::min(s, g.len));
      s -= g.len;
    }
    return end_point();
  }
  // [s_begin, s_end] ranges of the curved segments
  std::vector<std::pair<double, double>> arc_ranges() const {
    std::vector<std::pair<double, double>> r;
    double off = 0.0;
    for (const Seg& g : segs) {
      if (g.curv != 0.0) r.emplace_back(off, off + g.len);
      off += g.len;
    }
    return r;
  }
};

// Speed plan over a path: cruise speed, arc speed caps from lateral
// acceleration, optional stop point, acceleration/braking limits.
struct SpeedPlan {
  double cruise = 8.0;
  double lat_accel = 3.0;
  double accel = 2.5;
  double brake = 3.0;
  double stop_at = -1.0;  // <0: no stop
};

std::array<Vec2, kTotalSteps> roll_out(const Path& path, double s0, double v0, const SpeedPlan& plan) {
  const double ds = 0.25;
  const int n = static_cast<int>(path.total / ds) + 2;
  std::vector<double> vlim(n, plan.cruise);
  for (const auto& [a, b] : path.arc_ranges()) {
    // arc speed from the local radius
    double off = 0.0;
    double radius = 0.0;
    for (const Seg& g : path.segs) {
      if (g.curv != 0.0 && a >= off - 1e-9 && a <= off + g.len + 1e-9) radius = 1.0 / std::abs(g.curv);
      off += g.len;
    }
    const double vturn = std::min(plan.cruise, std::sqrt(plan.lat_accel * std::max(radius, 1.0)));
    for (int i = std::max(0, static_cast<int>(a / ds)); i <= std::min(n - 1, static_cast<int>(b / ds) + 1); ++i)
      vlim[i] = std::min(vlim[i], vturn);
  }
  if (plan.stop_at >= 0.0)
    for (int i = std::min(n - 1, static_cast<int>(plan.stop_at / ds)); i < n; ++i) vlim[i] = 0.0;
  for (int i = n - 2; i >= 0; --i)
    vlim[i] = std::min(vlim[i], std::sqrt(vlim[i + 1] * vlim[i + 1] + 2.0 * plan.brake * ds));

  auto limit_at = [&](double s) {
    const int i = std::clamp(static_cast<int>(s / ds), 0, n - 1);
    return vlim[i];
  };

  std::array<Vec2, kTotalSteps> out;
  double s = s0;
  double v = std::min(v0, limit_at(s0));
  const int sub = 10;
  const double dt = kDt / sub;
  for (int k = 0; k < kTotalSteps; ++k) {
    out[k] = path.at(s);
    for (int j = 0; j < sub; ++j) {
      v = std::min(v + plan.accel * dt, limit_at(s));
      s += v * dt;
    }
  }
  return out;
}

// --- shared geometry helpers ----------------------------------------------

Polygon rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

constexpr double kRoadHalf = 4.0;   // two 4 m lanes
constexpr double kLaneOffset = 2.0;
constexpr double kArmLen = 70.0;

struct Arm {
  double heading;  // travel direction when approaching the center
};

// Approach path for an intersection arm: straight to the entry, then the
// mode-specific connector, then a long exit straight. Geometry is computed
// in a canonical frame (approach heading 0 along +x, lane y=-2) and rotated.
Path intersection_path(double approach_heading, AgentMode mode) {
  Path p;
  // canonical: start far west on the right-hand lane
  p.start({-kArmLen, -kLaneOffset}, 0.0);
  p.straight(kArmLen - kRoadHalf);  // entry at x=-4
  switch (mode) {
    case AgentMode::Straight:
    case AgentMode::Yield:
    case AgentMode::Cruise:
      p.straight(2 * kRoadHalf);
      p.straight(kArmLen - kRoadHalf);
      break;
    case AgentMode::Right:  // onto the southbound exit lane
      p.arc(2.0, -kPi / 2);
      p.straight(kArmLen - kRoadHalf);
      break;
    case AgentMode::Left:  // onto the northbound exit lane
      p.arc(6.0, kPi / 2);
      p.straight(kArmLen - kRoadHalf);
      break;
  }
  // rotate the whole path into the arm frame
  Path q;
  q.segs = p.segs;
  q.total = p.total;
  for (Seg& g : q.segs) {
    g.start = rot(g.start, approach_heading);
    g.heading = wrap_angle(g.heading + approach_heading);
  }
  return q;
}

void add_obstacles(Episode& e, Rng& rng, int count) {
  for (int i = 0; i < count; ++i) {
    // corner quadrants, clear of the roads
    const double sx = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double sy = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double x0 = sx * rng.uniform(7.0, 24.0);
    const double y0 = sy * rng.uniform(7.0, 24.0);
    const double w = rng.uniform(3.0, 9.0) * sx;
    const double h = rng.uniform(3.0, 9.0) * sy;
    Polygon ob = rect(std::min(x0, x0 + w), std::min(y0, y0 + h), std::max(x0, x0 + w), std::max(y0, y0 + h));
    e.obstacles.push_back(ob);
  }
}

void rotate_translate_episode(Episode& e, double angle, const Vec2& shift) {
  auto xf = [&](Vec2& p) {
    p = rot(p, angle);
    p.x += shift.x;
    p.y += shift.y;
  };
  for (auto& a : e.agents)
    for (auto& p : a.traj) xf(p);
  for (auto& l : e.lanes)
    for (auto& p : l) xf(p);
  for (auto& poly : e.drivable)
    for (auto& p : poly) xf(p);
  for (auto& poly : e.obstacles)
    for (auto& p : poly) xf(p);
}

AgentMode draw_mode(Rng& rng, const std::vector<AgentMode>& modes, const std::vector<double>& probs) {
  return modes[rng.categorical(probs)];
}

Episode gen_four_way(Rng& rng) {
  Episode e;
  e.tag = ScenarioTag::FourWay;
  e.drivable = {rect(-kArmLen, -kRoadHalf, kArmLen, kRoadHalf), rect(-kRoadHalf, -kArmLen, kRoadHalf, kArmLen)};
  for (double h : {0.0, kPi / 2, kPi, -kPi / 2}) {
    Polyline lane;
    for (double s = -kArmLen; s <= kArmLen + 1e-9; s += 5.0) lane.push_back(rot({s, -kLaneOffset}, h));
    e.lanes.push_back(lane);
  }
  add_obstacles(e, rng, static_cast<int>(rng.index(3)) + 2);

  std::vector<double> arms{0.0, kPi / 2, kPi, -kPi / 2};
  rng.shuffle(arms);
  const int n_agents = 2 + static_cast<int>(rng.index(3));  // 2..4, one per arm
  double entry_t = rng.uniform(0.4, 1.2);
  for (int i = 0; i < n_agents; ++i) {
    Agent a;
    a.mode = draw_mode(rng, {AgentMode::Straight, AgentMode::Left, AgentMode::Right}, {0.4, 0.3, 0.3});
    a.role = "approach";
    Path path = intersection_path(arms[static_cast<std::size_t>(i)], a.mode);
    SpeedPlan plan;
    plan.cruise = rng.uniform(6.0, 10.0);
    const double s_entry = kArmLen - kRoadHalf;
    const double s0 = std::max(2.0, s_entry - plan.cruise * (1.8 + entry_t) * rng.uniform(0.85, 1.0));
    a.traj = roll_out(path, s0, plan.cruise, plan);
    e.agents.push_back(a);
    entry_t += rng.uniform(0.8, 1.6);
  }
  return e;
}

Episode gen_three_way(Rng& rng) {
  Episode e;
  e.tag = ScenarioTag::ThreeWay;
  e.drivable = {rect(-kArmLen, -kRoadHalf, kArmLen, kRoadHalf), rect(-kRoadHalf, 0.0, kRoadHalf, kArmLen)};
  add_obstacles(e, rng, static_cast<int>(rng.index(3)) + 1);
  Polyline main_lane, stem_lane;
  for (double s = -kArmLen; s <= kArmLen + 1e-9; s += 5.0) main_lane.push_back({s, -kLaneOffset});
  for (double s = 0; s <= kArmLen + 1e-9; s += 5.0) stem_lane.push_back({-kLaneOffset, s});
  e.lanes = {main_lane, stem_lane};

  struct ArmSpec {
    double heading;
    std::string role;
    std::vector<AgentMode> modes;
    std::vector<double> probs;
  };
  std::vector<ArmSpec> arms{
      {0.0, "approach_main_e", {AgentMode::Straight, AgentMode::Left}, {0.6, 0.4}},
      {kPi, "approach_main_w", {AgentMode::Straight, AgentMode::Right}, {0.6, 0.4}},
      {-kPi / 2, "approach_stem", {AgentMode::Left, AgentMode::Right}, {0.5, 0.5}},
  };
  rng.shuffle(arms);
  const int n_agents = 2 + static_cast<int>(rng.index(2));  // 2..3
  double entry_t = rng.uniform(0.4, 1.2);
  for (int i = 0; i < n_agents; ++i) {
    const ArmSpec& arm = arms[static_cast<std::size_t>(i)];
    Agent a;
    a.mode = draw_mode(rng, arm.modes, arm.probs);
    a.role = arm.role;
    Path path = intersection_path(arm.heading, a.mode);
    SpeedPlan plan;
    plan.cruise = rng.uniform(5.0, 9.0);
    const double s_entry = kArmLen - kRoadHalf;
    const double s0 = std::max(2.0, s_entry - plan.cruise * (1.8 + entry_t) * rng.uniform(0.85, 1.0));
    a.traj = roll_out(path, s0, plan.cruise, plan);
    e.agents.push_back(a);
    entry_t += rng.uniform(0.9, 1.8);
  }
  return e;
}

Episode gen_curve(Rng& rng) {
  Episode e;
  e.tag = ScenarioTag::Curve;
  const double R = rng.uniform(15.0, 30.0);
  // approach along +x, 90-degree left bend around (0, R), exit northbound
  e.drivable.push_back(rect(-50.0, -kRoadHalf, 0.0, kRoadHalf));
  auto arc_pt = [&](double radius, double frac) {
    // bend center is (0, R); frac 0 is the bend entry at (0, 0)
    const double a = -kPi / 2 + (kPi / 2) * frac;
    return Vec2{radius * std::cos(a), R + radius * std::sin(a)};
  };
  Polygon bend;  // outer edge, then inner edge reversed
  for (int i = 0; i <= 24; ++i) bend.push_back(arc_pt(R + kRoadHalf, i / 24.0));
  for (int i = 24; i >= 0; --i) bend.push_back(arc_pt(R - kRoadHalf, i / 24.0));
  e.drivable.push_back(bend);
  e.drivable.push_back(rect(R - kRoadHalf, R, R + kRoadHalf, R + 50.0));
  Polyline lane;
  for (double s = -50; s < 0; s += 5) lane.push_back({s, 0});
  for (int i = 0; i <= 24; ++i) lane.push_back(arc_pt(R, i / 24.0));
  for (double s = 0; s <= 50; s += 5) lane.push_back({R, R + s});
  e.lanes.push_back(lane);
  add_obstacles(e, rng, static_cast<int>(rng.index(2)) + 1);

  const int n_agents = 1 + static_cast<int>(rng.index(4));  // 1..4
  for (int i = 0; i < n_agents; ++i) {
    Agent a;
    a.mode = AgentMode::Cruise;
    a.role = "cruise";
    const bool forward = rng.uniform() < 0.7;
    Path p;
    if (forward) {
      p.start({-50.0, -kLaneOffset}, 0.0);
      p.straight(50.0);
      p.arc(R + kLaneOffset, kPi / 2);
      p.straight(50.0);
    } else {
      p.start({R - kLaneOffset, R + 50.0}, -kPi / 2);
      p.straight(50.0);
      p.arc(R - kLaneOffset, -kPi / 2);
      p.straight(50.0);
    }
    SpeedPlan plan;
    plan.cruise = rng.uniform(5.0, 9.0);
    const double s0 = rng.uniform(5.0, std::max(6.0, p.total - 60.0));
    a.traj = roll_out(p, s0, plan.cruise, plan);
    e.agents.push_back(a);
  }
  return e;
}

Episode gen_queue(Rng& rng) {
  Episode e;
  e.tag = ScenarioTag::Queue;
  e.drivable = {rect(-kArmLen, -kRoadHalf, kArmLen, kRoadHalf)};
  Polyline lane;
  for (double s = -kArmLen; s <= kArmLen + 1e-9; s += 5.0) lane.push_back({s, -kLaneOffset});
  e.lanes = {lane};
  add_obstacles(e, rng, static_cast<int>(rng.index(3)) + 1);

  const int n_queue = 3 + static_cast<int>(rng.index(3));  // 3..5
  const double x_front = rng.uniform(-5.0, 5.0);
  const double vmax = rng.uniform(5.0, 8.0);
  const double accel = 2.0;
  double t_go = rng.uniform(-0.5, 0.5);
  double x = x_front;
  for (int i = 0; i < n_queue; ++i) {
    Agent a;
    a.role = i == 0 ? "lead" : (t_go >= 3.8 ? "blocked" : "follow");
    a.mode = a.role == "blocked" ? AgentMode::Yield : AgentMode::Cruise;
    for (int k = 0; k < kTotalSteps; ++k) {
      const double t = time_of(k);
      double s = 0.0;
      if (t > t_go) {
        const double tau = t - t_go;
        const double tau_v = vmax / accel;
        s = tau <= tau_v ? 0.5 * accel * tau * tau : 0.5 * accel * tau_v * tau_v + vmax * (tau - tau_v);
      }
      a.traj[static_cast<std::size_t>(k)] = {x + s, -kLaneOffset};
    }
    e.agents.push_back(a);
    x -= rng.uniform(6.0, 8.5);
    t_go += rng.uniform(1.7, 2.4);
  }
  // opposing-lane cruiser for variety, if a slot is free
  if (e.agents.size() < kMaxAgents && rng.uniform() < 0.6) {
    Agent a;
    a.role = "cruise";
    a.mode = AgentMode::Cruise;
    const double v = rng.uniform(5.0, 10.0);
    const double start = rng.uniform(10.0, 40.0);
    for (int k = 0; k < kTotalSteps; ++k)
      a.traj[static_cast<std::size_t>(k)] = {start - v * (time_of(k) + 1.8), kLaneOffset};
    e.agents.push_back(a);
  }
  rotate_translate_episode(e, rng.uniform(-kPi, kPi), {rng.uniform(-5, 5), rng.uniform(-5, 5)});
  return e;
}

Episode gen_cruise(Rng& rng) {
  Episode e;
  e.tag = ScenarioTag::Cruise;
  const double road_len = 120.0;  // covers ~6 s of travel at top speed
  e.drivable = {rect(-road_len, -kRoadHalf, road_len, kRoadHalf)};
  Polyline lane;
  for (double s = -road_len; s <= road_len + 1e-9; s += 5.0) lane.push_back({s, -kLaneOffset});
  e.lanes = {lane};
  add_obstacles(e, rng, static_cast<int>(rng.index(3)) + 1);
  const int n_agents = 1 + static_cast<int>(rng.index(3));
  for (int i = 0; i < n_agents; ++i) {
    Agent a;
    a.role = "cruise";
    a.mode = AgentMode::Cruise;
    const bool fwd = rng.uniform() < 0.5;
    const double v0 = rng.uniform(4.0, 12.0);
    const double acc = rng.uniform(-0.5, 0.5);
    const double x0 = fwd ? rng.uniform(-40.0, 0.0) : rng.uniform(0.0, 40.0);
    const double lane_y = fwd ? -kLaneOffset : kLaneOffset;
    double s = 0.0, v = v0;
    for (int k = 0; k < kTotalSteps; ++k) {
      a.traj[static_cast<std::size_t>(k)] = {x0 + (fwd ? s : -s), lane_y};
      v = std::clamp(v + acc * kDt, 1.0, 14.0);
      s += v * kDt;
    }
    e.agents.push_back(a);
  }
  rotate_translate_episode(e, rng.uniform(-kPi, kPi), {rng.uniform(-5, 5), rng.uniform(-5, 5)});
  return e;
}

}  // namespace

std::string tag_name(ScenarioTag t) {
  switch (t) {
    case ScenarioTag::FourWay: return "four_way";
    case ScenarioTag::ThreeWay: return "three_way";
    case ScenarioTag::Curve: return "curve";
    case ScenarioTag::Queue: return "queue";
    case ScenarioTag::Cruise: return "cruise";
  }
  return "cruise";
}

ScenarioTag tag_from_name(const std::string& s) {
  if (s == "four_way") return ScenarioTag::FourWay;
  if (s == "three_way") return ScenarioTag::ThreeWay;
  if (s == "curve") return ScenarioTag::Curve;
  if (s == "queue") return ScenarioTag::Queue;
  if (s == "cruise") return ScenarioTag::Cruise;
  throw std::invalid_argument("unknown scenario tag: " + s);
}

std::string mode_name(AgentMode m) {
  switch (m) {
    case AgentMode::Straight: return "straight";
    case AgentMode::Left: return "left";
    case AgentMode::Right: return "right";
    case AgentMode::Yield: return "yield";
    case AgentMode::Cruise: return "cruise";
  }
  return "cruise";
}

AgentMode mode_from_name(const std::string& s) {
  if (s == "straight") return AgentMode::Straight;
  if (s == "left") return AgentMode::Left;
  if (s == "right") return AgentMode::Right;
  if (s == "yield") return AgentMode::Yield;
  if (s == "cruise") return AgentMode::Cruise;
  throw std::invalid_argument("unknown agent mode: " + s);
}

std::vector<AgentMode> mode_set(ScenarioTag tag, const Agent& agent) {
  if (tag == ScenarioTag::FourWay && agent.role == "approach")
    return {AgentMode::Straight, AgentMode::Left, AgentMode::Right};
  if (tag == ScenarioTag::ThreeWay) {
    if (agent.role == "approach_stem") return {AgentMode::Left, AgentMode::Right};
    if (agent.role == "approach_main_e") return {AgentMode::Straight, AgentMode::Left};
    if (agent.role == "approach_main_w") return {AgentMode::Straight, AgentMode::Right};
  }
  return {agent.mode};
}

Episode generate_scene(ScenarioTag tag, Rng& rng) {
  Episode e;
  switch (tag) {
    case ScenarioTag::FourWay: e = gen_four_way(rng); break;
    case ScenarioTag::ThreeWay: e = gen_three_way(rng); break;
    case ScenarioTag::Curve: e = gen_curve(rng); break;
    case ScenarioTag::Queue: e = gen_queue(rng); break;
    case ScenarioTag::Cruise: e = gen_cruise(rng); break;
  }
  quantize(e);
  return e;
}

std::vector<Episode> generate_dataset(int count, const MixWeights& mix, Rng& rng) {
  const double total = mix.four_way + mix.three_way + mix.curve + mix.queue + mix.cruise;
  const std::vector<double> probs{mix.four_way / total, mix.three_way / total, mix.curve / total, mix.queue / total,
                                  mix.cruise / total};
  const std::uint64_t base = rng.bits();
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng er = Rng::substream(base, "episode/" + std::to_string(i));
    const auto tag = static_cast<ScenarioTag>(er.categorical(probs));
    out.push_back(generate_scene(tag, er));
  }
  return out;
}

double heading_at_origin(const Agent& a) {
  for (int k = kPastSteps - 1; k >= 1; --k) {
    const Vec2& p1 = a.traj[static_cast<std::size_t>(k)];
    const Vec2& p0 = a.traj[static_cast<std::size_t>(k) - 1];
    const double vx = (p1.x - p0.x) / kDt, vy = (p1.y - p0.y) / kDt;
    if (std::hypot(vx, vy) >= 0.1) return std::atan2(vy, vx);
  }
  return 0.0;
}

std::pair<Episode, FramePose> to_target_centric(const Episode& e, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= e.agents.size())
    throw std::invalid_argument("to_target_centric: no agent " + std::to_string(target));
  const Agent& tgt = e.agents[static_cast<std::size_t>(target)];
  FramePose pose;
  pose.origin = tgt.traj[kPastSteps - 1];
  pose.heading = wrap_angle(heading_at_origin(tgt));
  const double c = std::cos(-pose.heading), s = std::sin(-pose.heading);
  auto xf = [&](const Vec2& p) -> Vec2 {
    const double dx = p.x - pose.origin.x, dy = p.y - pose.origin.y;
    return {c * dx - s * dy, c * dy + s * dx};
  };
  Episode out = e;
  for (auto& a : out.agents)
    for (auto& p : a.traj) p = xf(p);
  for (auto& l : out.lanes)
    for (auto& p : l) p = xf(p);
  for (auto& poly : out.drivable)
    for (auto& p : poly) p = xf(p);
  for (auto& poly : out.obstacles)
    for (auto& p : poly) p = xf(p);
  return {out, pose};
}

Episode from_target_centric(const Episode& e, const FramePose& pose) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  auto xf = [&](const Vec2& p) -> Vec2 {
    return {c * p.x - s * p.y + pose.origin.x, c * p.y + s * p.x + pose.origin.y};
  };
  Episode out = e;
  for (auto& a : out.agents)
    for (auto& p : a.traj) p = xf(p);
  for (auto& l : out.lanes)
    for (auto& p : l) p = xf(p);
  for (auto& poly : out.drivable)
    for (auto& p : poly) p = xf(p);
  for (auto& poly : out.obstacles)
    for (auto& p : poly) p = xf(p);
  return out;
}

bool point_in_polygon(const Vec2& p, const Polygon& poly) {
  bool in = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < xint) in = !in;
    }
  }
  return in;
}

bool inside_any(const Vec2& p, const std::vector<Polygon>& polys) {
  for (const auto& poly : polys)
    if (point_in_polygon(p, poly)) return true;
  return false;
}

std::vector<double> rasterize(const Episode& e) {
  std::vector<double> grid(static_cast<std::size_t>(kRasterChannels) * kRasterSize * kRasterSize, 0.0);
  auto cell = [&](int c, int ix, int iy) -> double& {
    return grid[(static_cast<std::size_t>(c) * kRasterSize + static_cast<std::size_t>(iy)) * kRasterSize +
                static_cast<std::size_t>(ix)];
  };
  for (int iy = 0; iy < kRasterSize; ++iy)
    for (int ix = 0; ix < kRasterSize; ++ix) {
      const Vec2 p{-kRasterExtent + ix + 0.5, -kRasterExtent + iy + 0.5};
      if (inside_any(p, e.drivable)) cell(0, ix, iy) = 1.0;
      if (inside_any(p, e.obstacles)) cell(1, ix, iy) = 1.0;
    }
  const double r = 1.2;
  for (const auto& a : e.agents) {
    const Vec2 p = a.traj[kPastSteps - 1];
    const int ix0 = std::max(0, static_cast<int>(p.x + kRasterExtent - r));
    const int ix1 = std::min(kRasterSize - 1, static_cast<int>(p.x + kRasterExtent + r));
    const int iy0 = std::max(0, static_cast<int>(p.y + kRasterExtent - r));
    const int iy1 = std::min(kRasterSize - 1, static_cast<int>(p.y + kRasterExtent + r));
    for (int iy = iy0; iy <= iy1; ++iy)
      for (int ix = ix0; ix <= ix1; ++ix) {
        const double cx = -kRasterExtent + ix + 0.5, cy = -kRasterExtent + iy + 0.5;
        if (std::hypot(cx - p.x, cy - p.y) <= r) cell(2, ix, iy) = 1.0;
      }
  }
  return grid;
}

void quantize(Episode& e) {
  auto q = [](Vec2& p) {
    p.x = std::round(p.x / kPositionQuantum) * kPositionQuantum;
    p.y = std::round(p.y / kPositionQuantum) * kPositionQuantum;
  };
  for (auto& a : e.agents)
    for (auto& p : a.traj) q(p);
  for (auto& l : e.lanes)
    for (auto& p : l) q(p);
  for (auto& poly : e.drivable)
    for (auto& p : poly) q(p);
  for (auto& poly : e.obstacles)
    for (auto& p : poly) q(p);
}

namespace {

json coords_to_json(const std::vector<Vec2>& pts) {
  json arr = json::array();
  for (const auto& p : pts)
    arr.push_back({static_cast<long long>(std::llround(p.x / kPositionQuantum)),
                   static_cast<long long>(std::llround(p.y / kPositionQuantum))});
  return arr;
}

std::vector<Vec2> coords_from_json(const json& arr) {
  std::vector<Vec2> out;
  for (const auto& p : arr)
    out.push_back({p.at(0).get<long long>() * kPositionQuantum, p.at(1).get<long long>() * kPositionQuantum});
  return out;
}

}  // namespace

void save_dataset(const std::vector<Episode>& eps, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open dataset for writing: " + path);
  for (const auto& e : eps) {
    json rec;
    rec["v"] = 1;
    rec["tag"] = tag_name(e.tag);
    json agents = json::array();
    for (const auto& a : e.agents) {
      json ja;
      ja["traj"] = coords_to_json({a.traj.begin(), a.traj.end()});
      ja["mode"] = mode_name(a.mode);
      ja["role"] = a.role;
      agents.push_back(ja);
    }
    rec["agents"] = agents;
    json lanes = json::array();
    for (const auto& l : e.lanes) lanes.push_back(coords_to_json(l));
    rec["lanes"] = lanes;
    json drv = json::array();
    for (const auto& p : e.drivable) drv.push_back(coords_to_json(p));
    rec["drivable"] = drv;
    json obs = json::array();
    for (const auto& p : e.obstacles) obs.push_back(coords_to_json(p));
    rec["obstacles"] = obs;
    f << rec.dump() << '\n';
  }
}

std::vector<Episode> load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<Episode> out;
  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& ex) {
      throw std::runtime_error("dataset " + path + " line " + std::to_string(line_no) + ": " + ex.what());
    }
    try {
      if (rec.at("v").get<int>() != 1)
        throw std::runtime_error("unsupported record version " + std::to_string(rec.at("v").get<int>()));
      Episode e;
      e.tag = tag_from_name(rec.at("tag").get<std::string>());
      for (const auto& ja : rec.at("agents")) {
        Agent a;
        const auto pts = coords_from_json(ja.at("traj"));
        if (pts.size() != kTotalSteps) throw std::runtime_error("agent trajectory must have 30 steps");
        std::copy(pts.begin(), pts.end(), a.traj.begin());
        a.mode = mode_from_name(ja.at("mode").get<std::string>());
        a.role = ja.at("role").get<std::string>();
        e.agents.push_back(a);
      }
      if (e.agents.empty()) throw std::runtime_error("episode has no agents");
      for (const auto& jl : rec.at("lanes")) e.lanes.push_back(coords_from_json(jl));
      for (const auto& jp : rec.at("drivable")) e.drivable.push_back(coords_from_json(jp));
      for (const auto& jp : rec.at("obstacles")) e.obstacles.push_back(coords_from_json(jp));
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error("dataset " + path + " line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

SplitIndices split_dataset(int count, Rng& rng, double train_frac, double val_frac) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  rng.shuffle(idx);
  const int n_train = static_cast<int>(count * train_frac);
  const int n_val = static_cast<int>(count * val_frac);
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

}  // namespace hypervae::scenes
