#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hypervae/rng.hpp"

namespace hypervae::scenes {

inline constexpr int kPastSteps = 10;    // 2 s of history at 5 Hz, ending at t=0
inline constexpr int kFutureSteps = 20;  // 4 s horizon at 5 Hz
inline constexpr int kTotalSteps = kPastSteps + kFutureSteps;
inline constexpr double kDt = 0.2;
inline constexpr int kMaxAgents = 5;
inline constexpr double kPositionQuantum = 1e-4;  // storage resolution, meters

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

using Polyline = std::vector<Vec2>;
using Polygon = std::vector<Vec2>;  // counter-clockwise ring

enum class ScenarioTag { FourWay, ThreeWay, Curve, Queue, Cruise };

std::string tag_name(ScenarioTag t);
ScenarioTag tag_from_name(const std::string& s);

// Behavioral mode the generator drew for an agent, plus its role in the
// scene. Modes drive the coverage metric; roles drive the queue checks.
enum class AgentMode { Straight, Left, Right, Yield, Cruise };
std::string mode_name(AgentMode m);
AgentMode mode_from_name(const std::string& s);

struct Agent {
  std::array<Vec2, kTotalSteps> traj;  // index i is time (i - kPastSteps + 1) * dt... see time_of
  AgentMode mode = AgentMode::Cruise;
  std::string role;  // "approach", "lead", "follow", "blocked", "cruise"
  bool operator==(const Agent&) const = default;
};

// index k corresponds to time (k - (kPastSteps - 1)) * kDt: the past occupies
// k=0..9 (t=-1.8..0), the future k=10..29 (t=0.2..4.0).
inline double time_of(int k) { return (k - (kPastSteps - 1)) * kDt; }
inline int future_index(int step) { return kPastSteps + step; }  // step 0 -> t=0.2

struct Episode {
  std::vector<Agent> agents;  // 1..5
  ScenarioTag tag = ScenarioTag::Cruise;
  std::vector<Polyline> lanes;
  std::vector<Polygon> drivable;
  std::vector<Polygon> obstacles;
  bool operator==(const Episode&) const = default;
};

// Rigid transform that carried an episode into a target-centric frame.
struct FramePose {
  Vec2 origin;
  double heading = 0.0;  // in (-pi, pi]
};

// Available behavioral modes for an agent given the scenario geometry (what
// the generator could have drawn); the basis of mode coverage.
std::vector<AgentMode> mode_set(ScenarioTag tag, const Agent& agent);

// --- generation ---
Episode generate_scene(ScenarioTag tag, Rng& rng);

struct MixWeights {
  double four_way = 0.35;
  double three_way = 0.15;
  double curve = 0.15;
  double queue = 0.2;
  double cruise = 0.15;
};
std::vector<Episode> generate_dataset(int count, const MixWeights& mix, Rng& rng);

// --- coordinate transforms ---
// Heading of agent k at t=0 (last history step): from the backward velocity
// difference; near-stationary agents fall back to the last moving step in
// their history, then to zero.
double heading_at_origin(const Agent& a);

std::pair<Episode, FramePose> to_target_centric(const Episode& e, int target);
Episode from_target_centric(const Episode& e, const FramePose& pose);

// --- rasterization ---
inline constexpr int kRasterSize = 64;
inline constexpr double kRasterExtent = 32.0;  // grid covers [-32, 32) m at 1 m/cell
inline constexpr int kRasterChannels = 3;      // drivable, obstacles, agents at t=0

// Channel-major [3][64][64] raster of a target-centric episode.
std::vector<double> rasterize(const Episode& e);

// --- persistence (newline-delimited JSON, schema versioned) ---
void save_dataset(const std::vector<Episode>& eps, const std::string& path);
std::vector<Episode> load_dataset(const std::string& path);

// Quantize all coordinates to the storage resolution; generation applies
// this so save/load round-trips are exact.
void quantize(Episode& e);

struct SplitIndices {
  std::vector<int> train, val, test;
};
// Disjoint seeded 80/10/10 split by episode index.
SplitIndices split_dataset(int count, Rng& rng, double train_frac = 0.8, double val_frac = 0.1);

// point-in-polygon (even-odd rule); exposed for tests and rasterization
bool point_in_polygon(const Vec2& p, const Polygon& poly);
bool inside_any(const Vec2& p, const std::vector<Polygon>& polys);

}  // namespace hypervae::scenes
