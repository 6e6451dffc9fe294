#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace canav::env {

// cell codes
constexpr uint8_t kEmpty = 0;
constexpr uint8_t kWall = 1;
constexpr uint8_t kObjectBase = 2;  // kObjectBase + category

enum Heading : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

enum Action : int {
  kMoveAhead = 0,
  kRotateRight = 1,
  kRotateLeft = 2,
  kDone = 3  // "Stop" for object-goal tasks
};
constexpr int kActionCount = 4;
// extra embedding row marking "no previous action" at episode start
constexpr int kNullAction = kActionCount;

enum class TaskVariant { pointnav, objectnav };

struct GridWorld {
  int width = 0;
  int height = 0;
  int categories = 0;
  std::vector<uint8_t> cells;  // row-major [y][x]

  uint8_t at(int x, int y) const {
    return cells[static_cast<size_t>(y) * width + x];
  }
  bool inside(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  // out-of-bounds reads as wall
  bool wall(int x, int y) const { return !inside(x, y) || at(x, y) == kWall; }
};

struct AgentState {
  int x = 0;
  int y = 0;
  Heading heading = kNorth;
};

struct Task {
  TaskVariant variant = TaskVariant::pointnav;
  int goal_x = 0, goal_y = 0;  // pointnav
  int category = 0;            // objectnav
};

struct Observation {
  int window = 0;
  int categories = 0;
  // egocentric window codes, rotated so the agent faces up, centered on the
  // cell ahead of the agent; out-of-world cells read as wall
  std::vector<uint8_t> cells;
  TaskVariant variant = TaskVariant::pointnav;
  double goal_distance = 0;  // pointnav: geodesic cells
  double goal_bearing = 0;   // pointnav: radians in (-pi, pi], straight-line
  int goal_category = 0;     // objectnav

  int channels() const { return 2 + categories; }
  int flat_size() const { return window * window * channels(); }
  // one-hot layout: [row][col][channel]
  void one_hot(double* out) const;
};

struct RewardParams {
  double success_bonus = 10.0;
  double shaping_weight = 1.0;
  double step_penalty = 0.01;
};

struct EnvConfig {
  int width = 11;
  int height = 11;
  double obstacle_density = 0.2;
  int window = 5;
  int categories = 6;
  int budget = 128;
  TaskVariant task = TaskVariant::pointnav;
  RewardParams reward;
  int pointnav_radius = 1;
  int objectnav_radius = 2;
  int min_goal_distance = 3;

  void validate() const;
};

struct StepInfo {
  bool success = false;
  int geodesic_to_goal = 0;
  bool collided = false;
};

struct StepResult {
  Observation observation;
  double reward = 0;
  bool done = false;
  StepInfo info;
};

// heading unit vectors (grid y grows downward)
inline int heading_dx(Heading h) { return h == kEast ? 1 : (h == kWest ? -1 : 0); }
inline int heading_dy(Heading h) { return h == kSouth ? 1 : (h == kNorth ? -1 : 0); }

// 4-connected BFS shortest path through non-wall cells.
std::optional<int> geodesic(const GridWorld& w, int from_x, int from_y, int to_x,
                            int to_y);
// distances from one source to every cell; walls and unreachable get -1
std::vector<int> geodesic_field(const GridWorld& w, int from_x, int from_y);
// nearest instance of a category (for object-goal distance)
std::optional<int> geodesic_to_category(const GridWorld& w, int x, int y,
                                        int category);

double reward(const RewardParams& p, double prev_geodesic, double new_geodesic,
              bool success_event, bool collided);

Observation make_observation(const GridWorld& w, const AgentState& s,
                             const Task& t, const EnvConfig& cfg);

// success predicate for the Done/Stop action at a given pose
bool success_at(const GridWorld& w, const AgentState& s, const Task& t,
                const EnvConfig& cfg);

struct Generated {
  GridWorld world;
  AgentState spawn;
  Task task;
};

// Procedural world: bordered grid, Bernoulli interior walls with pocket fill
// so every open cell is mutually reachable, objects (objectnav), spawn and
// goal at geodesic distance >= min_goal_distance. Deterministic in seed.
Generated generate(uint64_t seed, const EnvConfig& cfg);

// One live episode: world + agent + task + step/budget accounting. step() is a
// pure function of the visible state; replaying a recorded action sequence
// reproduces rewards bit-exactly.
class Episode {
 public:
  Episode(GridWorld world, AgentState spawn, Task task, EnvConfig cfg);
  static Episode from_seed(uint64_t seed, const EnvConfig& cfg);

  const Observation& observation() const { return obs_; }
  StepResult step(int action);
  bool done() const { return done_; }
  int steps() const { return steps_; }
  int moves() const { return moves_; }
  int goal_geodesic() const;

  const GridWorld& world() const { return world_; }
  const AgentState& state() const { return state_; }
  const Task& task() const { return task_; }
  const EnvConfig& config() const { return cfg_; }

 private:
  GridWorld world_;
  AgentState state_;
  Task task_;
  EnvConfig cfg_;
  Observation obs_;
  bool done_ = false;
  int steps_ = 0;
  int moves_ = 0;
};

}  // namespace canav::env
