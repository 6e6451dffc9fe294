#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <queue>

#include "env/gridworld.hpp"
#include "env/oracle.hpp"
#include "env/serialize.hpp"

using namespace canav;
using namespace canav::env;

namespace {

GridWorld open_room() {
  json j{{"width", 7},
         {"height", 7},
         {"categories", 6},
         {"rows", {"#######", "#.....#", "#.....#", "#.....#", "#.....#",
                   "#.....#", "#######"}}};
  return world_from_json(j);
}

// Independent Dijkstra (uniform costs, so a plain BFS would do; kept as a
// priority-queue search to stay structurally different from the oracle).
int dijkstra_actions(const GridWorld& w, const AgentState& start, const Task& t,
                     const EnvConfig& cfg) {
  auto goal = [&](int x, int y, int h) {
    AgentState pose{x, y, static_cast<Heading>(h)};
    if (t.variant == TaskVariant::pointnav) return x == t.goal_x && y == t.goal_y;
    return success_at(w, pose, t, cfg);
  };
  int n = w.width * w.height * 4;
  std::vector<int> dist(static_cast<size_t>(n), -1);
  using Item = std::pair<int, int>;  // (cost, pose)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  int s0 = (start.y * w.width + start.x) * 4 + start.heading;
  dist[static_cast<size_t>(s0)] = 0;
  pq.emplace(0, s0);
  while (!pq.empty()) {
    auto [c, cur] = pq.top();
    pq.pop();
    if (c != dist[static_cast<size_t>(cur)]) continue;
    int h = cur % 4, cell = cur / 4;
    int x = cell % w.width, y = cell / w.width;
    if (goal(x, y, h)) return c;
    auto relax = [&](int nx, int ny, int nh) {
      int next = (ny * w.width + nx) * 4 + nh;
      if (dist[static_cast<size_t>(next)] < 0 ||
          dist[static_cast<size_t>(next)] > c + 1) {
        dist[static_cast<size_t>(next)] = c + 1;
        pq.emplace(c + 1, next);
      }
    };
    int mx = x + heading_dx(static_cast<Heading>(h));
    int my = y + heading_dy(static_cast<Heading>(h));
    if (!w.wall(mx, my)) relax(mx, my, h);
    relax(x, y, (h + 1) % 4);
    relax(x, y, (h + 3) % 4);
  }
  return -1;
}

}  // namespace

TEST_CASE("oracle: goal one cell ahead -> MoveAhead then Done") {
  EnvConfig cfg;
  GridWorld w = open_room();
  Task t{TaskVariant::pointnav, 3, 2, 0};
  AgentState s{3, 3, kNorth};  // goal directly ahead
  CHECK(oracle_action(w, s, t, cfg) == kMoveAhead);
  s.y = 2;  // after the move, standing on the goal
  CHECK(oracle_action(w, s, t, cfg) == kDone);
}

TEST_CASE("oracle: goal directly behind starts with a rotation") {
  EnvConfig cfg;
  GridWorld w = open_room();
  Task t{TaskVariant::pointnav, 3, 5, 0};
  AgentState s{3, 2, kNorth};  // goal behind the agent
  int a = oracle_action(w, s, t, cfg);
  CHECK((a == kRotateRight || a == kRotateLeft));
}

TEST_CASE("oracle: rollout cost equals an independent Dijkstra") {
  EnvConfig cfg;
  cfg.obstacle_density = 0.25;
  for (uint64_t seed = 0; seed < 60; ++seed) {
    Generated g = generate(seed, cfg);
    OracleRun run = oracle_rollout(g.world, g.spawn, g.task, cfg);
    CHECK(run.success);
    int ref = dijkstra_actions(g.world, g.spawn, g.task, cfg);
    REQUIRE(ref >= 0);
    CHECK(run.actions == ref);
  }
}

TEST_CASE("oracle: objectnav rollout cost equals Dijkstra too") {
  EnvConfig cfg;
  cfg.task = TaskVariant::objectnav;
  cfg.obstacle_density = 0.2;
  for (uint64_t seed = 200; seed < 230; ++seed) {
    Generated g = generate(seed, cfg);
    OracleRun run = oracle_rollout(g.world, g.spawn, g.task, cfg);
    CHECK(run.success);
    int ref = dijkstra_actions(g.world, g.spawn, g.task, cfg);
    CHECK(run.actions == ref);
  }
}

TEST_CASE("oracle: full rollouts through the episode always succeed") {
  EnvConfig cfg;
  cfg.obstacle_density = 0.25;
  for (uint64_t seed = 500; seed < 560; ++seed) {
    Episode ep = Episode::from_seed(seed, cfg);
    OracleRun planned =
        oracle_rollout(ep.world(), ep.state(), ep.task(), cfg);
    bool success = false;
    while (!ep.done()) {
      int a = oracle_action(ep.world(), ep.state(), ep.task(), cfg);
      StepResult r = ep.step(a);
      if (r.done) success = r.info.success;
    }
    CHECK(success);
    CHECK(ep.moves() == planned.moves);       // SPL = 1 under move counting
    CHECK(ep.goal_geodesic() <= (ep.task().variant == TaskVariant::pointnav
                                     ? cfg.pointnav_radius
                                     : cfg.objectnav_radius));
  }
}
