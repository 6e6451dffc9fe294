#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "env/gridworld.hpp"
#include "env/serialize.hpp"

using namespace canav;
using namespace canav::env;

namespace {

GridWorld world_from_rows(const std::vector<std::string>& rows, int categories = 6) {
  json j{{"width", static_cast<int>(rows[0].size())},
         {"height", static_cast<int>(rows.size())},
         {"categories", categories},
         {"rows", rows}};
  return world_from_json(j);
}

// test-side connectivity oracle: BFS from the first open cell must reach all
bool all_open_connected(const GridWorld& w) {
  int sx = -1, sy = -1, open = 0;
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x)
      if (!w.wall(x, y)) {
        ++open;
        if (sx < 0) {
          sx = x;
          sy = y;
        }
      }
  if (open == 0) return false;
  auto dist = geodesic_field(w, sx, sy);
  int reached = 0;
  for (int d : dist) reached += (d >= 0);
  return reached == open;
}

// exhaustive simple-path enumeration (test oracle for small worlds)
void enumerate_paths(const GridWorld& w, int x, int y, int tx, int ty,
                     std::vector<uint8_t>& visited, int len, int& best) {
  if (x == tx && y == ty) {
    best = std::min(best, len);
    return;
  }
  if (len >= best) return;
  constexpr int dx[4] = {0, 1, 0, -1};
  constexpr int dy[4] = {-1, 0, 1, 0};
  for (int k = 0; k < 4; ++k) {
    int nx = x + dx[k], ny = y + dy[k];
    if (w.wall(nx, ny)) continue;
    size_t idx = static_cast<size_t>(ny) * w.width + nx;
    if (visited[idx]) continue;
    visited[idx] = 1;
    enumerate_paths(w, nx, ny, tx, ty, visited, len + 1, best);
    visited[idx] = 0;
  }
}

int exhaustive_shortest(const GridWorld& w, int x, int y, int tx, int ty) {
  std::vector<uint8_t> visited(static_cast<size_t>(w.width) * w.height, 0);
  visited[static_cast<size_t>(y) * w.width + x] = 1;
  int best = w.width * w.height + 1;
  enumerate_paths(w, x, y, tx, ty, visited, 0, best);
  return best;
}

EnvConfig small_cfg() {
  EnvConfig cfg;
  cfg.width = 11;
  cfg.height = 11;
  cfg.window = 5;
  return cfg;
}

}  // namespace

TEST_CASE("generate: zero density leaves the interior fully open") {
  EnvConfig cfg = small_cfg();
  cfg.obstacle_density = 0.0;
  Generated g = generate(123, cfg);
  for (int y = 1; y < cfg.height - 1; ++y)
    for (int x = 1; x < cfg.width - 1; ++x) CHECK(g.world.at(x, y) == kEmpty);
  CHECK(all_open_connected(g.world));
}

TEST_CASE("generate: deterministic in the seed") {
  EnvConfig cfg = small_cfg();
  cfg.obstacle_density = 0.25;
  Generated a = generate(777, cfg);
  Generated b = generate(777, cfg);
  CHECK(a.world.cells == b.world.cells);
  CHECK(a.spawn.x == b.spawn.x);
  CHECK(a.spawn.y == b.spawn.y);
  CHECK(a.spawn.heading == b.spawn.heading);
  CHECK(a.task.goal_x == b.task.goal_x);
  CHECK(a.task.goal_y == b.task.goal_y);
}

TEST_CASE("generate: 1000 seeds pass connectivity and min-distance checks") {
  EnvConfig cfg = small_cfg();
  cfg.obstacle_density = 0.25;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    Generated g = generate(seed, cfg);
    CHECK(all_open_connected(g.world));
    auto d = geodesic(g.world, g.spawn.x, g.spawn.y, g.task.goal_x, g.task.goal_y);
    REQUIRE(d.has_value());
    CHECK(*d >= cfg.min_goal_distance);
    CHECK(g.world.at(g.spawn.x, g.spawn.y) == kEmpty);
  }
}

TEST_CASE("generate: objectnav places every category and a reachable target") {
  EnvConfig cfg = small_cfg();
  cfg.task = TaskVariant::objectnav;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Generated g = generate(seed, cfg);
    for (int c = 0; c < cfg.categories; ++c) {
      int count = 0;
      for (uint8_t cell : g.world.cells) count += (cell == kObjectBase + c);
      CHECK(count == 1);
    }
    auto d = geodesic_to_category(g.world, g.spawn.x, g.spawn.y, g.task.category);
    REQUIRE(d.has_value());
    CHECK(*d >= cfg.min_goal_distance);
  }
}

TEST_CASE("step: MoveAhead into a wall keeps position and flags collision") {
  EnvConfig cfg = small_cfg();
  GridWorld w = world_from_rows({"#######", "#.....#", "#.....#", "#.....#",
                                 "#.....#", "#.....#", "#######"});
  Task t{TaskVariant::pointnav, 5, 5, 0};
  Episode ep(w, AgentState{1, 1, kNorth}, t, cfg);  // facing the border wall
  StepResult r = ep.step(kMoveAhead);
  CHECK(ep.state().x == 1);
  CHECK(ep.state().y == 1);
  CHECK(r.info.collided);
  CHECK(!r.done);
}

TEST_CASE("step: four right rotations restore the heading") {
  EnvConfig cfg = small_cfg();
  Generated g = generate(5, cfg);
  Episode ep(g.world, g.spawn, g.task, cfg);
  Heading h0 = ep.state().heading;
  for (int i = 0; i < 4; ++i) ep.step(kRotateRight);
  CHECK(ep.state().heading == h0);
  for (int i = 0; i < 4; ++i) ep.step(kRotateLeft);
  CHECK(ep.state().heading == h0);
}

TEST_CASE("step: Done adjacent to the pointnav goal succeeds") {
  EnvConfig cfg = small_cfg();
  GridWorld w = world_from_rows({"#######", "#.....#", "#.....#", "#.....#",
                                 "#.....#", "#.....#", "#######"});
  Task t{TaskVariant::pointnav, 3, 1, 0};
  Episode ep(w, AgentState{2, 1, kEast}, t, cfg);  // geodesic 1 to goal
  REQUIRE(ep.goal_geodesic() == 1);
  StepResult r = ep.step(kDone);
  CHECK(r.done);
  CHECK(r.info.success);
}

TEST_CASE("step: Done far from the goal is a failure stop") {
  EnvConfig cfg = small_cfg();
  Generated g = generate(17, cfg);
  Episode ep(g.world, g.spawn, g.task, cfg);
  StepResult r = ep.step(kDone);
  CHECK(r.done);
  CHECK(!r.info.success);
}

TEST_CASE("step: action id out of range raises") {
  EnvConfig cfg = small_cfg();
  Episode ep = Episode::from_seed(3, cfg);
  CHECK_THROWS_AS(ep.step(4), Error);
  CHECK_THROWS_AS(ep.step(-1), Error);
}

TEST_CASE("reward formula cases") {
  RewardParams p;
  CHECK(reward(p, 5, 5, false, false) == doctest::Approx(-0.01));
  CHECK(reward(p, 5, 4, false, false) == doctest::Approx(0.99));
  CHECK(reward(p, 1, 1, true, false) == doctest::Approx(10.0 - 0.01));
}

TEST_CASE("geodesic: base and corridor cases") {
  GridWorld corridor = world_from_rows({"#########", "#.......#", "#########"});
  CHECK(geodesic(corridor, 1, 1, 2, 1) == 1);
  CHECK(geodesic(corridor, 1, 1, 7, 1) == 6);
  GridWorld blocked = world_from_rows({"#######", "#..#..#", "#######"});
  CHECK(!geodesic(blocked, 1, 1, 5, 1).has_value());  // unreachable marker
  CHECK_THROWS_AS(geodesic(blocked, -1, 0, 1, 1), Error);
}

TEST_CASE("geodesic: U-shaped detour matches exhaustive enumeration") {
  GridWorld w = world_from_rows({
      "#######",
      "#.....#",
      "#.###.#",
      "#.#...#",
      "#.#.###",
      "#.#...#",
      "#######",
  });
  for (auto [fx, fy, tx, ty] : std::vector<std::array<int, 4>>{
           {1, 1, 3, 3}, {1, 5, 5, 5}, {3, 5, 5, 1}, {1, 1, 5, 3}}) {
    auto d = geodesic(w, fx, fy, tx, ty);
    REQUIRE(d.has_value());
    CHECK(*d == exhaustive_shortest(w, fx, fy, tx, ty));
  }
}

TEST_CASE("geodesic is a metric on sampled triples") {
  EnvConfig cfg = small_cfg();
  cfg.obstacle_density = 0.25;
  Rng rng(99);
  for (uint64_t seed = 100; seed < 110; ++seed) {
    Generated g = generate(seed, cfg);
    std::vector<std::pair<int, int>> open;
    for (int y = 0; y < g.world.height; ++y)
      for (int x = 0; x < g.world.width; ++x)
        if (!g.world.wall(x, y)) open.emplace_back(x, y);
    for (int trial = 0; trial < 20; ++trial) {
      auto [ax, ay] = open[static_cast<size_t>(rng.uniform_int(static_cast<int>(open.size())))];
      auto [bx, by] = open[static_cast<size_t>(rng.uniform_int(static_cast<int>(open.size())))];
      auto [cx, cy] = open[static_cast<size_t>(rng.uniform_int(static_cast<int>(open.size())))];
      int ab = *geodesic(g.world, ax, ay, bx, by);
      int ba = *geodesic(g.world, bx, by, ax, ay);
      int ac = *geodesic(g.world, ax, ay, cx, cy);
      int cb = *geodesic(g.world, cx, cy, bx, by);
      CHECK(ab == ba);
      CHECK(ab <= ac + cb);
    }
  }
}

TEST_CASE("observation: one-hot has exactly one active channel per cell") {
  EnvConfig cfg = small_cfg();
  cfg.task = TaskVariant::objectnav;
  Generated g = generate(21, cfg);
  Observation obs = make_observation(g.world, g.spawn, g.task, cfg);
  std::vector<double> flat(static_cast<size_t>(obs.flat_size()));
  obs.one_hot(flat.data());
  int ch = obs.channels();
  for (int i = 0; i < cfg.window * cfg.window; ++i) {
    double s = 0;
    for (int c = 0; c < ch; ++c) s += flat[static_cast<size_t>(i) * ch + c];
    CHECK(s == 1.0);
  }
}

TEST_CASE("observation: out-of-world cells read as wall") {
  EnvConfig cfg = small_cfg();
  cfg.window = 5;
  GridWorld w = world_from_rows({"#######", "#.....#", "#.....#", "#.....#",
                                 "#.....#", "#.....#", "#######"});
  Task t{TaskVariant::pointnav, 5, 5, 0};
  // facing north from the top row: the window extends past the world
  Observation obs =
      make_observation(w, AgentState{1, 1, kNorth}, t, cfg);
  // top window row is entirely outside -> wall
  for (int c = 0; c < cfg.window; ++c) CHECK(obs.cells[static_cast<size_t>(c)] == kWall);
}

TEST_CASE("observation: bearing is {0, right, back, left} on axis goals") {
  EnvConfig cfg = small_cfg();
  GridWorld w = world_from_rows({"#######", "#.....#", "#.....#", "#.....#",
                                 "#.....#", "#.....#", "#######"});
  AgentState s{3, 3, kNorth};
  auto bearing = [&](int gx, int gy) {
    Task t{TaskVariant::pointnav, gx, gy, 0};
    return make_observation(w, s, t, cfg).goal_bearing;
  };
  CHECK(bearing(3, 1) == doctest::Approx(0.0));
  CHECK(bearing(5, 3) == doctest::Approx(M_PI / 2));
  CHECK(bearing(3, 5) == doctest::Approx(M_PI));
  CHECK(bearing(1, 3) == doctest::Approx(-M_PI / 2));
  // all bearings inside (-pi, pi]
  for (int gy = 1; gy <= 5; ++gy)
    for (int gx = 1; gx <= 5; ++gx) {
      double b = bearing(gx, gy);
      CHECK(b > -M_PI - 1e-12);
      CHECK(b <= M_PI + 1e-12);
    }
}

TEST_CASE("episode: budget ends the episode and further steps raise") {
  EnvConfig cfg = small_cfg();
  cfg.budget = 16;
  Episode ep = Episode::from_seed(8, cfg);
  int steps = 0;
  while (!ep.done()) {
    ep.step(kRotateRight);
    ++steps;
    REQUIRE(steps <= cfg.budget);
  }
  CHECK(steps == cfg.budget);
  CHECK_THROWS_AS(ep.step(kRotateRight), Error);
}

TEST_CASE("episode: replaying a recorded action sequence reproduces rewards") {
  EnvConfig cfg = small_cfg();
  cfg.obstacle_density = 0.2;
  Rng rng(4242);
  Episode ep = Episode::from_seed(31, cfg);
  std::vector<int> actions;
  std::vector<double> rewards;
  while (!ep.done()) {
    int a = rng.uniform_int(kActionCount);
    actions.push_back(a);
    rewards.push_back(ep.step(a).reward);
  }
  Episode replay = Episode::from_seed(31, cfg);
  for (size_t i = 0; i < actions.size(); ++i) {
    double r = replay.step(actions[static_cast<size_t>(i)]).reward;
    CHECK(r == rewards[i]);
  }
  CHECK(replay.done());
}

TEST_CASE("serialization: world json round trip") {
  EnvConfig cfg = small_cfg();
  cfg.task = TaskVariant::objectnav;
  Generated g = generate(55, cfg);
  json j = world_to_json(g.world);
  GridWorld w2 = world_from_json(j);
  CHECK(w2.cells == g.world.cells);
  CHECK(w2.width == g.world.width);

  json ej = episode_to_json(g.world, g.spawn, g.task);
  CHECK(task_from_json(ej["task"]).category == g.task.category);
  CHECK(agent_from_json(ej["agent"]).x == g.spawn.x);
}

TEST_CASE("serialization: demo file round trip") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "canav_test_demos.jsonl";

  EnvConfig cfg = small_cfg();
  DemoFile demos;
  demos.config = cfg;
  demos.seed = 9;
  demos.config_hash = "abc123";
  Episode ep = Episode::from_seed(77, cfg);
  DemoEpisode de;
  de.world_seed = 77;
  for (int i = 0; i < 5; ++i) {
    DemoStep st;
    st.obs = ep.observation();
    st.action = kRotateRight;
    ep.step(st.action);
    de.steps.push_back(st);
  }
  demos.episodes.push_back(de);
  write_demos(path.string(), demos);

  DemoFile loaded = read_demos(path.string());
  CHECK(loaded.seed == 9);
  CHECK(loaded.config_hash == "abc123");
  REQUIRE(loaded.episodes.size() == 1);
  REQUIRE(loaded.episodes[0].steps.size() == 5);
  CHECK(loaded.episodes[0].steps[2].obs.cells == demos.episodes[0].steps[2].obs.cells);
  CHECK(loaded.episodes[0].steps[2].obs.goal_distance ==
        demos.episodes[0].steps[2].obs.goal_distance);
  fs::remove(path);
}
