#include "env/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace canav::env {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Frame {
  int fx, fy;  // forward
  int rx, ry;  // right (forward rotated 90 deg clockwise on screen coords)
};

Frame frame_of(Heading h) {
  int fx = heading_dx(h), fy = heading_dy(h);
  // rotate (fx, fy) clockwise with y pointing down: right = (-fy, fx)
  return {fx, fy, -fy, fx};
}

}  // namespace

void Observation::one_hot(double* out) const {
  int ch = channels();
  std::fill(out, out + flat_size(), 0.0);
  for (int i = 0; i < window * window; ++i) {
    uint8_t code = cells[static_cast<size_t>(i)];
    out[i * ch + code] = 1.0;
  }
}

void EnvConfig::validate() const {
  if (width < 3 || height < 3 || std::max(width, height) < 7)
    fail(ErrorKind::config, "env: grid of " + std::to_string(width) + "x" +
                                std::to_string(height) +
                                " too small (need >= 3 per side, >= 7 on one)");
  if (obstacle_density < 0.0 || obstacle_density > 0.4)
    fail(ErrorKind::config, "env: obstacle_density " +
                                std::to_string(obstacle_density) +
                                " outside [0, 0.4]");
  if (window < 3 || window % 2 == 0)
    fail(ErrorKind::config, "env: window must be odd and >= 3");
  if (categories < 1 || categories > 24)
    fail(ErrorKind::config, "env: categories must be in 1..24");
  if (budget < 1) fail(ErrorKind::config, "env: budget must be positive");
  if (min_goal_distance < 1)
    fail(ErrorKind::config, "env: min_goal_distance must be positive");
}

std::vector<int> geodesic_field(const GridWorld& w, int from_x, int from_y) {
  std::vector<int> dist(static_cast<size_t>(w.width) * w.height, -1);
  if (w.wall(from_x, from_y)) return dist;
  std::deque<std::pair<int, int>> queue;
  dist[static_cast<size_t>(from_y) * w.width + from_x] = 0;
  queue.emplace_back(from_x, from_y);
  constexpr int dx[4] = {0, 1, 0, -1};
  constexpr int dy[4] = {-1, 0, 1, 0};
  while (!queue.empty()) {
    auto [x, y] = queue.front();
    queue.pop_front();
    int d = dist[static_cast<size_t>(y) * w.width + x];
    for (int k = 0; k < 4; ++k) {
      int nx = x + dx[k], ny = y + dy[k];
      if (w.wall(nx, ny)) continue;
      int& cell = dist[static_cast<size_t>(ny) * w.width + nx];
      if (cell < 0) {
        cell = d + 1;
        queue.emplace_back(nx, ny);
      }
    }
  }
  return dist;
}

std::optional<int> geodesic(const GridWorld& w, int from_x, int from_y, int to_x,
                            int to_y) {
  if (!w.inside(from_x, from_y) || !w.inside(to_x, to_y))
    fail(ErrorKind::invalid_argument, "geodesic: cell outside the world");
  auto dist = geodesic_field(w, from_x, from_y);
  int d = dist[static_cast<size_t>(to_y) * w.width + to_x];
  if (d < 0) return std::nullopt;
  return d;
}

std::optional<int> geodesic_to_category(const GridWorld& w, int x, int y,
                                        int category) {
  auto dist = geodesic_field(w, x, y);
  int best = -1;
  for (int cy = 0; cy < w.height; ++cy)
    for (int cx = 0; cx < w.width; ++cx) {
      if (w.at(cx, cy) != kObjectBase + category) continue;
      int d = dist[static_cast<size_t>(cy) * w.width + cx];
      if (d >= 0 && (best < 0 || d < best)) best = d;
    }
  if (best < 0) return std::nullopt;
  return best;
}

double reward(const RewardParams& p, double prev_geodesic, double new_geodesic,
              bool success_event, [[maybe_unused]] bool collided) {
  if (!std::isfinite(prev_geodesic) || !std::isfinite(new_geodesic))
    fail(ErrorKind::invalid_argument, "reward: non-finite geodesic");
  double r = p.shaping_weight * (prev_geodesic - new_geodesic) - p.step_penalty;
  if (success_event) r += p.success_bonus;
  return r;
}

Observation make_observation(const GridWorld& w, const AgentState& s,
                             const Task& t, const EnvConfig& cfg) {
  Observation obs;
  obs.window = cfg.window;
  obs.categories = cfg.categories;
  obs.variant = t.variant;
  obs.cells.resize(static_cast<size_t>(cfg.window) * cfg.window);

  Frame f = frame_of(s.heading);
  int half = cfg.window / 2;
  int cx = s.x + f.fx;  // window centered on the cell ahead
  int cy = s.y + f.fy;
  for (int r = 0; r < cfg.window; ++r) {
    for (int c = 0; c < cfg.window; ++c) {
      int fwd = half - r;
      int right = c - half;
      int x = cx + right * f.rx + fwd * f.fx;
      int y = cy + right * f.ry + fwd * f.fy;
      uint8_t code = w.inside(x, y) ? w.at(x, y) : kWall;
      obs.cells[static_cast<size_t>(r) * cfg.window + c] = code;
    }
  }

  if (t.variant == TaskVariant::pointnav) {
    auto d = geodesic(w, s.x, s.y, t.goal_x, t.goal_y);
    if (!d)
      fail(ErrorKind::runtime, "observation: goal unreachable (broken world)");
    obs.goal_distance = static_cast<double>(*d);
    double dx = static_cast<double>(t.goal_x - s.x);
    double dy = static_cast<double>(t.goal_y - s.y);
    double fwd = dx * f.fx + dy * f.fy;
    double right = dx * f.rx + dy * f.ry;
    double bearing = (dx == 0.0 && dy == 0.0) ? 0.0 : std::atan2(right, fwd);
    if (bearing <= -kPi) bearing += 2.0 * kPi;
    obs.goal_bearing = bearing;
  } else {
    obs.goal_category = t.category;
  }
  return obs;
}

bool success_at(const GridWorld& w, const AgentState& s, const Task& t,
                const EnvConfig& cfg) {
  if (t.variant == TaskVariant::pointnav) {
    auto d = geodesic(w, s.x, s.y, t.goal_x, t.goal_y);
    return d && *d <= cfg.pointnav_radius;
  }
  // objectnav: some target-category cell within the radius AND inside the
  // current observation window
  auto dist = geodesic_field(w, s.x, s.y);
  Frame f = frame_of(s.heading);
  int half = cfg.window / 2;
  int cx = s.x + f.fx, cy = s.y + f.fy;
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) {
      if (w.at(x, y) != kObjectBase + t.category) continue;
      int d = dist[static_cast<size_t>(y) * w.width + x];
      if (d < 0 || d > cfg.objectnav_radius) continue;
      // invert the egocentric mapping: offsets in the agent frame
      int dx = x - cx, dy = y - cy;
      int fwd = dx * f.fx + dy * f.fy;
      int right = dx * f.rx + dy * f.ry;
      int r = half - fwd, c = right + half;
      if (r >= 0 && r < cfg.window && c >= 0 && c < cfg.window) return true;
    }
  return false;
}

Generated generate(uint64_t seed, const EnvConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  constexpr int kMaxTries = 64;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    GridWorld w;
    w.width = cfg.width;
    w.height = cfg.height;
    w.categories = cfg.categories;
    w.cells.assign(static_cast<size_t>(cfg.width) * cfg.height, kEmpty);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        bool border = x == 0 || y == 0 || x == cfg.width - 1 || y == cfg.height - 1;
        if (border)
          w.cells[static_cast<size_t>(y) * cfg.width + x] = kWall;
        else if (rng.uniform() < cfg.obstacle_density)
          w.cells[static_cast<size_t>(y) * cfg.width + x] = kWall;
      }

    // keep only the largest open component; fill pockets with wall
    std::vector<int> comp(static_cast<size_t>(cfg.width) * cfg.height, -1);
    int n_comp = 0;
    std::vector<int> comp_size;
    for (int y = 1; y < cfg.height - 1; ++y)
      for (int x = 1; x < cfg.width - 1; ++x) {
        size_t idx = static_cast<size_t>(y) * cfg.width + x;
        if (w.cells[idx] == kWall || comp[idx] >= 0) continue;
        int id = n_comp++;
        comp_size.push_back(0);
        std::deque<std::pair<int, int>> queue{{x, y}};
        comp[idx] = id;
        while (!queue.empty()) {
          auto [qx, qy] = queue.front();
          queue.pop_front();
          ++comp_size[static_cast<size_t>(id)];
          constexpr int dx[4] = {0, 1, 0, -1};
          constexpr int dy[4] = {-1, 0, 1, 0};
          for (int k = 0; k < 4; ++k) {
            int nx = qx + dx[k], ny = qy + dy[k];
            if (w.wall(nx, ny)) continue;
            size_t nidx = static_cast<size_t>(ny) * cfg.width + nx;
            if (comp[nidx] < 0) {
              comp[nidx] = id;
              queue.emplace_back(nx, ny);
            }
          }
        }
      }
    if (n_comp == 0) continue;
    int big = 0;
    for (int i = 1; i < n_comp; ++i)
      if (comp_size[static_cast<size_t>(i)] > comp_size[static_cast<size_t>(big)])
        big = i;
    std::vector<std::pair<int, int>> open;
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        size_t idx = static_cast<size_t>(y) * cfg.width + x;
        if (w.cells[idx] == kWall) continue;
        if (comp[idx] != big)
          w.cells[idx] = kWall;
        else
          open.emplace_back(x, y);
      }

    int needed = 2 + (cfg.task == TaskVariant::objectnav ? cfg.categories : 0);
    if (static_cast<int>(open.size()) < std::max(6, needed)) continue;

    // objects: one instance per category on distinct open cells
    std::vector<std::pair<int, int>> object_cells;
    if (cfg.task == TaskVariant::objectnav) {
      std::vector<std::pair<int, int>> pool = open;
      rng.shuffle(pool);
      for (int c = 0; c < cfg.categories; ++c) {
        auto [x, y] = pool[static_cast<size_t>(c)];
        w.cells[static_cast<size_t>(y) * cfg.width + x] =
            static_cast<uint8_t>(kObjectBase + c);
        object_cells.emplace_back(x, y);
      }
    }

    // spawn on an empty (non-object) cell
    std::vector<std::pair<int, int>> empties;
    for (auto [x, y] : open)
      if (w.at(x, y) == kEmpty) empties.emplace_back(x, y);
    if (empties.empty()) continue;
    AgentState spawn;
    {
      auto [x, y] = empties[static_cast<size_t>(rng.uniform_int(
          static_cast<int>(empties.size())))];
      spawn.x = x;
      spawn.y = y;
      spawn.heading = static_cast<Heading>(rng.uniform_int(4));
    }

    auto dist = geodesic_field(w, spawn.x, spawn.y);
    Task task;
    task.variant = cfg.task;
    if (cfg.task == TaskVariant::pointnav) {
      std::vector<std::pair<int, int>> candidates;
      for (auto [x, y] : empties) {
        int d = dist[static_cast<size_t>(y) * cfg.width + x];
        if (d >= cfg.min_goal_distance) candidates.emplace_back(x, y);
      }
      if (candidates.empty()) continue;
      auto [gx, gy] = candidates[static_cast<size_t>(rng.uniform_int(
          static_cast<int>(candidates.size())))];
      task.goal_x = gx;
      task.goal_y = gy;
    } else {
      std::vector<int> candidates;
      for (int c = 0; c < cfg.categories; ++c) {
        auto [x, y] = object_cells[static_cast<size_t>(c)];
        int d = dist[static_cast<size_t>(y) * cfg.width + x];
        if (d >= cfg.min_goal_distance) candidates.push_back(c);
      }
      if (candidates.empty()) continue;
      task.category = candidates[static_cast<size_t>(rng.uniform_int(
          static_cast<int>(candidates.size())))];
    }

    return Generated{std::move(w), spawn, task};
  }
  fail(ErrorKind::runtime,
       "generate: no valid world after " + std::to_string(kMaxTries) +
           " attempts (seed " + std::to_string(seed) + ")");
}

Episode::Episode(GridWorld world, AgentState spawn, Task task, EnvConfig cfg)
    : world_(std::move(world)), state_(spawn), task_(task), cfg_(cfg) {
  obs_ = make_observation(world_, state_, task_, cfg_);
}

Episode Episode::from_seed(uint64_t seed, const EnvConfig& cfg) {
  Generated g = generate(seed, cfg);
  return Episode(std::move(g.world), g.spawn, g.task, cfg);
}

int Episode::goal_geodesic() const {
  if (task_.variant == TaskVariant::pointnav) {
    auto d = geodesic(world_, state_.x, state_.y, task_.goal_x, task_.goal_y);
    if (!d) fail(ErrorKind::runtime, "episode: unreachable goal");
    return *d;
  }
  auto d = geodesic_to_category(world_, state_.x, state_.y, task_.category);
  if (!d) fail(ErrorKind::runtime, "episode: unreachable target category");
  return *d;
}

StepResult Episode::step(int action) {
  if (done_)
    fail(ErrorKind::invalid_argument, "episode: step() after episode end");
  if (action < 0 || action >= kActionCount)
    fail(ErrorKind::invalid_argument,
         "episode: action id " + std::to_string(action) + " out of range 0.." +
             std::to_string(kActionCount - 1));

  int prev_geo = goal_geodesic();
  bool collided = false;
  bool success = false;

  switch (action) {
    case kMoveAhead: {
      int nx = state_.x + heading_dx(state_.heading);
      int ny = state_.y + heading_dy(state_.heading);
      if (world_.wall(nx, ny)) {
        collided = true;
      } else {
        state_.x = nx;
        state_.y = ny;
        ++moves_;
      }
      break;
    }
    case kRotateRight:
      state_.heading = static_cast<Heading>((state_.heading + 1) % 4);
      break;
    case kRotateLeft:
      state_.heading = static_cast<Heading>((state_.heading + 3) % 4);
      break;
    case kDone:
      success = success_at(world_, state_, task_, cfg_);
      done_ = true;  // stop always ends the episode, success or failure
      break;
    default:
      break;
  }

  ++steps_;
  if (steps_ >= cfg_.budget) done_ = true;

  int new_geo = goal_geodesic();
  StepResult res;
  res.reward = reward(cfg_.reward, prev_geo, new_geo, success, collided);
  res.info.success = success;
  res.info.geodesic_to_goal = new_geo;
  res.info.collided = collided;
  obs_ = make_observation(world_, state_, task_, cfg_);
  res.observation = obs_;
  res.done = done_;
  return res;
}

}  // namespace canav::env
