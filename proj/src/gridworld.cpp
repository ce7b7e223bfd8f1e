#include "transnet/gridworld.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <stdexcept>

#include "transnet/io.hpp"

namespace transnet {

double Pomdp::obs_prob(int s2, int o) const {
  const int d = std::popcount(static_cast<unsigned>(true_obs[static_cast<std::size_t>(s2)] ^ o));
  return std::pow(p_obs, d) * std::pow(1.0 - p_obs, 4 - d);
}

std::vector<int> free_components(const GridMap& map, int* count) {
  std::vector<int> labels(static_cast<std::size_t>(map.h) * map.w, -1);
  int next_label = 0;
  std::deque<int> queue;
  for (int start = 0; start < map.h * map.w; ++start) {
    if (labels[static_cast<std::size_t>(start)] != -1 ||
        map.blocked(start / map.w, start % map.w))
      continue;
    labels[static_cast<std::size_t>(start)] = next_label;
    queue.push_back(start);
    while (!queue.empty()) {
      const int s = queue.front();
      queue.pop_front();
      const int y = s / map.w, x = s % map.w;
      for (int a = 1; a < kNumActions; ++a) {
        const int ny = y + kActionDy[a], nx = x + kActionDx[a];
        if (map.blocked(ny, nx)) continue;
        const int n = map.index(ny, nx);
        if (labels[static_cast<std::size_t>(n)] != -1) continue;
        labels[static_cast<std::size_t>(n)] = next_label;
        queue.push_back(n);
      }
    }
    ++next_label;
  }
  if (count) *count = next_label;
  return labels;
}

namespace {

// carves the shortest obstacle corridor from the smallest free component
// to any other free component
void repair_connectivity(GridMap& map) {
  for (;;) {
    int count = 0;
    std::vector<int> labels = free_components(map, &count);
    if (count == 0) throw std::invalid_argument("gen_random_grid: no free cell to repair from");
    if (count == 1) return;

    std::vector<int> sizes(static_cast<std::size_t>(count), 0);
    for (int l : labels)
      if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
    int smallest = 0;
    for (int l = 1; l < count; ++l)
      if (sizes[static_cast<std::size_t>(l)] < sizes[static_cast<std::size_t>(smallest)])
        smallest = l;

    // grid BFS seeded with the whole component; obstacles are traversable
    // so the first foreign free cell reached marks the shortest carve path
    std::vector<int> parent(static_cast<std::size_t>(map.h) * map.w, -2);
    std::deque<int> queue;
    for (int s = 0; s < map.h * map.w; ++s)
      if (labels[static_cast<std::size_t>(s)] == smallest) {
        parent[static_cast<std::size_t>(s)] = -1;
        queue.push_back(s);
      }
    int found = -1;
    while (!queue.empty() && found == -1) {
      const int s = queue.front();
      queue.pop_front();
      const int y = s / map.w, x = s % map.w;
      for (int a = 1; a < kNumActions && found == -1; ++a) {
        const int ny = y + kActionDy[a], nx = x + kActionDx[a];
        if (!map.in_bounds(ny, nx)) continue;
        const int n = map.index(ny, nx);
        if (parent[static_cast<std::size_t>(n)] != -2) continue;
        parent[static_cast<std::size_t>(n)] = s;
        const int l = labels[static_cast<std::size_t>(n)];
        if (l >= 0 && l != smallest)
          found = n;
        else
          queue.push_back(n);
      }
    }
    for (int s = found; s != -1; s = parent[static_cast<std::size_t>(s)])
      map.cells[static_cast<std::size_t>(s)] = 0;
  }
}

// randomized Prim over the room lattice restricted to room coordinates
// ry in [ry0,ry1), rx in [rx0,rx1)
void carve_region(GridMap& map, Rng& rng, int ry0, int ry1, int rx0, int rx1) {
  const int nry = (map.h - 1) / 2, nrx = (map.w - 1) / 2;
  struct Edge {
    int ry, rx, sy, sx;
  };
  std::vector<char> visited(static_cast<std::size_t>(nry) * nrx, 0);
  std::vector<Edge> frontier;
  auto room_cell = [&](int ry, int rx) { return map.index(2 * ry + 1, 2 * rx + 1); };
  auto push_edges = [&](int ry, int rx) {
    for (int a = 1; a < kNumActions; ++a) {
      const int sy = ry + kActionDy[a], sx = rx + kActionDx[a];
      if (sy < ry0 || sy >= ry1 || sx < rx0 || sx >= rx1) continue;
      if (visited[static_cast<std::size_t>(sy) * nrx + sx]) continue;
      frontier.push_back({ry, rx, sy, sx});
    }
  };

  const int sry = ry0 + rng.uniform_int(ry1 - ry0);
  const int srx = rx0 + rng.uniform_int(rx1 - rx0);
  visited[static_cast<std::size_t>(sry) * nrx + srx] = 1;
  map.cells[static_cast<std::size_t>(room_cell(sry, srx))] = 0;
  push_edges(sry, srx);

  while (!frontier.empty()) {
    const int i = rng.uniform_int(static_cast<int>(frontier.size()));
    const Edge e = frontier[static_cast<std::size_t>(i)];
    frontier[static_cast<std::size_t>(i)] = frontier.back();
    frontier.pop_back();
    if (visited[static_cast<std::size_t>(e.sy) * nrx + e.sx]) continue;
    visited[static_cast<std::size_t>(e.sy) * nrx + e.sx] = 1;
    map.cells[static_cast<std::size_t>(room_cell(e.sy, e.sx))] = 0;
    map.cells[static_cast<std::size_t>(map.index(e.ry + e.sy + 1, e.rx + e.sx + 1))] = 0;
    push_edges(e.sy, e.sx);
  }
}

void require_maze_dims(int h, int w, const char* who) {
  if (h < 5 || w < 5 || h % 2 == 0 || w % 2 == 0)
    throw std::invalid_argument(std::string(who) + ": dimensions must be odd and at least 5, got " +
                                std::to_string(h) + "x" + std::to_string(w));
}

}  // namespace

GridMap gen_random_grid(int h, int w, double density, std::uint64_t seed) {
  if (h < 4 || w < 4)
    throw std::invalid_argument("gen_random_grid: dimensions must be at least 4, got " +
                                std::to_string(h) + "x" + std::to_string(w));
  if (density < 0.0 || density >= 0.5)
    throw std::invalid_argument("gen_random_grid: density must be in [0, 0.5), got " +
                                std::to_string(density));
  Rng rng(seed);
  GridMap map;
  map.h = h;
  map.w = w;
  map.cells.resize(static_cast<std::size_t>(h) * w);
  for (int& c : map.cells) c = rng.bernoulli(density) ? 1 : 0;
  repair_connectivity(map);
  return map;
}

GridMap gen_prim_maze(int h, int w, std::uint64_t seed) {
  require_maze_dims(h, w, "gen_prim_maze");
  Rng rng(seed);
  GridMap map;
  map.h = h;
  map.w = w;
  map.cells.assign(static_cast<std::size_t>(h) * w, 1);
  carve_region(map, rng, 0, (h - 1) / 2, 0, (w - 1) / 2);
  return map;
}

DynamicMaze gen_dynamic_maze(int h, int w, std::uint64_t seed) {
  require_maze_dims(h, w, "gen_dynamic_maze");
  const Rng root(seed);
  for (int attempt = 0; attempt < 50; ++attempt) {
    Rng rng = root.child(static_cast<std::uint64_t>(attempt));
    const bool vertical = rng.bernoulli(0.5);
    const int span = vertical ? w : h;   // axis the wall cuts across
    const int cross = vertical ? h : w;  // axis the wall runs along

    // even wall offsets within the middle third, falling back to the
    // nearest valid offset to the center
    std::vector<int> candidates;
    for (int c = span / 3; c <= 2 * span / 3; ++c)
      if (c % 2 == 0 && c >= 2 && c <= span - 3) candidates.push_back(c);
    if (candidates.empty()) {
      int c = span / 2;
      if (c % 2 == 1) --c;
      candidates.push_back(std::min(std::max(c, 2), span - 3));
    }
    const int wall = candidates[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(candidates.size())))];

    GridMap map;
    map.h = h;
    map.w = w;
    map.cells.assign(static_cast<std::size_t>(h) * w, 1);
    if (vertical) {
      carve_region(map, rng, 0, (h - 1) / 2, 0, wall / 2);
      carve_region(map, rng, 0, (h - 1) / 2, wall / 2, (w - 1) / 2);
    } else {
      carve_region(map, rng, 0, wall / 2, 0, (w - 1) / 2);
      carve_region(map, rng, wall / 2, (h - 1) / 2, 0, (w - 1) / 2);
    }

    // two distinct gate cells at odd offsets along the wall, so each gate
    // touches a carved room on both sides
    const int slots = (cross - 1) / 2;
    if (slots < 2) continue;
    const int ga = rng.uniform_int(slots);
    int gb = rng.uniform_int(slots - 1);
    if (gb >= ga) ++gb;
    Gates gates;
    if (vertical) {
      gates = {2 * ga + 1, wall, 2 * gb + 1, wall, true};
    } else {
      gates = {wall, 2 * ga + 1, wall, 2 * gb + 1, true};
    }

    int count = 0;
    std::vector<int> labels = free_components(map, &count);
    if (count != 2) continue;
    const auto side = [&](int y, int x) { return labels[static_cast<std::size_t>(map.index(y, x))]; };
    const int across_a = vertical ? side(gates.ay, gates.ax - 1) : side(gates.ay - 1, gates.ax);
    const int across_b = vertical ? side(gates.ay, gates.ax + 1) : side(gates.ay + 1, gates.ax);
    if (across_a == -1 || across_b == -1 || across_a == across_b) continue;

    map.gates = gates;
    return DynamicMaze{std::move(map), std::move(labels)};
  }
  throw std::runtime_error("gen_dynamic_maze: no valid wall placement after 50 attempts");
}

void gate_step(Gates& gates, double p_swap, Rng& rng) {
  if (rng.bernoulli(p_swap)) gates.a_open = !gates.a_open;
}

Pomdp build_pomdp(const GridMap& map, int goal, const NoiseProfile& noise) {
  const int n = map.h * map.w;
  if (goal < 0 || goal >= n || map.blocked(goal / map.w, goal % map.w))
    throw std::invalid_argument("build_pomdp: goal cell is not free");
  Pomdp m;
  m.h = map.h;
  m.w = map.w;
  m.goal = goal;
  m.p_move = noise.p_move;
  m.p_obs = noise.p_obs;
  m.obstacle.resize(static_cast<std::size_t>(n));
  m.true_obs.resize(static_cast<std::size_t>(n));
  m.trans.resize(static_cast<std::size_t>(n) * kNumActions);
  m.reward.resize(static_cast<std::size_t>(n) * kNumActions);
  for (int s = 0; s < n; ++s) {
    const int y = s / map.w, x = s % map.w;
    m.obstacle[static_cast<std::size_t>(s)] = map.blocked(y, x) ? 1 : 0;
    m.true_obs[static_cast<std::size_t>(s)] = map.neighbor_bits(y, x);
  }
  for (int s = 0; s < n; ++s) {
    const int y = s / map.w, x = s % map.w;
    for (int a = 0; a < kNumActions; ++a) {
      Transition& t = m.trans[static_cast<std::size_t>(s * kNumActions + a)];
      double& r = m.reward[static_cast<std::size_t>(s * kNumActions + a)];
      t = {s, 1.0, false};
      r = 0.0;
      if (m.obstacle[static_cast<std::size_t>(s)] || s == goal) continue;  // absorbing / filler
      if (a == kStay) {
        r = kStepReward;
        continue;
      }
      const int ty = y + kActionDy[a], tx = x + kActionDx[a];
      if (map.blocked(ty, tx)) {
        t.collision = true;
        r = kCollisionReward;
      } else {
        t.next = map.index(ty, tx);
        t.p_next = noise.p_move;
        r = t.next == goal
                ? noise.p_move * kGoalReward + (1.0 - noise.p_move) * kStepReward
                : kStepReward;
      }
    }
  }
  return m;
}

StepResult step_env(GridMap& map, const NoiseProfile& noise, int goal, int state,
                    int action, double p_swap, Rng& rng) {
  const int y = state / map.w, x = state % map.w;
  if (map.blocked(y, x))
    throw std::invalid_argument("step_env: state " + std::to_string(state) + " is not free");
  if (action < 0 || action >= kNumActions)
    throw std::invalid_argument("step_env: bad action " + std::to_string(action));

  StepResult r;
  r.state = state;
  if (state == goal || action == kStay) {
    r.reward = state == goal ? 0.0 : kStepReward;
  } else {
    const int ty = y + kActionDy[action], tx = x + kActionDx[action];
    if (map.blocked(ty, tx)) {
      r.collision = true;
      r.reward = kCollisionReward;
    } else {
      r.state = rng.bernoulli(noise.p_move) ? map.index(ty, tx) : state;
      r.reward = r.state == goal ? kGoalReward : kStepReward;
    }
  }

  if (map.gates && !map.gates->is_gate(r.state / map.w, r.state % map.w))
    gate_step(*map.gates, p_swap, rng);

  int bits = map.neighbor_bits(r.state / map.w, r.state % map.w);
  for (int b = 0; b < 4; ++b)
    if (rng.bernoulli(noise.p_obs)) bits ^= 1 << b;
  r.observation = bits;
  r.done = r.state == goal;
  return r;
}

Scenario sample_task(const GridMap& map, Rng& rng) {
  Scenario sc;
  sc.map = map;
  std::vector<int> free;
  for (int s = 0; s < map.h * map.w; ++s)
    if (map.cells[static_cast<std::size_t>(s)] == 0) free.push_back(s);
  if (free.size() < 2) throw std::invalid_argument("sample_task: need at least 2 free cells");

  if (map.gates) {
    GridMap base = map;
    base.gates.reset();
    int count = 0;
    std::vector<int> labels = free_components(base, &count);
    if (count != 2)
      throw std::invalid_argument("sample_task: gated map must split into exactly 2 partitions");
    std::vector<int> sides[2];
    for (int s : free) sides[labels[static_cast<std::size_t>(s)]].push_back(s);
    const int start_side = rng.bernoulli(0.5) ? 1 : 0;
    const std::vector<int>& sv = sides[start_side];
    const std::vector<int>& gv = sides[1 - start_side];
    sc.start = sv[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(sv.size())))];
    sc.goal = gv[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(gv.size())))];
    sc.variant = Variant::kV1;
  } else {
    sc.start = free[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(free.size())))];
    do {
      sc.goal = free[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(free.size())))];
    } while (sc.goal == sc.start);
  }

  sc.initial_belief.assign(static_cast<std::size_t>(map.h) * map.w, 0.0);
  const double mass = 1.0 / static_cast<double>(free.size());
  for (int s : free) sc.initial_belief[static_cast<std::size_t>(s)] = mass;
  return sc;
}

namespace {

GridMap downsample_map(const GridMap& in, int d) {
  if (d <= 1) return in;
  GridMap out;
  out.h = (in.h + d - 1) / d;
  out.w = (in.w + d - 1) / d;
  out.cells.assign(static_cast<std::size_t>(out.h) * out.w, 0);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x)
      if (in.cells[static_cast<std::size_t>(in.index(y, x))])
        out.cells[static_cast<std::size_t>(out.index(y / d, x / d))] = 1;
  return out;
}

GridMap parse_ascii_map(const std::string& text, const std::string& path) {
  std::size_t pos = 0;
  auto next_line = [&](int lineno) {
    if (pos >= text.size())
      throw std::runtime_error(path + ": line " + std::to_string(lineno) + ": unexpected end of file");
    const std::size_t end = text.find('\n', pos);
    std::string line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    pos = end == std::string::npos ? text.size() : end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  const std::string header = next_line(1);
  int h = 0, w = 0;
  if (std::sscanf(header.c_str(), "%d %d", &h, &w) != 2 || h <= 0 || w <= 0)
    throw std::runtime_error(path + ": line 1: expected header \"H W\", got \"" + header + "\"");

  GridMap map;
  map.h = h;
  map.w = w;
  map.cells.reserve(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const std::string line = next_line(y + 2);
    if (static_cast<int>(line.size()) != w)
      throw std::runtime_error(path + ": line " + std::to_string(y + 2) + ": expected " +
                               std::to_string(w) + " columns, got " + std::to_string(line.size()));
    for (int x = 0; x < w; ++x) {
      const char c = line[static_cast<std::size_t>(x)];
      if (c != '0' && c != '1')
        throw std::runtime_error(path + ": line " + std::to_string(y + 2) + ", column " +
                                 std::to_string(x + 1) + ": invalid character '" + c + "'");
      map.cells.push_back(c - '0');
    }
  }
  return map;
}

GridMap parse_pgm_map(const std::string& bytes, const std::string& path) {
  std::size_t pos = 2;  // past "P5"
  auto skip_space = [&] {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        return;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos == start)
      throw std::runtime_error(path + ": byte " + std::to_string(start) + ": expected " + what);
    return std::stoi(bytes.substr(start, pos - start));
  };

  const int w = read_int("width");
  const int h = read_int("height");
  const int maxval = read_int("maxval");
  if (maxval <= 0 || maxval > 255)
    throw std::runtime_error(path + ": unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw std::runtime_error(path + ": byte " + std::to_string(pos) +
                             ": expected whitespace before pixel data");
  ++pos;
  if (bytes.size() - pos < static_cast<std::size_t>(h) * w)
    throw std::runtime_error(path + ": pixel data truncated at byte " +
                             std::to_string(bytes.size()));

  GridMap map;
  map.h = h;
  map.w = w;
  map.cells.resize(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < map.cells.size(); ++i) {
    const unsigned char v = static_cast<unsigned char>(bytes[pos + i]);
    map.cells[i] = v < 127 ? 1 : 0;  // darker half reads as obstacle
  }
  return map;
}

}  // namespace

GridMap load_map(const std::string& path, int downsample) {
  if (downsample < 1)
    throw std::invalid_argument("load_map: downsample factor must be >= 1");
  const std::string bytes = read_text_file(path);
  GridMap map;
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5')
    map = parse_pgm_map(bytes, path);
  else
    map = parse_ascii_map(bytes, path);
  return downsample_map(map, downsample);
}

}  // namespace transnet
