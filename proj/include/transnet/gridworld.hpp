#pragma once

#include <optional>
#include <string>
#include <vector>

#include "transnet/rng.hpp"

namespace transnet {

// Actions are {stay, north, east, south, west}; north decreases the row
// index. Observations are 4-bit obstacle readings with bit weights
// north=1, south=2, east=4, west=8, matching the classification feature
// order used by the network.
inline constexpr int kNumActions = 5;
inline constexpr int kNumObservations = 16;

enum Action : int { kStay = 0, kNorth = 1, kEast = 2, kSouth = 3, kWest = 4 };

// (dy,dx) per action, indexed by Action
inline constexpr int kActionDy[kNumActions] = {0, -1, 0, 1, 0};
inline constexpr int kActionDx[kNumActions] = {0, 0, 1, 0, -1};

inline constexpr double kStepReward = -0.1;
inline constexpr double kCollisionReward = -1.0;
inline constexpr double kGoalReward = 1.0;
inline constexpr double kDiscount = 0.99;

// Two gate cells in a dynamic maze's dividing wall. Exactly one is open;
// the cells themselves are stored as obstacles in the base map and the
// open one is carved out on the fly.
struct Gates {
  int ay = 0, ax = 0;
  int by = 0, bx = 0;
  bool a_open = true;

  bool is_gate(int y, int x) const {
    return (y == ay && x == ax) || (y == by && x == bx);
  }
  bool is_open(int y, int x) const {
    return a_open ? (y == ay && x == ax) : (y == by && x == bx);
  }
};

struct GridMap {
  int h = 0, w = 0;
  std::vector<int> cells;  // row-major, 0 free / 1 obstacle; gates stored as 1
  std::optional<Gates> gates;

  int index(int y, int x) const { return y * w + x; }
  bool in_bounds(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }

  // obstacle truth under the current gate state; off-grid is an obstacle
  bool blocked(int y, int x) const {
    if (!in_bounds(y, x)) return true;
    if (gates && gates->is_open(y, x)) return false;
    return cells[static_cast<std::size_t>(index(y, x))] != 0;
  }

  // 4-bit obstacle reading at (y,x) under the current gate state
  int neighbor_bits(int y, int x) const {
    return (blocked(y - 1, x) ? 1 : 0) | (blocked(y + 1, x) ? 2 : 0) |
           (blocked(y, x + 1) ? 4 : 0) | (blocked(y, x - 1) ? 8 : 0);
  }
};

// How a scenario's gate cells are drawn into the network input. Static
// maps ignore the flag. V1 draws the current configuration as plain
// free/obstacle cells; V2 additionally marks the open gate so the network
// can tell it apart from ordinary free space.
enum class Variant { kStatic = 0, kV1 = 1, kV2 = 2 };

struct Scenario {
  GridMap map;
  int start = -1;  // flat cell indices
  int goal = -1;
  std::vector<double> initial_belief;  // length h*w, uniform over free cells
  Variant variant = Variant::kStatic;
};

struct NoiseProfile {
  double p_move = 1.0;  // intended move succeeds; remaining mass stays put
  double p_obs = 0.0;   // independent flip probability per observation bit

  static NoiseProfile deterministic() { return {1.0, 0.0}; }
  static NoiseProfile stochastic() { return {0.8, 0.1}; }
};

// One (s,a) row of the transition table. Mass p_next lands on `next`,
// the remainder stays at s; blocked moves put everything on s and flag
// the collision.
struct Transition {
  int next = 0;
  double p_next = 1.0;
  bool collision = false;
};

// Tabular ground-truth model over the grid cells. Rewards are stored as
// expectations over the transition outcome, which is what value iteration
// consumes; the simulator emits the per-outcome rewards directly.
struct Pomdp {
  int h = 0, w = 0;
  int goal = -1;
  double gamma = kDiscount;
  double p_move = 1.0, p_obs = 0.0;
  std::vector<int> obstacle;       // effective 0/1 snapshot used to build
  std::vector<Transition> trans;   // index s*kNumActions + a
  std::vector<double> reward;      // same indexing
  std::vector<int> true_obs;       // noiseless 4-bit reading per cell

  int num_states() const { return h * w; }

  double trans_prob(int s, int a, int s2) const {
    const Transition& t = trans[static_cast<std::size_t>(s * kNumActions + a)];
    double p = 0.0;
    if (s2 == t.next) p += t.p_next;
    if (s2 == s) p += 1.0 - t.p_next;
    return p;
  }

  // observation probability for the cell's reading; independent of action
  double obs_prob(int s2, int o) const;
};

struct StepResult {
  int state = -1;
  int observation = 0;
  bool collision = false;
  double reward = 0.0;
  bool done = false;
};

// Obstacles drawn i.i.d. at the given density, then repaired to one free
// component by clearing the obstacles nearest to the smallest component.
GridMap gen_random_grid(int h, int w, double density, std::uint64_t seed);

// Perfect maze on the odd-coordinate room lattice via randomized Prim.
GridMap gen_prim_maze(int h, int w, std::uint64_t seed);

struct DynamicMaze {
  GridMap map;                 // gates set, gate A open
  std::vector<int> partition;  // per cell: 0/1 for free cells, -1 otherwise
};

// Two independent Prim mazes separated by a straight wall through the
// middle third, joined only by two gate cells in that wall.
DynamicMaze gen_dynamic_maze(int h, int w, std::uint64_t seed);

// Swaps which gate is open with probability p_swap.
void gate_step(Gates& gates, double p_swap, Rng& rng);

// Snapshot of the grid under its current gate state as a tabular model.
Pomdp build_pomdp(const GridMap& map, int goal, const NoiseProfile& noise);

// One simulator step: transition under the current gates, then the gate
// swap (suppressed while the agent stands on a gate cell, which would
// otherwise trap it inside a wall), then the observation read against the
// post-swap map. Mutates map.gates.
StepResult step_env(GridMap& map, const NoiseProfile& noise, int goal, int state,
                    int action, double p_swap, Rng& rng);

// Start/goal as distinct free cells (opposite partitions when gates are
// present) and a uniform belief over the free cells of the base map.
Scenario sample_task(const GridMap& map, Rng& rng);

// ASCII grid ("H W" header, then H rows of 0/1 characters) or binary PGM
// (P5, maxval <= 255, pixels below 127 are obstacles). A downsample
// factor d maps each d x d block to an obstacle iff any member is one.
GridMap load_map(const std::string& path, int downsample = 1);

// Connected components of free cells under 4-connectivity, gate-aware.
// Returns per-cell labels (0..count-1 in first-encounter order, -1 for
// blocked cells) and stores the component count.
std::vector<int> free_components(const GridMap& map, int* count);

}  // namespace transnet
