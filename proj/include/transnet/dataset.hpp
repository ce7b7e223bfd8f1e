#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "transnet/gridworld.hpp"
#include "transnet/qmdp.hpp"

namespace transnet {

enum class Domain { kGrid = 0, kMaze = 1, kDynamic = 2 };

struct DatasetConfig {
  Domain domain = Domain::kGrid;
  Variant variant = Variant::kStatic;  // must be V1 or V2 for dynamic mazes
  int h = 10, w = 10;
  double density = 0.25;  // obstacle fraction, grid domain only
  int n_envs = 1;
  int trajs_per_env = 1;
  NoiseProfile noise = NoiseProfile::stochastic();
  double p_swap = 0.0;  // per-step gate swap probability, dynamic only
  double gamma = kDiscount;
  int max_steps = 0;  // <= 0 resolves to 4*(h+w)
  double val_fraction = 0.1;
  double test_fraction = 0.0;
  int max_attempts = 50;  // expert redraws per trajectory slot
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetConfig config;  // with max_steps resolved
  int shortfall = 0;     // slots the expert failed to fill within max_attempts
  std::vector<GridMap> envs;
  std::vector<int> env_split;  // 0 train / 1 validation / 2 test, per env
  std::vector<Trajectory> trajs;  // successful only, env-major order
};

// Generates environments from config.seed, runs the QMDP expert on sampled
// tasks, and keeps only successful trajectories, redrawing until each slot
// fills or max_attempts is spent. Split tags are assigned per environment,
// so splits are disjoint by environment. Deterministic in config.
Dataset build_dataset(const DatasetConfig& config);

// On-disk layout: <dir>/manifest.txt (generation parameters, counts, and
// per-array declarations) plus one flat little-endian file per array.
// save + load round-trips bit-exactly; rebuilding from the same config
// produces byte-identical files.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace transnet
