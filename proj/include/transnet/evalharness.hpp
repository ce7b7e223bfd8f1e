#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "transnet/dataset.hpp"
#include "transnet/net.hpp"

namespace transnet {

struct EpisodeRecord {
  int scenario_id = 0;
  int steps = 0;
  bool success = false;
  int collisions = 0;
  // per-decision trace; the expert leaves the entropy empty
  std::vector<double> belief_entropy;
  std::vector<int> actions;
  std::vector<int> observations;
};

struct MetricSummary {
  double sr = 0.0;            // % successful episodes
  std::optional<double> tl;   // mean steps over successes; absent without any
  double cr = 0.0;            // % of all steps that collided
  int episodes = 0;
};

MetricSummary metrics(const std::vector<EpisodeRecord>& records);

// one evaluation task plus the seed of its private simulator stream
struct EvalScenario {
  int id = 0;
  Scenario scenario;
  std::uint64_t sim_seed = 0;
};

struct EvalSetConfig {
  Domain domain = Domain::kGrid;
  Variant variant = Variant::kStatic;  // V1 or V2 when the domain is dynamic
  int h = 10, w = 10;
  double density = 0.25;  // random grids only
  int count = 100;
  int tasks_per_env = 1;  // consecutive scenarios sharing one map
  std::uint64_t seed = 0;
};

std::vector<EvalScenario> make_eval_set(const EvalSetConfig& config);

// Trials on one fixed (typically ingested) map. Start and goal are drawn
// uniformly over free cells but kept at least (h+w)/2 apart in L1 distance
// so tasks actually cross the map.
std::vector<EvalScenario> make_map_eval_set(const GridMap& map, int count, std::uint64_t seed);

// A policy rolls one scenario against the ground-truth simulator, seeding
// the stream from sim_seed. Policies are deterministic given the scenario,
// so comparisons that share an EvalScenario share the noise.
using Policy = std::function<EpisodeRecord(const EvalScenario&, int max_steps)>;

Policy net_policy(const TransNetParams& params, const ClassificationSpec& spec,
                  const NetConfig& config, const NoiseProfile& noise, double p_swap);
Policy expert_policy(const NoiseProfile& noise, double p_swap, double gamma = kDiscount);

inline int default_max_steps(int h, int w) { return 4 * (h + w); }

std::vector<EpisodeRecord> run_policy(const Policy& policy,
                                      const std::vector<EvalScenario>& scenarios, int max_steps,
                                      int threads = 1);

struct PolicyResult {
  std::string name;
  std::vector<EpisodeRecord> records;
};

// Aligned metric rows over an identical scenario list; episode pairing is
// checked by scenario id and mismatches are rejected.
std::vector<std::pair<std::string, MetricSummary>> compare(
    const std::vector<PolicyResult>& results);

// policy,episodes,sr,tl,cr with percentages at one decimal; tl is blank
// when no episode succeeded
std::string comparison_csv(const std::vector<std::pair<std::string, MetricSummary>>& rows);

struct GeneralizationConfig {
  int trials = 25;
  int k_iters = 0;    // 0 resolves to 4*max(H,W) of the evaluation map
  int max_steps = 0;  // 0 resolves to 4*(H+W)
  NoiseProfile noise;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Rolls small-map-trained parameters on a large map. Reruns with the same
// seed face identical tasks and noise, so summaries of different parameter
// sets are directly comparable.
MetricSummary eval_generalization(const TransNetParams& params, const ClassificationSpec& spec,
                                  const NetConfig& config, const GridMap& map,
                                  const GeneralizationConfig& gcfg);

// Writes the k x k planner kernel slice of one (action, class) pair as a
// max-normalized P5 heat image at `path` and the raw probabilities as a
// text matrix at path + ".txt".
void export_kernels(const TransNetParams& params, const NetConfig& config, int num_classes,
                    int action, int class_index, const std::string& path);

}  // namespace transnet
