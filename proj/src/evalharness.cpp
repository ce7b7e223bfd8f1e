#include "transnet/evalharness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "transnet/io.hpp"
#include "transnet/parallel.hpp"
#include "transnet/qmdp.hpp"

namespace transnet {

namespace {

double belief_entropy_nats(const DTensor& belief) {
  double h = 0.0;
  for (double p : belief.values())
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

MetricSummary metrics(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) throw std::invalid_argument("metrics: no episodes");
  MetricSummary out;
  out.episodes = static_cast<int>(records.size());
  int successes = 0;
  long success_steps = 0;
  long total_steps = 0;
  long total_collisions = 0;
  for (const EpisodeRecord& r : records) {
    if (r.collisions > r.steps)
      throw std::invalid_argument("metrics: more collisions than steps in scenario " +
                                  std::to_string(r.scenario_id));
    if (r.success) {
      ++successes;
      success_steps += r.steps;
    }
    total_steps += r.steps;
    total_collisions += r.collisions;
  }
  out.sr = 100.0 * successes / static_cast<double>(out.episodes);
  if (successes > 0) out.tl = static_cast<double>(success_steps) / successes;
  if (total_steps > 0) out.cr = 100.0 * static_cast<double>(total_collisions) /
                                static_cast<double>(total_steps);
  return out;
}

std::vector<EvalScenario> make_eval_set(const EvalSetConfig& config) {
  if (config.h < 2 || config.w < 2)
    throw std::invalid_argument("eval set: maps must be at least 2x2");
  if (config.count < 1) throw std::invalid_argument("eval set: count must be positive");
  if (config.tasks_per_env < 1)
    throw std::invalid_argument("eval set: tasks per environment must be positive");
  const bool dynamic = config.domain == Domain::kDynamic;
  if (dynamic && config.variant == Variant::kStatic)
    throw std::invalid_argument("eval set: dynamic mazes need the V1 or V2 rendering");
  if (!dynamic && config.variant != Variant::kStatic)
    throw std::invalid_argument("eval set: gate renderings apply to dynamic mazes only");

  Rng root(config.seed);
  std::vector<EvalScenario> out;
  out.reserve(static_cast<std::size_t>(config.count));
  for (std::uint64_t env = 0; static_cast<int>(out.size()) < config.count; ++env) {
    Rng map_rng = root.child(2 * env);
    const std::uint64_t map_seed = map_rng.next_u64();
    GridMap map;
    switch (config.domain) {
      case Domain::kGrid:
        map = gen_random_grid(config.h, config.w, config.density, map_seed);
        break;
      case Domain::kMaze:
        map = gen_prim_maze(config.h, config.w, map_seed);
        break;
      case Domain::kDynamic:
        map = gen_dynamic_maze(config.h, config.w, map_seed).map;
        break;
    }
    Rng task_rng = root.child(2 * env + 1);
    for (int t = 0; t < config.tasks_per_env && static_cast<int>(out.size()) < config.count;
         ++t) {
      EvalScenario es;
      es.id = static_cast<int>(out.size());
      es.scenario = sample_task(map, task_rng);
      es.scenario.variant = config.variant;
      es.sim_seed = task_rng.next_u64();
      out.push_back(std::move(es));
    }
  }
  return out;
}

std::vector<EvalScenario> make_map_eval_set(const GridMap& map, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("map eval: count must be positive");
  const int min_l1 = (map.h + map.w) / 2;
  Rng root(seed);
  Rng task_rng = root.child(1);
  std::vector<EvalScenario> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    EvalScenario es;
    es.id = i;
    bool placed = false;
    for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
      Scenario sc = sample_task(map, task_rng);
      const int dy = std::abs(sc.start / map.w - sc.goal / map.w);
      const int dx = std::abs(sc.start % map.w - sc.goal % map.w);
      if (dy + dx >= min_l1) {
        es.scenario = std::move(sc);
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("map eval: no start/goal pair at L1 distance " +
                               std::to_string(min_l1) + " after 500 draws");
    es.sim_seed = task_rng.next_u64();
    out.push_back(std::move(es));
  }
  return out;
}

Policy net_policy(const TransNetParams& params, const ClassificationSpec& spec,
                  const NetConfig& config, const NoiseProfile& noise, double p_swap) {
  validate(config);
  return [params, spec, config, noise, p_swap](const EvalScenario& es,
                                               int max_steps) -> EpisodeRecord {
    EpisodeRecord rec;
    rec.scenario_id = es.id;
    GridMap map = es.scenario.map;  // private copy: gates evolve during the run
    const int goal = es.scenario.goal;
    Rng rng(es.sim_seed);
    Tape tape(false);

    // snapshots per gate configuration, planned lazily like the trainer
    struct Snapshot {
      Theta theta;
      DTensor q;
      bool ready = false;
    };
    Snapshot snaps[2];
    auto snap_for = [&](int slot) -> Snapshot& {
      Snapshot& s = snaps[slot];
      if (!s.ready) {
        GridMap work = map;
        if (work.gates) work.gates->a_open = slot == 0;
        s.theta = render_theta(work, goal, es.scenario.variant);
        s.q = plan(tape, s.theta, params, spec, config);
        s.ready = true;
      }
      return s;
    };
    auto gate_slot = [&] { return map.gates && !map.gates->a_open ? 1 : 0; };

    DTensor belief =
        DTensor::from_vector({map.h, map.w, 1}, es.scenario.initial_belief);
    int state = es.scenario.start;
    if (state == goal) {
      rec.success = true;
      return rec;
    }
    for (int t = 0; t < max_steps; ++t) {
      const Snapshot& now = snap_for(gate_slot());
      const int action = argmax_action(select_action(tape, belief, now.q));
      rec.belief_entropy.push_back(belief_entropy_nats(belief));

      const StepResult sr = step_env(map, noise, goal, state, action, p_swap, rng);
      rec.actions.push_back(action);
      rec.observations.push_back(sr.observation);
      ++rec.steps;
      rec.collisions += sr.collision ? 1 : 0;
      state = sr.state;
      if (sr.done) {
        rec.success = true;
        break;
      }
      // the filter conditions on the post-step gate configuration
      const Snapshot& next = snap_for(gate_slot());
      belief =
          belief_update(tape, belief, action, sr.observation, next.theta, params, spec, config)
              .belief;
    }
    return rec;
  };
}

Policy expert_policy(const NoiseProfile& noise, double p_swap, double gamma) {
  return [noise, p_swap, gamma](const EvalScenario& es, int max_steps) -> EpisodeRecord {
    Pomdp model = build_pomdp(es.scenario.map, es.scenario.goal, noise);
    model.gamma = gamma;
    const QTable q = mdp_value_iteration(model);
    Rng rng(es.sim_seed);
    const Trajectory traj =
        generate_trajectory(es.scenario, model, q, max_steps, p_swap, rng);
    EpisodeRecord rec;
    rec.scenario_id = es.id;
    rec.steps = static_cast<int>(traj.actions.size());
    rec.success = traj.success;
    rec.collisions = traj.collisions;
    rec.actions = traj.actions;
    rec.observations = traj.observations;
    return rec;
  };
}

std::vector<EpisodeRecord> run_policy(const Policy& policy,
                                      const std::vector<EvalScenario>& scenarios, int max_steps,
                                      int threads) {
  if (max_steps < 0) throw std::invalid_argument("run_policy: max_steps must be nonnegative");
  std::vector<EpisodeRecord> records(scenarios.size());
  run_indexed(static_cast<int>(scenarios.size()), threads,
              [&](int i) { records[static_cast<std::size_t>(i)] = policy(scenarios[i], max_steps); });
  return records;
}

std::vector<std::pair<std::string, MetricSummary>> compare(
    const std::vector<PolicyResult>& results) {
  if (results.empty()) throw std::invalid_argument("compare: no policies");
  for (const PolicyResult& r : results) {
    if (r.records.size() != results[0].records.size())
      throw std::invalid_argument("compare: policies saw different scenario counts");
    for (std::size_t i = 0; i < r.records.size(); ++i)
      if (r.records[i].scenario_id != results[0].records[i].scenario_id)
        throw std::invalid_argument("compare: scenario lists are not aligned at row " +
                                    std::to_string(i));
  }
  std::vector<std::pair<std::string, MetricSummary>> rows;
  rows.reserve(results.size());
  for (const PolicyResult& r : results) rows.emplace_back(r.name, metrics(r.records));
  return rows;
}

std::string comparison_csv(const std::vector<std::pair<std::string, MetricSummary>>& rows) {
  std::string out = "policy,episodes,sr,tl,cr\n";
  for (const auto& [name, m] : rows) {
    out += name;
    out += ',';
    out += std::to_string(m.episodes);
    out += ',';
    out += one_decimal(m.sr);
    out += ',';
    if (m.tl) out += one_decimal(*m.tl);
    out += ',';
    out += one_decimal(m.cr);
    out += '\n';
  }
  return out;
}

MetricSummary eval_generalization(const TransNetParams& params, const ClassificationSpec& spec,
                                  const NetConfig& config, const GridMap& map,
                                  const GeneralizationConfig& gcfg) {
  if (gcfg.trials < 1) throw std::invalid_argument("generalization: trials must be positive");
  NetConfig scaled = config;
  scaled.K = gcfg.k_iters > 0 ? gcfg.k_iters : 4 * std::max(map.h, map.w);
  const int max_steps =
      gcfg.max_steps > 0 ? gcfg.max_steps : default_max_steps(map.h, map.w);
  const std::vector<EvalScenario> scenarios = make_map_eval_set(map, gcfg.trials, gcfg.seed);
  const std::vector<EpisodeRecord> records = run_policy(
      net_policy(params, spec, scaled, gcfg.noise, 0.0), scenarios, max_steps, gcfg.threads);
  return metrics(records);
}

void export_kernels(const TransNetParams& params, const NetConfig& config, int num_classes,
                    int action, int class_index, const std::string& path) {
  if (action < 0 || action >= kNumActions)
    throw std::invalid_argument("export_kernels: action out of range");
  if (class_index < 0 || class_index >= num_classes)
    throw std::invalid_argument("export_kernels: class index out of range");
  Tape tape(false);
  const DTensor kernels = transition_kernels(tape, params, KernelSet::kPlanner, config);
  if (kernels.shape()[3] != num_classes * kNumActions)
    throw std::invalid_argument("export_kernels: parameters disagree with num_classes");
  const int k = config.k;
  const int channel = class_index * kNumActions + action;

  std::vector<double> slice(static_cast<std::size_t>(k) * k);
  double peak = 0.0;
  for (int dy = 0; dy < k; ++dy)
    for (int dx = 0; dx < k; ++dx) {
      const double p = kernels.get(dy, dx, 0, channel);
      slice[static_cast<std::size_t>(dy * k + dx)] = p;
      peak = std::max(peak, p);
    }

  std::ofstream pgm(path, std::ios::binary);
  if (!pgm) throw std::runtime_error("export_kernels: cannot open " + path);
  pgm << "P5\n" << k << ' ' << k << "\n255\n";
  for (double p : slice)
    pgm.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * p / peak))));
  if (!pgm.flush()) throw std::runtime_error("export_kernels: write failed for " + path);

  std::string text;
  for (int dy = 0; dy < k; ++dy) {
    for (int dx = 0; dx < k; ++dx) {
      if (dx > 0) text += ' ';
      text += fmt_double(slice[static_cast<std::size_t>(dy * k + dx)]);
    }
    text += '\n';
  }
  write_text_file(path + ".txt", text);
}

}  // namespace transnet
