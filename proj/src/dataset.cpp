#include "transnet/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "transnet/io.hpp"

namespace transnet {

namespace {

namespace fs = std::filesystem;

constexpr const char* kMagic = "transnet-dataset 1";

std::string domain_name(Domain d) {
  switch (d) {
    case Domain::kGrid: return "grid";
    case Domain::kMaze: return "maze";
    case Domain::kDynamic: return "dynamic";
  }
  throw std::logic_error("bad domain");
}

Domain parse_domain(const std::string& s) {
  if (s == "grid") return Domain::kGrid;
  if (s == "maze") return Domain::kMaze;
  if (s == "dynamic") return Domain::kDynamic;
  throw std::runtime_error("dataset: unknown domain '" + s + "'");
}

template <typename T>
void write_bin(const fs::path& dir, const std::string& name, const std::vector<T>& v) {
  const fs::path p = dir / (name + ".bin");
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot open " + p.string() + " for writing");
  write_array_le(out, v);
}

template <typename T>
std::vector<T> read_bin(const fs::path& dir, const std::string& name, std::size_t count) {
  const fs::path p = dir / (name + ".bin");
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot open " + p.string());
  std::vector<T> v;
  try {
    v = read_array_le<T>(in, count);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("dataset: " + name + ".bin: " + e.what());
  }
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0)
    throw std::runtime_error("dataset: " + name + ".bin is longer than the manifest declares");
  return v;
}

void validate_config(const DatasetConfig& c) {
  if (c.h < 2 || c.w < 2) throw std::invalid_argument("build_dataset: map dimensions too small");
  if (c.n_envs < 1 || c.trajs_per_env < 1)
    throw std::invalid_argument("build_dataset: n_envs and trajs_per_env must be at least 1");
  if (c.max_attempts < 1)
    throw std::invalid_argument("build_dataset: max_attempts must be at least 1");
  if (!(c.val_fraction >= 0.0) || !(c.test_fraction >= 0.0) ||
      !(c.val_fraction + c.test_fraction <= 1.0))
    throw std::invalid_argument("build_dataset: split fractions out of range");
  const bool dynamic = c.domain == Domain::kDynamic;
  if (dynamic && c.variant == Variant::kStatic)
    throw std::invalid_argument("build_dataset: dynamic mazes need variant V1 or V2");
  if (!dynamic && c.variant != Variant::kStatic)
    throw std::invalid_argument("build_dataset: V1/V2 rendering is only for dynamic mazes");
  if (!dynamic && c.p_swap != 0.0)
    throw std::invalid_argument("build_dataset: p_swap is only for dynamic mazes");
}

}  // namespace

Dataset build_dataset(const DatasetConfig& config) {
  validate_config(config);
  Dataset ds;
  ds.config = config;
  if (ds.config.max_steps <= 0) ds.config.max_steps = 4 * (config.h + config.w);

  const int n_val = static_cast<int>(std::lround(config.val_fraction * config.n_envs));
  const int n_test = static_cast<int>(std::lround(config.test_fraction * config.n_envs));
  const int n_train = config.n_envs - n_val - n_test;

  const Rng root(config.seed);
  for (int e = 0; e < config.n_envs; ++e) {
    // independent streams per environment: even children seed the map,
    // odd children drive task sampling and rollouts
    Rng map_rng = root.child(2 * static_cast<std::uint64_t>(e));
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
    ds.envs.push_back(map);
    ds.env_split.push_back(e < n_train ? 0 : (e < n_train + n_val ? 1 : 2));

    Rng task_rng = root.child(2 * static_cast<std::uint64_t>(e) + 1);
    for (int slot = 0; slot < config.trajs_per_env; ++slot) {
      bool filled = false;
      for (int attempt = 0; attempt < config.max_attempts && !filled; ++attempt) {
        Scenario sc = sample_task(map, task_rng);
        sc.variant = config.variant;
        Pomdp model = build_pomdp(sc.map, sc.goal, config.noise);
        model.gamma = config.gamma;
        const QTable q = mdp_value_iteration(model);
        Trajectory traj =
            generate_trajectory(sc, model, q, ds.config.max_steps, config.p_swap, task_rng);
        if (traj.success) {
          traj.env_id = e;
          traj.split = ds.env_split.back();
          ds.trajs.push_back(std::move(traj));
          filled = true;
        }
      }
      if (!filled) ++ds.shortfall;
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);

  const DatasetConfig& c = ds.config;
  const bool dynamic = c.domain == Domain::kDynamic;

  std::vector<std::int32_t> map_cells;
  map_cells.reserve(ds.envs.size() * static_cast<std::size_t>(c.h) * c.w);
  std::vector<std::int32_t> gate_geom;
  for (const GridMap& m : ds.envs) {
    for (int v : m.cells) map_cells.push_back(static_cast<std::int32_t>(v));
    if (dynamic) {
      if (!m.gates) throw std::invalid_argument("save_dataset: dynamic environment without gates");
      gate_geom.push_back(m.gates->ay);
      gate_geom.push_back(m.gates->ax);
      gate_geom.push_back(m.gates->by);
      gate_geom.push_back(m.gates->bx);
    }
  }
  const std::vector<std::int32_t> env_split(ds.env_split.begin(), ds.env_split.end());

  std::vector<std::int32_t> t_env, t_start, t_goal, t_variant, t_steps, t_collisions, t_reset;
  std::vector<std::int32_t> actions, observations, gate_states;
  std::vector<double> beliefs;
  for (const Trajectory& t : ds.trajs) {
    t_env.push_back(t.env_id);
    t_start.push_back(t.start);
    t_goal.push_back(t.goal);
    t_variant.push_back(static_cast<std::int32_t>(t.variant));
    t_steps.push_back(static_cast<std::int32_t>(t.actions.size()));
    t_collisions.push_back(t.collisions);
    t_reset.push_back(t.filter_reset ? 1 : 0);
    actions.insert(actions.end(), t.actions.begin(), t.actions.end());
    observations.insert(observations.end(), t.observations.begin(), t.observations.end());
    gate_states.insert(gate_states.end(), t.gate_states.begin(), t.gate_states.end());
    beliefs.insert(beliefs.end(), t.initial_belief.begin(), t.initial_belief.end());
  }

  std::ostringstream man;
  man << kMagic << '\n';
  man << "domain " << domain_name(c.domain) << '\n';
  man << "variant " << static_cast<int>(c.variant) << '\n';
  man << "h " << c.h << '\n';
  man << "w " << c.w << '\n';
  man << "density " << fmt_double(c.density) << '\n';
  man << "n_envs " << c.n_envs << '\n';
  man << "trajs_per_env " << c.trajs_per_env << '\n';
  man << "p_move " << fmt_double(c.noise.p_move) << '\n';
  man << "p_obs " << fmt_double(c.noise.p_obs) << '\n';
  man << "p_swap " << fmt_double(c.p_swap) << '\n';
  man << "gamma " << fmt_double(c.gamma) << '\n';
  man << "max_steps " << c.max_steps << '\n';
  man << "val_fraction " << fmt_double(c.val_fraction) << '\n';
  man << "test_fraction " << fmt_double(c.test_fraction) << '\n';
  man << "max_attempts " << c.max_attempts << '\n';
  man << "seed " << c.seed << '\n';
  man << "shortfall " << ds.shortfall << '\n';
  man << "n_trajs " << ds.trajs.size() << '\n';
  auto decl = [&man](const char* name, const char* dtype, std::size_t count) {
    man << "array " << name << ' ' << dtype << ' ' << count << '\n';
  };
  decl("map_cells", "i32", map_cells.size());
  decl("gate_geom", "i32", gate_geom.size());
  decl("env_split", "i32", env_split.size());
  decl("traj_env", "i32", t_env.size());
  decl("traj_start", "i32", t_start.size());
  decl("traj_goal", "i32", t_goal.size());
  decl("traj_variant", "i32", t_variant.size());
  decl("traj_steps", "i32", t_steps.size());
  decl("traj_collisions", "i32", t_collisions.size());
  decl("traj_filter_reset", "i32", t_reset.size());
  decl("actions", "i32", actions.size());
  decl("observations", "i32", observations.size());
  decl("gate_states", "i32", gate_states.size());
  decl("initial_belief", "f64", beliefs.size());
  man << "end\n";

  write_text_file((root / "manifest.txt").string(), man.str());
  write_bin(root, "map_cells", map_cells);
  write_bin(root, "gate_geom", gate_geom);
  write_bin(root, "env_split", env_split);
  write_bin(root, "traj_env", t_env);
  write_bin(root, "traj_start", t_start);
  write_bin(root, "traj_goal", t_goal);
  write_bin(root, "traj_variant", t_variant);
  write_bin(root, "traj_steps", t_steps);
  write_bin(root, "traj_collisions", t_collisions);
  write_bin(root, "traj_filter_reset", t_reset);
  write_bin(root, "actions", actions);
  write_bin(root, "observations", observations);
  write_bin(root, "gate_states", gate_states);
  write_bin(root, "initial_belief", beliefs);
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const std::string text = read_text_file((root / "manifest.txt").string());
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw std::runtime_error("dataset: manifest does not start with '" + std::string(kMagic) + "'");

  std::map<std::string, std::string> kv;
  std::map<std::string, std::pair<std::string, std::size_t>> arrays;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "end") {
      terminated = true;
      break;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "array") {
      std::string name, dtype;
      std::size_t count = 0;
      if (!(ls >> name >> dtype >> count) || (dtype != "i32" && dtype != "f64"))
        throw std::runtime_error("dataset: malformed array declaration '" + line + "'");
      arrays[name] = {dtype, count};
    } else {
      std::string value;
      std::getline(ls, value);
      const std::size_t pos = value.find_first_not_of(' ');
      if (pos == std::string::npos)
        throw std::runtime_error("dataset: key '" + key + "' has no value");
      kv[key] = value.substr(pos);
    }
  }
  if (!terminated) throw std::runtime_error("dataset: manifest is truncated (no 'end' line)");

  auto req = [&kv](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("dataset: manifest is missing key '" + key + "'");
    return it->second;
  };
  auto arr = [&arrays](const std::string& name,
                       const char* dtype) -> std::size_t {
    auto it = arrays.find(name);
    if (it == arrays.end())
      throw std::runtime_error("dataset: manifest is missing array '" + name + "'");
    if (it->second.first != dtype)
      throw std::runtime_error("dataset: array '" + name + "' has dtype " + it->second.first +
                               ", expected " + dtype);
    return it->second.second;
  };

  Dataset ds;
  DatasetConfig& c = ds.config;
  c.domain = parse_domain(req("domain"));
  c.variant = static_cast<Variant>(std::stoi(req("variant")));
  c.h = std::stoi(req("h"));
  c.w = std::stoi(req("w"));
  c.density = std::stod(req("density"));
  c.n_envs = std::stoi(req("n_envs"));
  c.trajs_per_env = std::stoi(req("trajs_per_env"));
  c.noise.p_move = std::stod(req("p_move"));
  c.noise.p_obs = std::stod(req("p_obs"));
  c.p_swap = std::stod(req("p_swap"));
  c.gamma = std::stod(req("gamma"));
  c.max_steps = std::stoi(req("max_steps"));
  c.val_fraction = std::stod(req("val_fraction"));
  c.test_fraction = std::stod(req("test_fraction"));
  c.max_attempts = std::stoi(req("max_attempts"));
  c.seed = std::stoull(req("seed"));
  ds.shortfall = std::stoi(req("shortfall"));
  const std::size_t n_trajs = std::stoul(req("n_trajs"));

  if (c.h < 2 || c.w < 2 || c.n_envs < 1)
    throw std::runtime_error("dataset: manifest dimensions are out of range");
  const std::size_t cells_per_map = static_cast<std::size_t>(c.h) * c.w;
  const bool dynamic = c.domain == Domain::kDynamic;

  if (arr("map_cells", "i32") != cells_per_map * c.n_envs)
    throw std::runtime_error("dataset: map_cells count does not match n_envs*h*w");
  if (arr("gate_geom", "i32") != (dynamic ? 4u * c.n_envs : 0u))
    throw std::runtime_error("dataset: gate_geom count is inconsistent with the domain");
  if (arr("env_split", "i32") != static_cast<std::size_t>(c.n_envs))
    throw std::runtime_error("dataset: env_split count does not match n_envs");
  for (const char* name : {"traj_env", "traj_start", "traj_goal", "traj_variant", "traj_steps",
                           "traj_collisions", "traj_filter_reset"})
    if (arr(name, "i32") != n_trajs)
      throw std::runtime_error("dataset: array '" + std::string(name) +
                               "' count does not match n_trajs");
  if (arr("initial_belief", "f64") != n_trajs * cells_per_map)
    throw std::runtime_error("dataset: initial_belief count does not match n_trajs*h*w");

  const auto map_cells = read_bin<std::int32_t>(root, "map_cells", cells_per_map * c.n_envs);
  const auto gate_geom = read_bin<std::int32_t>(root, "gate_geom", dynamic ? 4u * c.n_envs : 0u);
  const auto env_split = read_bin<std::int32_t>(root, "env_split", c.n_envs);
  const auto t_env = read_bin<std::int32_t>(root, "traj_env", n_trajs);
  const auto t_start = read_bin<std::int32_t>(root, "traj_start", n_trajs);
  const auto t_goal = read_bin<std::int32_t>(root, "traj_goal", n_trajs);
  const auto t_variant = read_bin<std::int32_t>(root, "traj_variant", n_trajs);
  const auto t_steps = read_bin<std::int32_t>(root, "traj_steps", n_trajs);
  const auto t_collisions = read_bin<std::int32_t>(root, "traj_collisions", n_trajs);
  const auto t_reset = read_bin<std::int32_t>(root, "traj_filter_reset", n_trajs);

  std::size_t total_steps = 0;
  for (std::int32_t s : t_steps) {
    if (s < 0) throw std::runtime_error("dataset: negative trajectory length");
    total_steps += static_cast<std::size_t>(s);
  }
  if (arr("actions", "i32") != total_steps || arr("observations", "i32") != total_steps)
    throw std::runtime_error("dataset: action/observation counts do not match traj_steps");
  if (arr("gate_states", "i32") != (dynamic ? total_steps : 0u))
    throw std::runtime_error("dataset: gate_states count is inconsistent with the domain");
  const auto actions = read_bin<std::int32_t>(root, "actions", total_steps);
  const auto observations = read_bin<std::int32_t>(root, "observations", total_steps);
  const auto gate_states = read_bin<std::int32_t>(root, "gate_states", dynamic ? total_steps : 0u);
  const auto beliefs = read_bin<double>(root, "initial_belief", n_trajs * cells_per_map);

  for (int e = 0; e < c.n_envs; ++e) {
    GridMap m;
    m.h = c.h;
    m.w = c.w;
    m.cells.assign(map_cells.begin() + static_cast<std::ptrdiff_t>(e * cells_per_map),
                   map_cells.begin() + static_cast<std::ptrdiff_t>((e + 1) * cells_per_map));
    if (dynamic) {
      Gates g;
      g.ay = gate_geom[static_cast<std::size_t>(e) * 4 + 0];
      g.ax = gate_geom[static_cast<std::size_t>(e) * 4 + 1];
      g.by = gate_geom[static_cast<std::size_t>(e) * 4 + 2];
      g.bx = gate_geom[static_cast<std::size_t>(e) * 4 + 3];
      g.a_open = true;
      if (!m.in_bounds(g.ay, g.ax) || !m.in_bounds(g.by, g.bx))
        throw std::runtime_error("dataset: gate coordinates out of bounds");
      m.gates = g;
    }
    ds.envs.push_back(std::move(m));
    const int split = env_split[static_cast<std::size_t>(e)];
    if (split < 0 || split > 2) throw std::runtime_error("dataset: split tag out of range");
    ds.env_split.push_back(split);
  }

  std::size_t off = 0;
  for (std::size_t i = 0; i < n_trajs; ++i) {
    Trajectory t;
    t.env_id = t_env[i];
    if (t.env_id < 0 || t.env_id >= c.n_envs)
      throw std::runtime_error("dataset: trajectory references a missing environment");
    t.split = ds.env_split[static_cast<std::size_t>(t.env_id)];
    t.start = t_start[i];
    t.goal = t_goal[i];
    if (t.start < 0 || t.start >= static_cast<int>(cells_per_map) || t.goal < 0 ||
        t.goal >= static_cast<int>(cells_per_map))
      throw std::runtime_error("dataset: start or goal cell out of range");
    const int v = t_variant[i];
    if (v < 0 || v > 2) throw std::runtime_error("dataset: variant tag out of range");
    t.variant = static_cast<Variant>(v);
    t.collisions = t_collisions[i];
    t.filter_reset = t_reset[i] != 0;
    t.success = true;
    t.initial_belief.assign(beliefs.begin() + static_cast<std::ptrdiff_t>(i * cells_per_map),
                            beliefs.begin() + static_cast<std::ptrdiff_t>((i + 1) * cells_per_map));
    const std::size_t len = static_cast<std::size_t>(t_steps[i]);
    for (std::size_t k = 0; k < len; ++k) {
      const int a = actions[off + k];
      const int o = observations[off + k];
      if (a < 0 || a >= kNumActions) throw std::runtime_error("dataset: action out of range");
      if (o < 0 || o >= kNumObservations)
        throw std::runtime_error("dataset: observation out of range");
      t.actions.push_back(a);
      t.observations.push_back(o);
      if (dynamic) {
        const int g = gate_states[off + k];
        if (g != 0 && g != 1) throw std::runtime_error("dataset: gate state out of range");
        t.gate_states.push_back(g);
      }
    }
    off += len;
    ds.trajs.push_back(std::move(t));
  }
  return ds;
}

}  // namespace transnet
