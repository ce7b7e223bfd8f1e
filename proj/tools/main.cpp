// Command-line front end over the transnet library: dataset generation,
// imitation training, policy evaluation, paired comparisons, and learned
// kernel export. Every subcommand writes a run manifest beside its outputs
// (resolved configuration plus seed, no timestamps), so rerunning the same
// command line leaves byte-identical files.
//
// Exit codes: 0 success, 1 runtime failure (one-line "error: ..." on
// stderr), 2 usage errors (unknown flags, missing required options).

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "transnet/dataset.hpp"
#include "transnet/evalharness.hpp"
#include "transnet/io.hpp"
#include "transnet/net.hpp"
#include "transnet/trainer.hpp"

namespace fs = std::filesystem;

namespace transnet {
namespace {

using KV = std::vector<std::pair<std::string, std::string>>;

// Relative output paths land under $TRANSNET_OUT_DIR when it is set.
fs::path resolve_out(const std::string& raw) {
  fs::path p(raw);
  const char* base = std::getenv("TRANSNET_OUT_DIR");
  if (base != nullptr && *base != '\0' && p.is_relative()) return fs::path(base) / p;
  return p;
}

// A model argument names either a checkpoint file or a directory holding
// the train subcommand's model.ckpt.
std::string resolve_model(const std::string& raw) {
  fs::path p(raw);
  if (fs::is_directory(p)) p /= "model.ckpt";
  return p.string();
}

Domain parse_domain(const std::string& s) {
  if (s == "grid") return Domain::kGrid;
  if (s == "maze") return Domain::kMaze;
  if (s == "dynamic") return Domain::kDynamic;
  throw std::invalid_argument("unknown domain: " + s);
}

Variant parse_variant(const std::string& s) {
  if (s == "static") return Variant::kStatic;
  if (s == "v1") return Variant::kV1;
  if (s == "v2") return Variant::kV2;
  throw std::invalid_argument("unknown variant: " + s);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kV1: return "v1";
    case Variant::kV2: return "v2";
    default: return "static";
  }
}

int parse_action(const std::string& s) {
  static const char* names[kNumActions] = {"stay", "north", "east", "south", "west"};
  for (int a = 0; a < kNumActions; ++a)
    if (s == names[a]) return a;
  throw std::invalid_argument("unknown action: " + s);
}

// The tool ships two extractors; other class counts are library territory.
ClassificationSpec spec_for(int classes) {
  if (classes == 1) return ClassificationSpec::uniform();
  if (classes == 16) return ClassificationSpec::neighbor4();
  throw std::invalid_argument("unsupported class count " + std::to_string(classes) +
                              " (expected 1 or 16)");
}

void write_run_manifest(const fs::path& dir, const std::string& command, const KV& fields) {
  std::string text = "command " + command + "\n";
  for (const auto& [key, value] : fields) text += key + " " + value + "\n";
  fs::create_directories(dir);
  write_text_file((dir / ("run-" + command + ".txt")).string(), text);
}

// Noise flags shared by gen-data, eval, and compare. Explicit --p-move or
// --p-obs values override the chosen profile field by field.
struct NoiseOpts {
  bool stochastic = false;
  double p_move = -1.0;
  double p_obs = -1.0;

  void attach(CLI::App* cmd) {
    cmd->add_flag("--stochastic", stochastic,
                  "stochastic profile: p-move 0.8, p-obs 0.1 (default deterministic)");
    cmd->add_option("--p-move", p_move, "probability an action moves as commanded");
    cmd->add_option("--p-obs", p_obs, "per-bit observation flip probability");
  }

  NoiseProfile resolve() const {
    NoiseProfile n = stochastic ? NoiseProfile::stochastic() : NoiseProfile::deterministic();
    if (p_move >= 0.0) n.p_move = p_move;
    if (p_obs >= 0.0) n.p_obs = p_obs;
    return n;
  }
};

// Evaluation scenario source: either a sampled environment distribution or
// one fixed map file (--map wins when both are given).
struct ScenarioOpts {
  std::string map_path;
  int downsample = 1;
  std::string domain = "grid";
  std::string variant;  // empty resolves by domain
  int size = 10;
  double density = 0.25;
  int trials = 500;
  int tasks_per_env = 1;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--map", map_path, "fixed map file (ASCII grid or binary PGM)");
    cmd->add_option("--downsample", downsample, "map ingestion block size (with --map)");
    cmd->add_option("--domain", domain, "grid, maze, or dynamic")
        ->check(CLI::IsMember({"grid", "maze", "dynamic"}));
    cmd->add_option("--variant", variant, "gate rendering for dynamic mazes: v1 or v2")
        ->check(CLI::IsMember({"static", "v1", "v2"}));
    cmd->add_option("--size", size, "environment height and width");
    cmd->add_option("--density", density, "obstacle fraction (random grids)");
    cmd->add_option("--trials", trials, "number of evaluation episodes");
    cmd->add_option("--tasks-per-env", tasks_per_env, "consecutive episodes sharing one map");
    cmd->add_option("--seed", seed, "scenario generation seed");
  }

  Variant resolved_variant() const {
    if (!variant.empty()) return parse_variant(variant);
    return domain == "dynamic" ? Variant::kV1 : Variant::kStatic;
  }

  std::vector<EvalScenario> build(int& h, int& w) const {
    if (!map_path.empty()) {
      GridMap m = load_map(map_path, downsample);
      h = m.h;
      w = m.w;
      return make_map_eval_set(m, trials, seed);
    }
    EvalSetConfig ec;
    ec.domain = parse_domain(domain);
    ec.variant = resolved_variant();
    ec.h = ec.w = size;
    ec.density = density;
    ec.count = trials;
    ec.tasks_per_env = tasks_per_env;
    ec.seed = seed;
    h = ec.h;
    w = ec.w;
    return make_eval_set(ec);
  }

  void manifest(KV& kv) const {
    kv.emplace_back("map", map_path);
    kv.emplace_back("downsample", std::to_string(downsample));
    kv.emplace_back("domain", domain);
    kv.emplace_back("variant", variant_name(resolved_variant()));
    kv.emplace_back("size", std::to_string(size));
    kv.emplace_back("density", fmt_double(density));
    kv.emplace_back("trials", std::to_string(trials));
    kv.emplace_back("tasks_per_env", std::to_string(tasks_per_env));
    kv.emplace_back("seed", std::to_string(seed));
  }
};

struct GenDataOpts {
  std::string domain = "grid";
  std::string variant;
  int size = 10;
  double density = 0.25;
  int num_envs = 100;
  int trajs = 5;
  NoiseOpts noise;
  double p_swap = 0.0;
  int max_steps = 0;
  double val_fraction = 0.1;
  double test_fraction = 0.0;
  int max_attempts = 50;
  std::uint64_t seed = 0;
  std::string out;
  bool deterministic = false;
};

int cmd_gen_data(const GenDataOpts& o) {
  DatasetConfig cfg;
  cfg.domain = parse_domain(o.domain);
  cfg.variant = o.variant.empty()
                    ? (cfg.domain == Domain::kDynamic ? Variant::kV1 : Variant::kStatic)
                    : parse_variant(o.variant);
  cfg.h = cfg.w = o.size;
  cfg.density = o.density;
  cfg.n_envs = o.num_envs;
  cfg.trajs_per_env = o.trajs;
  cfg.noise = o.noise.resolve();
  cfg.p_swap = o.p_swap;
  cfg.max_steps = o.max_steps;
  cfg.val_fraction = o.val_fraction;
  cfg.test_fraction = o.test_fraction;
  cfg.max_attempts = o.max_attempts;
  cfg.seed = o.seed;

  Dataset ds = build_dataset(cfg);
  if (ds.trajs.empty()) throw std::runtime_error("gen-data: no successful expert trajectories");

  const fs::path out = resolve_out(o.out);
  save_dataset(ds, out.string());

  KV kv;
  kv.emplace_back("domain", o.domain);
  kv.emplace_back("variant", variant_name(cfg.variant));
  kv.emplace_back("h", std::to_string(cfg.h));
  kv.emplace_back("w", std::to_string(cfg.w));
  kv.emplace_back("density", fmt_double(cfg.density));
  kv.emplace_back("num_envs", std::to_string(cfg.n_envs));
  kv.emplace_back("trajs_per_env", std::to_string(cfg.trajs_per_env));
  kv.emplace_back("p_move", fmt_double(cfg.noise.p_move));
  kv.emplace_back("p_obs", fmt_double(cfg.noise.p_obs));
  kv.emplace_back("p_swap", fmt_double(cfg.p_swap));
  kv.emplace_back("gamma", fmt_double(cfg.gamma));
  kv.emplace_back("max_steps", std::to_string(ds.config.max_steps));
  kv.emplace_back("val_fraction", fmt_double(cfg.val_fraction));
  kv.emplace_back("test_fraction", fmt_double(cfg.test_fraction));
  kv.emplace_back("max_attempts", std::to_string(cfg.max_attempts));
  kv.emplace_back("seed", std::to_string(cfg.seed));
  kv.emplace_back("deterministic_mode", o.deterministic ? "1" : "0");
  write_run_manifest(out, "gen-data", kv);

  std::cout << "dataset " << out.string() << " trajectories " << ds.trajs.size() << " shortfall "
            << ds.shortfall << "\n";
  return 0;
}

struct TrainOpts {
  std::string data;
  int classes = 16;
  int k_iters = 20;
  int kernel = 3;
  bool tie_kernels = false;
  int hidden = 16;
  int epochs = 200;
  int batch = 100;
  double lr = 1e-3;
  double decay = 0.5;
  int patience = 10;
  double clip = 5.0;
  double val_fraction = 0.1;
  int checkpoint_interval = 50;
  int convergence_windows = 3;
  int threads = 1;
  std::uint64_t seed = 0;
  int log_every = 10;
  std::string out;
  bool deterministic = false;
};

int cmd_train(const TrainOpts& o) {
  const Dataset ds = load_dataset(o.data);
  const ClassificationSpec spec = spec_for(o.classes);

  NetConfig ncfg;
  ncfg.K = o.k_iters;
  ncfg.k = o.kernel;
  ncfg.tie_kernels = o.tie_kernels;
  ncfg.hidden = o.hidden;

  const fs::path out = resolve_out(o.out);

  TrainConfig tcfg;
  tcfg.epochs = o.epochs;
  tcfg.batch_size = o.batch;
  tcfg.learning_rate = o.lr;
  tcfg.decay_factor = o.decay;
  tcfg.patience = o.patience;
  tcfg.clip_norm = o.clip;
  tcfg.val_fraction = o.val_fraction;
  tcfg.checkpoint_interval = o.checkpoint_interval;
  tcfg.checkpoint_dir = (out / "checkpoints").string();
  tcfg.convergence_windows = o.convergence_windows;
  tcfg.threads = o.threads;
  tcfg.seed = o.seed;
  if (o.log_every > 0) {
    const int every = o.log_every;
    tcfg.epoch_hook = [every](int epoch, const TrainReport& r) {
      if ((epoch + 1) % every != 0) return;
      std::cerr << "epoch " << (epoch + 1) << " train " << fmt_double(r.train_loss.back())
                << " val " << fmt_double(r.val_loss.back()) << " acc "
                << fmt_double(r.val_accuracy.back()) << " s " << fmt_double(r.seconds.back())
                << "\n";
    };
  }

  Rng init_rng(o.seed);
  const TransNetParams start = init_params(ncfg, spec.num_classes(), init_rng);
  auto [best, report] = train(ds, start, spec, ncfg, tcfg);

  fs::create_directories(out);
  const std::string model_path = (out / "model.ckpt").string();
  save_checkpoint(model_path, best, ncfg, spec.num_classes(),
                  {{"best_epoch", std::to_string(report.best_epoch + 1)},
                   {"epochs_run", std::to_string(report.train_loss.size())},
                   {"val_loss", fmt_double(report.val_loss[report.best_epoch])},
                   {"val_acc", fmt_double(report.val_accuracy[report.best_epoch])},
                   {"converged", report.converged ? "1" : "0"}});
  write_text_file((out / "train_report.csv").string(), report_csv(report));

  KV kv;
  kv.emplace_back("data", o.data);
  kv.emplace_back("classes", std::to_string(o.classes));
  kv.emplace_back("k_iters", std::to_string(ncfg.K));
  kv.emplace_back("kernel", std::to_string(ncfg.k));
  kv.emplace_back("tie_kernels", ncfg.tie_kernels ? "1" : "0");
  kv.emplace_back("hidden", std::to_string(ncfg.hidden));
  kv.emplace_back("gamma_net", fmt_double(ncfg.gamma_net));
  kv.emplace_back("epochs", std::to_string(tcfg.epochs));
  kv.emplace_back("batch_size", std::to_string(tcfg.batch_size));
  kv.emplace_back("learning_rate", fmt_double(tcfg.learning_rate));
  kv.emplace_back("decay_factor", fmt_double(tcfg.decay_factor));
  kv.emplace_back("patience", std::to_string(tcfg.patience));
  kv.emplace_back("clip_norm", fmt_double(tcfg.clip_norm));
  kv.emplace_back("val_fraction", fmt_double(tcfg.val_fraction));
  kv.emplace_back("checkpoint_interval", std::to_string(tcfg.checkpoint_interval));
  kv.emplace_back("convergence_windows", std::to_string(tcfg.convergence_windows));
  kv.emplace_back("threads", std::to_string(tcfg.threads));
  kv.emplace_back("seed", std::to_string(tcfg.seed));
  kv.emplace_back("deterministic_mode", o.deterministic ? "1" : "0");
  write_run_manifest(out, "train", kv);

  std::cout << "model " << model_path << " best_epoch " << (report.best_epoch + 1) << " val_loss "
            << fmt_double(report.val_loss[report.best_epoch]) << " val_acc "
            << fmt_double(report.val_accuracy[report.best_epoch]) << " epochs "
            << report.train_loss.size() << " converged " << (report.converged ? "1" : "0")
            << "\n";
  return 0;
}

struct EvalOpts {
  std::string model;
  bool expert = false;
  ScenarioOpts scen;
  NoiseOpts noise;
  double p_swap = 0.0;
  int k_iters = 0;  // 0 keeps the checkpoint's K (4*max(H,W) on a fixed map)
  int max_steps = 0;
  int threads = 1;
  std::string label;
  std::string out;
  bool deterministic = false;
};

// Builds the policy named by --model/--expert. On fixed maps the planning
// depth rescales to the map size unless --k-iters pins it.
Policy build_policy(const EvalOpts& o, const CheckpointData* ckpt, int h, int w,
                    const NoiseProfile& noise) {
  if (o.expert) return expert_policy(noise, o.p_swap);
  NetConfig cfg = ckpt->config;
  if (o.k_iters > 0)
    cfg.K = o.k_iters;
  else if (!o.scen.map_path.empty())
    cfg.K = 4 * std::max(h, w);
  return net_policy(ckpt->params, spec_for(ckpt->num_classes), cfg, noise, o.p_swap);
}

int cmd_eval(const EvalOpts& o) {
  if (o.expert != o.model.empty()) throw std::invalid_argument("eval: pass --model or --expert");

  int h = 0, w = 0;
  const std::vector<EvalScenario> scenarios = o.scen.build(h, w);
  const NoiseProfile noise = o.noise.resolve();
  const int max_steps = o.max_steps > 0 ? o.max_steps : default_max_steps(h, w);

  CheckpointData ckpt;
  if (!o.expert) ckpt = load_checkpoint(resolve_model(o.model));
  const Policy policy = build_policy(o, &ckpt, h, w, noise);

  const MetricSummary summary = metrics(run_policy(policy, scenarios, max_steps, o.threads));
  std::string label = o.label;
  if (label.empty()) label = o.expert ? "expert" : (ckpt.num_classes == 1 ? "baseline" : "transnet");
  const std::string csv = comparison_csv({{label, summary}});
  std::cout << csv;

  if (!o.out.empty()) {
    const fs::path out = resolve_out(o.out);
    fs::create_directories(out);
    write_text_file((out / "metrics.csv").string(), csv);
    KV kv;
    kv.emplace_back("model", o.expert ? "expert" : o.model);
    o.scen.manifest(kv);
    kv.emplace_back("p_move", fmt_double(noise.p_move));
    kv.emplace_back("p_obs", fmt_double(noise.p_obs));
    kv.emplace_back("p_swap", fmt_double(o.p_swap));
    kv.emplace_back("k_iters", std::to_string(o.k_iters));
    kv.emplace_back("max_steps", std::to_string(max_steps));
    kv.emplace_back("threads", std::to_string(o.threads));
    kv.emplace_back("label", label);
    kv.emplace_back("deterministic_mode", o.deterministic ? "1" : "0");
    write_run_manifest(out, "eval", kv);
  }
  return 0;
}

struct CompareOpts {
  std::string model;
  std::string baseline;
  ScenarioOpts scen;
  NoiseOpts noise;
  double p_swap = 0.0;
  int k_iters = 0;
  int max_steps = 0;
  int threads = 1;
  std::string out;
  bool deterministic = false;
};

int cmd_compare(const CompareOpts& o) {
  int h = 0, w = 0;
  const std::vector<EvalScenario> scenarios = o.scen.build(h, w);
  const NoiseProfile noise = o.noise.resolve();
  const int max_steps = o.max_steps > 0 ? o.max_steps : default_max_steps(h, w);
  const bool fixed_map = !o.scen.map_path.empty();

  auto policy_for = [&](const std::string& path) {
    const CheckpointData ckpt = load_checkpoint(resolve_model(path));
    NetConfig cfg = ckpt.config;
    if (o.k_iters > 0)
      cfg.K = o.k_iters;
    else if (fixed_map)
      cfg.K = 4 * std::max(h, w);
    return net_policy(ckpt.params, spec_for(ckpt.num_classes), cfg, noise, o.p_swap);
  };

  // All rows face identical scenarios and per-scenario simulator seeds.
  std::vector<PolicyResult> results;
  results.push_back({"transnet", run_policy(policy_for(o.model), scenarios, max_steps, o.threads)});
  results.push_back(
      {"baseline", run_policy(policy_for(o.baseline), scenarios, max_steps, o.threads)});
  results.push_back(
      {"expert", run_policy(expert_policy(noise, o.p_swap), scenarios, max_steps, o.threads)});

  const std::string csv = comparison_csv(compare(results));
  std::cout << csv;

  if (!o.out.empty()) {
    const fs::path out = resolve_out(o.out);
    fs::create_directories(out);
    write_text_file((out / "comparison.csv").string(), csv);
    KV kv;
    kv.emplace_back("model", o.model);
    kv.emplace_back("baseline", o.baseline);
    o.scen.manifest(kv);
    kv.emplace_back("p_move", fmt_double(noise.p_move));
    kv.emplace_back("p_obs", fmt_double(noise.p_obs));
    kv.emplace_back("p_swap", fmt_double(o.p_swap));
    kv.emplace_back("k_iters", std::to_string(o.k_iters));
    kv.emplace_back("max_steps", std::to_string(max_steps));
    kv.emplace_back("threads", std::to_string(o.threads));
    kv.emplace_back("deterministic_mode", o.deterministic ? "1" : "0");
    write_run_manifest(out, "compare", kv);
  }
  return 0;
}

struct InspectOpts {
  std::string model;
  std::string action;
  int class_index = 0;
  std::string out;
};

int cmd_inspect(const InspectOpts& o) {
  const CheckpointData ckpt = load_checkpoint(resolve_model(o.model));
  const int action = parse_action(o.action);
  const fs::path out = resolve_out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  export_kernels(ckpt.params, ckpt.config, ckpt.num_classes, action, o.class_index, out.string());

  KV kv;
  kv.emplace_back("model", o.model);
  kv.emplace_back("action", o.action);
  kv.emplace_back("class", std::to_string(o.class_index));
  kv.emplace_back("out", out.filename().string());
  write_run_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), "inspect", kv);

  std::cout << "wrote " << out.string() << " and " << out.string() << ".txt\n";
  return 0;
}

}  // namespace
}  // namespace transnet

int main(int argc, char** argv) {
  using namespace transnet;

  CLI::App app{"TransNet: differentiable POMDP planning in gridworlds"};
  app.require_subcommand(1);

  GenDataOpts gen;
  CLI::App* cgen = app.add_subcommand("gen-data", "generate an expert imitation dataset");
  cgen->add_option("--domain", gen.domain, "grid, maze, or dynamic")
      ->check(CLI::IsMember({"grid", "maze", "dynamic"}));
  cgen->add_option("--variant", gen.variant, "gate rendering for dynamic mazes: v1 or v2")
      ->check(CLI::IsMember({"static", "v1", "v2"}));
  cgen->add_option("--size", gen.size, "environment height and width");
  cgen->add_option("--density", gen.density, "obstacle fraction (grid domain)");
  cgen->add_option("--num-envs", gen.num_envs, "number of environments");
  cgen->add_option("--trajs", gen.trajs, "expert trajectories per environment");
  gen.noise.attach(cgen);
  cgen->add_option("--p-swap", gen.p_swap, "per-step gate swap probability (dynamic)");
  cgen->add_option("--max-steps", gen.max_steps, "episode cap, 0 = 4*(h+w)");
  cgen->add_option("--val-fraction", gen.val_fraction, "validation environment fraction");
  cgen->add_option("--test-fraction", gen.test_fraction, "test environment fraction");
  cgen->add_option("--max-attempts", gen.max_attempts, "expert redraws per trajectory slot");
  cgen->add_option("--seed", gen.seed, "generation seed");
  cgen->add_option("--out", gen.out, "output dataset directory")->required();
  cgen->add_flag("--deterministic-mode", gen.deterministic,
                 "recorded in the manifest; runs are always deterministic");

  TrainOpts tr;
  CLI::App* ctrain = app.add_subcommand("train", "train a network on a dataset");
  ctrain->add_option("--data", tr.data, "dataset directory")->required();
  ctrain->add_option("--classes", tr.classes, "state classes: 16 (neighbor walls) or 1 (uniform)");
  ctrain->add_option("--k-iters", tr.k_iters, "value iteration sweeps inside the planner");
  ctrain->add_option("--kernel", tr.kernel, "transition kernel width (odd)");
  ctrain->add_flag("--tie-kernels", tr.tie_kernels, "share planner and filter kernels");
  ctrain->add_option("--hidden", tr.hidden, "hidden channels of the reward and observation maps");
  ctrain->add_option("--epochs", tr.epochs, "training epochs");
  ctrain->add_option("--batch", tr.batch, "trajectories per optimizer step");
  ctrain->add_option("--lr", tr.lr, "learning rate");
  ctrain->add_option("--decay", tr.decay, "learning-rate decay factor on plateau");
  ctrain->add_option("--patience", tr.patience, "epochs without improvement before decay");
  ctrain->add_option("--clip", tr.clip, "global gradient norm clip");
  ctrain->add_option("--val-fraction", tr.val_fraction, "held-out fraction for untagged datasets");
  ctrain->add_option("--checkpoint-interval", tr.checkpoint_interval,
                     "epochs between periodic checkpoints");
  ctrain->add_option("--convergence-windows", tr.convergence_windows,
                     "flat patience windows before early stop");
  ctrain->add_option("--threads", tr.threads, "worker threads (result is thread-invariant)");
  ctrain->add_option("--seed", tr.seed, "initialization and shuffling seed");
  ctrain->add_option("--log-every", tr.log_every, "progress line every N epochs, 0 silences");
  ctrain->add_option("--out", tr.out, "output model directory")->required();
  ctrain->add_flag("--deterministic-mode", tr.deterministic,
                   "recorded in the manifest; runs are always deterministic");

  EvalOpts ev;
  CLI::App* ceval = app.add_subcommand("eval", "roll one policy and print its metric table");
  ceval->add_option("--model", ev.model, "checkpoint file or model directory");
  ceval->add_flag("--expert", ev.expert, "evaluate the QMDP expert instead of a model");
  ev.scen.attach(ceval);
  ev.noise.attach(ceval);
  ceval->add_option("--p-swap", ev.p_swap, "per-step gate swap probability (dynamic)");
  ceval->add_option("--k-iters", ev.k_iters,
                    "planning sweeps, 0 = checkpoint value (fixed map: 4*max(H,W))");
  ceval->add_option("--max-steps", ev.max_steps, "episode cap, 0 = 4*(H+W)");
  ceval->add_option("--threads", ev.threads, "worker threads");
  ceval->add_option("--label", ev.label, "row label (default from the model)");
  ceval->add_option("--out", ev.out, "directory for metrics.csv and the run manifest");
  ceval->add_flag("--deterministic-mode", ev.deterministic,
                  "recorded in the manifest; runs are always deterministic");

  CompareOpts cp;
  CLI::App* ccomp = app.add_subcommand("compare", "paired rollout of model, baseline, and expert");
  ccomp->add_option("--model", cp.model, "checkpoint file or model directory")->required();
  ccomp->add_option("--baseline", cp.baseline, "baseline checkpoint or directory")->required();
  cp.scen.attach(ccomp);
  cp.noise.attach(ccomp);
  ccomp->add_option("--p-swap", cp.p_swap, "per-step gate swap probability (dynamic)");
  ccomp->add_option("--k-iters", cp.k_iters,
                    "planning sweeps, 0 = checkpoint value (fixed map: 4*max(H,W))");
  ccomp->add_option("--max-steps", cp.max_steps, "episode cap, 0 = 4*(H+W)");
  ccomp->add_option("--threads", cp.threads, "worker threads");
  ccomp->add_option("--out", cp.out, "directory for comparison.csv and the run manifest");
  ccomp->add_flag("--deterministic-mode", cp.deterministic,
                  "recorded in the manifest; runs are always deterministic");

  InspectOpts in;
  CLI::App* cins = app.add_subcommand("inspect", "export one learned transition kernel");
  cins->add_option("--model", in.model, "checkpoint file or model directory")->required();
  cins->add_option("--action", in.action, "stay, north, east, south, or west")->required();
  cins->add_option("--class", in.class_index, "state class index")->required();
  cins->add_option("--out", in.out, "output PGM path (raw matrix lands at <out>.txt)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const auto parsed = app.get_subcommands();
    CLI::App* scope = parsed.empty() ? &app : parsed.front();
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      std::cout << scope->help();
      return 0;
    }
    std::cerr << "error: " << e.what() << "\n" << scope->help();
    return 2;
  }

  try {
    if (app.got_subcommand(cgen)) return cmd_gen_data(gen);
    if (app.got_subcommand(ctrain)) return cmd_train(tr);
    if (app.got_subcommand(ceval)) return cmd_eval(ev);
    if (app.got_subcommand(ccomp)) return cmd_compare(cp);
    return cmd_inspect(in);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
