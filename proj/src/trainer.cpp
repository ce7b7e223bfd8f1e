#include "transnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "transnet/io.hpp"
#include "transnet/parallel.hpp"

namespace transnet {

namespace {

TransNetParams clone_params(const TransNetParams& p) {
  auto cp = [](const DTensor& t) {
    if (!t.defined()) return DTensor();
    DTensor c = t.clone();
    c.set_requires_grad(true);
    c.zero_grad();
    return c;
  };
  TransNetParams out;
  out.planner_raw = cp(p.planner_raw);
  out.filter_raw = cp(p.filter_raw);
  out.r1 = cp(p.r1);
  out.r2 = cp(p.r2);
  out.z1 = cp(p.z1);
  out.z2 = cp(p.z2);
  return out;
}

// summed (not yet averaged) cross-entropy plus the leaf gradients of one
// trajectory, computed on a private parameter clone so workers cannot race
struct TrajResult {
  std::vector<std::vector<double>> grads;  // aligned with trainable() order
  double ce = 0.0;
  long steps = 0;
};

TrajResult run_trajectory(const Dataset& ds, int index, const TransNetParams& master,
                          const ClassificationSpec& spec, const NetConfig& ncfg,
                          bool want_grads) {
  const Trajectory& traj = ds.trajs[static_cast<std::size_t>(index)];
  const GridMap& env = ds.envs[static_cast<std::size_t>(traj.env_id)];
  TrajResult out;
  if (traj.actions.empty()) return out;  // a start-on-goal episode has no steps

  TransNetParams local = want_grads ? clone_params(master) : master;
  Tape tape(want_grads);
  const ForwardResult fr = forward_trajectory(tape, traj, env, local, spec, ncfg);
  out.steps = static_cast<long>(fr.logits.size());

  DTensor loss;
  for (std::size_t t = 0; t < fr.logits.size(); ++t) {
    const DTensor ce = cross_entropy(tape, fr.logits[t], traj.actions[t]);
    loss = loss.defined() ? add(tape, loss, ce) : ce;
  }
  out.ce = loss.scalar();
  if (!want_grads || !std::isfinite(out.ce)) return out;

  tape.backward(loss);
  for (const DTensor& leaf : trainable(local, ncfg)) out.grads.push_back(leaf.grad_values());
  return out;
}

struct Adam {
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;

  void step(std::vector<DTensor>& leaves, const std::vector<std::vector<double>>& grads,
            double lr) {
    if (m.empty()) {
      m.resize(leaves.size());
      v.resize(leaves.size());
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        m[i].assign(leaves[i].numel(), 0.0);
        v[i].assign(leaves[i].numel(), 0.0);
      }
    }
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      double* value = leaves[i].data();
      for (std::size_t j = 0; j < grads[i].size(); ++j) {
        const double g = grads[i][j];
        m[i][j] = b1 * m[i][j] + (1.0 - b1) * g;
        v[i][j] = b2 * v[i][j] + (1.0 - b2) * g * g;
        value[j] -= lr * (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + eps);
      }
    }
  }
};

// normalization is structural, so a violation here means the optimizer or
// the kernel path itself is broken
void assert_kernel_invariant(const TransNetParams& params, const NetConfig& ncfg) {
  Tape tape(false);
  for (KernelSet which : {KernelSet::kPlanner, KernelSet::kFilter}) {
    const DTensor k = transition_kernels(tape, params, which, ncfg);
    const std::vector<int>& sh = k.shape();
    const int positions = sh[0] * sh[1];
    const int channels = sh[3];
    for (int ch = 0; ch < channels; ++ch) {
      double sum = 0.0;
      for (int pos = 0; pos < positions; ++pos)
        sum += k.values()[static_cast<std::size_t>(pos) * channels + ch];
      if (!(std::abs(sum - 1.0) <= 1e-9))
        throw std::logic_error("train: transition kernel channel " + std::to_string(ch) +
                               " drifted from a distribution");
    }
    if (ncfg.tie_kernels) break;  // one shared kernel set, nothing else to check
  }
}

}  // namespace

void validate(const TrainConfig& config) {
  if (config.epochs < 1) throw std::invalid_argument("train config: epochs must be positive");
  if (config.batch_size < 1)
    throw std::invalid_argument("train config: batch size must be positive");
  if (config.learning_rate < 0.0 || !std::isfinite(config.learning_rate))
    throw std::invalid_argument("train config: learning rate must be finite and nonnegative");
  if (!(config.decay_factor > 0.0) || config.decay_factor > 1.0)
    throw std::invalid_argument("train config: decay factor must be in (0, 1]");
  if (config.patience < 1) throw std::invalid_argument("train config: patience must be positive");
  if (!(config.clip_norm > 0.0))
    throw std::invalid_argument("train config: clip norm must be positive");
  if (!(config.val_fraction > 0.0) || !(config.val_fraction < 1.0))
    throw std::invalid_argument("train config: validation fraction must be in (0, 1)");
  if (config.checkpoint_interval < 1)
    throw std::invalid_argument("train config: checkpoint interval must be positive");
  if (config.convergence_windows < 1)
    throw std::invalid_argument("train config: convergence windows must be positive");
  if (config.threads < 1) throw std::invalid_argument("train config: threads must be positive");
}

std::string report_csv(const TrainReport& report) {
  std::string out = "epoch,train_loss,val_loss,val_acc,seconds\n";
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    out += std::to_string(e + 1);
    out += ',';
    out += fmt_double(report.train_loss[e]);
    out += ',';
    out += fmt_double(report.val_loss[e]);
    out += ',';
    out += fmt_double(report.val_accuracy[e]);
    out += ',';
    out += fmt_double(report.seconds[e]);
    out += '\n';
  }
  return out;
}

EvalStats evaluate_loss(const Dataset& dataset, const std::vector<int>& trajectories,
                        const TransNetParams& params, const ClassificationSpec& spec,
                        const NetConfig& net_config, int threads) {
  for (int i : trajectories)
    if (i < 0 || i >= static_cast<int>(dataset.trajs.size()))
      throw std::invalid_argument("evaluate_loss: trajectory index out of range");

  const int count = static_cast<int>(trajectories.size());
  std::vector<double> ce(static_cast<std::size_t>(count), 0.0);
  std::vector<long> steps(static_cast<std::size_t>(count), 0);
  std::vector<long> correct(static_cast<std::size_t>(count), 0);
  run_indexed(count, threads, [&](int i) {
    const Trajectory& traj = dataset.trajs[static_cast<std::size_t>(trajectories[i])];
    const GridMap& env = dataset.envs[static_cast<std::size_t>(traj.env_id)];
    Tape tape(false);
    const ForwardResult fr = forward_trajectory(tape, traj, env, params, spec, net_config);
    for (std::size_t t = 0; t < fr.logits.size(); ++t) {
      ce[i] += cross_entropy(tape, fr.logits[t], traj.actions[t]).scalar();
      if (argmax_action(fr.logits[t]) == traj.actions[t]) ++correct[i];
    }
    steps[i] = static_cast<long>(fr.logits.size());
  });

  EvalStats stats;
  double total_ce = 0.0;
  long total_correct = 0;
  for (int i = 0; i < count; ++i) {
    total_ce += ce[static_cast<std::size_t>(i)];
    total_correct += correct[static_cast<std::size_t>(i)];
    stats.steps += steps[static_cast<std::size_t>(i)];
  }
  if (stats.steps > 0) {
    stats.loss = total_ce / static_cast<double>(stats.steps);
    stats.accuracy = static_cast<double>(total_correct) / static_cast<double>(stats.steps);
  }
  return stats;
}

std::pair<TransNetParams, TrainReport> train(const Dataset& dataset,
                                             const TransNetParams& init_params,
                                             const ClassificationSpec& spec,
                                             const NetConfig& net_config,
                                             const TrainConfig& config) {
  validate(config);
  validate(net_config);
  if (dataset.trajs.empty()) throw std::invalid_argument("train: dataset has no trajectories");

  // resolve the split: dataset tags first, held-out environments otherwise
  std::vector<int> train_idx, val_idx;
  for (std::size_t i = 0; i < dataset.trajs.size(); ++i) {
    if (dataset.trajs[i].split == 0) train_idx.push_back(static_cast<int>(i));
    if (dataset.trajs[i].split == 1) val_idx.push_back(static_cast<int>(i));
  }
  if (val_idx.empty()) {
    std::vector<int> envs;  // environments owning at least one trajectory
    for (const Trajectory& t : dataset.trajs)
      if (envs.empty() || envs.back() != t.env_id) envs.push_back(t.env_id);
    if (envs.size() >= 2) {
      const long want = std::lround(config.val_fraction * static_cast<double>(envs.size()));
      const std::size_t n_val = static_cast<std::size_t>(
          std::clamp<long>(want, 1, static_cast<long>(envs.size()) - 1));
      const int first_val = envs[envs.size() - n_val];
      train_idx.clear();
      val_idx.clear();
      for (std::size_t i = 0; i < dataset.trajs.size(); ++i)
        (dataset.trajs[i].env_id >= first_val ? val_idx : train_idx)
            .push_back(static_cast<int>(i));
    } else if (train_idx.size() >= 2) {
      val_idx.push_back(train_idx.back());
      train_idx.pop_back();
    } else {
      val_idx = train_idx;  // one trajectory total: validate on it as well
    }
  }
  if (train_idx.empty()) throw std::invalid_argument("train: no training trajectories");

  TransNetParams master = clone_params(init_params);
  std::vector<DTensor> leaves = trainable(master, net_config);
  const std::size_t n_tensors = leaves.size();

  Adam opt;
  double lr = config.learning_rate;
  Rng root(config.seed);

  TrainReport report;
  report.n_train = static_cast<int>(train_idx.size());
  report.n_val = static_cast<int>(val_idx.size());

  TransNetParams best;
  double best_val = std::numeric_limits<double>::infinity();
  int flat_epochs = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng erng = root.child(static_cast<std::uint64_t>(epoch));
    std::vector<int> order = train_idx;
    shuffle(order, erng);

    double epoch_ce = 0.0;
    long epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const int count = static_cast<int>(end - begin);
      std::vector<TrajResult> results(static_cast<std::size_t>(count));
      run_indexed(count, config.threads, [&](int i) {
        results[static_cast<std::size_t>(i)] =
            run_trajectory(dataset, order[begin + static_cast<std::size_t>(i)], master, spec,
                           net_config, /*want_grads=*/true);
      });

      std::vector<std::vector<double>> grad(n_tensors);
      for (std::size_t i = 0; i < n_tensors; ++i) grad[i].assign(leaves[i].numel(), 0.0);
      double batch_ce = 0.0;
      long batch_steps = 0;
      for (int i = 0; i < count; ++i) {
        const TrajResult& r = results[static_cast<std::size_t>(i)];
        if (r.steps > 0 && !std::isfinite(r.ce))
          throw std::runtime_error(
              "train: non-finite loss at trajectory " +
              std::to_string(order[begin + static_cast<std::size_t>(i)]) + " (env " +
              std::to_string(
                  dataset.trajs[static_cast<std::size_t>(order[begin + static_cast<std::size_t>(i)])]
                      .env_id) +
              ", epoch " + std::to_string(epoch + 1) + ")");
        if (r.grads.empty()) continue;
        for (std::size_t j = 0; j < n_tensors; ++j)
          for (std::size_t n = 0; n < grad[j].size(); ++n) grad[j][n] += r.grads[j][n];
        batch_ce += r.ce;
        batch_steps += r.steps;
      }
      if (batch_steps == 0) continue;
      epoch_ce += batch_ce;
      epoch_steps += batch_steps;

      // mean per-step loss, then a global-norm clip across every tensor
      const double inv = 1.0 / static_cast<double>(batch_steps);
      double sq = 0.0;
      for (std::vector<double>& g : grad)
        for (double& v : g) {
          v *= inv;
          sq += v * v;
        }
      const double norm = std::sqrt(sq);
      if (norm > config.clip_norm) {
        const double shrink = config.clip_norm / norm;
        for (std::vector<double>& g : grad)
          for (double& v : g) v *= shrink;
      }
      opt.step(leaves, grad, lr);
    }

    assert_kernel_invariant(master, net_config);

    const EvalStats val =
        evaluate_loss(dataset, val_idx, master, spec, net_config, config.threads);
    report.train_loss.push_back(epoch_steps > 0 ? epoch_ce / static_cast<double>(epoch_steps)
                                                : 0.0);
    report.val_loss.push_back(val.loss);
    report.val_accuracy.push_back(val.accuracy);

    if (val.loss < best_val) {
      best_val = val.loss;
      report.best_epoch = epoch;
      best = clone_params(master);
      flat_epochs = 0;
    } else {
      ++flat_epochs;
      if (flat_epochs % config.patience == 0) lr *= config.decay_factor;
    }

    if (!config.checkpoint_dir.empty() && (epoch + 1) % config.checkpoint_interval == 0) {
      std::filesystem::create_directories(config.checkpoint_dir);
      save_checkpoint(config.checkpoint_dir + "/ckpt-" + std::to_string(epoch + 1) + ".ckpt",
                      master, net_config, spec.num_classes(),
                      {{"epoch", std::to_string(epoch + 1)},
                       {"train_loss", fmt_double(report.train_loss.back())},
                       {"val_loss", fmt_double(val.loss)},
                       {"val_acc", fmt_double(val.accuracy)}});
    }

    const auto t1 = std::chrono::steady_clock::now();
    report.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

    if (config.epoch_hook) config.epoch_hook(epoch, report);

    if (flat_epochs >= config.convergence_windows * config.patience) {
      report.converged = true;
      break;
    }
  }

  report.final_learning_rate = lr;
  if (report.best_epoch < 0) {
    report.best_epoch = static_cast<int>(report.train_loss.size()) - 1;
    best = clone_params(master);
  }
  return {std::move(best), std::move(report)};
}

}  // namespace transnet
