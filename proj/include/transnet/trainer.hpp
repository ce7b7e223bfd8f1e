#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "transnet/dataset.hpp"
#include "transnet/net.hpp"

namespace transnet {

struct TrainReport;

// Imitation training: minibatched backpropagation through time over expert
// trajectories with Adam, global-norm gradient clipping, and plateau-driven
// learning-rate decay. Validation environments come from the dataset's
// split tags; a dataset without tagged validation environments holds out
// its last environments instead (val_fraction, at least one, never all).
struct TrainConfig {
  int epochs = 200;
  int batch_size = 100;  // trajectories per optimizer step
  double learning_rate = 1e-3;
  double decay_factor = 0.5;  // applied after `patience` epochs without improvement
  int patience = 10;
  double clip_norm = 5.0;     // global L2 norm across every trainable tensor
  double val_fraction = 0.1;  // only used when the dataset carries no val tags
  int checkpoint_interval = 50;  // epochs between periodic checkpoints
  std::string checkpoint_dir;    // empty disables periodic checkpoints
  int convergence_windows = 3;   // stop after this many flat patience windows
  int threads = 1;
  std::uint64_t seed = 0;
  // called once per finished epoch with the log so far; observation only,
  // the training math never depends on it
  std::function<void(int epoch, const TrainReport& so_far)> epoch_hook;
};

// zero learning rate is legal (freezes the parameters; used by plumbing tests)
void validate(const TrainConfig& config);

struct TrainReport {
  std::vector<double> train_loss;    // mean per-step cross-entropy
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;  // argmax agreement with the expert
  std::vector<double> seconds;       // wall clock, excluded from determinism claims
  int best_epoch = -1;               // 0-based index of the selected epoch
  bool converged = false;
  double final_learning_rate = 0.0;
  int n_train = 0, n_val = 0;  // trajectory counts after the split resolves
};

// epoch,train_loss,val_loss,val_acc,seconds rows with 1-based epoch numbers
std::string report_csv(const TrainReport& report);

struct EvalStats {
  double loss = 0.0;      // mean per-step cross-entropy
  double accuracy = 0.0;  // fraction of steps whose argmax matches the expert
  long steps = 0;
};

// forward-only pass over the listed trajectory indices
EvalStats evaluate_loss(const Dataset& dataset, const std::vector<int>& trajectories,
                        const TransNetParams& params, const ClassificationSpec& spec,
                        const NetConfig& net_config, int threads = 1);

// Runs the training loop and returns the parameters of the best validation
// epoch plus the per-epoch log. Per-trajectory gradients are reduced in
// trajectory order regardless of the thread count, so a rerun with the same
// dataset, seed, and config reproduces the parameters bit for bit. Throws
// with the offending trajectory index when a loss turns non-finite.
std::pair<TransNetParams, TrainReport> train(const Dataset& dataset,
                                             const TransNetParams& init_params,
                                             const ClassificationSpec& spec,
                                             const NetConfig& net_config,
                                             const TrainConfig& config);

}  // namespace transnet
