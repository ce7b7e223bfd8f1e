#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "transnet/gridworld.hpp"
#include "transnet/qmdp.hpp"
#include "transnet/rng.hpp"
#include "transnet/tensor.hpp"

namespace transnet {

// Scenario image fed to the network: channel 0 is obstacle occupancy
// (1 = obstacle; a V2-rendered open gate is marked 0.5), channel 1 is the
// goal indicator. Constant w.r.t. the tape.
struct Theta {
  int h = 0, w = 0;
  DTensor image;  // (H,W,2)
};

// open gates render as free space (V1) or as the 0.5 marker (V2); closed
// gates render as obstacles in both
Theta render_theta(const GridMap& map, int goal_cell, Variant variant);

// Per-cell state classification. The default spec reads the four neighbor
// cells' obstacle bits (off-grid counts as an obstacle) with positional
// weights 1,2,4,8 in N,S,E,W order, so |C| = 16. An empty feature list is
// the uniform baseline: a single class shared by every state.
struct ClassificationSpec {
  int max_value = 1;  // M: every feature must land in [0, M]
  std::vector<std::function<int(const Theta&, int y, int x)>> features;

  int num_classes() const;  // (M+1)^(number of features)

  static ClassificationSpec neighbor4();
  static ClassificationSpec uniform();
};

struct Classification {
  std::vector<int> class_image;  // h*w class indices
  DTensor mask;                  // (H,W,|C|) one-hot, constant
};

// c(s) = sum_i (M+1)^(i-1) f_i(s). Throws when a feature leaves [0, M].
Classification classify(const Theta& theta, const ClassificationSpec& spec);

struct NetConfig {
  int K = 20;               // planning iterations
  int k = 3;                // kernel width, odd
  double gamma_net = 0.99;  // discount inside the planner, fixed
  bool tie_kernels = false;
  int hidden = 16;          // hidden channels of f_R and f_Z
};

void validate(const NetConfig& config);

// Raw (pre-softmax) kernel logits plus the f_R / f_Z convolution stacks.
// The stacks are bias-free: two 3x3 convolutions, in-channels 2 -> hidden
// -> out, with a pointwise rectifier between.
struct TransNetParams {
  DTensor planner_raw;  // (k,k,1,|A|*|C|)
  DTensor filter_raw;   // same shape; ignored when kernels are tied
  DTensor r1, r2;       // (3,3,2,h), (3,3,h,|A|)
  DTensor z1, z2;       // (3,3,2,h), (3,3,h,|O|)
};

TransNetParams init_params(const NetConfig& config, int num_classes, Rng& rng);

// Leaf tensors the optimizer owns, in fixed order; filter_raw is omitted
// when kernels are tied.
std::vector<DTensor> trainable(const TransNetParams& params, const NetConfig& config);

enum class KernelSet { kPlanner, kFilter };

// Per-(a,c) channel softmax over the k*k spatial positions, so every slice
// is a strictly positive distribution by construction. Kernel entry (dy,dx)
// holds the probability of the successor offset (dy-k/2, dx-k/2) relative
// to the source cell. kFilter resolves to the planner weights when tied.
DTensor transition_kernels(Tape& tape, const TransNetParams& params, KernelSet which,
                           const NetConfig& config);

DTensor reward_image(Tape& tape, const Theta& theta, const TransNetParams& params);  // (H,W,|A|)
DTensor obs_image(Tape& tape, const Theta& theta, const TransNetParams& params);     // (H,W,|O|)

// K rounds of value iteration in image space: V_0 = max_a f_R; then
// U = conv(V, kernels), class-select, Q = f_R + gamma_net * U_sel,
// V = max_a Q. Returns Q_K.
DTensor plan(Tape& tape, const Theta& theta, const TransNetParams& params,
             const ClassificationSpec& spec, const NetConfig& config);

struct BeliefUpdate {
  DTensor belief;  // (H,W,1)
  bool reset = false;
};

// Mass propagation with the flipped filter kernels (the planner kernel
// orientation points source -> successor; the filter needs the transpose),
// class-selected per destination cell, action-selected, weighted by the
// received observation's image slice, and renormalized. Zero total mass
// falls back to uniform over all cells and raises the reset flag.
BeliefUpdate belief_update(Tape& tape, const DTensor& belief, int action, int observation,
                           const Theta& theta, const TransNetParams& params,
                           const ClassificationSpec& spec, const NetConfig& config);

// q(a) = sum_s b(s) Q(s,a); the training loss consumes these as logits
DTensor select_action(Tape& tape, const DTensor& belief, const DTensor& q);

// lowest-index argmax of a 1-axis logit vector
int argmax_action(const DTensor& logits);

struct ForwardResult {
  std::vector<DTensor> logits;  // one (|A|) tensor per step
  int plan_calls = 0;           // Q_K recomputations (theta snapshot changes)
};

// Replays one expert trajectory: emit logits from the current belief and
// the (cached) plan for the step's theta snapshot, then update the belief
// with the expert's recorded action and observation. Dynamic snapshots are
// keyed by the recorded per-step gate states; the filter sees the
// post-step snapshot.
ForwardResult forward_trajectory(Tape& tape, const Trajectory& traj, const GridMap& env,
                                 const TransNetParams& params, const ClassificationSpec& spec,
                                 const NetConfig& config);

// Single-file checkpoint: text header (config, shapes, metadata), an 'end'
// line, then the declared tensors as raw little-endian doubles. Bit-exact
// round-trip. filter_raw is omitted when kernels are tied.
struct CheckpointData {
  NetConfig config;
  int num_classes = 0;
  TransNetParams params;
  std::vector<std::pair<std::string, std::string>> metadata;
};

void save_checkpoint(const std::string& path, const TransNetParams& params,
                     const NetConfig& config, int num_classes,
                     const std::vector<std::pair<std::string, std::string>>& metadata = {});
CheckpointData load_checkpoint(const std::string& path);

}  // namespace transnet
