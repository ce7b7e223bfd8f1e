#pragma once

#include <vector>

#include "transnet/gridworld.hpp"

namespace transnet {

struct QTable {
  int h = 0, w = 0;
  std::vector<double> q;  // index s*kNumActions + a
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;  // warning flag, never an exception
};

// Q(s,a) = R(s,a) + gamma * sum_s' T(s,a,s') max_a' Q(s',a'), iterated from
// zero until the sup-norm residual drops below tol. max_iters <= 0 picks
// the default 10*(h+w).
QTable mdp_value_iteration(const Pomdp& model, double tol = 1e-6, int max_iters = 0);

struct FilterResult {
  std::vector<double> belief;
  bool reset = false;  // impossible observation forced a uniform restart
};

// b'(s') ~ Z(s',a,o) * sum_s T(s,a,s') b(s), normalized. The two-model form
// exists for dynamic maps: the transition uses the pre-swap model while the
// observation weighting and the free-cell support use the post-swap one.
FilterResult bayes_filter(const std::vector<double>& belief, int action, int observation,
                          const Pomdp& trans_model, const Pomdp& obs_model);
FilterResult bayes_filter(const std::vector<double>& belief, int action, int observation,
                          const Pomdp& model);

// argmax_a sum_s b(s) Q(s,a); ties break to the lowest action index
int qmdp_action(const std::vector<double>& belief, const QTable& q);

struct Trajectory {
  int env_id = 0;
  int split = 0;  // 0 train, 1 validation, 2 test
  int start = -1, goal = -1;
  Variant variant = Variant::kStatic;
  std::vector<double> initial_belief;
  std::vector<int> actions;
  std::vector<int> observations;   // one per action
  std::vector<int> gate_states;    // dynamic: open gate (0=A, 1=B) per decision
  int collisions = 0;
  bool success = false;
  bool filter_reset = false;
};

// Closed loop of qmdp_action -> step_env -> bayes_filter until the goal or
// max_steps. model/q describe the scenario's initial gate configuration;
// in dynamic maps the model pair for the other configuration is built and
// solved on demand whenever a swap is observed.
Trajectory generate_trajectory(const Scenario& scenario, const Pomdp& model, const QTable& q,
                               int max_steps, double p_swap, Rng& rng);

}  // namespace transnet
