#include "transnet/qmdp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace transnet {

namespace {

double action_value(const Pomdp& m, const std::vector<double>& v, int s, int a) {
  const Transition& t = m.trans[static_cast<std::size_t>(s * kNumActions + a)];
  const double cont = t.p_next * v[static_cast<std::size_t>(t.next)] +
                      (1.0 - t.p_next) * v[static_cast<std::size_t>(s)];
  return m.reward[static_cast<std::size_t>(s * kNumActions + a)] + m.gamma * cont;
}

}  // namespace

QTable mdp_value_iteration(const Pomdp& model, double tol, int max_iters) {
  const int n = model.num_states();
  if (max_iters <= 0) max_iters = 10 * (model.h + model.w);
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  std::vector<double> nv(static_cast<std::size_t>(n));

  QTable table;
  table.h = model.h;
  table.w = model.w;
  table.residual = std::numeric_limits<double>::infinity();
  while (table.iterations < max_iters && table.residual >= tol) {
    double res = 0.0;
    for (int s = 0; s < n; ++s) {
      double best = action_value(model, v, s, 0);
      for (int a = 1; a < kNumActions; ++a) best = std::max(best, action_value(model, v, s, a));
      nv[static_cast<std::size_t>(s)] = best;
      res = std::max(res, std::abs(best - v[static_cast<std::size_t>(s)]));
    }
    v.swap(nv);
    table.residual = res;
    ++table.iterations;
  }
  table.converged = table.residual < tol;

  table.q.resize(static_cast<std::size_t>(n) * kNumActions);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < kNumActions; ++a)
      table.q[static_cast<std::size_t>(s * kNumActions + a)] = action_value(model, v, s, a);
  return table;
}

FilterResult bayes_filter(const std::vector<double>& belief, int action, int observation,
                          const Pomdp& trans_model, const Pomdp& obs_model) {
  const int n = trans_model.num_states();
  if (static_cast<int>(belief.size()) != n || obs_model.num_states() != n)
    throw std::invalid_argument("bayes_filter: size mismatch");
  if (action < 0 || action >= kNumActions || observation < 0 || observation >= kNumObservations)
    throw std::invalid_argument("bayes_filter: action or observation out of range");

  FilterResult out;
  out.belief.assign(static_cast<std::size_t>(n), 0.0);
  for (int s = 0; s < n; ++s) {
    const double b = belief[static_cast<std::size_t>(s)];
    if (b == 0.0) continue;
    const Transition& t = trans_model.trans[static_cast<std::size_t>(s * kNumActions + action)];
    out.belief[static_cast<std::size_t>(t.next)] += b * t.p_next;
    out.belief[static_cast<std::size_t>(s)] += b * (1.0 - t.p_next);
  }
  double total = 0.0;
  for (int s2 = 0; s2 < n; ++s2) {
    double& b = out.belief[static_cast<std::size_t>(s2)];
    // mass can be pushed into a cell a gate swap just closed; the true
    // state is never inside an obstacle, so clamp the support
    b = obs_model.obstacle[static_cast<std::size_t>(s2)]
            ? 0.0
            : b * obs_model.obs_prob(s2, observation);
    total += b;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    int free_cells = 0;
    for (int s2 = 0; s2 < n; ++s2)
      if (!obs_model.obstacle[static_cast<std::size_t>(s2)]) ++free_cells;
    const double u = 1.0 / static_cast<double>(free_cells);
    for (int s2 = 0; s2 < n; ++s2)
      out.belief[static_cast<std::size_t>(s2)] =
          obs_model.obstacle[static_cast<std::size_t>(s2)] ? 0.0 : u;
    out.reset = true;
    return out;
  }
  for (double& b : out.belief) b /= total;
  return out;
}

FilterResult bayes_filter(const std::vector<double>& belief, int action, int observation,
                          const Pomdp& model) {
  return bayes_filter(belief, action, observation, model, model);
}

int qmdp_action(const std::vector<double>& belief, const QTable& q) {
  if (belief.size() * kNumActions != q.q.size())
    throw std::invalid_argument("qmdp_action: belief and table disagree on state count");
  double score[kNumActions] = {0, 0, 0, 0, 0};
  for (std::size_t s = 0; s < belief.size(); ++s) {
    const double b = belief[s];
    if (b == 0.0) continue;
    for (int a = 0; a < kNumActions; ++a) score[a] += b * q.q[s * kNumActions + a];
  }
  int best = 0;
  for (int a = 1; a < kNumActions; ++a)
    if (score[a] > score[best]) best = a;
  return best;
}

Trajectory generate_trajectory(const Scenario& scenario, const Pomdp& model, const QTable& q,
                               int max_steps, double p_swap, Rng& rng) {
  Trajectory traj;
  traj.start = scenario.start;
  traj.goal = scenario.goal;
  traj.variant = scenario.variant;
  traj.initial_belief = scenario.initial_belief;

  GridMap env = scenario.map;
  const bool dynamic = env.gates.has_value();
  const NoiseProfile noise{model.p_move, model.p_obs};

  // slot 0 = gate A open, slot 1 = gate B open; the other slot is solved
  // on demand at the first observed swap
  Pomdp models[2];
  QTable tables[2];
  bool ready[2] = {false, false};
  auto slot = [&](bool a_open) { return a_open ? 0 : 1; };
  const int init = dynamic ? slot(env.gates->a_open) : 0;
  models[init] = model;
  tables[init] = q;
  ready[init] = true;
  auto ensure = [&](int i) -> void {
    if (ready[i]) return;
    GridMap view = env;
    view.gates->a_open = i == 0;
    models[i] = build_pomdp(view, scenario.goal, noise);
    models[i].gamma = model.gamma;
    tables[i] = mdp_value_iteration(models[i]);
    ready[i] = true;
  };

  if (scenario.start == scenario.goal) {
    traj.success = true;
    return traj;
  }

  std::vector<double> belief = scenario.initial_belief;
  int state = scenario.start;
  for (int step = 0; step < max_steps; ++step) {
    const int cur = dynamic ? slot(env.gates->a_open) : 0;
    if (dynamic) traj.gate_states.push_back(cur);

    const int a = qmdp_action(belief, tables[cur]);
    const StepResult r = step_env(env, noise, scenario.goal, state, a, dynamic ? p_swap : 0.0, rng);
    state = r.state;
    if (r.collision) ++traj.collisions;
    traj.actions.push_back(a);
    traj.observations.push_back(r.observation);

    const int post = dynamic ? slot(env.gates->a_open) : 0;
    if (dynamic && post != cur) ensure(post);
    FilterResult f = bayes_filter(belief, a, r.observation, models[cur], models[post]);
    belief = std::move(f.belief);
    if (f.reset) traj.filter_reset = true;

    if (r.done) {
      traj.success = true;
      break;
    }
  }
  return traj;
}

}  // namespace transnet
