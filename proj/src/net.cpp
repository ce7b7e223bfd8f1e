#include "transnet/net.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "transnet/io.hpp"

namespace transnet {

namespace {

int obstacle_bit(const Theta& th, int y, int x) {
  if (y < 0 || y >= th.h || x < 0 || x >= th.w) return 1;  // off-grid counts as obstacle
  // V2 marks the open gate 0.5, which must classify as free space
  return th.image.get(y, x, 0) > 0.5 ? 1 : 0;
}

}  // namespace

Theta render_theta(const GridMap& map, int goal_cell, Variant variant) {
  if (goal_cell < 0 || goal_cell >= map.h * map.w)
    throw std::invalid_argument("render_theta: goal cell out of range");
  if (map.gates && variant == Variant::kStatic)
    throw std::invalid_argument("render_theta: gated maps need V1 or V2 rendering");

  std::vector<double> img(static_cast<std::size_t>(map.h) * map.w * 2, 0.0);
  for (int i = 0; i < map.h * map.w; ++i)
    img[static_cast<std::size_t>(i) * 2] = map.cells[static_cast<std::size_t>(i)] != 0 ? 1.0 : 0.0;
  if (map.gates) {
    const Gates& g = *map.gates;
    const int open = (g.a_open ? g.ay * map.w + g.ax : g.by * map.w + g.bx);
    const int closed = (g.a_open ? g.by * map.w + g.bx : g.ay * map.w + g.ax);
    img[static_cast<std::size_t>(open) * 2] = variant == Variant::kV2 ? 0.5 : 0.0;
    img[static_cast<std::size_t>(closed) * 2] = 1.0;
  }
  img[static_cast<std::size_t>(goal_cell) * 2 + 1] = 1.0;

  Theta th;
  th.h = map.h;
  th.w = map.w;
  th.image = DTensor::from_vector({map.h, map.w, 2}, std::move(img));
  return th;
}

int ClassificationSpec::num_classes() const {
  int c = 1;
  for (std::size_t i = 0; i < features.size(); ++i) c *= max_value + 1;
  return c;
}

ClassificationSpec ClassificationSpec::neighbor4() {
  ClassificationSpec spec;
  spec.max_value = 1;
  // positional weights 1,2,4,8 follow the list order N,S,E,W
  spec.features = {
      [](const Theta& th, int y, int x) { return obstacle_bit(th, y - 1, x); },
      [](const Theta& th, int y, int x) { return obstacle_bit(th, y + 1, x); },
      [](const Theta& th, int y, int x) { return obstacle_bit(th, y, x + 1); },
      [](const Theta& th, int y, int x) { return obstacle_bit(th, y, x - 1); },
  };
  return spec;
}

ClassificationSpec ClassificationSpec::uniform() {
  return ClassificationSpec{};  // no features: every cell lands in class 0
}

Classification classify(const Theta& theta, const ClassificationSpec& spec) {
  const int n = static_cast<int>(spec.features.size());
  Classification out;
  out.class_image.resize(static_cast<std::size_t>(theta.h) * theta.w);
  for (int y = 0; y < theta.h; ++y) {
    for (int x = 0; x < theta.w; ++x) {
      int code = 0;
      int weight = 1;
      for (int i = 0; i < n; ++i) {
        const int f = spec.features[static_cast<std::size_t>(i)](theta, y, x);
        if (f < 0 || f > spec.max_value)
          throw std::invalid_argument("classify: feature " + std::to_string(i + 1) +
                                      " produced " + std::to_string(f) + ", outside [0, " +
                                      std::to_string(spec.max_value) + "]");
        code += weight * f;
        weight *= spec.max_value + 1;
      }
      out.class_image[static_cast<std::size_t>(y * theta.w + x)] = code;
    }
  }
  out.mask = one_hot(out.class_image, theta.h, theta.w, spec.num_classes());
  return out;
}

void validate(const NetConfig& config) {
  if (config.K < 1) throw std::invalid_argument("net config: K must be at least 1");
  if (config.k < 1 || config.k % 2 == 0)
    throw std::invalid_argument("net config: kernel width must be odd");
  if (!(config.gamma_net > 0.0) || config.gamma_net > 1.0)
    throw std::invalid_argument("net config: gamma_net must be in (0, 1]");
  if (config.hidden < 1) throw std::invalid_argument("net config: hidden channels must be at least 1");
}

TransNetParams init_params(const NetConfig& config, int num_classes, Rng& rng) {
  validate(config);
  if (num_classes < 1) throw std::invalid_argument("init_params: num_classes must be positive");
  const int ch = kNumActions * num_classes;
  const double s1 = 1.0 / std::sqrt(9.0 * 2.0);
  const double s2 = 1.0 / std::sqrt(9.0 * config.hidden);

  TransNetParams p;
  p.planner_raw = DTensor::randn({config.k, config.k, 1, ch}, rng, 0.1);
  p.filter_raw = DTensor::randn({config.k, config.k, 1, ch}, rng, 0.1);
  p.r1 = DTensor::randn({3, 3, 2, config.hidden}, rng, s1);
  p.r2 = DTensor::randn({3, 3, config.hidden, kNumActions}, rng, s2);
  p.z1 = DTensor::randn({3, 3, 2, config.hidden}, rng, s1);
  p.z2 = DTensor::randn({3, 3, config.hidden, kNumObservations}, rng, s2);
  for (DTensor t : {p.planner_raw, p.filter_raw, p.r1, p.r2, p.z1, p.z2})
    t.set_requires_grad(true);
  return p;
}

std::vector<DTensor> trainable(const TransNetParams& params, const NetConfig& config) {
  std::vector<DTensor> out;
  out.push_back(params.planner_raw);
  if (!config.tie_kernels) out.push_back(params.filter_raw);
  out.push_back(params.r1);
  out.push_back(params.r2);
  out.push_back(params.z1);
  out.push_back(params.z2);
  return out;
}

DTensor transition_kernels(Tape& tape, const TransNetParams& params, KernelSet which,
                           const NetConfig& config) {
  const bool filter = which == KernelSet::kFilter && !config.tie_kernels;
  const DTensor& raw = filter ? params.filter_raw : params.planner_raw;
  if (!raw.defined())
    throw std::invalid_argument("transition_kernels: kernel weights are not initialized");
  if (raw.ndim() != 4 || raw.extent(0) != config.k || raw.extent(1) != config.k ||
      raw.extent(2) != 1)
    throw std::invalid_argument("transition_kernels: raw weights have the wrong shape");
  const int ch = raw.extent(3);
  DTensor flat = reshape(tape, raw, {config.k * config.k, ch});
  DTensor norm = softmax(tape, flat, 0);
  return reshape(tape, norm, {config.k, config.k, 1, ch});
}

DTensor reward_image(Tape& tape, const Theta& theta, const TransNetParams& params) {
  DTensor hidden = relu(tape, conv2d(tape, theta.image, params.r1));
  return conv2d(tape, hidden, params.r2);
}

DTensor obs_image(Tape& tape, const Theta& theta, const TransNetParams& params) {
  DTensor hidden = relu(tape, conv2d(tape, theta.image, params.z1));
  return softmax(tape, conv2d(tape, hidden, params.z2), 2);
}

DTensor plan(Tape& tape, const Theta& theta, const TransNetParams& params,
             const ClassificationSpec& spec, const NetConfig& config) {
  validate(config);
  const int classes = spec.num_classes();
  const Classification cls = classify(theta, spec);
  const DTensor kernels = transition_kernels(tape, params, KernelSet::kPlanner, config);
  const DTensor r = reward_image(tape, theta, params);
  const DTensor mask4 = reshape(tape, cls.mask, {theta.h, theta.w, classes, 1});

  DTensor v = channel_max(tape, r);
  DTensor q;
  for (int t = 0; t < config.K; ++t) {
    DTensor u = conv2d(tape, v, kernels);  // (H,W,|A|*|C|), channel = c*|A|+a
    DTensor uc = reshape(tape, u, {theta.h, theta.w, classes, kNumActions});
    DTensor sel = sum_axis(tape, mul(tape, uc, mask4), 2);  // (H,W,|A|)
    q = add(tape, r, scale(tape, sel, config.gamma_net));
    v = channel_max(tape, q);
  }
  return q;
}

namespace {

// per-theta artifacts reused across the steps of one trajectory
struct FilterContext {
  int h = 0, w = 0;
  int classes = 1;
  DTensor kernels;  // flipped filter kernels, (k,k,1,|A|*|C|)
  DTensor mask4;    // (H,W,|C|,1)
  DTensor obs;      // (H,W,|O|)
};

FilterContext make_filter_context(Tape& tape, const Theta& theta, const TransNetParams& params,
                                  const ClassificationSpec& spec, const NetConfig& config) {
  FilterContext ctx;
  ctx.h = theta.h;
  ctx.w = theta.w;
  ctx.classes = spec.num_classes();
  ctx.kernels =
      flip_spatial(tape, transition_kernels(tape, params, KernelSet::kFilter, config));
  ctx.mask4 = reshape(tape, classify(theta, spec).mask, {theta.h, theta.w, ctx.classes, 1});
  ctx.obs = obs_image(tape, theta, params);
  return ctx;
}

// (H,W,C) -> (H,W): one-hot select a channel and collapse it
DTensor channel_pick(Tape& tape, const DTensor& x, int channel) {
  const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
  const DTensor mask =
      one_hot(std::vector<int>(static_cast<std::size_t>(h) * w, channel), h, w, c);
  return sum_axis(tape, mul(tape, x, mask), 2);
}

BeliefUpdate apply_filter(Tape& tape, const FilterContext& ctx, const DTensor& belief,
                          int action, int observation) {
  if (action < 0 || action >= kNumActions)
    throw std::invalid_argument("belief_update: action out of range");
  if (observation < 0 || observation >= kNumObservations)
    throw std::invalid_argument("belief_update: observation out of range");
  if (belief.ndim() != 3 || belief.extent(0) != ctx.h || belief.extent(1) != ctx.w ||
      belief.extent(2) != 1)
    throw std::invalid_argument("belief_update: belief must be (H,W,1)");

  DTensor u = conv2d(tape, belief, ctx.kernels);
  DTensor uc = reshape(tape, u, {ctx.h, ctx.w, ctx.classes, kNumActions});
  DTensor selc = sum_axis(tape, mul(tape, uc, ctx.mask4), 2);  // (H,W,|A|)
  DTensor moved = channel_pick(tape, selc, action);            // (H,W)
  DTensor weight = channel_pick(tape, ctx.obs, observation);   // (H,W)
  DTensor weighted = mul(tape, moved, weight);

  double total = 0.0;
  for (double v : weighted.values()) total += v;
  BeliefUpdate out;
  if (!(total > 0.0) || !std::isfinite(total)) {
    out.belief = DTensor({ctx.h, ctx.w, 1}, 1.0 / (ctx.h * ctx.w));
    out.reset = true;
    return out;
  }
  out.belief = reshape(tape, normalize_sum(tape, weighted), {ctx.h, ctx.w, 1});
  return out;
}

}  // namespace

BeliefUpdate belief_update(Tape& tape, const DTensor& belief, int action, int observation,
                           const Theta& theta, const TransNetParams& params,
                           const ClassificationSpec& spec, const NetConfig& config) {
  validate(config);
  return apply_filter(tape, make_filter_context(tape, theta, params, spec, config), belief,
                      action, observation);
}

DTensor select_action(Tape& tape, const DTensor& belief, const DTensor& q) {
  if (q.ndim() != 3 || belief.ndim() != 3 || belief.extent(2) != 1 ||
      belief.extent(0) != q.extent(0) || belief.extent(1) != q.extent(1))
    throw std::invalid_argument("select_action: belief (H,W,1) and q (H,W,|A|) disagree");
  DTensor weighted = mul(tape, q, belief);
  DTensor rows = sum_axis(tape, weighted, 0);
  return sum_axis(tape, rows, 0);
}

int argmax_action(const DTensor& logits) {
  if (logits.ndim() != 1 || logits.numel() == 0)
    throw std::invalid_argument("argmax_action: logits must be a nonempty vector");
  const std::vector<double>& v = logits.values();
  int best = 0;
  for (int a = 1; a < static_cast<int>(v.size()); ++a)
    if (v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(best)]) best = a;
  return best;
}

ForwardResult forward_trajectory(Tape& tape, const Trajectory& traj, const GridMap& env,
                                 const TransNetParams& params, const ClassificationSpec& spec,
                                 const NetConfig& config) {
  validate(config);
  if (traj.observations.size() != traj.actions.size())
    throw std::invalid_argument("forward_trajectory: actions and observations disagree");
  const bool dynamic = !traj.gate_states.empty();
  if (dynamic && traj.gate_states.size() != traj.actions.size())
    throw std::invalid_argument("forward_trajectory: gate states disagree with actions");
  const int len = static_cast<int>(traj.actions.size());

  ForwardResult out;
  if (len == 0) return out;
  if (static_cast<int>(traj.initial_belief.size()) != env.h * env.w)
    throw std::invalid_argument("forward_trajectory: initial belief size mismatch");

  GridMap work = env;
  // the two possible gate configurations give at most two distinct theta
  // snapshots per trajectory; each is planned once and reused
  struct Snapshot {
    bool ready = false;
    DTensor q;
    FilterContext ctx;
  };
  Snapshot snaps[2];
  auto snap_for = [&](int gate) -> Snapshot& {
    Snapshot& s = snaps[gate == 1 ? 1 : 0];
    if (!s.ready) {
      if (work.gates && gate >= 0) work.gates->a_open = gate == 0;
      const Theta th = render_theta(work, traj.goal, traj.variant);
      s.q = plan(tape, th, params, spec, config);
      s.ctx = make_filter_context(tape, th, params, spec, config);
      s.ready = true;
      ++out.plan_calls;
    }
    return s;
  };

  DTensor b = DTensor::from_vector({env.h, env.w, 1}, traj.initial_belief);
  for (int t = 0; t < len; ++t) {
    const int g = dynamic ? traj.gate_states[static_cast<std::size_t>(t)] : -1;
    out.logits.push_back(select_action(tape, b, snap_for(g).q));

    // the world may swap right after the move, so the filter sees the
    // snapshot the recorded observation was drawn from
    const int g_next =
        dynamic ? (t + 1 < len ? traj.gate_states[static_cast<std::size_t>(t + 1)] : g) : -1;
    b = apply_filter(tape, snap_for(g_next).ctx, b,
                     traj.actions[static_cast<std::size_t>(t)],
                     traj.observations[static_cast<std::size_t>(t)])
            .belief;
  }
  return out;
}

void save_checkpoint(const std::string& path, const TransNetParams& params,
                     const NetConfig& config, int num_classes,
                     const std::vector<std::pair<std::string, std::string>>& metadata) {
  validate(config);
  if (num_classes < 1) throw std::invalid_argument("save_checkpoint: num_classes must be positive");

  std::vector<std::pair<std::string, DTensor>> tensors;
  tensors.emplace_back("planner_raw", params.planner_raw);
  if (!config.tie_kernels) tensors.emplace_back("filter_raw", params.filter_raw);
  tensors.emplace_back("r1", params.r1);
  tensors.emplace_back("r2", params.r2);
  tensors.emplace_back("z1", params.z1);
  tensors.emplace_back("z2", params.z2);
  for (const auto& [name, t] : tensors)
    if (!t.defined())
      throw std::invalid_argument("save_checkpoint: tensor " + name + " is not initialized");

  std::ostringstream head;
  head << "transnet-checkpoint 1\n";
  head << "K " << config.K << '\n';
  head << "k " << config.k << '\n';
  head << "gamma_net " << fmt_double(config.gamma_net) << '\n';
  head << "tie_kernels " << (config.tie_kernels ? 1 : 0) << '\n';
  head << "hidden " << config.hidden << '\n';
  head << "num_classes " << num_classes << '\n';
  for (const auto& [key, value] : metadata) {
    if (key.empty() || key.find_first_of(" \n") != std::string::npos ||
        value.find('\n') != std::string::npos)
      throw std::invalid_argument(
          "save_checkpoint: metadata keys must be single tokens, values single lines");
    head << "meta " << key << ' ' << value << '\n';
  }
  for (const auto& [name, t] : tensors) {
    head << "tensor " << name;
    for (int d : t.shape()) head << ' ' << d;
    head << '\n';
  }
  head << "end\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << head.str();
  for (const auto& [name, t] : tensors) write_array_le(out, t.values());
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  const std::string blob = read_text_file(path);
  std::istringstream in(blob);
  std::string line;
  if (!std::getline(in, line) || line != "transnet-checkpoint 1")
    throw std::runtime_error("checkpoint: unrecognized header in " + path);

  CheckpointData data;
  std::map<std::string, std::string> kv;
  std::vector<std::pair<std::string, std::vector<int>>> decls;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      terminated = true;
      break;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "meta") {
      std::string mk, rest;
      ls >> mk;
      std::getline(ls, rest);
      if (mk.empty()) throw std::runtime_error("checkpoint: malformed meta line '" + line + "'");
      const std::size_t pos = rest.find_first_not_of(' ');
      data.metadata.emplace_back(mk, pos == std::string::npos ? "" : rest.substr(pos));
    } else if (key == "tensor") {
      std::string name;
      ls >> name;
      std::vector<int> dims;
      int d = 0;
      while (ls >> d) dims.push_back(d);
      if (name.empty() || dims.empty())
        throw std::runtime_error("checkpoint: malformed tensor line '" + line + "'");
      decls.emplace_back(name, dims);
    } else {
      std::string value;
      if (key.empty() || !(ls >> value))
        throw std::runtime_error("checkpoint: malformed line '" + line + "'");
      kv[key] = value;
    }
  }
  if (!terminated) throw std::runtime_error("checkpoint: missing end marker");

  auto req = [&kv, &path](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error("checkpoint: " + path + " is missing key '" + key + "'");
    return it->second;
  };
  data.config.K = std::stoi(req("K"));
  data.config.k = std::stoi(req("k"));
  data.config.gamma_net = std::stod(req("gamma_net"));
  data.config.tie_kernels = std::stoi(req("tie_kernels")) != 0;
  data.config.hidden = std::stoi(req("hidden"));
  data.num_classes = std::stoi(req("num_classes"));
  validate(data.config);
  if (data.num_classes < 1) throw std::runtime_error("checkpoint: num_classes must be positive");

  const int ch = kNumActions * data.num_classes;
  std::map<std::string, std::vector<int>> expected;
  expected["planner_raw"] = {data.config.k, data.config.k, 1, ch};
  if (!data.config.tie_kernels) expected["filter_raw"] = {data.config.k, data.config.k, 1, ch};
  expected["r1"] = {3, 3, 2, data.config.hidden};
  expected["r2"] = {3, 3, data.config.hidden, kNumActions};
  expected["z1"] = {3, 3, 2, data.config.hidden};
  expected["z2"] = {3, 3, data.config.hidden, kNumObservations};

  std::map<std::string, DTensor> loaded;
  for (const auto& [name, dims] : decls) {
    auto it = expected.find(name);
    if (it == expected.end())
      throw std::runtime_error("checkpoint: unexpected tensor '" + name + "'");
    if (loaded.count(name)) throw std::runtime_error("checkpoint: duplicate tensor '" + name + "'");
    if (dims != it->second)
      throw std::runtime_error("checkpoint: tensor '" + name + "' has the wrong shape");
    std::size_t count = 1;
    for (int d : dims) count *= static_cast<std::size_t>(d);
    std::vector<double> values;
    try {
      values = read_array_le<double>(in, count);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("checkpoint: tensor '" + name + "': " + e.what());
    }
    DTensor t = DTensor::from_vector(dims, std::move(values));
    t.set_requires_grad(true);
    loaded.emplace(name, t);
  }
  for (const auto& [name, dims] : expected)
    if (!loaded.count(name))
      throw std::runtime_error("checkpoint: tensor '" + name + "' is missing");
  if (in.peek() != std::istringstream::traits_type::eof())
    throw std::runtime_error("checkpoint: trailing bytes after the declared tensors");

  data.params.planner_raw = loaded.at("planner_raw");
  if (!data.config.tie_kernels) data.params.filter_raw = loaded.at("filter_raw");
  data.params.r1 = loaded.at("r1");
  data.params.r2 = loaded.at("r2");
  data.params.z1 = loaded.at("z1");
  data.params.z2 = loaded.at("z2");
  return data;
}

}  // namespace transnet
