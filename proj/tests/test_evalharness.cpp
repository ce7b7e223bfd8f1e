#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "transnet/evalharness.hpp"
#include "transnet/io.hpp"

using namespace transnet;
namespace fs = std::filesystem;

namespace {

GridMap open_map(int h, int w) {
  GridMap m;
  m.h = h;
  m.w = w;
  m.cells.assign(static_cast<std::size_t>(h) * w, 0);
  return m;
}

// Kernels saturated onto the true deterministic motion model (per class,
// blocked moves collapse onto stay), a reward image that copies the goal
// channel, and an uninformative observation head. Planning over these is
// shortest-path value iteration, so rollouts on open maps are exact.
TransNetParams perfect_params(const NetConfig& cfg) {
  TransNetParams p;
  p.planner_raw = DTensor({3, 3, 1, 80});
  for (int c = 0; c < 16; ++c)
    for (int a = 0; a < kNumActions; ++a) {
      const bool blocked = (a == kNorth && (c & 1)) || (a == kSouth && (c & 2)) ||
                           (a == kEast && (c & 4)) || (a == kWest && (c & 8));
      int dy = 1, dx = 1;
      if (a != kStay && !blocked) {
        dy += kActionDy[a];
        dx += kActionDx[a];
      }
      p.planner_raw.at(dy, dx, 0, c * kNumActions + a) = 200.0;
    }
  p.filter_raw = p.planner_raw.clone();
  p.r1 = DTensor({3, 3, 2, cfg.hidden});
  p.r1.at(1, 1, 1, 0) = 1.0;  // hidden channel 0 = goal indicator
  p.r2 = DTensor({3, 3, cfg.hidden, kNumActions});
  for (int a = 0; a < kNumActions; ++a) p.r2.at(1, 1, 0, a) = 1.0;
  p.z1 = DTensor({3, 3, 2, cfg.hidden});
  p.z2 = DTensor({3, 3, cfg.hidden, kNumObservations});
  return p;
}

EpisodeRecord make_record(int id, int steps, bool success, int collisions) {
  EpisodeRecord r;
  r.scenario_id = id;
  r.steps = steps;
  r.success = success;
  r.collisions = collisions;
  return r;
}

}  // namespace

TEST_SUITE("evalharness") {

TEST_CASE("metrics match hand computation") {
  SUBCASE("one success in two episodes") {
    const MetricSummary m = metrics({make_record(0, 8, true, 0), make_record(1, 12, false, 0)});
    CHECK(m.sr == 50.0);
    REQUIRE(m.tl.has_value());
    CHECK(*m.tl == 8.0);
    CHECK(m.episodes == 2);
  }
  SUBCASE("all failures leave the trajectory length absent") {
    const MetricSummary m = metrics({make_record(0, 5, false, 1), make_record(1, 5, false, 0)});
    CHECK(m.sr == 0.0);
    CHECK_FALSE(m.tl.has_value());
    CHECK(m.cr == 10.0);
  }
  SUBCASE("three-episode hand enumeration") {
    const MetricSummary m = metrics(
        {make_record(0, 4, true, 1), make_record(1, 6, true, 0), make_record(2, 10, false, 2)});
    CHECK(m.sr == doctest::Approx(200.0 / 3).epsilon(1e-12));
    CHECK(*m.tl == 5.0);
    CHECK(m.cr == 15.0);  // 3 collisions over 20 steps
  }
  SUBCASE("degenerate inputs are rejected") {
    CHECK_THROWS_AS(metrics({}), std::invalid_argument);
    CHECK_THROWS_AS(metrics({make_record(0, 2, false, 3)}), std::invalid_argument);
  }
}

TEST_CASE("eval sets are deterministic and domain-consistent") {
  EvalSetConfig cfg;
  cfg.domain = Domain::kGrid;
  cfg.h = 8;
  cfg.w = 8;
  cfg.count = 6;
  cfg.tasks_per_env = 2;
  cfg.seed = 17;

  const std::vector<EvalScenario> a = make_eval_set(cfg);
  const std::vector<EvalScenario> b = make_eval_set(cfg);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == static_cast<int>(i));
    CHECK(a[i].scenario.start == b[i].scenario.start);
    CHECK(a[i].scenario.goal == b[i].scenario.goal);
    CHECK(a[i].sim_seed == b[i].sim_seed);
    CHECK(a[i].scenario.map.cells == b[i].scenario.map.cells);
    CHECK_FALSE(a[i].scenario.map.gates.has_value());
    CHECK(a[i].scenario.variant == Variant::kStatic);
  }
  CHECK(a[0].scenario.map.cells == a[1].scenario.map.cells);  // shared environment
  CHECK(a[0].scenario.map.cells != a[2].scenario.map.cells);
  CHECK(a[0].sim_seed != a[1].sim_seed);

  EvalSetConfig dyn = cfg;
  dyn.domain = Domain::kDynamic;
  dyn.h = dyn.w = 9;
  dyn.variant = Variant::kV1;
  dyn.count = 2;
  for (const EvalScenario& es : make_eval_set(dyn)) {
    CHECK(es.scenario.map.gates.has_value());
    CHECK(es.scenario.variant == Variant::kV1);
  }

  EvalSetConfig bad = cfg;
  bad.variant = Variant::kV2;
  CHECK_THROWS_AS(make_eval_set(bad), std::invalid_argument);
  bad = dyn;
  bad.variant = Variant::kStatic;
  CHECK_THROWS_AS(make_eval_set(bad), std::invalid_argument);
  bad = cfg;
  bad.count = 0;
  CHECK_THROWS_AS(make_eval_set(bad), std::invalid_argument);
}

TEST_CASE("fixed-map eval sets keep start and goal apart") {
  const GridMap map = open_map(12, 12);
  const std::vector<EvalScenario> set = make_map_eval_set(map, 20, 3);
  REQUIRE(set.size() == 20);
  for (const EvalScenario& es : set) {
    const int dy = std::abs(es.scenario.start / 12 - es.scenario.goal / 12);
    const int dx = std::abs(es.scenario.start % 12 - es.scenario.goal % 12);
    CHECK(dy + dx >= 12);
  }
  const std::vector<EvalScenario> again = make_map_eval_set(map, 20, 3);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(set[i].scenario.start == again[i].scenario.start);
    CHECK(set[i].sim_seed == again[i].sim_seed);
  }

  // two adjacent free cells can never satisfy the separation rule
  GridMap cramped = open_map(4, 4);
  for (std::size_t i = 0; i < cramped.cells.size(); ++i) cramped.cells[i] = i < 2 ? 0 : 1;
  CHECK_THROWS_AS(make_map_eval_set(cramped, 1, 5), std::runtime_error);
}

TEST_CASE("saturated-kernel rollout walks the shortest path") {
  NetConfig cfg;
  cfg.hidden = 4;
  const TransNetParams params = perfect_params(cfg);

  EvalScenario es;
  es.id = 0;
  es.scenario.map = open_map(8, 8);
  es.scenario.start = 1 * 8 + 1;
  es.scenario.goal = 6 * 8 + 6;
  es.scenario.initial_belief.assign(64, 0.0);
  es.scenario.initial_belief[static_cast<std::size_t>(es.scenario.start)] = 1.0;
  es.sim_seed = 77;

  const Policy policy =
      net_policy(params, ClassificationSpec::neighbor4(), cfg, NoiseProfile::deterministic(), 0.0);
  const EpisodeRecord rec = policy(es, default_max_steps(8, 8));
  CHECK(rec.success);
  CHECK(rec.steps == 10);  // L1 distance from (1,1) to (6,6)
  CHECK(rec.collisions == 0);
  REQUIRE(rec.belief_entropy.size() == 10);
  CHECK(rec.belief_entropy.front() == 0.0);   // point belief in
  CHECK(rec.belief_entropy.back() < 1e-12);   // point belief out
  CHECK(rec.actions.size() == 10);

  SUBCASE("zero step budget fails immediately") {
    const EpisodeRecord empty = policy(es, 0);
    CHECK_FALSE(empty.success);
    CHECK(empty.steps == 0);
  }
  SUBCASE("start on goal succeeds with zero steps") {
    EvalScenario trivial = es;
    trivial.scenario.goal = trivial.scenario.start;
    const EpisodeRecord done = policy(trivial, 10);
    CHECK(done.success);
    CHECK(done.steps == 0);
  }
  SUBCASE("reruns reproduce the record exactly") {
    const EpisodeRecord again = policy(es, default_max_steps(8, 8));
    CHECK(again.actions == rec.actions);
    CHECK(again.observations == rec.observations);
    CHECK(again.steps == rec.steps);
  }
}

TEST_CASE("expert policy through the harness clears the quality bar") {
  EvalSetConfig cfg;
  cfg.domain = Domain::kGrid;
  cfg.h = cfg.w = 10;
  cfg.count = 100;
  cfg.tasks_per_env = 10;
  cfg.seed = 29;
  const std::vector<EvalScenario> set = make_eval_set(cfg);
  const Policy expert = expert_policy(NoiseProfile::deterministic(), 0.0);
  const std::vector<EpisodeRecord> records =
      run_policy(expert, set, default_max_steps(10, 10));
  const MetricSummary m = metrics(records);
  CHECK(m.sr >= 90.0);
  CHECK(m.episodes == 100);
  REQUIRE(m.tl.has_value());
  CHECK(*m.tl > 0.0);

  SUBCASE("thread fan-out does not reorder or change records") {
    const std::vector<EpisodeRecord> threaded =
        run_policy(expert, set, default_max_steps(10, 10), 3);
    REQUIRE(threaded.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      CHECK(threaded[i].scenario_id == records[i].scenario_id);
      CHECK(threaded[i].steps == records[i].steps);
      CHECK(threaded[i].actions == records[i].actions);
    }
  }
  SUBCASE("expert reruns are exact") {
    const std::vector<EpisodeRecord> again =
        run_policy(expert, set, default_max_steps(10, 10));
    for (std::size_t i = 0; i < records.size(); ++i) {
      CHECK(again[i].steps == records[i].steps);
      CHECK(again[i].observations == records[i].observations);
    }
  }
}

TEST_CASE("comparisons demand aligned scenario lists") {
  std::vector<EpisodeRecord> a = {make_record(0, 4, true, 0), make_record(1, 6, false, 1)};
  std::vector<EpisodeRecord> b = {make_record(0, 2, true, 0), make_record(1, 6, true, 0)};

  const auto rows = compare({{"transnet", a}, {"baseline", b}, {"expert", b}});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].first == "transnet");
  CHECK(rows[0].second.sr == 50.0);
  CHECK(rows[1].second.sr == 100.0);
  // identical records under two labels give identical rows
  CHECK(rows[1].second.sr == rows[2].second.sr);
  CHECK(*rows[1].second.tl == *rows[2].second.tl);

  std::vector<EpisodeRecord> misnumbered = b;
  misnumbered[1].scenario_id = 7;
  CHECK_THROWS_AS(compare({{"transnet", a}, {"baseline", misnumbered}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(compare({{"transnet", a}, {"baseline", {b[0]}}}), std::invalid_argument);
  CHECK_THROWS_AS(compare({}), std::invalid_argument);
}

TEST_CASE("comparison tables format percentages at one decimal") {
  MetricSummary with_tl;
  with_tl.sr = 66.6666667;
  with_tl.tl = 5.25;
  with_tl.cr = 15.0;
  with_tl.episodes = 3;
  MetricSummary no_tl;
  no_tl.sr = 0.0;
  no_tl.cr = 2.5;
  no_tl.episodes = 4;
  const std::string csv = comparison_csv({{"transnet", with_tl}, {"baseline", no_tl}});
  CHECK(csv ==
        "policy,episodes,sr,tl,cr\n"
        "transnet,3,66.7,5.2,15.0\n"
        "baseline,4,0.0,,2.5\n");
}

TEST_CASE("generalization rollouts scale planning to the map") {
  // policy quality on large maps needs a trained observation model and is
  // covered by the trained-model checks; this pins the harness mechanics
  NetConfig cfg;
  cfg.hidden = 4;
  cfg.K = 10;  // deliberately too small for the map; the harness rescales
  const TransNetParams params = perfect_params(cfg);

  const GridMap big = open_map(16, 16);
  GeneralizationConfig gcfg;
  gcfg.trials = 5;
  gcfg.noise = NoiseProfile::deterministic();
  gcfg.seed = 13;
  const MetricSummary m =
      eval_generalization(params, ClassificationSpec::neighbor4(), cfg, big, gcfg);
  CHECK(m.episodes == 5);
  CHECK(m.cr >= 0.0);
  CHECK(m.cr <= 100.0);

  const MetricSummary again =
      eval_generalization(params, ClassificationSpec::neighbor4(), cfg, big, gcfg);
  CHECK(again.sr == m.sr);
  CHECK(again.cr == m.cr);
  CHECK(again.tl.has_value() == m.tl.has_value());
  if (m.tl) CHECK(*again.tl == *m.tl);

  GeneralizationConfig bad = gcfg;
  bad.trials = 0;
  CHECK_THROWS_AS(eval_generalization(params, ClassificationSpec::neighbor4(), cfg, big, bad),
                  std::invalid_argument);
}

TEST_CASE("kernel export writes a heat image and a matrix") {
  NetConfig cfg;
  cfg.hidden = 4;
  const TransNetParams params = perfect_params(cfg);
  const fs::path dir = fs::temp_directory_path() / "transnet_kernels";
  fs::create_directories(dir);
  const std::string path = (dir / "south.pgm").string();

  export_kernels(params, cfg, 16, kSouth, 0, path);
  const std::string pgm = read_text_file(path);
  REQUIRE(pgm.substr(0, 11) == "P5\n3 3\n255\n");
  REQUIRE(pgm.size() == 11 + 9);
  CHECK(static_cast<unsigned char>(pgm[11 + 7]) == 255);  // south cell saturates

  std::istringstream matrix(read_text_file(path + ".txt"));
  std::vector<double> vals(9);
  for (double& v : vals) matrix >> v;
  double sum = 0.0;
  for (double v : vals) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(vals[7] > 0.999);  // (dy,dx) = (2,1): the south offset

  // with an obstacle to the south the mass stays put instead
  export_kernels(params, cfg, 16, kSouth, 2, path);
  std::istringstream blocked(read_text_file(path + ".txt"));
  for (double& v : vals) blocked >> v;
  CHECK(vals[4] > vals[7]);  // stay beats south

  // the image is a well-formed PGM as far as the map loader is concerned
  const GridMap as_map = load_map(path);
  CHECK(as_map.h == 3);
  CHECK(as_map.w == 3);

  CHECK_THROWS_AS(export_kernels(params, cfg, 16, 5, 0, path), std::invalid_argument);
  CHECK_THROWS_AS(export_kernels(params, cfg, 16, kSouth, 16, path), std::invalid_argument);
}

}  // TEST_SUITE
