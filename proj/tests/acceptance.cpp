// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// if any failed. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rpil/control.hpp"
#include "rpil/dataset.hpp"
#include "rpil/eval.hpp"
#include "rpil/nn/gradcheck.hpp"
#include "rpil/nn/train.hpp"
#include "rpil/sim.hpp"

using namespace rpil;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "undefined"; }

// The 200-run datasets of criteria 4, 8 and 9, generated once.
DatasetConfig desk_config(ObjectVariant variant) {
  DatasetConfig cfg;
  cfg.n_runs = 200;
  cfg.seed = 7;
  cfg.variant = variant;
  cfg.jobs = jobs();
  return cfg;
}

const DatasetSplits& desk_dataset(ObjectVariant variant) {
  static std::map<ObjectVariant, DatasetSplits> cache;
  auto it = cache.find(variant);
  if (it == cache.end()) it = cache.emplace(variant, generate(desk_config(variant), build_horseshoe(variant))).first;
  return it->second;
}

// Desk-scale training recipe shared by criteria 8 and 9. Small batches because
// 10k samples at batch 1024 give too few updates per epoch. Patience 40 because
// the eval-mode output of a dropout net carries a bias that wanders from epoch
// to epoch, so the validation loss is noisy and 20 epochs stop on an early fluke.
nn::TrainConfig desk_train_config() {
  nn::TrainConfig tc;
  tc.batch_size = 64;
  tc.patience = 40;
  tc.max_epochs = 150;
  tc.seed = 1;
  return tc;
}

struct Trained {
  nn::NetworkSpec spec;
  nn::TrainResult result;
  double seconds = 0.0;
};

const Trained& desk_model(ObjectVariant world, nn::Variant variant) {
  static std::map<std::pair<ObjectVariant, nn::Variant>, Trained> cache;
  const auto key = std::make_pair(world, variant);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const auto& data = desk_dataset(world);
    Trained t;
    t.spec = nn::NetworkSpec::make(variant, data.scanner_rays);
    const auto t0 = Clock::now();
    t.result = nn::train(data, t.spec, desk_train_config());
    t.seconds = seconds_since(t0);
    it = cache.emplace(key, std::move(t)).first;
  }
  return it->second;
}

// --- 1 ---------------------------------------------------------------------

Outcome convergence() {
  const auto t0 = Clock::now();
  const Pose goal = task1_goal();
  const RunConfig cfg;
  const auto report = rollout(omniscient_controller(goal, ControlParams{}, cfg.axle),
                              build_horseshoe(ObjectVariant::kMonochromatic), demo_circle(goal), goal, cfg);
  const double t = seconds_since(t0);
  int reached = 0, worst = 0;
  for (const auto& r : report.runs) {
    reached += r.reached_goal;
    if (r.steps_to_goal) worst = std::max(worst, *r.steps_to_goal);
  }
  return {reached == 9 && t < 1.0,
          std::to_string(reached) + "/9 reached, slowest at step " + std::to_string(worst) + ", " + fmt(t, 3) + " s"};
}

// --- 2 ---------------------------------------------------------------------

// Position at arclength s along a polyline with cumulative lengths `cum`.
Eigen::Vector2d at_arclength(const std::vector<Pose>& path, const std::vector<double>& cum, double s) {
  const auto it = std::upper_bound(cum.begin(), cum.end(), s);
  if (it == cum.end()) return path.back().position();
  const std::size_t i = std::max<std::ptrdiff_t>(1, it - cum.begin());
  const double seg = cum[i] - cum[i - 1];
  const double a = seg > 0 ? (s - cum[i - 1]) / seg : 0.0;
  return (1 - a) * path[i - 1].position() + a * path[i].position();
}

std::vector<double> cumulative_length(const std::vector<Pose>& path) {
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < path.size(); ++i) cum.push_back(cum.back() + distance(path[i - 1], path[i]));
  return cum;
}

// Largest distance between equal-arclength points of the v_max = 0.1, 0.2 and
// 0.3 paths, over the common length, for all demo poses.
double path_shape_deviation(double dt, int* reached) {
  const Pose goal = task1_goal();
  const WorldSpec world = empty_world();
  RunConfig cfg;
  cfg.dt = dt;
  cfg.max_steps = static_cast<int>(400.0 / dt);  // v_max = 0.1 needs more than the default budget
  double worst = 0.0;
  for (const Pose& start : demo_circle(goal)) {
    std::vector<std::vector<Pose>> paths;
    for (double v : {0.1, 0.2, 0.3}) {
      ControlParams p;
      p.v_max = v;
      const Run run = simulate_run(start, goal, omniscient_controller(goal, p, cfg.axle), world, cfg);
      *reached += run.reached_goal;
      paths.push_back(run.poses);
    }
    std::vector<std::vector<double>> cums;
    for (const auto& p : paths) cums.push_back(cumulative_length(p));
    double length = cums[0].back();
    for (const auto& c : cums) length = std::min(length, c.back());
    for (double s = 0.0; s <= length; s += 0.0005)
      for (std::size_t k = 1; k < paths.size(); ++k)
        worst = std::max(worst, (at_arclength(paths[k], cums[k], s) - at_arclength(paths[0], cums[0], s)).norm());
  }
  return worst;
}

// The invariance is a property of the continuous law. The zero-order hold
// adds an error proportional to v_max * dt (about 3 cm at dt = 0.1 s), so the
// check runs at dt = 0.01 s and the default-period figure is only reported.
Outcome path_shape() {
  int reached = 0, reached_coarse = 0;
  const double fine = path_shape_deviation(0.01, &reached);
  const double coarse = path_shape_deviation(0.1, &reached_coarse);
  return {fine < 0.005 && reached == 27,
          "max deviation " + fmt(fine * 1000.0, 3) + " mm at dt = 0.01 s (" + std::to_string(reached) +
              "/27 runs reached the goal); at dt = 0.1 s: " + fmt(coarse * 1000.0, 3) + " mm"};
}

// --- 3 ---------------------------------------------------------------------

Outcome omega_identity() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> r_dist(1e-3, 3.0), angle(-kPi, kPi);
  const ControlParams p;
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const EgocentricPolar s{r_dist(rng), angle(rng), angle(rng)};
    const Pose goal(0.0, 0.0, 0.0);
    const Pose robot = from_egocentric_polar(s, goal);
    const EgocentricPolar back = to_egocentric_polar(robot, goal);
    const Twist t = control_step(robot, goal, p);
    const double kappa = curvature(back, p);
    const double v = limit_near_goal(linear_velocity(kappa, p), back.r, p.k3);
    const double expect = kappa * v;
    const double rel = std::abs(t.omega - expect) / std::max(std::abs(expect), 1e-300);
    if (expect != 0.0) worst = std::max(worst, rel);
  }
  return {worst <= 1e-9, "max relative error " + fmt(worst, 3) + " on 100000 states"};
}

// --- 4 ---------------------------------------------------------------------

Outcome dataset_generation() {
  const auto t0 = Clock::now();
  const auto& d = desk_dataset(ObjectVariant::kMonochromatic);
  const double t = seconds_since(t0);
  int reached = 0;
  for (const auto* split : {&d.train, &d.validation, &d.test})
    for (const auto& r : *split) reached += r.reached_goal;
  const std::size_t n = d.n_samples();
  const bool sizes = d.train.size() == 140 && d.validation.size() == 30 && d.test.size() == 30;
  const bool count = n >= 200 * 11 && n <= 200 * 201;
  return {reached == 200 && sizes && count && t < 30.0,
          std::to_string(reached) + "/200 reached, split " + std::to_string(d.train.size()) + "/" +
              std::to_string(d.validation.size()) + "/" + std::to_string(d.test.size()) + ", " + std::to_string(n) +
              " samples, " + fmt(t, 3) + " s with " + std::to_string(jobs()) + " thread(s)"};
}

// --- 5 ---------------------------------------------------------------------

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  for (auto v : {nn::Variant::kBaseline, nn::Variant::kMaxpool, nn::Variant::kBaselineDropout,
                 nn::Variant::kMaxpoolDropout, nn::Variant::kTask2})
    for (auto l : {nn::LossKind::kMse, nn::LossKind::kSmoothL1}) {
      const auto r = nn::gradient_check(v, 11, l);
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        where = nn::to_string(v) + "/" + nn::to_string(l) + " " + r.worst_array;
      }
    }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 60.0, "max relative error " + fmt(worst, 3) + " (" + where + "), " + fmt(t, 3) + " s"};
}

// --- 6 ---------------------------------------------------------------------

Outcome shape_chains() {
  const auto b = nn::NetworkSpec::make(nn::Variant::kBaseline);
  const auto m = nn::NetworkSpec::make(nn::Variant::kMaxpool);
  const auto t2 = nn::NetworkSpec::make(nn::Variant::kTask2);
  b.validate();
  m.validate();
  t2.validate();
  const bool ok = b.flatten_size() == 1440 && b.flatten_channels() == 32 && b.stage_widths().back() == 45 &&
                  m.flatten_size() == 1440 && m.flatten_channels() == 96 && m.stage_widths().back() == 15 &&
                  t2.dense_input_size() == 1443;
  return {ok, "baseline " + std::to_string(b.stage_widths().back()) + "x" + std::to_string(b.flatten_channels()) +
                  ", maxpool " + std::to_string(m.stage_widths().back()) + "x" + std::to_string(m.flatten_channels()) +
                  ", goal-conditioned fc1 input " + std::to_string(t2.dense_input_size())};
}

// --- 7 ---------------------------------------------------------------------

Outcome smooth_l1_knee() {
  const double a = nn::smooth_l1_term(0.5), b = nn::smooth_l1_term(1.0), c = nn::smooth_l1_term(2.0);
  const double na = nn::smooth_l1_term(-0.5), nb = nn::smooth_l1_term(-1.0), nc = nn::smooth_l1_term(-2.0);
  const bool ok = a == 0.125 && b == 0.5 && c == 1.5 && na == a && nb == b && nc == c;
  return {ok, "l(0.5)=" + fmt(a) + " l(1)=" + fmt(b) + " l(2)=" + fmt(c)};
}

// --- 8 ---------------------------------------------------------------------

double val_r2_angular(const nn::NetworkSpec& spec, const nn::NetworkParams<float>& params, const DatasetSplits& d,
                      std::optional<double>* out = nullptr) {
  const auto r = evaluate_regression(spec, params, d.validation, kDefaultAxle).r2_angular;
  if (out) *out = r;
  return r.value_or(-std::numeric_limits<double>::infinity());
}

Outcome desk_training() {
  const auto& d = desk_dataset(ObjectVariant::kMonochromatic);
  const auto& trained = desk_model(ObjectVariant::kMonochromatic, nn::Variant::kMaxpoolDropout);

  std::optional<double> r2_trained, r2_untrained;
  val_r2_angular(trained.spec, trained.result.params, d, &r2_trained);
  Rng rng(desk_train_config().seed);
  const auto init = nn::init_params<float>(trained.spec, d.norm, rng);
  val_r2_angular(trained.spec, init, d, &r2_untrained);

  const bool ok = r2_trained && *r2_trained >= 0.3 && (!r2_untrained || *r2_trained > *r2_untrained) &&
                  trained.seconds < 1800.0;

  // Soft expectations, reported only.
  const auto& base = desk_model(ObjectVariant::kMonochromatic, nn::Variant::kBaseline);
  std::optional<double> r2_base;
  val_r2_angular(base.spec, base.result.params, d, &r2_base);
  const auto& poly = desk_model(ObjectVariant::kPolychromatic, nn::Variant::kMaxpoolDropout);
  std::optional<double> r2_poly;
  val_r2_angular(poly.spec, poly.result.params, desk_dataset(ObjectVariant::kPolychromatic), &r2_poly);

  auto soft = [](const std::optional<double>& a, const std::optional<double>& b) {
    return (a && b && *a >= *b) ? "holds" : "does not hold";
  };
  return {ok, "val r2_angular " + fmt_opt(r2_trained) + " (untrained " + fmt_opt(r2_untrained) + "), best epoch " +
                  std::to_string(trained.result.best_epoch) + " of " + std::to_string(trained.result.history.size()) +
                  ", " + fmt(trained.seconds, 4) + " s; soft: maxpool+dropout >= baseline (" + fmt_opt(r2_base) +
                  ") " + soft(r2_trained, r2_base) + ", polychromatic (" + fmt_opt(r2_poly) + ") >= monochromatic " +
                  soft(r2_poly, r2_trained)};
}

// --- 9 ---------------------------------------------------------------------

Outcome rollout_sanity() {
  const auto& poly = desk_model(ObjectVariant::kPolychromatic, nn::Variant::kMaxpoolDropout);
  const Pose goal = task1_goal();
  const RunConfig cfg;
  const auto report = rollout_learned(poly.spec, poly.result.params, build_horseshoe(ObjectVariant::kPolychromatic),
                                      demo_circle(goal), goal, cfg, jobs());
  int close = 0, passed_by = 0;
  std::string finals;
  for (const auto& r : report.runs) {
    const double d = r.distance_to_goal.back();
    close += d < 0.10;
    passed_by += *std::min_element(r.distance_to_goal.begin(), r.distance_to_goal.end()) < 0.10;
    finals += (finals.empty() ? "" : " ") + fmt(d * 100.0, 3);
  }
  // Pass/fail uses the final position; the closest approach is only reported.
  return {close >= 5, std::to_string(close) + "/9 end within 10 cm (desk-scale threshold), " +
                          std::to_string(passed_by) + "/9 pass within 10 cm at some step; final distances cm: " +
                          finals + "; model best epoch " + std::to_string(poly.result.best_epoch) + " of " +
                          std::to_string(poly.result.history.size())};
}

// --- 10 --------------------------------------------------------------------

struct Pipeline {
  std::uint32_t crc = 0;
  std::string history;
  std::optional<double> r2;
};

Pipeline pipeline_once(const std::filesystem::path& dir) {
  DatasetConfig cfg;
  cfg.n_runs = 20;
  cfg.seed = 21;
  cfg.jobs = jobs();
  const WorldSpec world = build_horseshoe(cfg.variant);
  Pipeline p;
  p.crc = save(generate(cfg, world), (dir / "data.bin").string());
  const auto data = load((dir / "data.bin").string());
  nn::TrainConfig tc;
  tc.batch_size = 64;
  tc.max_epochs = 3;
  tc.seed = 21;
  const auto spec = nn::NetworkSpec::make(nn::Variant::kMaxpoolDropout, data.scanner_rays);
  const auto result = nn::train(data, spec, tc);
  p.history = nn::history_csv(result);
  p.r2 = evaluate_regression(spec, result.params, data.validation, kDefaultAxle).r2_angular;
  return p;
}

Outcome determinism() {
  const auto base = std::filesystem::temp_directory_path() / "rpil_acceptance";
  std::filesystem::create_directories(base / "a");
  std::filesystem::create_directories(base / "b");
  const Pipeline a = pipeline_once(base / "a"), b = pipeline_once(base / "b");
  std::filesystem::remove_all(base);
  const bool ok = a.crc == b.crc && a.history == b.history && a.r2 == b.r2;
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", a.crc);
  return {ok, std::string("crc32 ") + crc + (a.crc == b.crc ? " (same)" : " (differs)") + ", history csv " +
                  (a.history == b.history ? "identical" : "differs") + ", eval " + (a.r2 == b.r2 ? "identical" : "differs")};
}

// --- 11 --------------------------------------------------------------------

Outcome scan_equivariance() {
  const WorldSpec world = build_horseshoe(ObjectVariant::kPolychromatic);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-1.5, 1.5), angle(-kPi, kPi);
  const double step = kTwoPi / world.scanner_rays;
  double worst = 0.0;
  int poses = 0;
  while (poses < 100) {
    const Pose p(pos(rng), pos(rng), angle(rng));
    if (collides(p, RunConfig{}.robot_radius, world)) continue;
    ++poses;
    const ScanFrame a = raycast_scan(p, world);
    const ScanFrame b = raycast_scan(rotated(p, step), world);
    const int n = a.rays();
    for (int i = 0; i < n; ++i) {
      const int j = (i + 1) % n;
      worst = std::max(worst, std::abs(b.distances[i] - a.distances[j]));
      worst = std::max(worst, (b.colors.row(i) - a.colors.row(j)).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-9, "max deviation " + fmt(worst, 3) + " on 100 poses (one-index shift)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"controller convergence", convergence},
      {"path-shape invariance", path_shape},
      {"omega = kappa v' identity", omega_identity},
      {"fixed-goal dataset generation", dataset_generation},
      {"gradient checks", gradient_checks},
      {"shape chains", shape_chains},
      {"smooth-L1 knee values", smooth_l1_knee},
      {"desk-scale training", desk_training},
      {"rollout sanity", rollout_sanity},
      {"determinism", determinism},
      {"scan equivariance", scan_equivariance},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << criteria[i].first << ": " << o.detail << " ["
              << fmt(seconds_since(t0), 4) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
