// Command-line front end: generate, train, eval, rollout, gradcheck.
//
// Every long option doubles as a key of the flat JSON file given with
// --config. File values are applied first, so flags on the command line win.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rpil/binary_io.hpp"
#include "rpil/dataset.hpp"
#include "rpil/eval.hpp"
#include "rpil/nn/gradcheck.hpp"
#include "rpil/nn/model_io.hpp"
#include "rpil/nn/train.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace rpil;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Thrown for semantic problems with the inputs (bad combinations, missing data).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- option groups shared by several subcommands ----------------------------

struct SeedOption {
  std::uint64_t seed = 1;
  CLI::Option* opt = nullptr;

  void add(CLI::App& app) {
    opt = app.add_option("--seed", seed, "RNG seed (falls back to $RPIL_SEED, then 1)");
  }
  // Command line or config file first, then the environment.
  void resolve() {
    if (opt->count() > 0) return;
    if (const char* env = std::getenv("RPIL_SEED")) {
      try {
        std::size_t used = 0;
        seed = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        throw UsageError(std::string("RPIL_SEED is not an unsigned integer: '") + env + "'");
      }
    }
  }
};

struct SimOptions {
  ControlParams control;
  RunConfig run;
  std::string world = "mono";
  double ang_tol_deg = 0.5;
  std::string collision = "slide";
  double scanner_range = 1.8;
  int scanner_rays = 180;

  void add(CLI::App& app) {
    app.add_option("--world", world, "Object colouring")->check(CLI::IsMember({"mono", "poly"}))->capture_default_str();
    app.add_option("--k1", control.k1)->capture_default_str();
    app.add_option("--k2", control.k2)->capture_default_str();
    app.add_option("--k3", control.k3)->capture_default_str();
    app.add_option("--beta", control.beta)->capture_default_str();
    app.add_option("--lambda", control.lambda)->capture_default_str();
    app.add_option("--v-max", control.v_max, "Controller top speed, m/s")->capture_default_str();
    app.add_option("--dt", run.dt, "Control period, s")->capture_default_str();
    app.add_option("--max-steps", run.max_steps)->capture_default_str();
    app.add_option("--settle-steps", run.settle_steps)->capture_default_str();
    app.add_option("--pos-tol", run.pos_tol, "Goal position tolerance, m")->capture_default_str();
    app.add_option("--ang-tol-deg", ang_tol_deg, "Goal heading tolerance, degrees")->capture_default_str();
    app.add_option("--robot-radius", run.robot_radius)->capture_default_str();
    app.add_option("--axle", run.axle, "Wheel separation, m")->capture_default_str();
    app.add_option("--v-wheel-max", run.v_wheel_max, "Wheel speed limit, m/s")->capture_default_str();
    app.add_option("--collision", collision, "Contact response")
        ->check(CLI::IsMember({"stop", "slide"}))
        ->capture_default_str();
    app.add_option("--scanner-range", scanner_range)->capture_default_str();
    app.add_option("--scanner-rays", scanner_rays)->capture_default_str();
  }

  RunConfig run_config() const {
    RunConfig r = run;
    r.ang_tol = ang_tol_deg * kPi / 180.0;
    r.collision = collision == "stop" ? CollisionResponse::kStop : CollisionResponse::kSlide;
    r.validate();
    return r;
  }

  ControlParams control_params() const {
    control.validate();
    return control;
  }

  WorldSpec world_spec() const {
    WorldSpec w = build_horseshoe(world == "poly" ? ObjectVariant::kPolychromatic : ObjectVariant::kMonochromatic);
    w.scanner_range = scanner_range;
    w.scanner_rays = scanner_rays;
    w.validate();
    return w;
  }

  json to_json() const {
    const RunConfig r = run_config();
    return {{"world", world},
            {"k1", control.k1},
            {"k2", control.k2},
            {"k3", control.k3},
            {"beta", control.beta},
            {"lambda", control.lambda},
            {"v-max", control.v_max},
            {"dt", r.dt},
            {"max-steps", r.max_steps},
            {"settle-steps", r.settle_steps},
            {"pos-tol", r.pos_tol},
            {"ang-tol-deg", ang_tol_deg},
            {"robot-radius", r.robot_radius},
            {"axle", r.axle},
            {"v-wheel-max", r.v_wheel_max},
            {"collision", collision},
            {"scanner-range", scanner_range},
            {"scanner-rays", scanner_rays}};
  }
};

// --- small helpers ---------------------------------------------------------------

std::string hex32(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  try {
    io::write_file(path, text);
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt_r2(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << *v;
  return s.str();
}

json norm_json(const NormStats& n) {
  json j;
  j["mean"] = std::vector<float>(n.mean.data(), n.mean.data() + 4);
  j["std"] = std::vector<float>(n.std.data(), n.std.data() + 4);
  return j;
}

Pose goal_from(const std::vector<double>& g) {
  if (g.size() != 3) throw UsageError("--goal takes exactly three values: x y theta");
  return {g[0], g[1], g[2]};
}

// --- generate --------------------------------------------------------------

struct GenerateCmd {
  std::string out;
  std::string task = "fixed";
  int runs = 200;
  double spawn_max_dist = 2.0;
  int jobs = 1;
  SeedOption seed;
  SimOptions sim;

  void add(CLI::App& app) {
    app.add_option("--out", out, "Dataset file to write (a .json sidecar is written next to it)")->required();
    app.add_option("--task", task, "fixed: one goal in front of the object; ring: goals on an annulus")
        ->check(CLI::IsMember({"fixed", "ring"}))
        ->capture_default_str();
    app.add_option("--runs", runs, "Number of simulated runs")->capture_default_str();
    app.add_option("--spawn-max-dist", spawn_max_dist, "Spawn radius around the goal, m")->capture_default_str();
    app.add_option("--jobs", jobs, "Worker threads")->capture_default_str();
    seed.add(app);
    sim.add(app);
  }

  int run() {
    seed.resolve();
    DatasetConfig cfg;
    cfg.n_runs = runs;
    cfg.seed = seed.seed;
    cfg.task = task == "ring" ? Task::kRingGoal : Task::kFixedGoal;
    cfg.spawn_max_dist = spawn_max_dist;
    cfg.jobs = jobs;
    cfg.control = sim.control_params();
    cfg.run = sim.run_config();
    const WorldSpec world = sim.world_spec();
    cfg.variant = world.variant;
    cfg.validate();

    const DatasetSplits d = generate(cfg, world);
    const std::uint32_t crc = save(d, out);

    int reached = 0, collided = 0;
    for (const auto* split : {&d.train, &d.validation, &d.test})
      for (const auto& r : *split) reached += r.reached_goal, collided += r.collided;
    const double n = d.n_runs();

    json side;
    side["command"] = "generate";
    side["seed"] = seed.seed;
    side["task"] = task;
    side["runs"] = runs;
    side["spawn-max-dist"] = spawn_max_dist;
    const json sim_json = sim.to_json();
    for (const auto& [k, v] : sim_json.items()) side[k] = v;
    side["crc32"] = hex32(crc);
    side["samples"] = d.n_samples();
    side["splits"] = {{"train", d.train.size()}, {"validation", d.validation.size()}, {"test", d.test.size()}};
    side["norm"] = norm_json(d.norm);
    write_json(out + ".json", side);

    std::cout << std::fixed << std::setprecision(1) << "runs " << d.n_runs() << "  reached " << 100.0 * reached / n
              << "%  collided " << 100.0 * collided / n << "%  samples " << d.n_samples() << "  split "
              << d.train.size() << '/' << d.validation.size() << '/' << d.test.size() << "  crc32 " << hex32(crc)
              << '\n';
    return kOk;
  }
};

// --- train -----------------------------------------------------------------

struct TrainCmd {
  std::string data, out, history;
  std::string variant = "maxpool_dropout";
  std::string loss = "mse";
  nn::TrainConfig tc;
  SeedOption seed;
  bool quiet = false;

  void add(CLI::App& app) {
    app.add_option("--data", data, "Dataset file")->required();
    app.add_option("--out", out, "Model file to write (a .json sidecar is written next to it)")->required();
    app.add_option("--history", history, "History CSV (default: <out>.history.csv)");
    app.add_option("--variant", variant, "Architecture")
        ->check(CLI::IsMember({"baseline", "maxpool", "baseline_dropout", "maxpool_dropout", "task2"}))
        ->capture_default_str();
    app.add_option("--loss", loss, "Objective")->check(CLI::IsMember({"mse", "smooth_l1"}))->capture_default_str();
    app.add_option("--lr", tc.learning_rate, "Adam learning rate")->capture_default_str();
    app.add_option("--batch", tc.batch_size, "Minibatch size")->capture_default_str();
    app.add_option("--patience", tc.patience, "Epochs without validation improvement before stopping")
        ->capture_default_str();
    app.add_option("--max-epochs", tc.max_epochs)->capture_default_str();
    app.add_flag("--quiet", quiet, "Do not print per-epoch losses");
    seed.add(app);
  }

  int run() {
    seed.resolve();
    tc.seed = seed.seed;
    tc.loss = loss == "smooth_l1" ? nn::LossKind::kSmoothL1 : nn::LossKind::kMse;
    tc.validate();
    if (history.empty()) history = out + ".history.csv";

    const DatasetSplits d = load(data);
    const nn::Variant v = nn::parse_variant(variant);
    const nn::NetworkSpec spec = nn::NetworkSpec::make(v, d.scanner_rays);
    if (spec.goal_input && nn::single_goal(d))
      throw DataError("goal input required: variant " + variant + " is goal-conditioned but every run in '" + data +
                      "' shares one goal; generate with --task ring");

    const auto result = nn::train(d, spec, tc, [&](const nn::EpochStats& s, const nn::NetworkParams<float>&) {
      if (!quiet)
        std::cout << "epoch " << s.epoch << "  train " << s.train_loss << "  val " << s.val_loss << std::endl;
      return true;
    });
    nn::save_model({spec, result.params}, out);
    write_text(history, nn::history_csv(result));

    const std::string data_bytes = io::read_file(data);
    std::uint32_t data_crc;
    std::memcpy(&data_crc, data_bytes.data() + data_bytes.size() - 4, 4);
    json side;
    side["command"] = "train";
    side["data"] = data;
    side["data-crc32"] = hex32(data_crc);
    side["variant"] = variant;
    side["loss"] = loss;
    side["lr"] = tc.learning_rate;
    side["batch"] = tc.batch_size;
    side["patience"] = tc.patience;
    side["max-epochs"] = tc.max_epochs;
    side["seed"] = tc.seed;
    side["adam"] = {{"beta1", tc.adam_beta1}, {"beta2", tc.adam_beta2}, {"eps", tc.adam_eps}};
    side["norm"] = norm_json(d.norm);
    side["norm-source"] = "train split of " + data;
    side["epochs-run"] = result.history.size();
    side["best-epoch"] = result.best_epoch;
    side["best-val-loss"] = result.history.at(result.best_epoch - 1).val_loss;
    write_json(out + ".json", side);

    std::cout << "best epoch " << result.best_epoch << " of " << result.history.size() << "  val "
              << result.history.at(result.best_epoch - 1).val_loss << "  model " << out << '\n';
    return kOk;
  }
};

// --- eval ------------------------------------------------------------------

struct EvalCmd {
  std::string model, data, split = "validation", out;
  std::string untrained;
  double axle = kDefaultAxle;
  SeedOption seed;

  void add(CLI::App& app) {
    app.add_option("--model", model, "Model file");
    app.add_option("--untrained", untrained, "Evaluate a freshly initialised network of this variant instead")
        ->check(CLI::IsMember({"baseline", "maxpool", "baseline_dropout", "maxpool_dropout", "task2"}));
    app.add_option("--data", data, "Dataset file")->required();
    app.add_option("--split", split)->check(CLI::IsMember({"train", "validation", "test"}))->capture_default_str();
    app.add_option("--axle", axle, "Wheel separation used to derive (v, omega)")->capture_default_str();
    app.add_option("--out", out, "Directory for regression.csv");
    seed.add(app);
  }

  int run() {
    seed.resolve();
    if (model.empty() == untrained.empty()) throw UsageError("eval: give exactly one of --model and --untrained");
    const DatasetSplits d = load(data);
    nn::Model m;
    if (!model.empty()) {
      m = nn::load_model(model);
    } else {
      m.spec = nn::NetworkSpec::make(nn::parse_variant(untrained), d.scanner_rays);
      std::mt19937_64 rng(seed.seed);
      m.params = nn::init_params<float>(m.spec, d.norm, rng);
    }
    if (m.spec.input_width != d.scanner_rays) throw DataError("eval: model and dataset disagree on scanner rays");
    const Split s = split == "train" ? Split::kTrain : split == "test" ? Split::kTest : Split::kValidation;
    const auto& runs = d.split(s);
    const auto r = evaluate_regression(m.spec, m.params, runs, axle);

    std::size_t n = 0;
    for (const auto& run : runs) n += run.size();
    std::cout << "split " << split << "  samples " << n << '\n'
              << "r2_left     " << fmt_r2(r.r2_left) << '\n'
              << "r2_right    " << fmt_r2(r.r2_right) << '\n'
              << "r2_linear   " << fmt_r2(r.r2_linear) << '\n'
              << "r2_angular  " << fmt_r2(r.r2_angular) << '\n';
    if (!out.empty()) {
      std::filesystem::create_directories(out);
      std::ostringstream csv;
      csv << "metric,value\n"
          << "r2_left," << fmt_r2(r.r2_left) << '\n'
          << "r2_right," << fmt_r2(r.r2_right) << '\n'
          << "r2_linear," << fmt_r2(r.r2_linear) << '\n'
          << "r2_angular," << fmt_r2(r.r2_angular) << '\n';
      write_text((std::filesystem::path(out) / "regression.csv").string(), csv.str());
    }
    return kOk;
  }
};

// --- rollout ---------------------------------------------------------------

struct RolloutCmd {
  std::string controller = "learned";
  std::string model, out;
  int demo_circle = 9;
  double radius = 1.5;
  std::vector<double> goal;
  int jobs = 1;
  SimOptions sim;

  void add(CLI::App& app) {
    app.add_option("--controller", controller)
        ->check(CLI::IsMember({"learned", "omniscient"}))
        ->capture_default_str();
    app.add_option("--model", model, "Model file (learned controller)");
    app.add_option("--out", out, "Directory for the CSV reports")->required();
    app.add_option("--demo-circle", demo_circle, "Number of start poses on the circle")->capture_default_str();
    app.add_option("--radius", radius, "Start circle radius, m")->capture_default_str();
    app.add_option("--goal", goal, "Goal x y theta (default: the fixed-goal task goal)")->expected(3);
    app.add_option("--jobs", jobs, "Worker threads")->capture_default_str();
    sim.add(app);
  }

  int run() {
    const Pose g = goal.empty() ? task1_goal() : goal_from(goal);
    if (demo_circle < 1) throw UsageError("--demo-circle must be >= 1");
    const WorldSpec world = sim.world_spec();
    const RunConfig cfg = sim.run_config();
    const auto starts = rpil::demo_circle(g, demo_circle, radius);

    RolloutReport report;
    if (controller == "omniscient") {
      report = rollout(omniscient_controller(g, sim.control_params(), cfg.axle), world, starts, g, cfg, jobs);
    } else {
      if (model.empty()) throw UsageError("rollout: --controller learned needs --model");
      const nn::Model m = nn::load_model(model);
      if (m.spec.input_width != world.scanner_rays) throw DataError("rollout: model expects a different scanner");
      report = rollout_learned(m.spec, m.params, world, starts, g, cfg, jobs);
    }
    export_csv(report, out);

    int reached = 0;
    for (std::size_t i = 0; i < report.runs.size(); ++i) {
      const auto& r = report.runs[i];
      reached += r.reached_goal;
      std::cout << "run " << i << "  final distance " << std::fixed << std::setprecision(4)
                << r.distance_to_goal.back() << " m  heading error " << r.heading_error.back() * 180.0 / kPi
                << " deg  " << (r.reached_goal ? "reached" : "not reached") << (r.collided ? "  collided" : "")
                << '\n';
    }
    std::cout << "reached " << reached << '/' << report.runs.size() << "  csv " << out << '\n';
    return kOk;
  }
};

// --- gradcheck -------------------------------------------------------------

struct GradcheckCmd {
  std::string variant = "all";
  std::string loss = "both";
  double tolerance = 1e-4;
  SeedOption seed;

  void add(CLI::App& app) {
    app.add_option("--variant", variant)
        ->check(CLI::IsMember({"all", "baseline", "maxpool", "baseline_dropout", "maxpool_dropout", "task2"}))
        ->capture_default_str();
    app.add_option("--loss", loss)->check(CLI::IsMember({"both", "mse", "smooth_l1"}))->capture_default_str();
    app.add_option("--tolerance", tolerance, "Largest accepted relative error")->capture_default_str();
    seed.add(app);
  }

  int run() {
    seed.resolve();
    std::vector<nn::Variant> variants;
    if (variant == "all")
      variants = {nn::Variant::kBaseline, nn::Variant::kMaxpool, nn::Variant::kBaselineDropout,
                  nn::Variant::kMaxpoolDropout, nn::Variant::kTask2};
    else
      variants = {nn::parse_variant(variant)};
    std::vector<nn::LossKind> losses;
    if (loss != "smooth_l1") losses.push_back(nn::LossKind::kMse);
    if (loss != "mse") losses.push_back(nn::LossKind::kSmoothL1);

    bool ok = true;
    for (auto v : variants)
      for (auto l : losses) {
        const auto r = nn::gradient_check(v, seed.seed, l);
        const bool pass = r.max_rel_error < tolerance;
        ok = ok && pass;
        std::cout << std::left << std::setw(17) << nn::to_string(v) << std::setw(10) << nn::to_string(l)
                  << "max rel error " << std::scientific << std::setprecision(2) << r.max_rel_error << " ("
                  << r.worst_array << ")  " << r.checked << " scalars  " << (pass ? "ok" : "FAIL") << '\n'
                  << std::defaultfloat;
      }
    return ok ? kOk : kNumeric;
  }
};

// --- config file -----------------------------------------------------------

// Converts the JSON config into command-line tokens for `sub`. Unknown keys
// are rejected so that typos do not silently fall back to defaults.
std::vector<std::string> config_tokens(const std::string& path, CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file '" + path + "' must hold a flat JSON object");

  std::vector<std::string> tokens;
  for (const auto& [key, value] : j.items()) {
    if (key == "config") throw UsageError("config file '" + path + "': nested 'config' key");
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError("config file '" + path + "': unknown key '" + key + "' for '" + sub.get_name() + "'");
    }
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (opt->get_expected_min() != 0) throw UsageError("config key '" + key + "' expects a value, not a boolean");
      if (value.get<bool>()) tokens.push_back(flag);
      continue;
    }
    auto scalar = [&](const json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_integer()) return std::to_string(v.get<long long>());
      if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
      if (v.is_number_float()) {
        std::ostringstream s;
        s.imbue(std::locale::classic());
        s << std::setprecision(17) << v.get<double>();
        return s.str();
      }
      throw UsageError("config key '" + key + "' has an unsupported value type");
    };
    tokens.push_back(flag);
    if (value.is_array())
      for (const auto& v : value) tokens.push_back(scalar(v));
    else
      tokens.push_back(scalar(value));
  }
  return tokens;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imitation learning of a pose-stabilising controller from simulated laser scans."};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.footer(
      "Every long option of a subcommand can also be set as a key (without the leading dashes) of the flat JSON\n"
      "object passed with --config. Command-line flags override file values. Exit codes: 0 ok, 1 usage,\n"
      "2 data error, 3 numeric error.");

  GenerateCmd gen;
  TrainCmd trn;
  EvalCmd evl;
  RolloutCmd rol;
  GradcheckCmd grd;
  std::map<std::string, std::function<int()>> actions;
  auto attach = [&](const std::string& name, const std::string& help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", "Flat JSON file with option values");
    cmd.add(*sub);
    actions[name] = [&cmd] { return cmd.run(); };
    return sub;
  };
  attach("generate", "Simulate the omniscient controller and record a dataset", gen);
  attach("train", "Train a network on a dataset", trn);
  attach("eval", "Regression R^2 of a model on a dataset split", evl);
  attach("rollout", "Closed-loop runs from a circle of start poses, exported as CSV", rol);
  attach("gradcheck", "Finite-difference gradient checks on shrunken networks", grd);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    // Splice the config file in front of the subcommand's own flags.
    if (!args.empty() && actions.count(args[0])) {
      CLI::App* sub = app.get_subcommand(args[0]);
      for (std::size_t i = 1; i < args.size(); ++i) {
        std::string path;
        std::size_t consumed = 0;
        if (args[i] == "--config" && i + 1 < args.size()) {
          path = args[i + 1];
          consumed = 2;
        } else if (args[i].rfind("--config=", 0) == 0) {
          path = args[i].substr(9);
          consumed = 1;
        } else {
          continue;
        }
        auto tokens = config_tokens(path, *sub);
        args.erase(args.begin() + long(i), args.begin() + long(i + consumed));
        args.insert(args.begin() + 1, tokens.begin(), tokens.end());
        break;
      }
    }
    std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return actions.at(name)();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const nn::ModelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const nn::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const SimulationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
