#include "rpil/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <locale>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "rpil/nn/train.hpp"

namespace rpil {

std::optional<double> r2_score(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("r2_score: length mismatch");
  if (target.size() < 2) throw std::invalid_argument("r2_score: need at least two values");
  const auto n = static_cast<Eigen::Index>(target.size());
  const Eigen::Map<const Eigen::ArrayXd> p(pred.data(), n), t(target.data(), n);
  const double total = (t - t.mean()).square().sum();
  if (total == 0.0) return std::nullopt;
  return 1.0 - (t - p).square().sum() / total;
}

namespace {

std::optional<double> r2_row(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, Eigen::Index row) {
  const Eigen::VectorXd p = pred.row(row).transpose(), t = target.row(row).transpose();
  return r2_score({p.data(), static_cast<std::size_t>(p.size())}, {t.data(), static_cast<std::size_t>(t.size())});
}

Eigen::MatrixXd to_twists(const Eigen::MatrixXd& wheels, double axle) {
  Eigen::MatrixXd out(2, wheels.cols());
  out.row(0) = 0.5 * (wheels.row(0) + wheels.row(1));
  out.row(1) = (wheels.row(1) - wheels.row(0)) / axle;
  return out;
}

}  // namespace

RegressionReport regression_report(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double axle) {
  if (pred.rows() != 2 || target.rows() != 2 || pred.cols() != target.cols())
    throw std::invalid_argument("regression_report: expected matching 2 x N matrices");
  const Eigen::MatrixXd pt = to_twists(pred, axle), tt = to_twists(target, axle);
  return {r2_row(pred, target, 0), r2_row(pred, target, 1), r2_row(pt, tt, 0), r2_row(pt, tt, 1)};
}

Eigen::MatrixXd predict(const nn::NetworkSpec& spec, const nn::NetworkParams<float>& params,
                        const std::vector<RunRecord>& runs, int chunk) {
  const auto refs = nn::index_samples(runs);
  Eigen::MatrixXd out(2, static_cast<Eigen::Index>(refs.size()));
  for (std::size_t start = 0; start < refs.size(); start += chunk) {
    const std::size_t n = std::min<std::size_t>(chunk, refs.size() - start);
    const auto b = nn::make_batch<float>(runs, std::span(refs).subspan(start, n), spec.input_width);
    const nn::Mat<float> pred =
        nn::forward_batch<float>(spec, params, b.scans, spec.goal_input ? &b.goals : nullptr, nn::Mode::kEval);
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = pred.cast<double>();
  }
  return out;
}

Eigen::MatrixXd targets(const std::vector<RunRecord>& runs) {
  const auto refs = nn::index_samples(runs);
  Eigen::MatrixXd out(2, static_cast<Eigen::Index>(refs.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const WheelSpeeds w = runs[refs[i].run].target(static_cast<int>(refs[i].row));
    out(0, static_cast<Eigen::Index>(i)) = w.left;
    out(1, static_cast<Eigen::Index>(i)) = w.right;
  }
  return out;
}

RegressionReport evaluate_regression(const nn::NetworkSpec& spec, const nn::NetworkParams<float>& params,
                                     const std::vector<RunRecord>& split, double axle) {
  if (split.empty()) throw std::invalid_argument("evaluate_regression: empty split");
  return regression_report(predict(spec, params, split), targets(split), axle);
}

// --- rollouts ------------------------------------------------------------

Eigen::Vector2i Heatmap::bin(double x, double y) const {
  const int n = bins();
  auto index = [&](double v) { return std::clamp(static_cast<int>(std::floor((v - lo) / cell)), 0, n - 1); };
  return {index(x), index(y)};
}

std::size_t RolloutReport::total_samples() const {
  std::size_t n = 0;
  for (const auto& r : runs) n += r.trajectory.size();
  return n;
}

std::vector<Pose> RolloutReport::final_positions() const {
  std::vector<Pose> out;
  for (const auto& r : runs) out.push_back(r.trajectory.empty() ? Pose{} : r.trajectory.back());
  return out;
}

RolloutRun summarize_run(const Run& run) {
  RolloutRun out;
  out.trajectory = run.poses;
  for (const auto& p : run.poses) {
    out.distance_to_goal.push_back(distance(p, run.goal));
    out.heading_error.push_back(heading_error(p, run.goal));
  }
  out.reached_goal = run.reached_goal;
  out.collided = run.collided;
  out.steps_to_goal = run.goal_step;
  return out;
}

RolloutReport rollout(const Controller& controller, const WorldSpec& world, const std::vector<Pose>& starts,
                      const Pose& goal, const RunConfig& cfg, int jobs) {
  RolloutReport report;
  report.goal = goal;
  report.dt = cfg.dt;
  report.runs.resize(starts.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < starts.size(); i = next++) {
      try {
        report.runs[i] = summarize_run(simulate_run(starts[i], goal, controller, world, cfg));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(starts.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < n_threads; ++j) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  const int n = report.heatmap.bins();
  report.heatmap.counts = Eigen::MatrixXi::Zero(n, n);
  for (const auto& r : report.runs)
    for (const auto& p : r.trajectory) {
      const Eigen::Vector2i b = report.heatmap.bin(p.x, p.y);
      ++report.heatmap.counts(b.x(), b.y());
    }
  return report;
}

Controller learned_controller(const nn::NetworkSpec& spec, const nn::NetworkParams<float>& params, const Pose& goal) {
  // The closure owns copies so that it can outlive the caller's model.
  return [spec, params, goal](const Pose&, const ScanFrame& scan) {
    return nn::forward<float>(spec, params, scan, spec.goal_input ? std::optional<Pose>(goal) : std::nullopt);
  };
}

Controller omniscient_controller(const Pose& goal, const ControlParams& p, double axle, bool reverse) {
  return [goal, p, axle, reverse](const Pose& robot, const ScanFrame&) {
    return omniscient_wheels(robot, goal, p, reverse, axle);
  };
}

RolloutReport rollout_learned(const nn::NetworkSpec& spec, const nn::NetworkParams<float>& params,
                              const WorldSpec& world, const std::vector<Pose>& starts, const Pose& goal,
                              const RunConfig& cfg, int jobs) {
  return rollout(learned_controller(spec, params, goal), world, starts, goal, cfg, jobs);
}

std::vector<Pose> demo_circle(const Pose& goal, int n, double radius) {
  std::vector<Pose> out;
  for (int i = 0; i < n; ++i) {
    const double phi = kTwoPi * i / n;
    out.emplace_back(goal.x + radius * std::cos(phi), goal.y + radius * std::sin(phi), phi + kPi);
  }
  return out;
}

// --- CSV -----------------------------------------------------------------

namespace {

std::ostringstream csv_stream() {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s.precision(10);
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("export_csv: cannot open '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("export_csv: write to '" + path.string() + "' failed");
}

}  // namespace

void export_csv(const RolloutReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("export_csv: cannot create '" + out_dir + "': " + ec.message());

  auto traj = csv_stream();
  traj << "run,step,t,x,y,θ\n";
  auto dist = csv_stream();
  dist << "run,step,euclidean,angular\n";
  auto finals = csv_stream();
  finals << "run,x,y,θ,reached_goal,collided\n";
  auto times = csv_stream();
  times << "run,reached_goal,steps_to_goal,time_to_goal\n";

  for (std::size_t r = 0; r < report.runs.size(); ++r) {
    const RolloutRun& run = report.runs[r];
    for (std::size_t k = 0; k < run.trajectory.size(); ++k) {
      const Pose& p = run.trajectory[k];
      traj << r << ',' << k << ',' << double(k) * report.dt << ',' << p.x << ',' << p.y << ',' << p.heading << '\n';
      dist << r << ',' << k << ',' << run.distance_to_goal[k] << ',' << run.heading_error[k] << '\n';
    }
    const Pose last = run.trajectory.empty() ? Pose{} : run.trajectory.back();
    finals << r << ',' << last.x << ',' << last.y << ',' << last.heading << ',' << int(run.reached_goal) << ','
           << int(run.collided) << '\n';
    times << r << ',' << int(run.reached_goal) << ',';
    if (run.steps_to_goal) times << *run.steps_to_goal << ',' << *run.steps_to_goal * report.dt;
    else times << ',';
    times << '\n';
  }

  auto heat = csv_stream();
  heat << "x,y,count\n";
  const Heatmap& h = report.heatmap;
  for (int i = 0; i < h.counts.rows(); ++i)
    for (int j = 0; j < h.counts.cols(); ++j)
      heat << h.center(i) << ',' << h.center(j) << ',' << h.counts(i, j) << '\n';

  write_text(dir / "trajectories.csv", traj.str());
  write_text(dir / "distances.csv", dist.str());
  write_text(dir / "final_positions.csv", finals.str());
  write_text(dir / "heatmap.csv", heat.str());
  write_text(dir / "time_to_goal.csv", times.str());
}

}  // namespace rpil
