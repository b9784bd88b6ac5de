#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpil/control.hpp"
#include "rpil/dataset.hpp"
#include "rpil/nn/network.hpp"
#include "rpil/sim.hpp"

namespace rpil {

/// Coefficient of determination. nullopt when the target is constant (R^2 is
/// undefined); throws std::invalid_argument for fewer than two values.
std::optional<double> r2_score(std::span<const double> pred, std::span<const double> target);

struct RegressionReport {
  std::optional<double> r2_left;
  std::optional<double> r2_right;
  std::optional<double> r2_linear;
  std::optional<double> r2_angular;
};

/// R^2 on wheel speeds and on the (v, omega) they imply. Both matrices are 2 x N
/// with rows (left, right).
RegressionReport regression_report(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double axle);

/// Eval-mode predictions (2 x N) for every sample of `runs`, in index_samples order.
Eigen::MatrixXd predict(const nn::NetworkSpec& spec, const nn::NetworkParams<float>& params,
                        const std::vector<RunRecord>& runs, int chunk = 1024);

/// Stored omniscient targets (2 x N), in index_samples order.
Eigen::MatrixXd targets(const std::vector<RunRecord>& runs);

RegressionReport evaluate_regression(const nn::NetworkSpec& spec, const nn::NetworkParams<float>& params,
                                     const std::vector<RunRecord>& split, double axle);

/// Closed-loop trace of one evaluation run.
struct RolloutRun {
  std::vector<Pose> trajectory;
  std::vector<double> distance_to_goal;
  std::vector<double> heading_error;
  bool reached_goal = false;
  bool collided = false;
  std::optional<int> steps_to_goal;
};

/// Counts of visited positions on a square grid; positions outside the grid
/// are clamped into the border cells so that counts sum to the sample count.
struct Heatmap {
  double lo = -2.5;
  double hi = 2.5;
  double cell = 0.05;
  Eigen::MatrixXi counts;  // (x bin, y bin)

  int bins() const { return static_cast<int>(std::lround((hi - lo) / cell)); }
  Eigen::Vector2i bin(double x, double y) const;
  double center(int i) const { return lo + (i + 0.5) * cell; }
};

struct RolloutReport {
  Pose goal;
  double dt = 0.1;
  std::vector<RolloutRun> runs;
  Heatmap heatmap;

  std::size_t total_samples() const;
  std::vector<Pose> final_positions() const;
};

RolloutRun summarize_run(const Run& run);

/// Runs `controller` from every start, in parallel over starts when jobs > 1.
RolloutReport rollout(const Controller& controller, const WorldSpec& world, const std::vector<Pose>& starts,
                      const Pose& goal, const RunConfig& cfg, int jobs = 1);

/// Network-driven controller: scan (plus goal for goal-conditioned nets) to wheels.
Controller learned_controller(const nn::NetworkSpec& spec, const nn::NetworkParams<float>& params, const Pose& goal);

Controller omniscient_controller(const Pose& goal, const ControlParams& p, double axle, bool reverse = false);

RolloutReport rollout_learned(const nn::NetworkSpec& spec, const nn::NetworkParams<float>& params,
                              const WorldSpec& world, const std::vector<Pose>& starts, const Pose& goal,
                              const RunConfig& cfg, int jobs = 1);

/// `n` poses evenly spaced on a circle around the goal, each facing the goal position.
std::vector<Pose> demo_circle(const Pose& goal, int n = 9, double radius = 1.5);

/// Writes trajectories.csv, distances.csv, final_positions.csv, heatmap.csv
/// and time_to_goal.csv into `out_dir`.
void export_csv(const RolloutReport& report, const std::string& out_dir);

}  // namespace rpil
