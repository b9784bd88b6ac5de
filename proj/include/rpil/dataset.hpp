#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpil/control.hpp"
#include "rpil/sim.hpp"

namespace rpil {

using Rng = std::mt19937_64;

enum class Task : std::uint8_t { kFixedGoal = 0, kRingGoal = 1 };
enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };

/// Fixed-goal offset in front of the object's arms, metres.
inline constexpr double kFixedGoalOffset = 0.25;
/// Annulus of ring-task goal positions around the object, metres.
inline constexpr double kRingInner = 0.45;
inline constexpr double kRingOuter = 1.2;
inline constexpr double kStdFloor = 1e-6;
inline constexpr int kMaxRejections = 10000;

/// Per-channel (distance, R, G, B) statistics of the training inputs.
struct NormStats {
  Eigen::Array4f mean = Eigen::Array4f::Zero();
  Eigen::Array4f std = Eigen::Array4f::Ones();

  friend bool operator==(const NormStats& a, const NormStats& b) {
    return (a.mean == b.mean).all() && (a.std == b.std).all();
  }
};

/// Decoded view of one recorded sample.
struct Sample {
  ScanFrame scan;
  Pose goal_pose;
  WheelSpeeds target_wheels;
  Pose robot_pose;  // diagnostics only, never a network input
  std::uint32_t run_id = 0;
  int step = 0;
};

using RecordMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Column layout of one f32 sample record:
/// [distances x rays][RGB x rays][goal x, y, theta][target left, right][pose x, y, theta].
struct RecordLayout {
  int rays = 180;

  int width() const { return 4 * rays + 8; }
  int color_col() const { return rays; }
  int goal_col() const { return 4 * rays; }
  int target_col() const { return 4 * rays + 3; }
  int pose_col() const { return 4 * rays + 5; }
};

/// One stored run: header fields plus one record row per sample.
struct RunRecord {
  std::uint32_t run_id = 0;
  Split split = Split::kTrain;
  bool reached_goal = false;
  bool collided = false;
  bool reverse = false;
  RecordMatrix records;

  int size() const { return static_cast<int>(records.rows()); }
  int rays() const { return static_cast<int>((records.cols() - 8) / 4); }
  Sample sample(int step) const;
  Pose goal() const;
  Pose robot_pose(int step) const;
  WheelSpeeds target(int step) const;

  std::uint8_t flags() const;
  friend bool operator==(const RunRecord& a, const RunRecord& b);
};

struct DatasetSplits {
  int scanner_rays = 180;
  NormStats norm;
  std::vector<RunRecord> train;
  std::vector<RunRecord> validation;
  std::vector<RunRecord> test;

  const std::vector<RunRecord>& split(Split s) const;
  std::size_t n_runs() const { return train.size() + validation.size() + test.size(); }
  std::size_t n_samples() const;

  friend bool operator==(const DatasetSplits&, const DatasetSplits&) = default;
};

struct DatasetConfig {
  int n_runs = 200;
  std::uint64_t seed = 1;
  Task task = Task::kFixedGoal;
  ObjectVariant variant = ObjectVariant::kMonochromatic;
  double spawn_max_dist = 2.0;
  ControlParams control;
  RunConfig run;
  int jobs = 1;

  void validate() const;
};

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadHeader, kVersion, kTruncated, kChecksum, kInvalid };
  DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Uniform (area) position within max_dist of the goal, uniform heading,
/// resampled until the robot disc is clear of the object.
Pose spawn_pose(Rng& rng, const Pose& goal, double max_dist, const WorldSpec& world, double robot_radius);

/// Open rectangle between the arms, from the back wall's inner face to
/// goal.x + robot_radius.
bool in_reverse_region(const Pose& pose, const Pose& goal, const WorldSpec& world, double robot_radius);

Pose task1_goal();
Pose task2_goal(Rng& rng, const WorldSpec& world, double robot_radius);

/// Deterministic generator of run `run_id`'s substream; `attempt` selects a
/// fresh substream after a failed run.
Rng run_rng(std::uint64_t seed, std::uint32_t run_id, std::uint32_t attempt = 0);

/// Converts a simulated trace into f32 records.
RunRecord record_run(const Run& run, std::uint32_t run_id, bool reverse);

NormStats compute_norm_stats(const std::vector<RunRecord>& train);

/// Assigns runs to train/validation/test (70/15/15) after a seeded shuffle.
DatasetSplits split_runs(std::vector<RunRecord> runs, std::uint64_t seed, int scanner_rays);

DatasetSplits generate(const DatasetConfig& cfg, const WorldSpec& world);

/// Simulates a single dataset run (goal, spawn, reverse decision, rollout).
RunRecord generate_run(const DatasetConfig& cfg, const WorldSpec& world, std::uint32_t run_id);

inline constexpr std::uint32_t kDatasetVersion = 1;

std::string serialize(const DatasetSplits& splits);
DatasetSplits deserialize(std::string_view bytes);

/// Writes the binary dataset. Returns the trailing CRC32.
std::uint32_t save(const DatasetSplits& splits, const std::string& path);
DatasetSplits load(const std::string& path);

}  // namespace rpil
