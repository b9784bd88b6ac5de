#include "rpil/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <thread>

#include "rpil/binary_io.hpp"

namespace rpil {

namespace {

constexpr char kMagic[4] = {'R', 'P', 'I', 'L'};
constexpr std::uint8_t kFlagReached = 1u << 0;
constexpr std::uint8_t kFlagCollided = 1u << 1;
constexpr std::uint8_t kFlagReverse = 1u << 2;

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double uniform_heading(Rng& rng) { return normalize_angle(kPi - kTwoPi * uniform01(rng)); }

}  // namespace

// --- records -------------------------------------------------------------

Pose RunRecord::goal() const {
  const RecordLayout l{rays()};
  return {records(0, l.goal_col()), records(0, l.goal_col() + 1), records(0, l.goal_col() + 2)};
}

Pose RunRecord::robot_pose(int step) const {
  const RecordLayout l{rays()};
  const int c = l.pose_col();
  return {records(step, c), records(step, c + 1), records(step, c + 2)};
}

WheelSpeeds RunRecord::target(int step) const {
  const RecordLayout l{rays()};
  return {records(step, l.target_col()), records(step, l.target_col() + 1)};
}

Sample RunRecord::sample(int step) const {
  const RecordLayout l{rays()};
  Sample s;
  s.scan.distances = records.row(step).segment(0, l.rays).transpose().cast<double>();
  s.scan.colors.resize(l.rays, 3);
  for (int i = 0; i < l.rays; ++i)
    for (int c = 0; c < 3; ++c) s.scan.colors(i, c) = records(step, l.color_col() + 3 * i + c);
  const int g = l.goal_col();
  s.goal_pose = Pose(records(step, g), records(step, g + 1), records(step, g + 2));
  s.target_wheels = target(step);
  s.robot_pose = robot_pose(step);
  s.run_id = run_id;
  s.step = step;
  return s;
}

std::uint8_t RunRecord::flags() const {
  return (reached_goal ? kFlagReached : 0) | (collided ? kFlagCollided : 0) | (reverse ? kFlagReverse : 0);
}

bool operator==(const RunRecord& a, const RunRecord& b) {
  return a.run_id == b.run_id && a.split == b.split && a.flags() == b.flags() &&
         a.records.rows() == b.records.rows() && a.records.cols() == b.records.cols() &&
         a.records == b.records;
}

const std::vector<RunRecord>& DatasetSplits::split(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train;
    case Split::kValidation:
      return validation;
    case Split::kTest:
      return test;
  }
  throw std::invalid_argument("unknown split");
}

std::size_t DatasetSplits::n_samples() const {
  std::size_t n = 0;
  for (const auto* runs : {&train, &validation, &test})
    for (const auto& r : *runs) n += static_cast<std::size_t>(r.size());
  return n;
}

RunRecord record_run(const Run& run, std::uint32_t run_id, bool reverse) {
  const int n = static_cast<int>(run.size());
  const int rays = n > 0 ? run.scans.front().rays() : 0;
  const RecordLayout l{rays};

  RunRecord rec;
  rec.run_id = run_id;
  rec.reached_goal = run.reached_goal;
  rec.collided = run.collided;
  rec.reverse = reverse;
  rec.records.resize(n, l.width());
  for (int k = 0; k < n; ++k) {
    auto row = rec.records.row(k);
    const ScanFrame& scan = run.scans[k];
    row.segment(0, rays) = scan.distances.transpose().cast<float>();
    for (int i = 0; i < rays; ++i)
      for (int c = 0; c < 3; ++c) row(l.color_col() + 3 * i + c) = static_cast<float>(scan.colors(i, c));
    row.segment(l.goal_col(), 3) << float(run.goal.x), float(run.goal.y), float(run.goal.heading);
    row.segment(l.target_col(), 2) << float(run.wheels[k].left), float(run.wheels[k].right);
    row.segment(l.pose_col(), 3) << float(run.poses[k].x), float(run.poses[k].y), float(run.poses[k].heading);
  }
  return rec;
}

// --- sampling ------------------------------------------------------------

void DatasetConfig::validate() const {
  if (n_runs < 10) throw std::invalid_argument("dataset: n_runs must be >= 10");
  if (!(spawn_max_dist > 0)) throw std::invalid_argument("dataset: spawn_max_dist must be positive");
  if (jobs < 1) throw std::invalid_argument("dataset: jobs must be >= 1");
  control.validate();
  run.validate();
}

Rng run_rng(std::uint64_t seed, std::uint32_t run_id, std::uint32_t attempt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), run_id, attempt};
  return Rng(seq);
}

Pose spawn_pose(Rng& rng, const Pose& goal, double max_dist, const WorldSpec& world, double robot_radius) {
  if (!(max_dist > 0)) throw std::invalid_argument("spawn_pose: max_dist must be positive");
  for (int i = 0; i < kMaxRejections; ++i) {
    const double r = max_dist * std::sqrt(uniform01(rng));
    const double phi = kTwoPi * uniform01(rng);
    const Pose p(goal.x + r * std::cos(phi), goal.y + r * std::sin(phi), uniform_heading(rng));
    if (!collides(p, robot_radius, world)) return p;
  }
  throw std::runtime_error("spawn_pose: no collision-free pose after 10000 draws");
}

bool in_reverse_region(const Pose& pose, const Pose& goal, const WorldSpec& world, double robot_radius) {
  if (!world.horseshoe) return false;
  const HorseshoeDims& d = *world.horseshoe;
  return pose.x > d.inner_x() && pose.x < goal.x + robot_radius && std::abs(pose.y) < d.inner_y();
}

Pose task1_goal() { return {kFixedGoalOffset, 0.0, kPi}; }

Pose task2_goal(Rng& rng, const WorldSpec& world, double robot_radius) {
  constexpr double kIn2 = kRingInner * kRingInner, kOut2 = kRingOuter * kRingOuter;
  for (int i = 0; i < kMaxRejections; ++i) {
    const double r = std::sqrt(kIn2 + (kOut2 - kIn2) * uniform01(rng));
    const double phi = kTwoPi * uniform01(rng);
    const Pose p(r * std::cos(phi), r * std::sin(phi), uniform_heading(rng));
    if (!collides(p, robot_radius, world)) return p;
  }
  throw std::runtime_error("task2_goal: no collision-free goal after 10000 draws");
}

// --- generation ----------------------------------------------------------

RunRecord generate_run(const DatasetConfig& cfg, const WorldSpec& world, std::uint32_t run_id) {
  for (std::uint32_t attempt = 0;; ++attempt) {
    Rng rng = run_rng(cfg.seed, run_id, attempt);
    try {
      const Pose goal = cfg.task == Task::kFixedGoal ? task1_goal() : task2_goal(rng, world, cfg.run.robot_radius);
      const Pose start = spawn_pose(rng, goal, cfg.spawn_max_dist, world, cfg.run.robot_radius);
      // Reverse gear is the fixed-goal overshoot augmentation only.
      const bool reverse =
          cfg.task == Task::kFixedGoal && in_reverse_region(start, goal, world, cfg.run.robot_radius);
      const ControlParams control = cfg.control;
      const double axle = cfg.run.axle;
      const Controller expert = [&](const Pose& robot, const ScanFrame&) {
        return omniscient_wheels(robot, goal, control, reverse, axle);
      };
      return record_run(simulate_run(start, goal, expert, world, cfg.run), run_id, reverse);
    } catch (const std::runtime_error& e) {
      if (attempt >= 16) throw;
      std::cerr << "run " << run_id << " attempt " << attempt << " failed: " << e.what() << "; retrying\n";
    }
  }
}

NormStats compute_norm_stats(const std::vector<RunRecord>& train) {
  Eigen::Array4d sum = Eigen::Array4d::Zero(), sum_sq = Eigen::Array4d::Zero();
  double count = 0;
  for (const auto& run : train) {
    const int rays = run.rays();
    const RecordLayout l{rays};
    for (int k = 0; k < run.size(); ++k) {
      const auto row = run.records.row(k);
      for (int i = 0; i < rays; ++i) {
        const Eigen::Array4d x(row(i), row(l.color_col() + 3 * i), row(l.color_col() + 3 * i + 1),
                               row(l.color_col() + 3 * i + 2));
        sum += x;
        sum_sq += x.square();
      }
      count += rays;
    }
  }
  NormStats stats;
  if (count == 0) return stats;
  const Eigen::Array4d mean = sum / count;
  const Eigen::Array4d var = (sum_sq / count - mean.square()).max(0.0);
  stats.mean = mean.cast<float>();
  stats.std = var.sqrt().max(kStdFloor).cast<float>();
  return stats;
}

DatasetSplits split_runs(std::vector<RunRecord> runs, std::uint64_t seed, int scanner_rays) {
  Rng rng = run_rng(seed, 0xFFFFFFFFu);
  std::shuffle(runs.begin(), runs.end(), rng);

  const auto n = static_cast<long>(runs.size());
  const long n_train = std::lround(0.70 * n);
  const long n_val = std::lround(0.15 * n);

  DatasetSplits out;
  out.scanner_rays = scanner_rays;
  for (long i = 0; i < n; ++i) {
    RunRecord& r = runs[i];
    auto& dst = i < n_train ? out.train : i < n_train + n_val ? out.validation : out.test;
    r.split = i < n_train ? Split::kTrain : i < n_train + n_val ? Split::kValidation : Split::kTest;
    dst.push_back(std::move(r));
  }
  out.norm = compute_norm_stats(out.train);
  return out;
}

DatasetSplits generate(const DatasetConfig& cfg, const WorldSpec& world) {
  cfg.validate();
  world.validate();

  std::vector<RunRecord> runs(cfg.n_runs);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (int i = next++; i < cfg.n_runs; i = next++) {
      try {
        runs[i] = generate_run(cfg, world, static_cast<std::uint32_t>(i));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int jobs = std::min(cfg.jobs, cfg.n_runs);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return split_runs(std::move(runs), cfg.seed, world.scanner_rays);
}

// --- persistence ---------------------------------------------------------

std::string serialize(const DatasetSplits& splits) {
  io::ByteWriter w;
  w.put_bytes({kMagic, 4});
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(splits.n_runs()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(splits.scanner_rays));
  w.put_span<float>({splits.norm.mean.data(), 4});
  w.put_span<float>({splits.norm.std.data(), 4});

  const RecordLayout layout{splits.scanner_rays};
  for (const auto* runs : {&splits.train, &splits.validation, &splits.test}) {
    for (const auto& r : *runs) {
      if (r.size() > 0 && r.records.cols() != layout.width())
        throw DatasetError(DatasetError::Kind::kInvalid, "serialize: record width does not match scanner_rays");
      w.put<std::uint32_t>(r.run_id);
      w.put<std::uint8_t>(static_cast<std::uint8_t>(r.split));
      w.put<std::uint8_t>(r.flags());
      w.put<std::uint32_t>(static_cast<std::uint32_t>(r.size()));
      w.put_span<float>({r.records.data(), static_cast<std::size_t>(r.records.size())});
    }
  }
  const std::uint32_t crc = io::crc32(w.bytes());
  w.put<std::uint32_t>(crc);
  return w.take();
}

DatasetSplits deserialize(std::string_view bytes) {
  using Kind = DatasetError::Kind;
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4))
    throw DatasetError(Kind::kBadHeader, "dataset: bad header (magic bytes are not RPIL)");

  try {
    io::ByteReader rd(bytes);
    rd.get_bytes(4);
    const auto version = rd.get<std::uint32_t>();
    if (version != kDatasetVersion)
      throw DatasetError(Kind::kVersion, "dataset: unsupported format version " + std::to_string(version) +
                                             " (expected " + std::to_string(kDatasetVersion) + ")");
    const auto n_runs = rd.get<std::uint32_t>();
    const auto rays = rd.get<std::uint32_t>();
    if (rays == 0 || rays > (1u << 20)) throw DatasetError(Kind::kBadHeader, "dataset: bad header (scanner_rays)");

    DatasetSplits out;
    out.scanner_rays = static_cast<int>(rays);
    rd.get_span<float>({out.norm.mean.data(), 4});
    rd.get_span<float>({out.norm.std.data(), 4});

    const RecordLayout layout{out.scanner_rays};
    for (std::uint32_t i = 0; i < n_runs; ++i) {
      RunRecord r;
      r.run_id = rd.get<std::uint32_t>();
      const auto tag = rd.get<std::uint8_t>();
      if (tag > 2) throw DatasetError(Kind::kInvalid, "dataset: bad split tag " + std::to_string(tag));
      r.split = static_cast<Split>(tag);
      const auto flags = rd.get<std::uint8_t>();
      r.reached_goal = flags & kFlagReached;
      r.collided = flags & kFlagCollided;
      r.reverse = flags & kFlagReverse;
      const auto n = rd.get<std::uint32_t>();
      if (static_cast<std::size_t>(n) * layout.width() * sizeof(float) > rd.remaining())
        throw io::TruncatedInput("run payload exceeds file size");
      r.records.resize(n, layout.width());
      rd.get_span<float>({r.records.data(), static_cast<std::size_t>(r.records.size())});
      switch (r.split) {
        case Split::kTrain:
          out.train.push_back(std::move(r));
          break;
        case Split::kValidation:
          out.validation.push_back(std::move(r));
          break;
        case Split::kTest:
          out.test.push_back(std::move(r));
          break;
      }
    }
    const std::size_t payload_end = rd.position();
    const auto stored = rd.get<std::uint32_t>();
    if (rd.remaining() != 0) throw DatasetError(Kind::kInvalid, "dataset: trailing bytes after checksum");
    if (stored != io::crc32(bytes.substr(0, payload_end)))
      throw DatasetError(Kind::kChecksum, "dataset: checksum mismatch");
    return out;
  } catch (const io::TruncatedInput& e) {
    throw DatasetError(Kind::kTruncated, std::string("dataset: truncated file (") + e.what() + ")");
  }
}

std::uint32_t save(const DatasetSplits& splits, const std::string& path) {
  const std::string bytes = serialize(splits);
  try {
    io::write_file(path, bytes);
  } catch (const std::runtime_error& e) {
    throw DatasetError(DatasetError::Kind::kIo, e.what());
  }
  std::uint32_t crc;
  std::memcpy(&crc, bytes.data() + bytes.size() - 4, 4);
  return crc;
}

DatasetSplits load(const std::string& path) {
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const std::runtime_error& e) {
    throw DatasetError(DatasetError::Kind::kIo, e.what());
  }
  return deserialize(bytes);
}

}  // namespace rpil
