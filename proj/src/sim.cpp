#include "rpil/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace rpil {

namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

// Distinct face colours for the polychromatic object.
constexpr std::array<std::array<double, 3>, 12> kPalette{{
    {1.0, 0.0, 0.0},
    {0.0, 1.0, 0.0},
    {0.0, 0.0, 1.0},
    {1.0, 1.0, 0.0},
    {1.0, 0.0, 1.0},
    {0.0, 1.0, 1.0},
    {1.0, 0.5, 0.0},
    {0.5, 0.0, 1.0},
    {0.0, 0.5, 0.25},
    {0.5, 0.5, 0.5},
    {1.0, 1.0, 1.0},
    {0.5, 0.25, 0.0},
}};

}  // namespace

void WorldSpec::validate() const {
  if (scanner_rays < 1) throw std::invalid_argument("world: scanner_rays must be >= 1");
  if (!(scanner_range > 0)) throw std::invalid_argument("world: scanner_range must be positive");
  for (const auto& s : segments)
    if (s.p1 == s.p2) throw std::invalid_argument("world: degenerate segment");
}

void RunConfig::validate() const {
  if (!(dt > 0)) throw std::invalid_argument("run config: dt must be positive");
  if (!(max_steps >= settle_steps && settle_steps >= 0))
    throw std::invalid_argument("run config: need max_steps >= settle_steps >= 0");
  if (!(pos_tol > 0 && ang_tol > 0)) throw std::invalid_argument("run config: tolerances must be positive");
  if (!(robot_radius >= 0 && axle > 0 && v_wheel_max > 0))
    throw std::invalid_argument("run config: robot_radius, axle and v_wheel_max out of range");
}

WorldSpec build_horseshoe(ObjectVariant variant, const HorseshoeDims& d) {
  const double xb = d.back_x(), xi = d.inner_x(), xt = d.tip_x();
  const double yi = d.inner_y(), yo = d.outer_y(), yb = 0.5 * d.back_length;
  const std::array<Eigen::Vector2d, 12> outline{{
      {xb, -yb}, {xi, -yb}, {xi, -yo}, {xt, -yo}, {xt, -yi}, {xi, -yi},
      {xi, yi},  {xt, yi},  {xt, yo},  {xi, yo},  {xi, yb},  {xb, yb},
  }};

  WorldSpec world;
  world.variant = variant;
  world.horseshoe = d;
  for (std::size_t i = 0; i < outline.size(); ++i) {
    const auto& c = variant == ObjectVariant::kPolychromatic ? kPalette[i] : kPalette[0];
    world.segments.push_back({outline[i], outline[(i + 1) % outline.size()], Color(c[0], c[1], c[2])});
  }
  return world;
}

WorldSpec empty_world() { return {}; }

std::optional<double> ray_segment_hit(const Eigen::Vector2d& origin, const Eigen::Vector2d& dir,
                                      const ColoredSegment& seg) {
  const Eigen::Vector2d edge = seg.p2 - seg.p1;
  const double denom = cross(dir, edge);
  if (std::abs(denom) < 1e-15) return std::nullopt;  // parallel
  const Eigen::Vector2d rel = seg.p1 - origin;
  const double t = cross(rel, edge) / denom;
  const double s = cross(rel, dir) / denom;
  if (t <= 0.0 || s < 0.0 || s > 1.0) return std::nullopt;
  return t;
}

ScanFrame raycast_scan(const Pose& pose, const WorldSpec& world) {
  const int n = world.scanner_rays;
  ScanFrame scan;
  scan.distances.setConstant(n, world.scanner_range);
  scan.colors.resize(n, 3);
  scan.colors.rowwise() = world.background_color.transpose();

  const Eigen::Vector2d origin = pose.position();
  for (int i = 0; i < n; ++i) {
    const double angle = pose.heading + kTwoPi * i / n;
    const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
    for (const auto& seg : world.segments) {
      const auto t = ray_segment_hit(origin, dir, seg);
      if (t && *t < scan.distances[i]) {
        scan.distances[i] = *t;
        scan.colors.row(i) = seg.color.transpose();
      }
    }
  }
  return scan;
}

Pose integrate(const Pose& pose, const WheelSpeeds& w, double axle, double dt) {
  const Twist t = wheels_to_twist(w, axle);
  const double turn = t.omega * dt;
  if (std::abs(t.omega) < 1e-9) {
    return {pose.x + t.v * dt * std::cos(pose.heading), pose.y + t.v * dt * std::sin(pose.heading),
            pose.heading + turn};
  }
  // Chord of the arc: length 2 (v/omega) sin(turn/2), direction heading + turn/2.
  const double half = 0.5 * turn;
  const double chord = t.v * dt * std::sin(half) / half;
  return {pose.x + chord * std::cos(pose.heading + half), pose.y + chord * std::sin(pose.heading + half),
          pose.heading + turn};
}

double penetration_depth(const Eigen::Vector2d& center, double radius, const WorldSpec& world) {
  double depth = 0.0;
  for (const auto& seg : world.segments)
    depth = std::max(depth, radius - point_segment_distance(center, seg.p1, seg.p2));
  return depth;
}

bool collides(const Pose& pose, double radius, const WorldSpec& world) {
  return penetration_depth(pose.position(), radius, world) > 0.0;
}

std::optional<Pose> resolve_contact(const Pose& pose, double radius, const WorldSpec& world) {
  constexpr int kPasses = 8;
  constexpr double kSkin = 1e-12;
  Eigen::Vector2d c = pose.position();
  for (int pass = 0; pass < kPasses; ++pass) {
    bool moved = false;
    for (const auto& seg : world.segments) {
      const Eigen::Vector2d ab = seg.p2 - seg.p1;
      const double t = std::clamp((c - seg.p1).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
      const Eigen::Vector2d away = c - (seg.p1 + t * ab);
      const double dist = away.norm();
      if (dist >= radius) continue;
      if (dist == 0.0) return std::nullopt;
      c += away / dist * (radius - dist + kSkin);
      moved = true;
    }
    if (!moved) return Pose(c.x(), c.y(), pose.heading);
  }
  return std::nullopt;
}

bool at_goal(const Pose& pose, const Pose& goal, const RunConfig& cfg) {
  return distance(pose, goal) < cfg.pos_tol && heading_error(pose, goal) < cfg.ang_tol;
}

WheelSpeeds clamp_wheels(const WheelSpeeds& w, double limit) {
  const double peak = std::max(std::abs(w.left), std::abs(w.right));
  if (peak <= limit) return w;
  const double scale = limit / peak;
  return {w.left * scale, w.right * scale};
}

namespace {

// One collision-checked step. Sets `collided` on contact.
Pose advance(const Pose& pose, const WheelSpeeds& cmd, const WorldSpec& world, const RunConfig& cfg,
             bool& collided) {
  constexpr int kSubsteps = 4;
  Pose current = pose;
  for (int k = 1; k <= kSubsteps; ++k) {
    const Pose next = integrate(current, cmd, cfg.axle, cfg.dt / kSubsteps);
    if (!collides(next, cfg.robot_radius, world)) {
      current = next;
      continue;
    }
    collided = true;
    if (cfg.collision == CollisionResponse::kStop) return pose;
    const auto freed = resolve_contact(next, cfg.robot_radius, world);
    if (!freed || collides(*freed, cfg.robot_radius, world)) return current;
    current = *freed;
  }
  return current;
}

}  // namespace

Run simulate_run(const Pose& start, const Pose& goal, const Controller& controller, const WorldSpec& world,
                 const RunConfig& cfg) {
  Run run;
  run.goal = goal;
  Pose pose = start;
  for (int step = 0; step <= cfg.max_steps; ++step) {
    ScanFrame scan = raycast_scan(pose, world);
    const WheelSpeeds raw = controller(pose, scan);
    if (!std::isfinite(raw.left) || !std::isfinite(raw.right)) {
      std::ostringstream msg;
      msg << "simulate_run: controller produced non-finite wheel speeds (" << raw.left << ", " << raw.right
          << ") at step " << step << ", pose (" << pose.x << ", " << pose.y << ", " << pose.heading << ")";
      throw SimulationError(msg.str());
    }
    const WheelSpeeds cmd = clamp_wheels(raw, cfg.v_wheel_max);

    run.poses.push_back(pose);
    run.scans.push_back(std::move(scan));
    run.wheels.push_back(cmd);

    if (!run.goal_step && at_goal(pose, goal, cfg)) {
      run.goal_step = step;
      run.reached_goal = true;
    }
    if (run.goal_step && step - *run.goal_step >= cfg.settle_steps) break;
    if (step == cfg.max_steps) break;

    pose = advance(pose, cmd, world, cfg, run.collided);
  }
  return run;
}

}  // namespace rpil
