#include "rpil/geom.hpp"

#include <cmath>
#include <stdexcept>

namespace rpil {

double normalize_angle(double a) {
  if (!std::isfinite(a)) throw std::domain_error("normalize_angle: non-finite angle");
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

double distance(const Pose& a, const Pose& b) { return std::hypot(b.x - a.x, b.y - a.y); }

double heading_error(const Pose& a, const Pose& b) {
  return std::abs(normalize_angle(a.heading - b.heading));
}

EgocentricPolar to_egocentric_polar(const Pose& robot, const Pose& target) {
  const double dx = target.x - robot.x;
  const double dy = target.y - robot.y;
  const double r = std::hypot(dx, dy);
  if (r < kDegenerateRange) return {r, 0.0, normalize_angle(robot.heading - target.heading)};
  const double los = std::atan2(dy, dx);
  return {r, normalize_angle(target.heading - los), normalize_angle(robot.heading - los)};
}

Pose from_egocentric_polar(const EgocentricPolar& state, const Pose& target) {
  const double los = target.heading - state.theta;
  return {target.x - state.r * std::cos(los), target.y - state.r * std::sin(los), los + state.delta};
}

WheelSpeeds twist_to_wheels(const Twist& t, double axle) {
  const double half = 0.5 * t.omega * axle;
  return {t.v - half, t.v + half};
}

Twist wheels_to_twist(const WheelSpeeds& w, double axle) {
  return {0.5 * (w.left + w.right), (w.right - w.left) / axle};
}

Pose rotated(const Pose& p, double angle) { return {p.x, p.y, p.heading + angle}; }

}  // namespace rpil
