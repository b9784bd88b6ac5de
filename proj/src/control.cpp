#include "rpil/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rpil {

void ControlParams::validate() const {
  if (!(k1 > 0 && k2 > 0 && k3 > 0 && beta > 0))
    throw std::invalid_argument("control: k1, k2, k3 and beta must be positive");
  if (!(lambda > 1)) throw std::invalid_argument("control: lambda must exceed 1");
  if (!(v_max > 0)) throw std::invalid_argument("control: v_max must be positive");
}

double reference_heading(double theta, double k1) { return std::atan(-k1 * theta); }

double curvature(const EgocentricPolar& s, const ControlParams& p) {
  if (!(s.r > 0)) throw std::domain_error("curvature: singular at r = 0");
  const double kt = p.k1 * s.theta;
  const double heading_gap = normalize_angle(s.delta - reference_heading(s.theta, p.k1));
  return -(p.k2 * heading_gap + (1.0 + p.k1 / (1.0 + kt * kt)) * std::sin(s.theta)) / s.r;
}

double linear_velocity(double kappa, const ControlParams& p) {
  return p.v_max / (1.0 + p.beta * std::pow(std::abs(kappa), p.lambda));
}

double limit_near_goal(double v, double r, double k3) { return std::min(v, k3 * r); }

std::pair<Pose, Pose> flip_for_reverse(const Pose& robot, const Pose& goal) {
  return {rotated(robot, kPi), rotated(goal, kPi)};
}

Twist control_step(const Pose& robot, const Pose& goal, const ControlParams& p, bool reverse) {
  const auto [r, g] = reverse ? flip_for_reverse(robot, goal) : std::pair{robot, goal};
  const EgocentricPolar s = to_egocentric_polar(r, g);
  if (s.r < kDegenerateRange) return {0.0, p.k2 * normalize_angle(g.heading - r.heading)};

  const double kappa = curvature(s, p);
  const double v = limit_near_goal(linear_velocity(kappa, p), s.r, p.k3);
  return {reverse ? -v : v, kappa * v};
}

WheelSpeeds omniscient_wheels(const Pose& robot, const Pose& goal, const ControlParams& p, bool reverse,
                              double axle) {
  return twist_to_wheels(control_step(robot, goal, p, reverse), axle);
}

}  // namespace rpil
