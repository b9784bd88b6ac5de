#pragma once

#include <utility>

#include "rpil/geom.hpp"

namespace rpil {

/// Gains of the smooth pose-stabilization law. Defaults reproduce the demo
/// trajectories; v_max is a free choice.
struct ControlParams {
  double k1 = 1.0;
  double k2 = 3.0;
  double k3 = 2.0;
  double beta = 0.4;
  double lambda = 2.0;
  double v_max = 10.0;

  /// Throws std::invalid_argument when a gain is out of range.
  void validate() const;
};

/// Heading the slow subsystem steers toward: arctan(-k1 * theta).
double reference_heading(double theta, double k1);

/// Path curvature kappa = omega / v for the given state. Requires r > 0.
double curvature(const EgocentricPolar& state, const ControlParams& p);

/// v_max / (1 + beta |kappa|^lambda).
double linear_velocity(double kappa, const ControlParams& p);

/// min(v, k3 r): removes the singularity as the robot closes in.
double limit_near_goal(double v, double r, double k3);

/// Rotates both headings by pi. Used to drive in reverse.
std::pair<Pose, Pose> flip_for_reverse(const Pose& robot, const Pose& goal);

/// Omniscient command for the robot to reach `goal`. With `reverse` the robot
/// backs up to the goal instead of driving forward.
Twist control_step(const Pose& robot, const Pose& goal, const ControlParams& p, bool reverse = false);

/// control_step converted to (unclamped) wheel speeds.
WheelSpeeds omniscient_wheels(const Pose& robot, const Pose& goal, const ControlParams& p, bool reverse,
                              double axle);

}  // namespace rpil
