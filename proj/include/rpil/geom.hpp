#pragma once

#include <Eigen/Core>
#include <numbers>

namespace rpil {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Below this distance the line of sight to a target is undefined.
inline constexpr double kDegenerateRange = 1e-9;

/// Default differential-drive wheelbase, metres.
inline constexpr double kDefaultAxle = 0.108;

/// Wraps an angle into (-pi, pi]. Throws std::domain_error on non-finite input.
double normalize_angle(double a);

/// Planar pose. Heading is kept in (-pi, pi] by every function that returns one.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  Pose() = default;
  Pose(double x_, double y_, double heading_) : x(x_), y(y_), heading(normalize_angle(heading_)) {}

  Eigen::Vector2d position() const { return {x, y}; }

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Controller state relative to a target: distance r, target heading theta and
/// robot heading delta, both measured from the robot-to-target line of sight.
struct EgocentricPolar {
  double r = 0.0;
  double theta = 0.0;
  double delta = 0.0;
};

struct Twist {
  double v = 0.0;      // m/s, negative in reverse
  double omega = 0.0;  // rad/s
};

struct WheelSpeeds {
  double left = 0.0;
  double right = 0.0;
};

double distance(const Pose& a, const Pose& b);

/// Absolute heading difference in [0, pi].
double heading_error(const Pose& a, const Pose& b);

EgocentricPolar to_egocentric_polar(const Pose& robot, const Pose& target);

/// Inverse of to_egocentric_polar for r above the degenerate range.
Pose from_egocentric_polar(const EgocentricPolar& state, const Pose& target);

WheelSpeeds twist_to_wheels(const Twist& t, double axle = kDefaultAxle);
Twist wheels_to_twist(const WheelSpeeds& w, double axle = kDefaultAxle);

/// Rotates the heading in place by `angle`.
Pose rotated(const Pose& p, double angle);

}  // namespace rpil
