#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpil/geom.hpp"

namespace rpil {

using Color = Eigen::Vector3d;

struct ColoredSegment {
  Eigen::Vector2d p1;
  Eigen::Vector2d p2;
  Color color;
};

enum class ObjectVariant : std::uint8_t { kMonochromatic = 0, kPolychromatic = 1 };

/// Outline dimensions of the U-shaped docking object, metres. The opening faces +x
/// and the bounding box is centred on the origin.
struct HorseshoeDims {
  double back_length = 0.40;
  double arm_length = 0.30;
  double thickness = 0.04;
  double gap = 0.22;

  double depth() const { return thickness + arm_length; }
  double back_x() const { return -0.5 * depth(); }
  double inner_x() const { return back_x() + thickness; }
  double tip_x() const { return 0.5 * depth(); }
  double inner_y() const { return 0.5 * gap; }
  double outer_y() const { return 0.5 * gap + thickness; }
};

struct WorldSpec {
  std::vector<ColoredSegment> segments;
  ObjectVariant variant = ObjectVariant::kMonochromatic;
  std::optional<HorseshoeDims> horseshoe;
  Color background_color = Color::Zero();
  double scanner_range = 1.8;
  int scanner_rays = 180;

  void validate() const;
};

/// One 360 degree reading. Ray i points at heading + 2 pi i / rays.
struct ScanFrame {
  Eigen::VectorXd distances;
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> colors;

  int rays() const { return static_cast<int>(distances.size()); }
};

/// What happens when a step would make the robot disc overlap the object.
enum class CollisionResponse : std::uint8_t {
  kStop = 0,   // stay at the pre-step pose
  kSlide = 1,  // push the disc back out along the contact normals
};

struct RunConfig {
  double dt = 0.1;
  int max_steps = 200;
  int settle_steps = 10;
  double pos_tol = 0.001;
  double ang_tol = 0.5 * kPi / 180.0;
  double robot_radius = 0.085;
  double axle = kDefaultAxle;
  double v_wheel_max = 1.0;
  CollisionResponse collision = CollisionResponse::kSlide;

  void validate() const;
};

/// Full trace of one simulation. Sample k is (poses[k], scans[k], wheels[k]):
/// the pose observed at step k and the clamped command issued from it.
struct Run {
  Pose goal;
  std::vector<Pose> poses;
  std::vector<ScanFrame> scans;
  std::vector<WheelSpeeds> wheels;
  bool reached_goal = false;
  bool collided = false;
  std::optional<int> goal_step;  // first step at which at_goal held

  std::size_t size() const { return poses.size(); }
};

/// Maps the current (ground-truth pose, scan) to wheel speeds. Learned
/// controllers ignore the pose.
using Controller = std::function<WheelSpeeds(const Pose&, const ScanFrame&)>;

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

WorldSpec build_horseshoe(ObjectVariant variant, const HorseshoeDims& dims = {});

/// World without any object.
WorldSpec empty_world();

/// Distance along the ray to the segment, if hit.
std::optional<double> ray_segment_hit(const Eigen::Vector2d& origin, const Eigen::Vector2d& dir,
                                      const ColoredSegment& seg);

ScanFrame raycast_scan(const Pose& pose, const WorldSpec& world);

/// Exact unicycle integration of constant wheel speeds over dt.
Pose integrate(const Pose& pose, const WheelSpeeds& w, double axle, double dt);

/// Largest depth by which a disc at `center` overlaps any segment (0 when clear).
double penetration_depth(const Eigen::Vector2d& center, double radius, const WorldSpec& world);

bool collides(const Pose& pose, double radius, const WorldSpec& world);

/// Moves the disc centre out of every overlapping segment. Returns nullopt when
/// a few relaxation passes cannot separate it.
std::optional<Pose> resolve_contact(const Pose& pose, double radius, const WorldSpec& world);

bool at_goal(const Pose& pose, const Pose& goal, const RunConfig& cfg);

/// Scales both wheels by the same factor so that neither exceeds the limit.
WheelSpeeds clamp_wheels(const WheelSpeeds& w, double limit);

Run simulate_run(const Pose& start, const Pose& goal, const Controller& controller, const WorldSpec& world,
                 const RunConfig& cfg);

}  // namespace rpil
