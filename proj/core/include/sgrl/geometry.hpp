#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "sgrl/common.hpp"

namespace sgrl::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Box pose in world frame. extents are full side lengths; rotation columns
// are the box axes.
struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Vec3 extents = Vec3::Ones();
  Mat3 rotation = Mat3::Identity();

  std::array<Vec3, 8> corners() const;
  double mean_extent() const { return (extents.x() + extents.y() + extents.z()) / 3.0; }
  bool contains(const Vec3& p, double tol = 1e-12) const;
  void validate() const;

  struct Aabb {
    Vec3 lo, hi;
  };
  Aabb aabb() const;
};

OrientedBox translated(const OrientedBox& b, const Vec3& offset);
Mat3 axis_angle(const Vec3& axis, double angle);

struct CameraFrame {
  Vec3 position = Vec3::Zero();
  Vec3 forward = Vec3::UnitX();
  Vec3 up = Vec3::UnitZ();
  Vec3 right = -Vec3::UnitY();
  double fov = 1.0471975511965976;  // horizontal, radians

  static CameraFrame look_at(const Vec3& pos, const Vec3& target, double fov,
                             const Vec3& up_hint = Vec3::UnitZ());
  void validate() const;

  // Screen coordinates are FOV-normalized: visible points land in [-1, 1] on
  // both axes (square aspect). Returns false when p is not in front.
  bool project(const Vec3& p, double& sx, double& sy, double& depth) const;
};

// Projected axis-aligned bound of the 8 corners; valid only when every
// corner sits in front of the camera.
struct ScreenRect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool valid = false;
  bool contains(double x, double y) const { return valid && x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

ScreenRect project_box(const CameraFrame& cam, const OrientedBox& box);

enum class Relation : std::uint8_t { On = 0, Under, InFrontOf, Behind, Near, Inside };
constexpr int kNumRelations = 6;
const char* relation_name(Relation r);
std::optional<Relation> relation_from_name(const std::string& name);

// Relations holding for the ordered pair (a, b): On = a rests on b,
// Behind = a is hidden-side of b from the camera, Inside = a within b.
struct RelationSet {
  std::uint8_t bits = 0;
  bool has(Relation r) const { return bits & (1u << static_cast<int>(r)); }
  void add(Relation r) { bits |= (1u << static_cast<int>(r)); }
  int count() const;
  bool empty() const { return bits == 0; }
};

constexpr double kContactEps = 0.01;       // vertical gap tolerance for On
constexpr double kOverlapRatioMin = 0.25;  // of a's horizontal footprint
constexpr double kNearCoeff = 1.5;

RelationSet relation_between(const OrientedBox& a, const OrientedBox& b, const CameraFrame& cam);

// True iff the segment viewer.position -> target.center passes through
// blocker (slab test in blocker frame).
bool occludes(const CameraFrame& viewer, const OrientedBox& blocker, const OrientedBox& target);

}  // namespace sgrl::geom
