#include "sgrl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sgrl::geom {

std::array<Vec3, 8> OrientedBox::corners() const {
  std::array<Vec3, 8> out;
  Vec3 h = extents * 0.5;
  int k = 0;
  for (int i = -1; i <= 1; i += 2)
    for (int j = -1; j <= 1; j += 2)
      for (int l = -1; l <= 1; l += 2)
        out[k++] = center + rotation * Vec3(i * h.x(), j * h.y(), l * h.z());
  return out;
}

bool OrientedBox::contains(const Vec3& p, double tol) const {
  Vec3 local = rotation.transpose() * (p - center);
  Vec3 h = extents * 0.5;
  return std::abs(local.x()) <= h.x() + tol && std::abs(local.y()) <= h.y() + tol &&
         std::abs(local.z()) <= h.z() + tol;
}

void OrientedBox::validate() const {
  check_arg(extents.minCoeff() > 0.0, "box: extents must be positive");
  Mat3 e = rotation * rotation.transpose() - Mat3::Identity();
  check_arg(e.norm() <= 1e-9 && rotation.determinant() > 0.0,
            "box: rotation is not a proper orthonormal matrix");
}

OrientedBox::Aabb OrientedBox::aabb() const {
  Aabb box{Vec3::Constant(std::numeric_limits<double>::infinity()),
           Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const Vec3& c : corners()) {
    box.lo = box.lo.cwiseMin(c);
    box.hi = box.hi.cwiseMax(c);
  }
  return box;
}

OrientedBox translated(const OrientedBox& b, const Vec3& offset) {
  OrientedBox out = b;
  out.center += offset;
  return out;
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

CameraFrame CameraFrame::look_at(const Vec3& pos, const Vec3& target, double fov,
                                 const Vec3& up_hint) {
  Vec3 f = target - pos;
  check_arg(f.norm() > 1e-9, "camera: position equals target");
  f.normalize();
  Vec3 r = f.cross(up_hint);
  check_arg(r.norm() > 1e-9, "camera: forward parallel to up hint");
  r.normalize();
  CameraFrame cam;
  cam.position = pos;
  cam.forward = f;
  cam.right = r;
  cam.up = r.cross(f);
  cam.fov = fov;
  cam.validate();
  return cam;
}

void CameraFrame::validate() const {
  check_arg(fov > 1e-6 && fov < 3.14, "camera: fov out of range");
  auto unit = [](const Vec3& v) { return std::abs(v.norm() - 1.0) <= 1e-9; };
  check_arg(unit(forward) && unit(up) && unit(right), "camera: basis vectors not unit length");
  check_arg(std::abs(forward.dot(up)) <= 1e-9 && std::abs(forward.dot(right)) <= 1e-9 &&
                std::abs(up.dot(right)) <= 1e-9,
            "camera: basis not orthogonal");
}

bool CameraFrame::project(const Vec3& p, double& sx, double& sy, double& depth) const {
  Vec3 d = p - position;
  depth = d.dot(forward);
  if (depth <= 1e-9) return false;
  double t = std::tan(fov * 0.5);
  sx = d.dot(right) / (depth * t);
  sy = d.dot(up) / (depth * t);
  return true;
}

ScreenRect project_box(const CameraFrame& cam, const OrientedBox& box) {
  ScreenRect rect;
  rect.x0 = rect.y0 = std::numeric_limits<double>::infinity();
  rect.x1 = rect.y1 = -std::numeric_limits<double>::infinity();
  for (const Vec3& c : box.corners()) {
    double sx, sy, depth;
    if (!cam.project(c, sx, sy, depth)) return ScreenRect{};
    rect.x0 = std::min(rect.x0, sx);
    rect.x1 = std::max(rect.x1, sx);
    rect.y0 = std::min(rect.y0, sy);
    rect.y1 = std::max(rect.y1, sy);
  }
  rect.valid = true;
  return rect;
}

const char* relation_name(Relation r) {
  switch (r) {
    case Relation::On: return "On";
    case Relation::Under: return "Under";
    case Relation::InFrontOf: return "InFrontOf";
    case Relation::Behind: return "Behind";
    case Relation::Near: return "Near";
    case Relation::Inside: return "Inside";
  }
  return "?";
}

std::optional<Relation> relation_from_name(const std::string& name) {
  for (int i = 0; i < kNumRelations; ++i) {
    Relation r = static_cast<Relation>(i);
    if (name == relation_name(r)) return r;
  }
  return std::nullopt;
}

int RelationSet::count() const {
  int n = 0;
  for (int i = 0; i < kNumRelations; ++i)
    if (bits & (1u << i)) ++n;
  return n;
}

namespace {

// Horizontal (xy) footprint overlap as a fraction of a's footprint area,
// both taken from world-frame AABBs.
double footprint_overlap_ratio(const OrientedBox::Aabb& a, const OrientedBox::Aabb& b) {
  double ax = a.hi.x() - a.lo.x(), ay = a.hi.y() - a.lo.y();
  if (ax <= 0.0 || ay <= 0.0) return 0.0;
  double ix = std::min(a.hi.x(), b.hi.x()) - std::max(a.lo.x(), b.lo.x());
  double iy = std::min(a.hi.y(), b.hi.y()) - std::max(a.lo.y(), b.lo.y());
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  return (ix * iy) / (ax * ay);
}

bool on_top_of(const OrientedBox::Aabb& aa, const OrientedBox::Aabb& bb) {
  double gap = aa.lo.z() - bb.hi.z();
  return std::abs(gap) <= kContactEps && footprint_overlap_ratio(aa, bb) >= kOverlapRatioMin;
}

// P(x, y): x's center projects within y's screen footprint and lies deeper.
bool behind_of(const OrientedBox& x, const OrientedBox& y, const CameraFrame& cam) {
  double sx, sy, dx;
  if (!cam.project(x.center, sx, sy, dx)) return false;
  double tx, ty, dy;
  if (!cam.project(y.center, tx, ty, dy)) return false;
  ScreenRect rect = project_box(cam, y);
  return rect.contains(sx, sy) && dx > dy;
}

bool inside_of(const OrientedBox& a, const OrientedBox& b) {
  for (const Vec3& c : a.corners())
    if (!b.contains(c, 1e-9)) return false;
  return true;
}

}  // namespace

RelationSet relation_between(const OrientedBox& a, const OrientedBox& b, const CameraFrame& cam) {
  a.validate();
  b.validate();
  cam.validate();
  check_arg(!(a.center == b.center && a.extents == b.extents && a.rotation == b.rotation),
            "relation_between: self-relations are undefined");

  RelationSet out;
  OrientedBox::Aabb aa = a.aabb(), bb = b.aabb();
  bool on = on_top_of(aa, bb);
  bool under = on_top_of(bb, aa);
  if (on) out.add(Relation::On);
  if (under) out.add(Relation::Under);
  if (!on && !under) {
    double d = (a.center - b.center).norm();
    if (d <= kNearCoeff * (a.mean_extent() + b.mean_extent())) out.add(Relation::Near);
  }
  if (inside_of(a, b)) out.add(Relation::Inside);
  if (behind_of(a, b, cam)) out.add(Relation::Behind);
  if (behind_of(b, a, cam)) out.add(Relation::InFrontOf);
  return out;
}

bool occludes(const CameraFrame& viewer, const OrientedBox& blocker, const OrientedBox& target) {
  blocker.validate();
  target.validate();
  viewer.validate();

  Vec3 o = blocker.rotation.transpose() * (viewer.position - blocker.center);
  Vec3 d = blocker.rotation.transpose() * (target.center - viewer.position);
  Vec3 h = blocker.extents * 0.5;

  double tmin = 0.0, tmax = 1.0;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-12) {
      if (std::abs(o[i]) > h[i]) return false;
      continue;
    }
    double t1 = (-h[i] - o[i]) / d[i];
    double t2 = (h[i] - o[i]) / d[i];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return false;
  }
  return true;
}

}  // namespace sgrl::geom
