#include "mfos/proxy.hpp"

#include <algorithm>
#include <cmath>

#include "mfos/parallel.hpp"

namespace mfos::proxy {

void ProxyShape::validate() const {
  frame.validate();
  if (kind == ShapeKind::Mesh) {
    if (!mesh || mesh->triangles.size() < 4)
      fail(ErrorKind::InvalidShape, "mesh proxy requires at least 4 triangles");
    for (const auto& t : mesh->triangles) {
      for (int i : t) {
        if (i < 0 || size_t(i) >= mesh->vertices.size())
          fail(ErrorKind::InvalidShape, "mesh triangle index out of range");
      }
      const Vec3& a = mesh->vertices[t[0]];
      Vec3 n = (mesh->vertices[t[1]] - a).cross(mesh->vertices[t[2]] - a);
      if (n.norm() < 1e-14) fail(ErrorKind::InvalidShape, "degenerate mesh triangle");
    }
  }
}

std::optional<double> ray_box_hit(const Vec3& origin, const Vec3& dir) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < -1.0 || origin[a] > 1.0) return std::nullopt;  // parallel miss
      continue;
    }
    double inv = 1.0 / dir[a];
    double ta = (-1.0 - origin[a]) * inv;
    double tb = (1.0 - origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (t1 < 0.0) return std::nullopt;
  return t0 >= 0.0 ? t0 : t1;
}

std::optional<double> ray_ellipsoid_hit(const Vec3& origin, const Vec3& dir) {
  // ||o + t d||^2 = 1 with ||d|| = 1
  double b = origin.dot(dir);
  double c = origin.squaredNorm() - 1.0;
  double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  double s = std::sqrt(disc);
  double t_near = -b - s, t_far = -b + s;
  if (t_far < 0.0) return std::nullopt;
  return t_near >= 0.0 ? t_near : t_far;
}

std::optional<double> ray_mesh_hit(const TriMesh& mesh, const Vec3& origin, const Vec3& dir,
                                   Vec3* normal_out) {
  double best = std::numeric_limits<double>::infinity();
  Vec3 best_n = Vec3::Zero();
  for (const auto& tri : mesh.triangles) {
    const Vec3& v0 = mesh.vertices[tri[0]];
    Vec3 e1 = mesh.vertices[tri[1]] - v0;
    Vec3 e2 = mesh.vertices[tri[2]] - v0;
    Vec3 p = dir.cross(e2);
    double det = e1.dot(p);
    if (std::abs(det) < 1e-14) continue;
    double inv = 1.0 / det;
    Vec3 s = origin - v0;
    double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) continue;
    Vec3 q = s.cross(e1);
    double v = dir.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) continue;
    double t = e2.dot(q) * inv;
    if (t < 0.0 || t >= best) continue;
    best = t;
    best_n = e1.cross(e2);
    if (best_n.dot(dir) > 0) best_n = -best_n;  // face the ray
  }
  if (!std::isfinite(best)) return std::nullopt;
  if (normal_out) *normal_out = best_n.normalized();
  return best;
}

namespace {

int cuboid_face(const Vec3& ref) {
  int axis = 0;
  double m = std::abs(ref[0]);
  for (int a = 1; a < 3; ++a) {
    if (std::abs(ref[a]) > m) {
      m = std::abs(ref[a]);
      axis = a;
    }
  }
  return 2 * axis + (ref[axis] >= 0 ? 0 : 1);
}

// Outward normal in the object frame for a surface point with reference
// normal n_ref: directions transform by r * S^-1 (inverse transpose of the
// ref->obj point map x = r S ref + c).
Vec3 obj_normal(const geom::RefFrame& f, const Vec3& n_ref) {
  Vec3 n = f.r * n_ref.cwiseQuotient(f.half_extents);
  return n.normalized();
}

}  // namespace

std::optional<SurfacePoint> trace_pixel(const ProxyShape& shape, const geom::Pose& pose,
                                        const geom::Intrinsics& k, double px, double py) {
  Vec3 d_cam = geom::pixel_ray(k, px, py);
  geom::Pose cam_to_obj = geom::invert(pose);
  Vec3 o_obj = cam_to_obj.t;  // camera center in object frame
  Vec3 d_obj = cam_to_obj.r * d_cam;

  SurfacePoint sp;
  if (shape.kind == ShapeKind::Mesh) {
    Vec3 n_obj;
    auto t = ray_mesh_hit(*shape.mesh, o_obj, d_obj, &n_obj);
    if (!t) return std::nullopt;
    sp.ref = geom::ref_coords(shape.frame, o_obj + *t * d_obj);
    sp.normal_obj = n_obj;
    return sp;
  }

  // Express the ray in reference coordinates; the anisotropic scale changes
  // the parameter but not the hit point or the front-to-back order.
  const geom::RefFrame& f = shape.frame;
  Vec3 o_ref = geom::ref_coords(f, o_obj);
  Vec3 d_ref = (f.r.transposed() * d_obj).cwiseQuotient(f.half_extents);
  double dn = d_ref.norm();
  if (dn < 1e-15) return std::nullopt;
  d_ref /= dn;

  std::optional<double> t;
  if (shape.kind == ShapeKind::Cuboid) {
    t = ray_box_hit(o_ref, d_ref);
  } else {
    t = ray_ellipsoid_hit(o_ref, d_ref);
  }
  if (!t) return std::nullopt;
  sp.ref = o_ref + *t * d_ref;
  if (shape.kind == ShapeKind::Cuboid) {
    sp.face = cuboid_face(sp.ref);
    Vec3 n_ref = Vec3::Zero();
    n_ref[sp.face / 2] = (sp.face % 2 == 0) ? 1.0 : -1.0;
    sp.normal_obj = obj_normal(f, n_ref);
  } else {
    sp.normal_obj = obj_normal(f, sp.ref);  // sphere normal is the point itself
  }
  return sp;
}

PointMap render_pointmap(const ProxyShape& shape, const geom::Pose& pose,
                         const geom::Intrinsics& k, int out_h, int out_w) {
  shape.validate();
  PointMap pm(out_h, out_w);
  parallel_for(out_h, [&](int64_t y0, int64_t y1) {
    for (int64_t y = y0; y < y1; ++y) {
      for (int x = 0; x < out_w; ++x) {
        auto sp = trace_pixel(shape, pose, k, x + 0.5, double(y) + 0.5);
        if (!sp) continue;
        float* c = pm.at(x, int(y));
        c[0] = float(sp->ref.x());
        c[1] = float(sp->ref.y());
        c[2] = float(sp->ref.z());
        pm.mask[size_t(y) * out_w + x] = 1;
      }
    }
  });
  return pm;
}

PointMap render_target(const ProxyShape& shape, const geom::Pose& gt_pose,
                       const geom::Intrinsics& k, int out_h, int out_w) {
  return render_pointmap(shape, gt_pose, k, out_h, out_w);
}

}  // namespace mfos::proxy
