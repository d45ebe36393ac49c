#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mfos/geom.hpp"

namespace mfos::proxy {

using geom::Vec3;

enum class ShapeKind { Cuboid, Ellipsoid, Mesh };

struct TriMesh {
  std::vector<Vec3> vertices;                // object frame, meters
  std::vector<std::array<int, 3>> triangles;
};

// Proxy geometry in the object's reference frame. Cuboid and ellipsoid are
// fully defined by the frame: the cuboid is the cube [-1,1]^3 in reference
// coordinates, the ellipsoid the inscribed unit sphere. Mesh vertices live in
// the object frame (meters).
struct ProxyShape {
  ShapeKind kind = ShapeKind::Cuboid;
  geom::RefFrame frame;
  std::optional<TriMesh> mesh;

  void validate() const;
};

// Dense reference-coordinate map. mask=false pixels carry null (0,0,0)
// coordinates.
struct PointMap {
  int height = 0, width = 0;
  std::vector<float> coords;  // H*W*3 row-major
  std::vector<uint8_t> mask;  // H*W, 1 = shape hit

  PointMap() = default;
  PointMap(int h, int w)
      : height(h), width(w), coords(size_t(h) * w * 3, 0.f), mask(size_t(h) * w, 0) {}

  const float* at(int x, int y) const { return &coords[(size_t(y) * width + x) * 3]; }
  float* at(int x, int y) { return &coords[(size_t(y) * width + x) * 3]; }
  bool hit(int x, int y) const { return mask[size_t(y) * width + x] != 0; }
};

// Nearest nonnegative ray parameter against the cube [-1,1]^3 (slab test).
// dir must be unit length.
std::optional<double> ray_box_hit(const Vec3& origin, const Vec3& dir);

// Nearest nonnegative root of ||origin + t*dir|| = 1. A tangent ray
// (discriminant 0) counts as a hit.
std::optional<double> ray_ellipsoid_hit(const Vec3& origin, const Vec3& dir);

// Moller-Trumbore over a flat triangle list; nearest nonnegative t.
std::optional<double> ray_mesh_hit(const TriMesh& mesh, const Vec3& origin, const Vec3& dir,
                                   Vec3* normal_out = nullptr);

// Surface sample produced by tracing one pixel.
struct SurfacePoint {
  Vec3 ref;         // reference coordinates of the hit
  Vec3 normal_obj;  // unit outward normal, object frame
  int face = -1;    // cuboid face id 0..5 (+x,-x,+y,-y,+z,-z), -1 otherwise
};

// Casts the camera ray through pixel-center (px, py) and intersects the
// posed shape. pose maps object coordinates to camera coordinates.
std::optional<SurfacePoint> trace_pixel(const ProxyShape& shape, const geom::Pose& pose,
                                        const geom::Intrinsics& k, double px, double py);

PointMap render_pointmap(const ProxyShape& shape, const geom::Pose& pose,
                         const geom::Intrinsics& k, int out_h, int out_w);

// Identical rendering path, named for its role as the training target.
PointMap render_target(const ProxyShape& shape, const geom::Pose& gt_pose,
                       const geom::Intrinsics& k, int out_h, int out_w);

}  // namespace mfos::proxy
