#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tiqf/geometry.hpp"

namespace tiqf {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
};

/// Probe ray: start point n and unit direction d.
struct Ray {
  Vec3 origin;
  Vec3 direction;
};

struct Aabb {
  Vec3 min;
  Vec3 max;

  Vec3 extent() const { return max - min; }
  double diagonal() const { return extent().norm(); }
};

struct HitRecord {
  Vec3 point;
  double t;
  int face_index;
};

/// Loads an ASCII OBJ or ASCII PLY mesh. Quads and larger polygons are
/// fan-triangulated. Degenerate faces (area <= 1e-12) are dropped; a warning
/// per dropped face goes to `warnings` when given, and to stderr otherwise.
TriangleMesh load_mesh(const std::string& path,
                       std::vector<std::string>* warnings = nullptr);

Aabb bounding_box(const TriangleMesh& mesh);

/// Nearest hit with t >= 0 over all triangles (Moller-Trumbore per face),
/// barycentric tests widened by eps = 1e-9.
std::optional<HitRecord> ray_mesh_intersect(const Ray& ray, const TriangleMesh& mesh);

/// n surface points, triangle chosen area-weighted, uniform within triangle.
/// Deterministic per seed.
std::vector<Vec3> sample_surface_points(const TriangleMesh& mesh, int n,
                                        std::uint64_t seed);

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Pose& p);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// Closest point on the triangle abc to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c);

/// Exact unsigned distance from p to the triangle soup (linear scan).
double point_mesh_distance(const Vec3& p, const TriangleMesh& mesh);

}  // namespace tiqf
