#include "tiqf/mesh.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tiqf {

namespace {

constexpr double kRayEps = 1e-9;
constexpr double kDegenerateArea = 1e-12;

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
  throw std::invalid_argument(path + ":" + std::to_string(line) + ": " + what);
}

void warn(std::vector<std::string>* warnings, const std::string& msg) {
  if (warnings != nullptr) {
    warnings->push_back(msg);
  } else {
    std::cerr << "warning: " << msg << "\n";
  }
}

// Appends a polygon as a triangle fan, dropping degenerate triangles.
void add_face(TriangleMesh& mesh, const std::vector<int>& poly,
              const std::string& path, int line, std::vector<std::string>* warnings) {
  const int nv = static_cast<int>(mesh.vertices.size());
  for (int idx : poly) {
    if (idx < 0 || idx >= nv) {
      parse_fail(path, line, "face index out of range");
    }
  }
  if (poly.size() < 3) {
    parse_fail(path, line, "face with fewer than 3 vertices");
  }
  for (size_t k = 2; k < poly.size(); ++k) {
    const std::array<int, 3> tri = {poly[0], poly[static_cast<int>(k) - 1], poly[static_cast<int>(k)]};
    const double area = triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                                      mesh.vertices[tri[2]]);
    if (area <= kDegenerateArea) {
      warn(warnings, path + ":" + std::to_string(line) + ": degenerate face dropped");
      continue;
    }
    mesh.faces.push_back(tri);
  }
}

TriangleMesh load_obj(std::istream& in, const std::string& path,
                      std::vector<std::string>* warnings) {
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') {
      continue;
    }
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) {
        parse_fail(path, lineno, "malformed vertex");
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        // "i", "i/j", "i/j/k", "i//k" -- only the position index matters.
        const size_t slash = tok.find('/');
        if (slash != std::string::npos) {
          tok = tok.substr(0, slash);
        }
        int idx = 0;
        try {
          idx = std::stoi(tok);
        } catch (const std::exception&) {
          parse_fail(path, lineno, "malformed face index '" + tok + "'");
        }
        const int n = static_cast<int>(mesh.vertices.size());
        poly.push_back(idx > 0 ? idx - 1 : n + idx);  // OBJ is 1-based, negatives relative
      }
      add_face(mesh, poly, path, lineno, warnings);
    }
    // Other tags (vn, vt, usemtl, ...) are ignored.
  }
  return mesh;
}

TriangleMesh load_ply(std::istream& in, const std::string& path,
                      std::vector<std::string>* warnings) {
  std::string line;
  int lineno = 1;  // "ply" already consumed
  long n_vertices = -1;
  long n_faces = -1;
  int vertex_props = 0;
  int x_prop = -1;
  bool in_vertex_element = false;
  bool saw_format = false;

  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "comment" || tag.empty()) {
      continue;
    }
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") {
        parse_fail(path, lineno, "only ASCII PLY is supported (got '" + fmt + "')");
      }
      saw_format = true;
    } else if (tag == "element") {
      std::string name;
      long count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        n_vertices = count;
        in_vertex_element = true;
      } else {
        if (name == "face") {
          n_faces = count;
        }
        in_vertex_element = false;
      }
    } else if (tag == "property") {
      if (in_vertex_element) {
        std::string type, name;
        ls >> type >> name;
        if (name == "x") {
          x_prop = vertex_props;
        }
        ++vertex_props;
      }
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!saw_format || n_vertices < 0 || n_faces < 0) {
    parse_fail(path, lineno, "incomplete PLY header");
  }
  if (x_prop < 0 || vertex_props < x_prop + 3) {
    parse_fail(path, lineno, "PLY vertex element lacks x/y/z properties");
  }

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<size_t>(n_vertices));
  for (long i = 0; i < n_vertices; ++i) {
    if (!std::getline(in, line)) {
      parse_fail(path, lineno, "unexpected end of vertex data");
    }
    ++lineno;
    std::istringstream ls(line);
    std::vector<double> vals(static_cast<size_t>(vertex_props));
    for (int k = 0; k < vertex_props; ++k) {
      if (!(ls >> vals[static_cast<size_t>(k)])) {
        parse_fail(path, lineno, "malformed vertex row");
      }
    }
    mesh.vertices.push_back(
        {vals[static_cast<size_t>(x_prop)], vals[static_cast<size_t>(x_prop) + 1],
         vals[static_cast<size_t>(x_prop) + 2]});
  }
  for (long i = 0; i < n_faces; ++i) {
    if (!std::getline(in, line)) {
      parse_fail(path, lineno, "unexpected end of face data");
    }
    ++lineno;
    std::istringstream ls(line);
    int count = 0;
    if (!(ls >> count) || count < 3) {
      parse_fail(path, lineno, "malformed face row");
    }
    std::vector<int> poly(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k) {
      if (!(ls >> poly[static_cast<size_t>(k)])) {
        parse_fail(path, lineno, "malformed face row");
      }
    }
    add_face(mesh, poly, path, lineno, warnings);
  }
  return mesh;
}

}  // namespace

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

TriangleMesh load_mesh(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open mesh file: " + path);
  }
  std::string first;
  if (!std::getline(in, first)) {
    throw std::invalid_argument(path + ":1: empty mesh file");
  }
  TriangleMesh mesh;
  // Strip a possible UTF-8 BOM / CR before sniffing the format.
  while (!first.empty() && (first.back() == '\r' || first.back() == '\n')) {
    first.pop_back();
  }
  if (first == "ply") {
    mesh = load_ply(in, path, warnings);
  } else {
    in.seekg(0);
    mesh = load_obj(in, path, warnings);
  }
  if (mesh.vertices.empty() || mesh.faces.empty()) {
    throw std::invalid_argument(path + ": mesh has no usable geometry");
  }
  return mesh;
}

Aabb bounding_box(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) {
    throw std::invalid_argument("bounding_box: empty mesh");
  }
  Aabb box{mesh.vertices.front(), mesh.vertices.front()};
  for (const Vec3& v : mesh.vertices) {
    box.min = box.min.cwiseMin(v);
    box.max = box.max.cwiseMax(v);
  }
  return box;
}

std::optional<HitRecord> ray_mesh_intersect(const Ray& ray, const TriangleMesh& mesh) {
  double best_t = std::numeric_limits<double>::infinity();
  int best_face = -1;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    const Vec3& a = mesh.vertices[static_cast<size_t>(tri[0])];
    const Vec3 e1 = mesh.vertices[static_cast<size_t>(tri[1])] - a;
    const Vec3 e2 = mesh.vertices[static_cast<size_t>(tri[2])] - a;
    const Vec3 p = ray.direction.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) {
      continue;  // parallel
    }
    const double inv_det = 1.0 / det;
    const Vec3 tv = ray.origin - a;
    const double u = tv.dot(p) * inv_det;
    if (u < -kRayEps || u > 1.0 + kRayEps) {
      continue;
    }
    const Vec3 q = tv.cross(e1);
    const double v = ray.direction.dot(q) * inv_det;
    if (v < -kRayEps || u + v > 1.0 + kRayEps) {
      continue;
    }
    const double t = e2.dot(q) * inv_det;
    if (t >= 0.0 && t < best_t) {
      best_t = t;
      best_face = static_cast<int>(f);
    }
  }
  if (best_face < 0) {
    return std::nullopt;
  }
  return HitRecord{ray.origin + best_t * ray.direction, best_t, best_face};
}

std::vector<Vec3> sample_surface_points(const TriangleMesh& mesh, int n,
                                        std::uint64_t seed) {
  if (n < 1) {
    throw std::invalid_argument("sample_surface_points: n must be >= 1");
  }
  if (mesh.faces.empty()) {
    throw std::invalid_argument("sample_surface_points: empty mesh");
  }
  std::vector<double> areas;
  areas.reserve(mesh.faces.size());
  for (const auto& tri : mesh.faces) {
    areas.push_back(triangle_area(mesh.vertices[static_cast<size_t>(tri[0])],
                                  mesh.vertices[static_cast<size_t>(tri[1])],
                                  mesh.vertices[static_cast<size_t>(tri[2])]));
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<size_t> pick_face(areas.begin(), areas.end());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& tri = mesh.faces[pick_face(rng)];
    const Vec3& a = mesh.vertices[static_cast<size_t>(tri[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(tri[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(tri[2])];
    const double r1 = std::sqrt(uni(rng));
    const double r2 = uni(rng);
    out.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
  }
  return out;
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Pose& p) {
  TriangleMesh out;
  out.vertices = apply_pose(p, mesh.vertices);
  out.faces = mesh.faces;
  return out;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c) {
  // Voronoi-region walk (Ericson, "Real-Time Collision Detection", 5.1.5).
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    return a;
  }
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    return a + (d1 / (d1 - d3)) * ab;
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    return a + (d2 / (d2 - d6)) * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double point_mesh_distance(const Vec3& p, const TriangleMesh& mesh) {
  if (mesh.faces.empty()) {
    throw std::invalid_argument("point_mesh_distance: empty mesh");
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tri : mesh.faces) {
    const Vec3 q = closest_point_on_triangle(p, mesh.vertices[static_cast<size_t>(tri[0])],
                                             mesh.vertices[static_cast<size_t>(tri[1])],
                                             mesh.vertices[static_cast<size_t>(tri[2])]);
    best = std::min(best, (p - q).squaredNorm());
  }
  return std::sqrt(best);
}

}  // namespace tiqf
