#include "splatpose/rays.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "splatpose/error.hpp"

namespace splatpose {

namespace {

struct IcoMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;
};

IcoMesh base_icosahedron() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  IcoMesh mesh;
  const double raw[12][3] = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (const auto& v : raw) {
    mesh.vertices.push_back(Eigen::Vector3d(v[0], v[1], v[2]).normalized());
  }
  mesh.faces = {{0, 11, 5},  {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                {1, 5, 9},   {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                {3, 9, 4},   {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                {4, 9, 5},   {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  return mesh;
}

IcoMesh subdivide(const IcoMesh& mesh) {
  IcoMesh out;
  out.vertices = mesh.vertices;
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int idx = static_cast<int>(out.vertices.size());
    out.vertices.push_back(
        (mesh.vertices[a] + mesh.vertices[b]).normalized());
    midpoint.emplace(key, idx);
    return idx;
  };
  for (const auto& f : mesh.faces) {
    const int ab = mid(f[0], f[1]);
    const int bc = mid(f[1], f[2]);
    const int ca = mid(f[2], f[0]);
    out.faces.push_back({f[0], ab, ca});
    out.faces.push_back({f[1], bc, ab});
    out.faces.push_back({f[2], ca, bc});
    out.faces.push_back({ab, bc, ca});
  }
  return out;
}

}  // namespace

std::vector<Eigen::Vector3d> icosphere_vertices(int subdivision_level) {
  if (subdivision_level < 0 || subdivision_level > 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "subdivision_level must be in {0, 1, 2, 3}");
  }
  IcoMesh mesh = base_icosahedron();
  for (int i = 0; i < subdivision_level; ++i) mesh = subdivide(mesh);
  return mesh.vertices;
}

RayBundle cast_rays(const Scene& scene, int subdivision_level, double k_sigma) {
  if (scene.empty()) {
    throw Error(ErrorCode::kEmptyScene, "cast_rays requires a non-empty scene");
  }
  if (!(k_sigma > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "k_sigma must be positive");
  }
  const auto verts = icosphere_vertices(subdivision_level);

  RayBundle bundle;
  bundle.rays.reserve(scene.size() * verts.size());
  bundle.per_ellipsoid_offsets.reserve(scene.size() + 1);
  bundle.per_ellipsoid_offsets.push_back(0);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto& p = scene.primitives()[i];
    const Eigen::Matrix3d rs =
        p.rotation.toRotationMatrix() * p.scale.asDiagonal();
    for (const auto& v : verts) {
      Ray ray;
      const Eigen::Vector3d surface = rs * v;
      ray.origin = p.mean + k_sigma * surface;
      ray.direction = surface.normalized();
      ray.ellipsoid_id = static_cast<int>(i);
      bundle.rays.push_back(std::move(ray));
    }
    bundle.per_ellipsoid_offsets.push_back(bundle.rays.size());
  }
  return bundle;
}

RayBundle subsample_ellipsoids(const RayBundle& bundle, std::size_t max_ellipsoids,
                               std::uint64_t seed) {
  if (max_ellipsoids < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_ellipsoids must be >= 1");
  }
  const std::size_t groups = bundle.group_count();
  if (max_ellipsoids >= groups) {
    return bundle;
  }
  std::vector<std::size_t> indices(groups);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  chosen.reserve(max_ellipsoids);
  std::mt19937_64 rng(seed);
  std::sample(indices.begin(), indices.end(), std::back_inserter(chosen),
              max_ellipsoids, rng);

  RayBundle out;
  out.per_ellipsoid_offsets.push_back(0);
  for (const std::size_t g : chosen) {
    const auto [begin, end] = bundle.group_range(g);
    for (std::size_t i = begin; i < end; ++i) out.rays.push_back(bundle.rays[i]);
    out.per_ellipsoid_offsets.push_back(out.rays.size());
  }
  return out;
}

void dump_rays_csv(const RayBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  out << "ellipsoid_id,ox,oy,oz,dx,dy,dz\n";
  out.precision(17);
  for (const auto& r : bundle.rays) {
    out << r.ellipsoid_id << ',' << r.origin.x() << ',' << r.origin.y() << ','
        << r.origin.z() << ',' << r.direction.x() << ',' << r.direction.y()
        << ',' << r.direction.z() << '\n';
  }
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed: " + path.string());
  }
}

}  // namespace splatpose
