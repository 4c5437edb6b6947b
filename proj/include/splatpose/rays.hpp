#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "splatpose/scene.hpp"

namespace splatpose {

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit norm
  int ellipsoid_id = -1;      // index into Scene::primitives
};

// Rays grouped contiguously by ellipsoid; offsets are CSR-style with
// group_count()+1 entries.
struct RayBundle {
  std::vector<Ray> rays;
  std::vector<std::size_t> per_ellipsoid_offsets;

  std::size_t ray_count() const { return rays.size(); }
  std::size_t group_count() const {
    return per_ellipsoid_offsets.empty() ? 0 : per_ellipsoid_offsets.size() - 1;
  }
  std::pair<std::size_t, std::size_t> group_range(std::size_t g) const {
    return {per_ellipsoid_offsets[g], per_ellipsoid_offsets[g + 1]};
  }
};

// Unit icosphere vertices at subdivision 0..3 (12/42/162/642), deterministic
// ordering.
std::vector<Eigen::Vector3d> icosphere_vertices(int subdivision_level);

// One ray per icosphere vertex per primitive: origin = mu + k_sigma*R*S*v on
// the k-sigma ellipsoid surface, direction = normalize(origin - mu), ordered
// by (primitive index, vertex index).
RayBundle cast_rays(const Scene& scene, int subdivision_level, double k_sigma);

// Uniform without-replacement choice of ellipsoid groups, deterministic per
// seed; kept groups preserve their original relative order.
RayBundle subsample_ellipsoids(const RayBundle& bundle, std::size_t max_ellipsoids,
                               std::uint64_t seed);

// CSV columns: ellipsoid_id, ox, oy, oz, dx, dy, dz.
void dump_rays_csv(const RayBundle& bundle, const std::filesystem::path& path);

}  // namespace splatpose
