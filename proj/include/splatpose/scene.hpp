#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace splatpose {

// Degree-0 spherical-harmonics basis constant; rgb = 0.5 + kShDc0 * f_dc.
inline constexpr double kShDc0 = 0.28209479177387814;

// One anisotropic 3D Gaussian. Quaternion unit-norm, scales strictly
// positive, opacity and color components in [0, 1].
struct GaussianPrimitive {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  double opacity = 1.0;
  Eigen::Vector3d color_dc = Eigen::Vector3d::Zero();
};

// Sigma = R S S^T R^T. Symmetric positive definite for any valid primitive;
// eigenvalues are the squared scales.
Eigen::Matrix3d covariance(const GaussianPrimitive& p);

// Immutable after construction; safe for concurrent reads.
class Scene {
 public:
  Scene() = default;
  // Normalizes quaternions, validates the remaining invariants and computes
  // the bounding-box extent.
  explicit Scene(std::vector<GaussianPrimitive> primitives);

  const std::vector<GaussianPrimitive>& primitives() const { return primitives_; }
  std::size_t size() const { return primitives_.size(); }
  bool empty() const { return primitives_.empty(); }

  // Largest axis-aligned dimension of the set of means (the unit u).
  // Falls back to the largest scale entry when the means are degenerate.
  double bbox_extent() const { return bbox_extent_; }

 private:
  std::vector<GaussianPrimitive> primitives_;
  double bbox_extent_ = 0.0;
};

// Binary little-endian PLY in the standard 3DGS layout: x,y,z, f_dc_0..2,
// opacity, scale_0..2, rot_0..3 with log-scales and opacity logits on disk.
// Higher-order f_rest_* fields are parsed and ignored.
Scene load_ply(const std::filesystem::path& path);
void save_ply(const Scene& scene, const std::filesystem::path& path);

// Deterministic random scene: means uniform in a cube of side `extent`,
// scales log-uniform in [0.005, 0.05]*extent, opacities in [0.3, 1.0].
Scene synth_scene(std::uint64_t seed, int n, double extent);

}  // namespace splatpose
