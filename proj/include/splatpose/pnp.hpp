#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "splatpose/camera.hpp"

namespace splatpose {

struct Correspondence2D3D {
  Eigen::Vector2d query_px;
  Eigen::Vector3d world_point;
};

struct RansacConfig {
  double inlier_threshold_px = 2.0;
  double confidence = 0.999;
  int max_iterations = 2000;
  std::uint64_t seed = 0;
  int lm_max_iterations = 50;
  double lm_gradient_tol = 1e-10;
};

struct RefinedPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world-from-camera
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  int inlier_count = 0;
  double inlier_ratio = 0.0;
  double mean_reprojection_error = 0.0;  // px, over the final inlier set
  bool refined = false;
};

struct PosePrior {
  Eigen::Matrix3d rotation;
  Eigen::Vector3d position;
};

// RANSAC over minimal 6-point DLT hypotheses, then Levenberg-Marquardt over
// the inliers (rotation stepped through a 3-vector tangent update).
// Deterministic for a fixed seed. An optional prior pose is evaluated as an
// extra hypothesis. Throws PnpError when no hypothesis reaches 6 inliers.
RefinedPose solve_pnp_ransac(const std::vector<Correspondence2D3D>& correspondences,
                             const PinholeIntrinsics& intrinsics,
                             const RansacConfig& cfg,
                             const std::optional<PosePrior>& prior = std::nullopt);

// Mean pixel reprojection error of `pose` over the given correspondences.
double mean_reprojection_error(const Eigen::Matrix3d& rotation,
                               const Eigen::Vector3d& position,
                               const std::vector<Correspondence2D3D>& correspondences,
                               const PinholeIntrinsics& intrinsics);

}  // namespace splatpose
