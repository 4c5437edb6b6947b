#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>

#include "splatpose/camera.hpp"
#include "splatpose/rays.hpp"
#include "splatpose/scene.hpp"
#include "splatpose/scoring.hpp"

namespace splatpose {

// At most one ray per ellipsoid; weights are the selected scores
// renormalized to sum 1.
struct SelectedRays {
  std::vector<Ray> rays;
  std::vector<double> weights;
};

struct CoarsePose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d orientation = -Eigen::Vector3d::UnitZ();  // unit viewing direction
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double condition_number = 0.0;
};

// For each ellipsoid keep its highest-scoring ray (ties to the lowest ray
// index), then the K best across ellipsoids (ties to the lowest ellipsoid
// index). Fewer ellipsoids than K: all are taken and a warning is printed.
SelectedRays select_topk(const RayBundle& bundle, std::span<const double> scores,
                         int k);

// Solves the stationarity system of the weighted sum-of-squared-normal-
// distances objective: A p = b with A = sum w_i (I - d_i d_i^T),
// b = sum w_i (I - d_i d_i^T) o_i. Returns the solution and cond(A); throws
// kDegenerateConfiguration when cond(A) > 1e10 (near-parallel rays).
std::pair<Eigen::Vector3d, double> estimate_position(const SelectedRays& sel);

// Diagnostic variant: the plain weighted sum of (I - d d^T) o_i terms with
// no linear solve, for side-by-side comparison with the solved estimate.
Eigen::Vector3d estimate_position_projection_sum(const SelectedRays& sel);

// Q = -sum(w_i d_i) / |sum(w_i d_i)|; throws kAmbiguousOrientation when the
// weighted directions cancel below 1e-9.
Eigen::Vector3d estimate_orientation(const SelectedRays& sel);

// Look-at assembly around the estimated viewing direction.
CoarsePose build_pose(const Eigen::Vector3d& position, const Eigen::Vector3d& q,
                      const Eigen::Vector3d& world_up = Eigen::Vector3d::UnitY());

struct CoarseConfig {
  int k = 100;
  int subdivision_level = 1;
  double k_sigma = 1.0;
  Eigen::Vector3d world_up = Eigen::Vector3d::UnitY();
  bool projection_sum_position = false;
};

using ScoreFn = std::function<ScoreVector(const RayBundle&)>;

// cast -> score -> independent top-K per score kind -> position from the
// s_p selection, orientation from the s_o selection -> pose.
CoarsePose coarse_estimate(const Scene& scene, const ScoreFn& score_fn,
                           const CoarseConfig& cfg);
CoarsePose coarse_estimate(const RayBundle& bundle, const ScoreVector& scores,
                           const CoarseConfig& cfg);

}  // namespace splatpose
