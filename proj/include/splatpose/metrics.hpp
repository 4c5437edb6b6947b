#pragma once

#include <Eigen/Dense>

namespace splatpose {

struct PoseError {
  double angular_deg = 0.0;          // in [0, 180]
  double translation_u = 0.0;        // normalized by the scene extent
  double translation_native = 0.0;   // world units
};

// arccos(clamp((trace(R_gt^T R_est) - 1)/2, -1, 1)) in degrees.
double angular_error_deg(const Eigen::Matrix3d& r_est, const Eigen::Matrix3d& r_gt);

// |t_est - t_gt| / extent.
double translation_error_u(const Eigen::Vector3d& t_est, const Eigen::Vector3d& t_gt,
                           double extent);

PoseError pose_error(const Eigen::Matrix3d& r_est, const Eigen::Vector3d& t_est,
                     const Eigen::Matrix3d& r_gt, const Eigen::Vector3d& t_gt,
                     double extent);

}  // namespace splatpose
