#include "splatpose/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "splatpose/error.hpp"

namespace splatpose {

double angular_error_deg(const Eigen::Matrix3d& r_est, const Eigen::Matrix3d& r_gt) {
  const double t = (r_gt.transpose() * r_est).trace();
  const double c = std::clamp((t - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

double translation_error_u(const Eigen::Vector3d& t_est, const Eigen::Vector3d& t_gt,
                           double extent) {
  if (!(extent > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "extent must be positive");
  }
  return (t_est - t_gt).norm() / extent;
}

PoseError pose_error(const Eigen::Matrix3d& r_est, const Eigen::Vector3d& t_est,
                     const Eigen::Matrix3d& r_gt, const Eigen::Vector3d& t_gt,
                     double extent) {
  PoseError e;
  e.angular_deg = angular_error_deg(r_est, r_gt);
  e.translation_native = (t_est - t_gt).norm();
  e.translation_u = translation_error_u(t_est, t_gt, extent);
  return e;
}

}  // namespace splatpose
