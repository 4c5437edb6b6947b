#pragma once

#include <Eigen/Dense>
#include <filesystem>

namespace splatpose {

struct PinholeIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
};

// Camera convention (fixed project-wide):
//   - rotation is the world-from-camera matrix (columns = camera axes in
//     world coordinates), right-handed, det +1;
//   - the camera looks along its -z axis, so the viewing direction is
//     Q = -rotation.col(2);
//   - camera +x maps to image +u, camera +y maps to image -v (v grows down);
//   - depth is the distance along the viewing axis, positive in front;
//   - pixel (row i, col j) samples the continuous image point (u=j, v=i).
struct Camera {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();

  Eigen::Vector3d viewing_direction() const { return -rotation.col(2); }
  int pixel_count() const { return width * height; }
  PinholeIntrinsics intrinsics() const { return {fx, fy, cx, cy, width, height}; }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation.transpose() * (world - position);
  }
  Eigen::Vector3d to_world(const Eigen::Vector3d& cam) const {
    return rotation * cam + position;
  }

  // (u, v, depth); depth <= 0 means the point is behind the camera.
  Eigen::Vector3d project_point(const Eigen::Vector3d& world) const;

  // Inverts the pinhole model; throws kInvalidDepth for depth <= 0.
  Eigen::Vector3d backproject_pixel(double u, double v, double depth) const;

  // Throws kInvalidArgument if rotation is not orthonormal with det +1
  // (within 1e-9) or fx/fy are not positive.
  void validate() const;
};

// Rotation whose viewing axis (-col(2)) equals the unit direction q, with
// roll fixed by a look-at construction against `up`. Falls back to the next
// canonical axis when q and up are near-parallel.
Eigen::Matrix3d rotation_from_view_direction(const Eigen::Vector3d& q,
                                             const Eigen::Vector3d& up);

Camera make_look_at_camera(const Eigen::Vector3d& position,
                           const Eigen::Vector3d& target,
                           const Eigen::Vector3d& up,
                           const PinholeIntrinsics& intr);

// JSON schema: {fx, fy, cx, cy, width, height, rotation: [9 row-major],
// position: [3]}.
Camera load_camera_json(const std::filesystem::path& path);
void save_camera_json(const Camera& cam, const std::filesystem::path& path);

}  // namespace splatpose
