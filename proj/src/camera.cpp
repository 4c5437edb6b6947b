#include "splatpose/camera.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "splatpose/error.hpp"

namespace splatpose {

Eigen::Vector3d Camera::project_point(const Eigen::Vector3d& world) const {
  const Eigen::Vector3d cam = to_camera(world);
  const double depth = -cam.z();
  if (depth <= 0.0) {
    return {0.0, 0.0, depth};
  }
  return {cx + fx * cam.x() / depth, cy - fy * cam.y() / depth, depth};
}

Eigen::Vector3d Camera::backproject_pixel(double u, double v, double depth) const {
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::kInvalidDepth, "backproject_pixel requires depth > 0");
  }
  const Eigen::Vector3d cam((u - cx) * depth / fx, -(v - cy) * depth / fy, -depth);
  return to_world(cam);
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "rotation is not a proper orthonormal matrix");
  }
}

Eigen::Matrix3d rotation_from_view_direction(const Eigen::Vector3d& q,
                                             const Eigen::Vector3d& up) {
  const Eigen::Vector3d f = q.normalized();
  const Eigen::Vector3d candidates[4] = {up, Eigen::Vector3d::UnitY(),
                                         Eigen::Vector3d::UnitZ(),
                                         Eigen::Vector3d::UnitX()};
  Eigen::Vector3d right = Eigen::Vector3d::Zero();
  for (const auto& axis : candidates) {
    const Eigen::Vector3d c = f.cross(axis);
    if (c.norm() >= 1e-6) {
      right = c.normalized();
      break;
    }
  }
  const Eigen::Vector3d true_up = right.cross(f);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = true_up;
  r.col(2) = -f;
  return r;
}

Camera make_look_at_camera(const Eigen::Vector3d& position,
                           const Eigen::Vector3d& target,
                           const Eigen::Vector3d& up,
                           const PinholeIntrinsics& intr) {
  Camera cam;
  cam.fx = intr.fx;
  cam.fy = intr.fy;
  cam.cx = intr.cx;
  cam.cy = intr.cy;
  cam.width = intr.width;
  cam.height = intr.height;
  cam.position = position;
  cam.rotation = rotation_from_view_direction(target - position, up);
  return cam;
}

Camera load_camera_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "invalid camera JSON: " + std::string(e.what()));
  }
  Camera cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto rot = j.at("rotation").get<std::vector<double>>();
    const auto pos = j.at("position").get<std::vector<double>>();
    if (rot.size() != 9 || pos.size() != 3) {
      throw Error(ErrorCode::kFormat, "camera JSON: rotation must have 9 entries, position 3");
    }
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[3 * r + c];
    }
    for (int k = 0; k < 3; ++k) cam.position[k] = pos[k];
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "camera JSON missing field: " + std::string(e.what()));
  }
  cam.validate();
  return cam;
}

void save_camera_json(const Camera& cam, const std::filesystem::path& path) {
  nlohmann::json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot[3 * r + c] = cam.rotation(r, c);
  }
  j["rotation"] = rot;
  j["position"] = {cam.position.x(), cam.position.y(), cam.position.z()};
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  out << j.dump(2) << "\n";
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed: " + path.string());
  }
}

}  // namespace splatpose
