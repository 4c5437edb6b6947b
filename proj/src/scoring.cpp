#include "splatpose/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "splatpose/error.hpp"

namespace splatpose {

namespace {

// Kahan compensated accumulator.
struct Kahan {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

std::pair<double, double> ray_point_distance(const Ray& ray, const Eigen::Vector3d& p) {
  const double projection = std::max((p - ray.origin).dot(ray.direction), 0.0);
  const double dist = (ray.origin + projection * ray.direction - p).norm();
  return {projection, dist};
}

double ray_orientation_angle(const Ray& ray, const Eigen::Vector3d& q) {
  const double qn = q.norm();
  const double dn = ray.direction.norm();
  if (!(qn > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "zero-length orientation vector");
  }
  const double cosine = std::clamp(-q.dot(ray.direction) / (qn * dn), -1.0, 1.0);
  return std::acos(cosine);
}

ScoreVector gt_scores(const RayBundle& bundle, const Camera& cam,
                      const GammaConfig& cfg, double m_pixels_override) {
  const Eigen::Index n = static_cast<Eigen::Index>(bundle.ray_count());
  if (n < 1) {
    throw Error(ErrorCode::kEmptyScene, "gt_scores requires a non-empty bundle");
  }
  if (!(cfg.gamma_pos > 0.0) || !(cfg.gamma_ori > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma values must be positive");
  }
  const double m = m_pixels_override > 0.0 ? m_pixels_override
                                           : static_cast<double>(cam.pixel_count());
  const Eigen::Vector3d p = cam.position;
  const Eigen::Vector3d q = cam.viewing_direction();

  ScoreVector out;
  out.m_pixels = m;
  out.s_p.resize(n);
  out.s_o.resize(n);
  Kahan sum_a, sum_b;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Ray& ray = bundle.rays[static_cast<std::size_t>(i)];
    const auto [proj, dist] = ray_point_distance(ray, p);
    (void)proj;
    const double theta = ray_orientation_angle(ray, q);
    const double a = 1.0 - std::tanh(dist / cfg.gamma_pos);
    const double b = 1.0 - std::tanh(theta / cfg.gamma_ori);
    out.s_p[i] = a;
    out.s_o[i] = b;
    sum_a.add(a);
    sum_b.add(b);
  }
  out.s_p *= m / sum_a.sum;
  out.s_o *= m / sum_b.sum;
  return out;
}

ScoreLoss score_loss(const ScoreVector& pred, const ScoreVector& gt, LossKind kind) {
  if (pred.s_p.size() != gt.s_p.size() || pred.s_o.size() != gt.s_o.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "score vectors differ in length");
  }
  const Eigen::Index n = pred.s_p.size();
  if (n == 0) {
    throw Error(ErrorCode::kInvalidArgument, "score vectors are empty");
  }
  ScoreLoss loss;
  Kahan lp, lo;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d_p = pred.s_p[i] - gt.s_p[i];
    const double d_o = pred.s_o[i] - gt.s_o[i];
    if (kind == LossKind::kAbsolute) {
      lp.add(std::abs(d_p));
      lo.add(std::abs(d_o));
    } else {
      lp.add(d_p * d_p);
      lo.add(d_o * d_o);
    }
  }
  loss.position = lp.sum / static_cast<double>(n);
  loss.orientation = lo.sum / static_cast<double>(n);
  loss.total = loss.position + loss.orientation;
  return loss;
}

void save_scores(const Eigen::VectorXd& scores, std::uint8_t kind,
                 const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  const std::uint32_t n = static_cast<std::uint32_t>(scores.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  f.write(reinterpret_cast<const char*>(&kind), 1);
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const float v = static_cast<float>(scores[i]);
    f.write(reinterpret_cast<const char*>(&v), sizeof(float));
  }
  if (!f) {
    throw Error(ErrorCode::kIo, "write failed: " + path.string());
  }
}

Eigen::VectorXd load_scores(const std::filesystem::path& path, std::uint8_t* kind) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  std::uint32_t n = 0;
  std::uint8_t k = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  f.read(reinterpret_cast<char*>(&k), 1);
  if (!f) {
    throw Error(ErrorCode::kFormat, "truncated score file header");
  }
  Eigen::VectorXd out(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    float v = 0.0f;
    f.read(reinterpret_cast<char*>(&v), sizeof(float));
    out[i] = v;
  }
  if (!f) {
    throw Error(ErrorCode::kFormat, "truncated score file payload");
  }
  if (kind) *kind = k;
  return out;
}

}  // namespace splatpose
