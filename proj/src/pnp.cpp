#include "splatpose/pnp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "splatpose/error.hpp"

namespace splatpose {

namespace {

// Internal frame: z forward, u = cx + fx x/z, v = cy + fy y/z. The toolkit
// convention (camera looks along -z, v flipped) maps through diag(1,-1,-1).
const Eigen::Matrix3d kFlip =
    Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal().toDenseMatrix();

struct CvPose {
  Eigen::Matrix3d r;  // x_cv = r * X + t
  Eigen::Vector3d t;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

CvPose to_cv(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& position) {
  CvPose p;
  p.r = kFlip * rotation.transpose();
  p.t = -(p.r * position);
  return p;
}

void from_cv(const CvPose& p, Eigen::Matrix3d& rotation, Eigen::Vector3d& position) {
  rotation = p.r.transpose() * kFlip;
  position = -(p.r.transpose() * p.t);
}

double reprojection_error_cv(const CvPose& pose, const Correspondence2D3D& c,
                             const PinholeIntrinsics& intr) {
  const Eigen::Vector3d x = pose.r * c.world_point + pose.t;
  if (x.z() <= 1e-9) {
    return std::numeric_limits<double>::max();
  }
  const double u = intr.cx + intr.fx * x.x() / x.z();
  const double v = intr.cy + intr.fy * x.y() / x.z();
  return std::hypot(u - c.query_px.x(), v - c.query_px.y());
}

std::optional<CvPose> dlt_pose(const std::vector<Correspondence2D3D>& corr,
                               const std::vector<int>& indices,
                               const PinholeIntrinsics& intr) {
  const int n = static_cast<int>(indices.size());
  if (n < 6) return std::nullopt;

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i : indices) centroid += corr[static_cast<std::size_t>(i)].world_point;
  centroid /= n;
  double mean_dist = 0.0;
  for (int i : indices) {
    mean_dist += (corr[static_cast<std::size_t>(i)].world_point - centroid).norm();
  }
  mean_dist /= n;
  if (mean_dist < 1e-12) return std::nullopt;
  const double scale = std::sqrt(3.0) / mean_dist;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
  for (int row = 0; row < n; ++row) {
    const auto& c = corr[static_cast<std::size_t>(indices[static_cast<std::size_t>(row)])];
    const Eigen::Vector3d xn = scale * (c.world_point - centroid);
    const double mu = (c.query_px.x() - intr.cx) / intr.fx;
    const double mv = (c.query_px.y() - intr.cy) / intr.fy;
    a.block<1, 3>(2 * row, 0) = xn.transpose();
    a(2 * row, 3) = 1.0;
    a.block<1, 3>(2 * row, 8) = -mu * xn.transpose();
    a(2 * row, 11) = -mu;
    a.block<1, 3>(2 * row + 1, 4) = xn.transpose();
    a(2 * row + 1, 7) = 1.0;
    a.block<1, 3>(2 * row + 1, 8) = -mv * xn.transpose();
    a(2 * row + 1, 11) = -mv;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix3d m_norm;
  m_norm << p[0], p[1], p[2], p[4], p[5], p[6], p[8], p[9], p[10];
  Eigen::Vector3d t_norm(p[3], p[7], p[11]);

  // Undo the 3D normalization X' = scale * (X - centroid).
  Eigen::Matrix3d m = scale * m_norm;
  Eigen::Vector3d t = t_norm - scale * (m_norm * centroid);
  if (m.determinant() < 0.0) {
    m = -m;
    t = -t;
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double sigma_sum = msvd.singularValues().sum();
  if (!(sigma_sum > 1e-12)) return std::nullopt;
  Eigen::Matrix3d r = msvd.matrixU() * msvd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = msvd.matrixU() * flip * msvd.matrixV().transpose();
  }
  CvPose pose;
  pose.r = r;
  pose.t = (3.0 / sigma_sum) * t;
  if (!pose.r.allFinite() || !pose.t.allFinite()) return std::nullopt;
  return pose;
}

// Levenberg-Marquardt over the inlier reprojection residuals; the rotation
// is updated by left-multiplied axis-angle steps.
CvPose lm_refine(CvPose pose, const std::vector<Correspondence2D3D>& corr,
                 const std::vector<int>& inliers, const PinholeIntrinsics& intr,
                 const RansacConfig& cfg) {
  const auto cost = [&](const CvPose& p) {
    double sum = 0.0;
    for (int i : inliers) {
      const auto& c = corr[static_cast<std::size_t>(i)];
      const Eigen::Vector3d x = p.r * c.world_point + p.t;
      const double z = std::max(x.z(), 1e-9);
      const double du = intr.cx + intr.fx * x.x() / z - c.query_px.x();
      const double dv = intr.cy + intr.fy * x.y() / z - c.query_px.y();
      sum += du * du + dv * dv;
    }
    return sum;
  };

  double lambda = 1e-3;
  double current = cost(pose);
  for (int iter = 0; iter < cfg.lm_max_iterations; ++iter) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (int i : inliers) {
      const auto& c = corr[static_cast<std::size_t>(i)];
      const Eigen::Vector3d x = pose.r * c.world_point + pose.t;
      const double z = std::max(x.z(), 1e-9);
      const double iz = 1.0 / z;
      Eigen::Matrix<double, 2, 3> dpix;
      dpix << intr.fx * iz, 0.0, -intr.fx * x.x() * iz * iz,
          0.0, intr.fy * iz, -intr.fy * x.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dx;
      dx.block<3, 3>(0, 0) = -skew(x - pose.t);
      dx.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> j = dpix * dx;
      const Eigen::Vector2d r(intr.cx + intr.fx * x.x() * iz - c.query_px.x(),
                              intr.cy + intr.fy * x.y() * iz - c.query_px.y());
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }
    if (jtr.cwiseAbs().maxCoeff() < cfg.lm_gradient_tol) break;

    bool stepped = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal();
      const Eigen::Matrix<double, 6, 1> delta = -damped.ldlt().solve(jtr);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      CvPose trial = pose;
      const Eigen::Vector3d omega = delta.head<3>();
      const double angle = omega.norm();
      if (angle > 0.0) {
        trial.r = Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix() * pose.r;
      }
      trial.t = pose.t + delta.tail<3>();
      const double trial_cost = cost(trial);
      if (trial_cost < current) {
        pose = trial;
        current = trial_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!stepped) break;
  }
  return pose;
}

std::vector<int> classify_inliers(const CvPose& pose,
                                  const std::vector<Correspondence2D3D>& corr,
                                  const PinholeIntrinsics& intr, double threshold) {
  std::vector<int> inliers;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (reprojection_error_cv(pose, corr[i], intr) < threshold) {
      inliers.push_back(static_cast<int>(i));
    }
  }
  return inliers;
}

}  // namespace

double mean_reprojection_error(const Eigen::Matrix3d& rotation,
                               const Eigen::Vector3d& position,
                               const std::vector<Correspondence2D3D>& correspondences,
                               const PinholeIntrinsics& intrinsics) {
  if (correspondences.empty()) return 0.0;
  const CvPose pose = to_cv(rotation, position);
  double sum = 0.0;
  for (const auto& c : correspondences) {
    const double e = reprojection_error_cv(pose, c, intrinsics);
    sum += std::min(e, 1e6);
  }
  return sum / static_cast<double>(correspondences.size());
}

RefinedPose solve_pnp_ransac(const std::vector<Correspondence2D3D>& correspondences,
                             const PinholeIntrinsics& intrinsics,
                             const RansacConfig& cfg,
                             const std::optional<PosePrior>& prior) {
  const int n = static_cast<int>(correspondences.size());
  if (n < 6) {
    throw PnpError("PnP needs at least 6 correspondences, got " + std::to_string(n),
                   0);
  }

  std::optional<CvPose> best;
  std::size_t best_inliers = 0;
  double best_err = std::numeric_limits<double>::max();

  const auto consider = [&](const CvPose& pose) {
    const auto inliers =
        classify_inliers(pose, correspondences, intrinsics, cfg.inlier_threshold_px);
    if (inliers.size() < 6) return;
    double err = 0.0;
    for (int i : inliers) {
      err += reprojection_error_cv(pose, correspondences[static_cast<std::size_t>(i)],
                                   intrinsics);
    }
    err /= static_cast<double>(inliers.size());
    if (inliers.size() > best_inliers ||
        (inliers.size() == best_inliers && err < best_err)) {
      best = pose;
      best_inliers = inliers.size();
      best_err = err;
    }
  };

  if (prior) {
    consider(to_cv(prior->rotation, prior->position));
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  int needed = cfg.max_iterations;
  for (int iter = 0; iter < cfg.max_iterations && iter < needed; ++iter) {
    std::vector<int> sample;
    sample.reserve(6);
    while (sample.size() < 6) {
      const int candidate = pick(rng);
      if (std::find(sample.begin(), sample.end(), candidate) == sample.end()) {
        sample.push_back(candidate);
      }
    }
    const auto hyp = dlt_pose(correspondences, sample, intrinsics);
    if (!hyp) continue;
    consider(*hyp);
    if (best_inliers >= 6) {
      const double w =
          static_cast<double>(best_inliers) / static_cast<double>(n);
      const double denom = std::log(std::max(1e-12, 1.0 - std::pow(w, 6)));
      if (denom < 0.0) {
        needed = static_cast<int>(
            std::min<double>(cfg.max_iterations,
                             std::ceil(std::log(1.0 - cfg.confidence) / denom)));
      }
    }
  }

  if (!best || best_inliers < 6) {
    throw PnpError("no PnP hypothesis reached 6 inliers",
                   static_cast<int>(best_inliers));
  }

  // Refit on all inliers of the best hypothesis, then polish with LM.
  std::vector<int> inliers =
      classify_inliers(*best, correspondences, intrinsics, cfg.inlier_threshold_px);
  CvPose pose = *best;
  if (const auto refit = dlt_pose(correspondences, inliers, intrinsics)) {
    const auto refit_inliers = classify_inliers(*refit, correspondences, intrinsics,
                                                cfg.inlier_threshold_px);
    if (refit_inliers.size() >= inliers.size()) {
      pose = *refit;
      inliers = refit_inliers;
    }
  }
  pose = lm_refine(pose, correspondences, inliers, intrinsics, cfg);
  inliers = classify_inliers(pose, correspondences, intrinsics,
                             cfg.inlier_threshold_px);
  if (inliers.size() < 6) {
    throw PnpError("PnP refinement collapsed below 6 inliers",
                   static_cast<int>(inliers.size()));
  }

  RefinedPose out;
  from_cv(pose, out.rotation, out.position);
  out.inlier_count = static_cast<int>(inliers.size());
  out.inlier_ratio = static_cast<double>(inliers.size()) / static_cast<double>(n);
  double err = 0.0;
  for (int i : inliers) {
    err += reprojection_error_cv(pose, correspondences[static_cast<std::size_t>(i)],
                                 intrinsics);
  }
  out.mean_reprojection_error = err / static_cast<double>(inliers.size());
  out.refined = true;
  return out;
}

}  // namespace splatpose
