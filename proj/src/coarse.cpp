#include "splatpose/coarse.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "splatpose/error.hpp"

namespace splatpose {

SelectedRays select_topk(const RayBundle& bundle, std::span<const double> scores,
                         int k) {
  if (k < 1) {
    throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  }
  if (scores.size() != bundle.ray_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "scores do not match ray count");
  }
  if (bundle.group_count() == 0) {
    throw Error(ErrorCode::kEmptyScene, "empty ray bundle");
  }

  struct Candidate {
    std::size_t ray_index;
    int ellipsoid_id;
    double score;
  };
  std::vector<Candidate> best_per_group;
  best_per_group.reserve(bundle.group_count());
  for (std::size_t g = 0; g < bundle.group_count(); ++g) {
    const auto [begin, end] = bundle.group_range(g);
    std::size_t best = begin;
    for (std::size_t i = begin + 1; i < end; ++i) {
      if (scores[i] > scores[best]) best = i;
    }
    best_per_group.push_back(
        {best, bundle.rays[best].ellipsoid_id, scores[best]});
  }

  if (static_cast<std::size_t>(k) > best_per_group.size()) {
    std::cerr << "select_topk: only " << best_per_group.size()
              << " ellipsoids available for k=" << k << ", taking all\n";
    k = static_cast<int>(best_per_group.size());
  }
  std::stable_sort(best_per_group.begin(), best_per_group.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.ellipsoid_id < b.ellipsoid_id;
                   });
  best_per_group.resize(static_cast<std::size_t>(k));

  SelectedRays sel;
  sel.rays.reserve(best_per_group.size());
  sel.weights.reserve(best_per_group.size());
  double sum = 0.0;
  for (const auto& c : best_per_group) sum += c.score;
  if (!(sum > 0.0)) {
    // Degenerate all-zero scores: fall back to uniform weights.
    for (const auto& c : best_per_group) {
      sel.rays.push_back(bundle.rays[c.ray_index]);
      sel.weights.push_back(1.0 / static_cast<double>(best_per_group.size()));
    }
    return sel;
  }
  for (const auto& c : best_per_group) {
    sel.rays.push_back(bundle.rays[c.ray_index]);
    sel.weights.push_back(c.score / sum);
  }
  return sel;
}

std::pair<Eigen::Vector3d, double> estimate_position(const SelectedRays& sel) {
  if (sel.rays.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "position estimation needs at least two rays");
  }
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < sel.rays.size(); ++i) {
    const Eigen::Vector3d& d = sel.rays[i].direction;
    const Eigen::Matrix3d proj =
        Eigen::Matrix3d::Identity() - d * d.transpose();
    a += sel.weights[i] * proj;
    b += sel.weights[i] * (proj * sel.rays[i].origin);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(a);
  const Eigen::Vector3d evals = eig.eigenvalues();
  const double lo = evals.minCoeff();
  const double hi = evals.maxCoeff();
  const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > 0.0) || cond > 1e10) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "ray configuration is degenerate (near-parallel rays)");
  }
  const Eigen::Vector3d p =
      eig.eigenvectors() * evals.cwiseInverse().asDiagonal() *
      eig.eigenvectors().transpose() * b;
  return {p, cond};
}

Eigen::Vector3d estimate_position_projection_sum(const SelectedRays& sel) {
  if (sel.rays.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no rays selected");
  }
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < sel.rays.size(); ++i) {
    const Eigen::Vector3d& d = sel.rays[i].direction;
    p += sel.weights[i] *
         ((Eigen::Matrix3d::Identity() - d * d.transpose()) * sel.rays[i].origin);
  }
  return p;
}

Eigen::Vector3d estimate_orientation(const SelectedRays& sel) {
  if (sel.rays.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no rays selected");
  }
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < sel.rays.size(); ++i) {
    sum += sel.weights[i] * sel.rays[i].direction;
  }
  const double norm = sum.norm();
  if (norm <= 1e-9) {
    throw Error(ErrorCode::kAmbiguousOrientation,
                "weighted ray directions cancel; orientation is ambiguous");
  }
  return -sum / norm;
}

CoarsePose build_pose(const Eigen::Vector3d& position, const Eigen::Vector3d& q,
                      const Eigen::Vector3d& world_up) {
  CoarsePose pose;
  pose.position = position;
  pose.orientation = q.normalized();
  pose.rotation = rotation_from_view_direction(pose.orientation, world_up);
  return pose;
}

CoarsePose coarse_estimate(const RayBundle& bundle, const ScoreVector& scores,
                           const CoarseConfig& cfg) {
  const SelectedRays sel_pos = select_topk(
      bundle, std::span<const double>(scores.s_p.data(),
                                      static_cast<std::size_t>(scores.s_p.size())),
      cfg.k);
  const SelectedRays sel_ori = select_topk(
      bundle, std::span<const double>(scores.s_o.data(),
                                      static_cast<std::size_t>(scores.s_o.size())),
      cfg.k);

  Eigen::Vector3d position;
  double cond = 0.0;
  if (cfg.projection_sum_position) {
    position = estimate_position_projection_sum(sel_pos);
  } else {
    std::tie(position, cond) = estimate_position(sel_pos);
  }
  const Eigen::Vector3d orientation = estimate_orientation(sel_ori);
  CoarsePose pose = build_pose(position, orientation, cfg.world_up);
  pose.condition_number = cond;
  return pose;
}

CoarsePose coarse_estimate(const Scene& scene, const ScoreFn& score_fn,
                           const CoarseConfig& cfg) {
  const RayBundle bundle = cast_rays(scene, cfg.subdivision_level, cfg.k_sigma);
  const ScoreVector scores = score_fn(bundle);
  return coarse_estimate(bundle, scores, cfg);
}

}  // namespace splatpose
