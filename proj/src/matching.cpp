#include "splatpose/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "splatpose/error.hpp"

namespace splatpose {

namespace {

double pixel_clamped(const ImageGray& img, int row, int col) {
  row = std::clamp(row, 0, img.height - 1);
  col = std::clamp(col, 0, img.width - 1);
  return img.at(row, col);
}

double bilinear(const ImageGray& img, double row, double col) {
  const int r0 = static_cast<int>(std::floor(row));
  const int c0 = static_cast<int>(std::floor(col));
  const double fr = row - r0;
  const double fc = col - c0;
  return (1 - fr) * ((1 - fc) * pixel_clamped(img, r0, c0) +
                     fc * pixel_clamped(img, r0, c0 + 1)) +
         fr * ((1 - fc) * pixel_clamped(img, r0 + 1, c0) +
               fc * pixel_clamped(img, r0 + 1, c0 + 1));
}

// Zero-mean, unit-norm patch descriptor; empty when the patch is flat.
Eigen::VectorXd descriptor_at(const ImageGray& img, int row, int col, int radius) {
  const int side = 2 * radius + 1;
  Eigen::VectorXd d(side * side);
  int idx = 0;
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      d[idx++] = img.at(row + dr, col + dc);
    }
  }
  d.array() -= d.mean();
  const double norm = d.norm();
  if (norm < 1e-12) return {};
  return d / norm;
}

struct Keypoint {
  Eigen::Vector2d px;       // subpixel (u = col, v = row)
  int row = 0, col = 0;     // integer location used for the descriptor
  Eigen::VectorXd desc;
};

std::vector<Keypoint> detect_and_describe(const ImageGray& img,
                                          const MatcherConfig& cfg) {
  std::vector<Keypoint> kps;
  const auto corners = shi_tomasi_corners(img, cfg);
  kps.reserve(corners.size());
  for (const auto& c : corners) {
    const int col = static_cast<int>(std::lround(c.x()));
    const int row = static_cast<int>(std::lround(c.y()));
    if (col < cfg.patch_radius || col >= img.width - cfg.patch_radius ||
        row < cfg.patch_radius || row >= img.height - cfg.patch_radius) {
      continue;
    }
    Keypoint kp;
    kp.px = c;
    kp.row = row;
    kp.col = col;
    kp.desc = descriptor_at(img, row, col, cfg.patch_radius);
    if (kp.desc.size() == 0) continue;
    kps.push_back(std::move(kp));
  }
  return kps;
}

// Gauss-Newton alignment of an 11x11 template around (query row,col) against
// the rendered image, starting at the integer match. Returns the refined
// rendered-side position, or the start point if the iteration diverges.
Eigen::Vector2d lucas_kanade_refine(const ImageGray& query, const Keypoint& q,
                                    const ImageGray& rendered,
                                    const Eigen::Vector2d& start, int radius) {
  double u = start.x();
  double v = start.y();
  const double u0 = u, v0 = v;
  for (int iter = 0; iter < 12; ++iter) {
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    for (int dr = -radius; dr <= radius; ++dr) {
      for (int dc = -radius; dc <= radius; ++dc) {
        const double rr = v + dr;
        const double cc = u + dc;
        const double gx = 0.5 * (bilinear(rendered, rr, cc + 1) -
                                 bilinear(rendered, rr, cc - 1));
        const double gy = 0.5 * (bilinear(rendered, rr + 1, cc) -
                                 bilinear(rendered, rr - 1, cc));
        const double diff =
            query.at(q.row + dr, q.col + dc) - bilinear(rendered, rr, cc);
        a11 += gx * gx;
        a12 += gx * gy;
        a22 += gy * gy;
        b1 += gx * diff;
        b2 += gy * diff;
      }
    }
    const double det = a11 * a22 - a12 * a12;
    if (std::abs(det) < 1e-12) break;
    const double du = (a22 * b1 - a12 * b2) / det;
    const double dv = (a11 * b2 - a12 * b1) / det;
    u += du;
    v += dv;
    if (std::hypot(u - u0, v - v0) > 3.0) return start;  // diverged
    if (std::hypot(du, dv) < 1e-3) break;
  }
  return {u, v};
}

}  // namespace

std::vector<Eigen::Vector2d> shi_tomasi_corners(const ImageGray& img,
                                                const MatcherConfig& cfg) {
  if (img.width < 8 || img.height < 8) {
    return {};
  }
  const int w = img.width;
  const int h = img.height;

  // Sobel gradients.
  std::vector<double> ix(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<double> iy(static_cast<std::size_t>(w) * h, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto px = [&](int rr, int cc) { return pixel_clamped(img, rr, cc); };
      ix[static_cast<std::size_t>(r) * w + c] =
          (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1) -
           px(r - 1, c - 1) - 2 * px(r, c - 1) - px(r + 1, c - 1)) / 8.0;
      iy[static_cast<std::size_t>(r) * w + c] =
          (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1) -
           px(r - 1, c - 1) - 2 * px(r - 1, c) - px(r - 1, c + 1)) / 8.0;
    }
  }

  // Min-eigenvalue response of the 5x5 structure tensor.
  std::vector<double> response(static_cast<std::size_t>(w) * h, 0.0);
  const int win = 2;
  for (int r = win; r < h - win; ++r) {
    for (int c = win; c < w - win; ++c) {
      double sxx = 0, sxy = 0, syy = 0;
      for (int dr = -win; dr <= win; ++dr) {
        for (int dc = -win; dc <= win; ++dc) {
          const double gx = ix[static_cast<std::size_t>(r + dr) * w + (c + dc)];
          const double gy = iy[static_cast<std::size_t>(r + dr) * w + (c + dc)];
          sxx += gx * gx;
          sxy += gx * gy;
          syy += gy * gy;
        }
      }
      const double mid = 0.5 * (sxx + syy);
      const double disc = std::sqrt(std::max(0.0, mid * mid - (sxx * syy - sxy * sxy)));
      response[static_cast<std::size_t>(r) * w + c] = mid - disc;
    }
  }

  const double max_response = *std::max_element(response.begin(), response.end());
  if (!(max_response > 0.0)) {
    return {};
  }
  const double threshold = cfg.quality_level * max_response;

  struct Peak {
    int row, col;
    double value;
  };
  std::vector<Peak> peaks;
  const int rad = cfg.nms_radius;
  for (int r = rad; r < h - rad; ++r) {
    for (int c = rad; c < w - rad; ++c) {
      const double val = response[static_cast<std::size_t>(r) * w + c];
      if (val < threshold) continue;
      bool is_max = true;
      for (int dr = -rad; dr <= rad && is_max; ++dr) {
        for (int dc = -rad; dc <= rad; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (response[static_cast<std::size_t>(r + dr) * w + (c + dc)] > val) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({r, c, val});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.value > b.value; });
  if (static_cast<int>(peaks.size()) > cfg.max_corners) {
    peaks.resize(static_cast<std::size_t>(cfg.max_corners));
  }

  std::vector<Eigen::Vector2d> corners;
  corners.reserve(peaks.size());
  for (const auto& p : peaks) {
    double du = 0.0, dv = 0.0;
    if (cfg.subpixel && p.col > 0 && p.col < w - 1 && p.row > 0 && p.row < h - 1) {
      // 1D parabola fits through the response peak.
      const auto res = [&](int rr, int cc) {
        return response[static_cast<std::size_t>(rr) * w + cc];
      };
      const double dx = 0.5 * (res(p.row, p.col + 1) - res(p.row, p.col - 1));
      const double dxx = res(p.row, p.col + 1) - 2 * p.value + res(p.row, p.col - 1);
      const double dy = 0.5 * (res(p.row + 1, p.col) - res(p.row - 1, p.col));
      const double dyy = res(p.row + 1, p.col) - 2 * p.value + res(p.row - 1, p.col);
      if (dxx < 0) du = std::clamp(-dx / dxx, -0.5, 0.5);
      if (dyy < 0) dv = std::clamp(-dy / dyy, -0.5, 0.5);
    }
    corners.emplace_back(p.col + du, p.row + dv);
  }
  return corners;
}

std::vector<Correspondence2D2D> match_keypoints(const ImageGray& query,
                                                const ImageGray& rendered,
                                                const MatcherConfig& cfg) {
  if (query.width != rendered.width || query.height != rendered.height) {
    throw Error(ErrorCode::kDimensionMismatch, "images differ in size");
  }
  const auto kq = detect_and_describe(query, cfg);
  const auto kr = detect_and_describe(rendered, cfg);

  std::vector<Correspondence2D2D> matches;
  if (!kq.empty() && !kr.empty()) {
    // NCC similarity for all pairs; mutual nearest neighbour + ratio test.
    Eigen::MatrixXd sim(kq.size(), kr.size());
    for (std::size_t i = 0; i < kq.size(); ++i) {
      for (std::size_t j = 0; j < kr.size(); ++j) {
        sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            kq[i].desc.dot(kr[j].desc);
      }
    }
    std::vector<int> best_for_rendered(kr.size(), -1);
    for (std::size_t j = 0; j < kr.size(); ++j) {
      Eigen::Index arg;
      sim.col(static_cast<Eigen::Index>(j)).maxCoeff(&arg);
      best_for_rendered[j] = static_cast<int>(arg);
    }
    for (std::size_t i = 0; i < kq.size(); ++i) {
      Eigen::Index jbest;
      const double s1 = sim.row(static_cast<Eigen::Index>(i)).maxCoeff(&jbest);
      if (s1 < cfg.min_ncc) continue;
      if (best_for_rendered[static_cast<std::size_t>(jbest)] != static_cast<int>(i)) {
        continue;
      }
      double s2 = -1.0;
      for (Eigen::Index j = 0; j < sim.cols(); ++j) {
        if (j == jbest) continue;
        s2 = std::max(s2, sim(static_cast<Eigen::Index>(i), j));
      }
      if (s2 > -1.0 && (1.0 - s1) >= cfg.ratio * (1.0 - s2)) continue;

      const Keypoint& q = kq[i];
      const Keypoint& r = kr[static_cast<std::size_t>(jbest)];
      Correspondence2D2D m;
      m.query_px = q.px;
      m.rendered_px = r.px;
      if (cfg.subpixel) {
        m.rendered_px =
            lucas_kanade_refine(query, q, rendered, r.px, cfg.patch_radius);
      }
      m.score = std::clamp(s1, 0.0, 1.0);
      matches.push_back(std::move(m));
    }
  }

  if (static_cast<int>(matches.size()) < cfg.min_matches) {
    throw Error(ErrorCode::kInsufficientMatches,
                "only " + std::to_string(matches.size()) + " matches found (need " +
                    std::to_string(cfg.min_matches) + ")");
  }
  return matches;
}

void save_correspondences_csv(const std::vector<Correspondence2D2D>& matches,
                              const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  out << "qu,qv,ru,rv,score\n";
  out.precision(17);
  for (const auto& m : matches) {
    out << m.query_px.x() << ',' << m.query_px.y() << ',' << m.rendered_px.x()
        << ',' << m.rendered_px.y() << ',' << m.score << '\n';
  }
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed: " + path.string());
  }
}

std::vector<Correspondence2D2D> load_correspondences_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  std::vector<Correspondence2D2D> matches;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("qu", 0) == 0) continue;  // header
    }
    std::istringstream ls(line);
    Correspondence2D2D m;
    char comma;
    if (!(ls >> m.query_px.x() >> comma >> m.query_px.y() >> comma >>
          m.rendered_px.x() >> comma >> m.rendered_px.y() >> comma >> m.score)) {
      throw Error(ErrorCode::kFormat, "bad correspondence row: " + line);
    }
    matches.push_back(m);
  }
  return matches;
}

}  // namespace splatpose
