#include "splatpose/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "splatpose/error.hpp"

namespace splatpose {

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'P', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t n) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (n + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// [x, then per band: sin(2^k pi x), cos(2^k pi x)] for all six coordinates.
void fourier_embed_coords(const double* coords, int bands, double* out) {
  for (int c = 0; c < 6; ++c) out[c] = coords[c];
  int idx = 6;
  double freq = M_PI;
  for (int k = 0; k < bands; ++k) {
    for (int c = 0; c < 6; ++c) {
      out[idx++] = std::sin(freq * coords[c]);
      out[idx++] = std::cos(freq * coords[c]);
    }
    freq *= 2.0;
  }
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    Eigen::ArrayXd e = (logits.row(r).array() - mx).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

FeatureMap load_feature_map(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  const std::uint32_t h = read_u32(f);
  const std::uint32_t w = read_u32(f);
  const std::uint32_t c = read_u32(f);
  if (!f) {
    throw Error(ErrorCode::kFormat, "truncated feature map header");
  }
  FeatureMap fmap;
  fmap.height = static_cast<int>(h);
  fmap.width = static_cast<int>(w);
  fmap.data.resize(static_cast<Eigen::Index>(h) * w, c);
  std::vector<float> row(c);
  for (Eigen::Index m = 0; m < fmap.data.rows(); ++m) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(c * sizeof(float)));
    for (std::uint32_t k = 0; k < c; ++k) fmap.data(m, k) = row[k];
  }
  if (!f) {
    throw Error(ErrorCode::kFormat, "truncated feature map payload");
  }
  return fmap;
}

void save_feature_map(const FeatureMap& fmap, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  write_u32(f, static_cast<std::uint32_t>(fmap.height));
  write_u32(f, static_cast<std::uint32_t>(fmap.width));
  write_u32(f, static_cast<std::uint32_t>(fmap.data.cols()));
  for (Eigen::Index m = 0; m < fmap.data.rows(); ++m) {
    for (Eigen::Index k = 0; k < fmap.data.cols(); ++k) {
      const float v = static_cast<float>(fmap.data(m, k));
      f.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  }
  if (!f) {
    throw Error(ErrorCode::kIo, "write failed: " + path.string());
  }
}

AttentionScorer AttentionScorer::init(int feature_dim, int hidden_dim,
                                      int fourier_bands, std::uint64_t seed) {
  if (feature_dim < 1 || hidden_dim < 1 || fourier_bands < 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid scorer dimensions");
  }
  AttentionScorer s;
  s.feature_dim = feature_dim;
  s.hidden_dim = hidden_dim;
  s.fourier_bands = fourier_bands;
  const int din = s.input_dim();
  std::mt19937_64 rng(seed);
  s.w1 = gaussian_matrix(din, hidden_dim, 1.0 / std::sqrt(din), rng);
  s.b1 = Eigen::MatrixXd::Zero(1, hidden_dim);
  s.w2 = gaussian_matrix(hidden_dim, hidden_dim, 1.0 / std::sqrt(hidden_dim), rng);
  s.b2 = Eigen::MatrixXd::Zero(1, hidden_dim);
  s.w3 = gaussian_matrix(hidden_dim, feature_dim, 1.0 / std::sqrt(hidden_dim), rng);
  s.b3 = Eigen::MatrixXd::Zero(1, feature_dim);
  const double head_std = 1.0 / std::sqrt(feature_dim);
  s.wq_pos = gaussian_matrix(feature_dim, feature_dim, head_std, rng);
  s.wk_pos = gaussian_matrix(feature_dim, feature_dim, head_std, rng);
  s.wq_ori = gaussian_matrix(feature_dim, feature_dim, head_std, rng);
  s.wk_ori = gaussian_matrix(feature_dim, feature_dim, head_std, rng);
  return s;
}

void save_checkpoint(const AttentionScorer& scorer, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  f.write(kCheckpointMagic, 4);
  write_u32(f, kCheckpointVersion);
  write_u32(f, static_cast<std::uint32_t>(scorer.feature_dim));
  write_u32(f, static_cast<std::uint32_t>(scorer.hidden_dim));
  write_u32(f, static_cast<std::uint32_t>(scorer.fourier_bands));
  std::uint32_t count = 0;
  scorer.for_each_parameter([&](const char*, const Eigen::MatrixXd&) { ++count; });
  write_u32(f, count);
  scorer.for_each_parameter([&](const char* name, const Eigen::MatrixXd& m) {
    const std::uint32_t len = static_cast<std::uint32_t>(std::strlen(name));
    write_u32(f, len);
    f.write(name, len);
    write_u32(f, static_cast<std::uint32_t>(m.rows()));
    write_u32(f, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        f.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
    }
  });
  if (!f) {
    throw Error(ErrorCode::kIo, "write failed: " + path.string());
  }
}

AttentionScorer load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "not a scorer checkpoint: " + path.string());
  }
  const std::uint32_t version = read_u32(f);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kFormat,
                "unsupported checkpoint version " + std::to_string(version));
  }
  AttentionScorer s;
  s.feature_dim = static_cast<int>(read_u32(f));
  s.hidden_dim = static_cast<int>(read_u32(f));
  s.fourier_bands = static_cast<int>(read_u32(f));
  const std::uint32_t count = read_u32(f);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = read_u32(f);
    std::string name(len, '\0');
    f.read(name.data(), len);
    const std::uint32_t rows = read_u32(f);
    const std::uint32_t cols = read_u32(f);
    if (!f) {
      throw Error(ErrorCode::kFormat, "truncated checkpoint");
    }
    Eigen::MatrixXd m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        double v = 0.0;
        f.read(reinterpret_cast<char*>(&v), sizeof(double));
        m(r, c) = v;
      }
    }
    bool matched = false;
    s.for_each_parameter([&](const char* pname, Eigen::MatrixXd& target) {
      if (name == pname) {
        target = m;
        matched = true;
      }
    });
    if (!matched) {
      throw Error(ErrorCode::kFormat, "unknown checkpoint block " + name);
    }
  }
  if (!f) {
    throw Error(ErrorCode::kFormat, "truncated checkpoint");
  }
  return s;
}

Eigen::MatrixXd fourier_embed_rays(const RayBundle& bundle, int bands) {
  if (bands < 0) {
    throw Error(ErrorCode::kInvalidArgument, "bands must be >= 0");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(bundle.ray_count());
  const int din = 6 + 12 * bands;
  Eigen::MatrixXd e(n, din);
  std::vector<double> row(static_cast<std::size_t>(din));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Ray& r = bundle.rays[static_cast<std::size_t>(i)];
    const double coords[6] = {r.origin.x(),    r.origin.y(),    r.origin.z(),
                              r.direction.x(), r.direction.y(), r.direction.z()};
    fourier_embed_coords(coords, bands, row.data());
    for (int c = 0; c < din; ++c) e(i, c) = row[static_cast<std::size_t>(c)];
  }
  return e;
}

Eigen::MatrixXd embed_rays(const RayBundle& bundle, const AttentionScorer& scorer) {
  if (bundle.ray_count() == 0) {
    throw Error(ErrorCode::kEmptyScene, "embed_rays requires a non-empty bundle");
  }
  const Eigen::MatrixXd e = fourier_embed_rays(bundle, scorer.fourier_bands);
  const Eigen::MatrixXd h1 =
      ((e * scorer.w1).rowwise() + scorer.b1.row(0)).array().tanh();
  const Eigen::MatrixXd h2 =
      ((h1 * scorer.w2).rowwise() + scorer.b2.row(0)).array().tanh();
  return (h2 * scorer.w3).rowwise() + scorer.b3.row(0);
}

Eigen::MatrixXd attention_map(const Eigen::MatrixXd& ray_features,
                              const Eigen::MatrixXd& image_features,
                              const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk) {
  const Eigen::Index c = ray_features.cols();
  if (image_features.cols() != c || wq.rows() != c || wq.cols() != c ||
      wk.rows() != c || wk.cols() != c) {
    throw Error(ErrorCode::kDimensionMismatch, "attention_map dimension mismatch");
  }
  const Eigen::MatrixXd queries = ray_features * wq;   // N x C
  const Eigen::MatrixXd keys = image_features * wk;    // M x C
  const Eigen::MatrixXd logits =
      keys * queries.transpose() / std::sqrt(static_cast<double>(c));
  return softmax_rows(logits);
}

Eigen::MatrixXd attention_map(const Eigen::MatrixXd& ray_features,
                              const FeatureMap& fmap, const AttentionScorer& scorer,
                              AttentionHead head) {
  if (head == AttentionHead::kPosition) {
    return attention_map(ray_features, fmap.data, scorer.wq_pos, scorer.wk_pos);
  }
  return attention_map(ray_features, fmap.data, scorer.wq_ori, scorer.wk_ori);
}

ScoreVector predict_scores(const AttentionScorer& scorer, const RayBundle& bundle,
                           const FeatureMap& fmap) {
  if (fmap.channels() != scorer.feature_dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "feature map channels do not match scorer feature_dim");
  }
  const Eigen::MatrixXd rfeat = embed_rays(bundle, scorer);
  const Eigen::MatrixXd a_pos = attention_map(rfeat, fmap, scorer, AttentionHead::kPosition);
  const Eigen::MatrixXd a_ori = attention_map(rfeat, fmap, scorer, AttentionHead::kOrientation);
  ScoreVector out;
  out.s_p = a_pos.colwise().sum().transpose();
  out.s_o = a_ori.colwise().sum().transpose();
  out.m_pixels = static_cast<double>(fmap.data.rows());
  return out;
}

ScorerGradients ScorerGradients::zeros_like(const AttentionScorer& scorer) {
  ScorerGradients g;
  auto zero = [](const Eigen::MatrixXd& m) {
    return Eigen::MatrixXd::Zero(m.rows(), m.cols()).eval();
  };
  g.w1 = zero(scorer.w1); g.b1 = zero(scorer.b1);
  g.w2 = zero(scorer.w2); g.b2 = zero(scorer.b2);
  g.w3 = zero(scorer.w3); g.b3 = zero(scorer.b3);
  g.wq_pos = zero(scorer.wq_pos); g.wk_pos = zero(scorer.wk_pos);
  g.wq_ori = zero(scorer.wq_ori); g.wk_ori = zero(scorer.wk_ori);
  return g;
}

double loss_and_grad(const AttentionScorer& scorer, const RayBundle& bundle,
                     const FeatureMap& fmap, const ScoreVector& gt,
                     LossKind kind, ScorerGradients& grads,
                     double* loss_pos, double* loss_ori) {
  if (fmap.channels() != scorer.feature_dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "feature map channels do not match scorer feature_dim");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(bundle.ray_count());
  if (gt.s_p.size() != n || gt.s_o.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "gt scores do not match ray count");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(scorer.feature_dim));
  const Eigen::MatrixXd& f = fmap.data;

  // Forward, keeping every activation for the backward pass.
  const Eigen::MatrixXd e = fourier_embed_rays(bundle, scorer.fourier_bands);
  const Eigen::MatrixXd h1 =
      ((e * scorer.w1).rowwise() + scorer.b1.row(0)).array().tanh();
  const Eigen::MatrixXd h2 =
      ((h1 * scorer.w2).rowwise() + scorer.b2.row(0)).array().tanh();
  const Eigen::MatrixXd rfeat = (h2 * scorer.w3).rowwise() + scorer.b3.row(0);

  grads = ScorerGradients::zeros_like(scorer);
  Eigen::MatrixXd d_rfeat = Eigen::MatrixXd::Zero(n, scorer.feature_dim);

  double total = 0.0;
  struct HeadRefs {
    const Eigen::MatrixXd& wq;
    const Eigen::MatrixXd& wk;
    Eigen::MatrixXd& dwq;
    Eigen::MatrixXd& dwk;
    const Eigen::VectorXd& target;
    double* loss_out;
  };
  HeadRefs heads[2] = {
      {scorer.wq_pos, scorer.wk_pos, grads.wq_pos, grads.wk_pos, gt.s_p, loss_pos},
      {scorer.wq_ori, scorer.wk_ori, grads.wq_ori, grads.wk_ori, gt.s_o, loss_ori}};

  for (auto& head : heads) {
    const Eigen::MatrixXd queries = rfeat * head.wq;  // N x C
    const Eigen::MatrixXd keys = f * head.wk;         // M x C
    const Eigen::MatrixXd attn = softmax_rows(keys * queries.transpose() * scale);
    const Eigen::VectorXd pred = attn.colwise().sum().transpose();

    const Eigen::VectorXd diff = pred - head.target;
    double head_loss;
    Eigen::VectorXd d_pred(n);
    if (kind == LossKind::kAbsolute) {
      head_loss = diff.array().abs().mean();
      d_pred = diff.array().sign() / static_cast<double>(n);
    } else {
      head_loss = diff.array().square().mean();
      d_pred = 2.0 * diff / static_cast<double>(n);
    }
    total += head_loss;
    if (head.loss_out) *head.loss_out = head_loss;

    // d_attn has identical rows (column sums broadcast the gradient), so the
    // softmax backward reduces to per-row dot products with d_pred.
    const Eigen::VectorXd rowdot = attn * d_pred;  // M
    Eigen::MatrixXd d_logits =
        attn.array() * (d_pred.transpose().replicate(attn.rows(), 1).array() -
                        rowdot.replicate(1, n).array());
    const Eigen::MatrixXd d_queries = d_logits.transpose() * keys * scale;  // N x C
    const Eigen::MatrixXd d_keys = d_logits * queries * scale;              // M x C
    head.dwq = rfeat.transpose() * d_queries;
    head.dwk = f.transpose() * d_keys;
    d_rfeat += d_queries * head.wq.transpose();
  }

  grads.w3 = h2.transpose() * d_rfeat;
  grads.b3 = d_rfeat.colwise().sum();
  const Eigen::MatrixXd d_h2 = d_rfeat * scorer.w3.transpose();
  const Eigen::MatrixXd d_pre2 =
      d_h2.array() * (1.0 - h2.array().square());
  grads.w2 = h1.transpose() * d_pre2;
  grads.b2 = d_pre2.colwise().sum();
  const Eigen::MatrixXd d_h1 = d_pre2 * scorer.w2.transpose();
  const Eigen::MatrixXd d_pre1 =
      d_h1.array() * (1.0 - h1.array().square());
  grads.w1 = e.transpose() * d_pre1;
  grads.b1 = d_pre1.colwise().sum();

  if (!std::isfinite(total)) {
    const struct {
      const char* name;
      const Eigen::MatrixXd& tensor;
    } stages[] = {{"embedding", e}, {"hidden1", h1}, {"hidden2", h2},
                  {"ray_features", rfeat}};
    for (const auto& s : stages) {
      if (!s.tensor.allFinite()) {
        throw Error(ErrorCode::kNonFinite,
                    std::string("non-finite loss; first non-finite tensor: ") + s.name);
      }
    }
    throw Error(ErrorCode::kNonFinite,
                "non-finite loss; first non-finite tensor: attention");
  }
  return total;
}

std::vector<double> train(AttentionScorer& scorer, const Scene& scene,
                          const std::vector<TrainView>& views,
                          const TrainConfig& cfg) {
  if (cfg.iterations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "iterations must be >= 1");
  }
  if (!(cfg.learning_rate > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "learning_rate must be positive");
  }
  if (views.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  }
  for (const auto& v : views) {
    if (v.features.channels() != scorer.feature_dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "feature map channels do not match scorer feature_dim");
    }
  }

  const RayBundle bundle = cast_rays(scene, cfg.subdivision_level, cfg.k_sigma);
  std::vector<Eigen::MatrixXd*> params;
  scorer.for_each_parameter(
      [&](const char*, Eigen::MatrixXd& m) { params.push_back(&m); });

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.iterations));
  ScorerGradients grads;
  for (int it = 0; it < cfg.iterations; ++it) {
    const TrainView& view = views[static_cast<std::size_t>(it) % views.size()];
    const RayBundle sub = subsample_ellipsoids(
        bundle, cfg.ellipsoid_subsample, mix_seed(cfg.seed, static_cast<std::uint64_t>(it)));
    const ScoreVector gt =
        gt_scores(sub, view.camera, cfg.gamma,
                  static_cast<double>(view.features.pixel_count()));
    const double loss =
        loss_and_grad(scorer, sub, view.features, gt, cfg.loss_kind, grads);

    std::vector<Eigen::MatrixXd*> grad_ptrs;
    grads.for_each([&](const char*, Eigen::MatrixXd& m) { grad_ptrs.push_back(&m); });
    for (std::size_t i = 0; i < params.size(); ++i) {
      // Decoupled weight decay: shrink, then step.
      *params[i] *= (1.0 - cfg.learning_rate * cfg.weight_decay);
      *params[i] -= cfg.learning_rate * (*grad_ptrs[i]);
    }
    trace.push_back(loss);
  }
  return trace;
}

ScoreVector oracle_scorer(const RayBundle& bundle, const Camera& cam,
                          const GammaConfig& cfg, double m_pixels_override) {
  return gt_scores(bundle, cam, cfg, m_pixels_override);
}

SyntheticFeatureModel::SyntheticFeatureModel(int channels, int bands,
                                             std::uint64_t seed)
    : channels_(channels), bands_(bands) {
  if (channels < 1 || bands < 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid synthetic feature dimensions");
  }
  const int din = 6 + 12 * bands;
  std::mt19937_64 rng(seed);
  projection_ = gaussian_matrix(channels, din, 1.0 / std::sqrt(din), rng);
}

FeatureMap SyntheticFeatureModel::generate(const Camera& cam, int grid_width,
                                           int grid_height, double noise_sigma,
                                           std::uint64_t noise_seed) const {
  if (grid_width < 1 || grid_height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "feature grid must be non-empty");
  }
  FeatureMap fmap;
  fmap.width = grid_width;
  fmap.height = grid_height;
  fmap.data.resize(static_cast<Eigen::Index>(grid_width) * grid_height, channels_);

  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int din = 6 + 12 * bands_;
  std::vector<double> embedded(static_cast<std::size_t>(din));
  Eigen::Map<const Eigen::VectorXd> embedded_vec(embedded.data(), din);

  for (int gi = 0; gi < grid_height; ++gi) {
    for (int gj = 0; gj < grid_width; ++gj) {
      // Grid cell center mapped into full-resolution pixel coordinates.
      const double u = -0.5 + (gj + 0.5) * cam.width / static_cast<double>(grid_width);
      const double v = -0.5 + (gi + 0.5) * cam.height / static_cast<double>(grid_height);
      const Eigen::Vector3d dir_cam((u - cam.cx) / cam.fx, -(v - cam.cy) / cam.fy, -1.0);
      const Eigen::Vector3d dir = (cam.rotation * dir_cam).normalized();
      const double coords[6] = {cam.position.x(), cam.position.y(), cam.position.z(),
                                dir.x(), dir.y(), dir.z()};
      fourier_embed_coords(coords, bands_, embedded.data());
      Eigen::VectorXd row = projection_ * embedded_vec;
      if (noise_sigma > 0.0) {
        for (int c = 0; c < channels_; ++c) row[c] += noise_sigma * noise(rng);
      }
      fmap.data.row(static_cast<Eigen::Index>(gi) * grid_width + gj) = row.transpose();
    }
  }
  return fmap;
}

}  // namespace splatpose
