#include "splatpose/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_map>

#include "splatpose/error.hpp"

namespace splatpose {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  p = std::clamp(p, 1e-7, 1.0 - 1e-7);
  return std::log(p / (1.0 - p));
}

struct PlyProperty {
  std::string name;
  int byte_size = 0;
};

int property_size(const std::string& type) {
  if (type == "char" || type == "int8" || type == "uchar" || type == "uint8") return 1;
  if (type == "short" || type == "int16" || type == "ushort" || type == "uint16") return 2;
  if (type == "int" || type == "int32" || type == "uint" || type == "uint32") return 4;
  if (type == "float" || type == "float32") return 4;
  if (type == "double" || type == "float64") return 8;
  return 0;
}

}  // namespace

Eigen::Matrix3d covariance(const GaussianPrimitive& p) {
  const Eigen::Matrix3d r = p.rotation.toRotationMatrix();
  const Eigen::Matrix3d m =
      r * p.scale.array().square().matrix().asDiagonal() * r.transpose();
  return 0.5 * (m + m.transpose());
}

Scene::Scene(std::vector<GaussianPrimitive> primitives)
    : primitives_(std::move(primitives)) {
  for (auto& p : primitives_) {
    const double norm = p.rotation.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error(ErrorCode::kInvalidArgument, "zero-norm quaternion");
    }
    p.rotation.normalize();
    if ((p.scale.array() <= 0.0).any()) {
      throw Error(ErrorCode::kInvalidArgument, "non-positive scale entry");
    }
    if (p.opacity < 0.0 || p.opacity > 1.0) {
      throw Error(ErrorCode::kInvalidArgument, "opacity outside [0, 1]");
    }
    if ((p.color_dc.array() < 0.0).any() || (p.color_dc.array() > 1.0).any()) {
      throw Error(ErrorCode::kInvalidArgument, "color outside [0, 1]");
    }
  }

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());
  for (const auto& p : primitives_) {
    lo = lo.cwiseMin(p.mean);
    hi = hi.cwiseMax(p.mean);
  }
  bbox_extent_ = primitives_.empty() ? 0.0 : (hi - lo).maxCoeff();
  if (bbox_extent_ <= 0.0) {
    for (const auto& p : primitives_) {
      bbox_extent_ = std::max(bbox_extent_, p.scale.maxCoeff());
    }
  }
}

Scene load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }

  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") {
    throw Error(ErrorCode::kFormat, "not a PLY file: " + path.string());
  }

  std::size_t vertex_count = 0;
  std::vector<PlyProperty> props;
  bool in_vertex_element = false;
  bool saw_format = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    if (token == "comment" || token.empty()) continue;
    if (token == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") {
        throw Error(ErrorCode::kFormat, "unsupported PLY format: " + fmt);
      }
      saw_format = true;
    } else if (token == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        in_vertex_element = true;
        vertex_count = count;
      } else {
        in_vertex_element = false;
        if (count > 0) {
          throw Error(ErrorCode::kFormat, "unsupported element " + name);
        }
      }
    } else if (token == "property") {
      if (!in_vertex_element) continue;
      std::string type, name;
      ls >> type;
      if (type == "list") {
        throw Error(ErrorCode::kFormat, "list properties unsupported");
      }
      ls >> name;
      const int size = property_size(type);
      if (size == 0) {
        throw Error(ErrorCode::kFormat, "unknown property type " + type);
      }
      props.push_back({name, size});
    } else if (token == "end_header") {
      break;
    }
  }
  if (!saw_format) {
    throw Error(ErrorCode::kFormat, "missing format declaration");
  }
  if (vertex_count == 0) {
    throw Error(ErrorCode::kEmptyScene, "PLY contains no vertices");
  }

  static const char* kRequired[] = {"x",       "y",       "z",       "f_dc_0",
                                    "f_dc_1",  "f_dc_2",  "opacity", "scale_0",
                                    "scale_1", "scale_2", "rot_0",   "rot_1",
                                    "rot_2",   "rot_3"};
  std::unordered_map<std::string, std::size_t> offsets;
  std::size_t stride = 0;
  for (const auto& p : props) {
    offsets.emplace(p.name, stride);
    stride += static_cast<std::size_t>(p.byte_size);
  }
  std::size_t required_offsets[14];
  for (int i = 0; i < 14; ++i) {
    auto it = offsets.find(kRequired[i]);
    if (it == offsets.end()) {
      throw Error(ErrorCode::kFormat, std::string("missing property ") + kRequired[i]);
    }
    // Required fields must be float32, the layout 3DGS trainers emit.
    for (const auto& p : props) {
      if (p.name == kRequired[i] && p.byte_size != 4) {
        throw Error(ErrorCode::kFormat,
                    std::string("property ") + kRequired[i] + " must be float");
      }
    }
    required_offsets[i] = it->second;
  }

  std::vector<char> record(stride);
  auto field = [&](int i) {
    float v;
    std::memcpy(&v, record.data() + required_offsets[i], sizeof(float));
    return static_cast<double>(v);
  };

  std::vector<GaussianPrimitive> prims;
  prims.reserve(vertex_count);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (!in.read(record.data(), static_cast<std::streamsize>(stride))) {
      throw Error(ErrorCode::kFormat, "truncated PLY payload");
    }
    GaussianPrimitive p;
    p.mean = Eigen::Vector3d(field(0), field(1), field(2));
    p.color_dc = (Eigen::Vector3d(field(3), field(4), field(5)) * kShDc0)
                     .array() + 0.5;
    p.color_dc = p.color_dc.cwiseMax(0.0).cwiseMin(1.0);
    p.opacity = sigmoid(field(6));
    p.scale = Eigen::Vector3d(std::exp(field(7)), std::exp(field(8)),
                              std::exp(field(9)));
    p.rotation = Eigen::Quaterniond(field(10), field(11), field(12), field(13));
    prims.push_back(std::move(p));
  }
  return Scene(std::move(prims));
}

void save_ply(const Scene& scene, const std::filesystem::path& path) {
  if (scene.empty()) {
    throw Error(ErrorCode::kEmptyScene, "refusing to save empty scene");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }

  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << scene.size() << "\n";
  static const char* kFields[] = {"x",       "y",       "z",       "f_dc_0",
                                  "f_dc_1",  "f_dc_2",  "opacity", "scale_0",
                                  "scale_1", "scale_2", "rot_0",   "rot_1",
                                  "rot_2",   "rot_3"};
  for (const char* f : kFields) out << "property float " << f << "\n";
  out << "end_header\n";

  for (const auto& p : scene.primitives()) {
    float rec[14];
    for (int i = 0; i < 3; ++i) rec[i] = static_cast<float>(p.mean[i]);
    for (int i = 0; i < 3; ++i) {
      rec[3 + i] = static_cast<float>((p.color_dc[i] - 0.5) / kShDc0);
    }
    rec[6] = static_cast<float>(logit(p.opacity));
    for (int i = 0; i < 3; ++i) {
      rec[7 + i] = static_cast<float>(std::log(p.scale[i]));
    }
    rec[10] = static_cast<float>(p.rotation.w());
    rec[11] = static_cast<float>(p.rotation.x());
    rec[12] = static_cast<float>(p.rotation.y());
    rec[13] = static_cast<float>(p.rotation.z());
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  }
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed: " + path.string());
  }
}

Scene synth_scene(std::uint64_t seed, int n, double extent) {
  if (n < 1) {
    throw Error(ErrorCode::kInvalidArgument, "synth_scene requires n >= 1");
  }
  if (!(extent > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "synth_scene requires extent > 0");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean_dist(-0.5 * extent, 0.5 * extent);
  std::uniform_real_distribution<double> log_scale_dist(std::log(0.005 * extent),
                                                        std::log(0.05 * extent));
  std::uniform_real_distribution<double> opacity_dist(0.3, 1.0);
  std::uniform_real_distribution<double> color_dist(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<GaussianPrimitive> prims;
  prims.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    GaussianPrimitive p;
    for (int k = 0; k < 3; ++k) p.mean[k] = mean_dist(rng);
    for (int k = 0; k < 3; ++k) p.scale[k] = std::exp(log_scale_dist(rng));
    p.opacity = opacity_dist(rng);
    for (int k = 0; k < 3; ++k) p.color_dc[k] = color_dist(rng);
    Eigen::Vector4d q;
    do {
      for (int k = 0; k < 4; ++k) q[k] = gauss(rng);
    } while (q.norm() < 1e-12);
    q.normalize();
    p.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
    prims.push_back(std::move(p));
  }
  return Scene(std::move(prims));
}

}  // namespace splatpose
