#include "handik/detcodec.hpp"

#include <cmath>
#include <stdexcept>

#include "handik/util.hpp"

namespace handik {

void Intrinsics::validate() const {
  if (k(0, 0) <= 0.0 || k(1, 1) <= 0.0) throw std::invalid_argument("intrinsics: fx and fy must be positive");
  if (std::abs(k.determinant()) < 1e-12) throw std::invalid_argument("intrinsics: matrix is singular");
}

HeatEncodeResult encode_heatmap(const Annotation2D& ann, int resolution, double sigma) {
  const int j_count = ann.count();
  HeatEncodeResult out;
  out.heat.assign(static_cast<std::size_t>(j_count) * resolution * resolution, 0.0);
  out.effective = ann;
  if (static_cast<int>(out.effective.visible.size()) != j_count)
    out.effective.visible.assign(static_cast<std::size_t>(j_count), 1);

  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int j = 0; j < j_count; ++j) {
    const double u = ann.uv(j, 0), v = ann.uv(j, 1);
    const bool in_range = u >= 0.0 && u < resolution && v >= 0.0 && v < resolution;
    if (!out.effective.visible[static_cast<std::size_t>(j)] || !in_range) {
      out.effective.visible[static_cast<std::size_t>(j)] = 0;
      continue;  // map stays zero
    }
    for (int row = 0; row < resolution; ++row)
      for (int col = 0; col < resolution; ++col) {
        const double d2 = (col - u) * (col - u) + (row - v) * (row - v);
        out.heat[static_cast<std::size_t>((j * resolution + row) * resolution + col)] = std::exp(-d2 * inv);
      }
  }
  return out;
}

std::vector<double> encode_location_map(const JointSet& xyz, int resolution) {
  if (xyz.frame != JointFrame::normalized)
    throw std::invalid_argument("encode_location_map: joints must be in the normalized frame");
  const int j_count = xyz.count();
  std::vector<double> out(static_cast<std::size_t>(j_count) * resolution * resolution * 3);
  std::size_t at = 0;
  for (int j = 0; j < j_count; ++j)
    for (int px = 0; px < resolution * resolution; ++px)
      for (int c = 0; c < 3; ++c) out[at++] = xyz.positions(j, c);
  return out;
}

std::vector<double> encode_delta_map(const Points& bones, int resolution) {
  const int j_count = static_cast<int>(bones.rows());
  std::vector<double> out(static_cast<std::size_t>(j_count) * resolution * resolution * 3);
  std::size_t at = 0;
  for (int j = 0; j < j_count; ++j)
    for (int px = 0; px < resolution * resolution; ++px)
      for (int c = 0; c < 3; ++c) out[at++] = bones(j, c);
  return out;
}

MapStack encode_stack(const Annotation2D& ann, const JointSet& xyz, const Points& bones,
                      int resolution, double sigma) {
  if (ann.count() != xyz.count() || xyz.count() != static_cast<int>(bones.rows()))
    throw std::invalid_argument("encode_stack: joint count mismatch");
  MapStack maps;
  maps.joints = ann.count();
  maps.resolution = resolution;
  maps.heat = encode_heatmap(ann, resolution, sigma).heat;
  maps.loc = encode_location_map(xyz, resolution);
  maps.delta = encode_delta_map(bones, resolution);
  return maps;
}

DecodeResult decode_joints(const MapStack& maps) {
  const int s = maps.resolution;
  DecodeResult out;
  out.ann.uv.resize(maps.joints, 2);
  out.ann.visible.assign(static_cast<std::size_t>(maps.joints), 1);
  out.joints.positions = Points::Zero(maps.joints, 3);
  out.joints.frame = JointFrame::normalized;
  out.low_confidence.assign(static_cast<std::size_t>(maps.joints), 0);

  for (int j = 0; j < maps.joints; ++j) {
    int best_u = 0, best_v = 0;
    double best = -1.0;
    for (int v = 0; v < s; ++v)
      for (int u = 0; u < s; ++u) {
        const double val = maps.heat_at(j, v, u);
        if (val > best) {  // strict: first row-major maximum wins
          best = val;
          best_u = u;
          best_v = v;
        }
      }
    if (best <= 0.0) {
      out.low_confidence[static_cast<std::size_t>(j)] = 1;
      out.ann.visible[static_cast<std::size_t>(j)] = 0;
      best_u = s / 2;
      best_v = s / 2;
    }
    out.ann.uv(j, 0) = best_u;
    out.ann.uv(j, 1) = best_v;
    out.joints.positions.row(j) = maps.loc_at(j, best_v, best_u).transpose();
  }
  return out;
}

double loss_heat(const std::vector<double>& h_gt, const std::vector<double>& h) {
  if (h_gt.size() != h.size()) throw std::invalid_argument("loss_heat: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double d = h_gt[i] - h[i];
    acc += d * d;
  }
  return acc;
}

static double weighted_sq(const std::vector<double>& h_gt, const std::vector<double>& a,
                          const std::vector<double>& b, const char* who) {
  if (a.size() != b.size() || a.size() != 3 * h_gt.size())
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
  double acc = 0.0;
  for (std::size_t px = 0; px < h_gt.size(); ++px)
    for (int c = 0; c < 3; ++c) {
      const double d = h_gt[px] * (a[3 * px + c] - b[3 * px + c]);
      acc += d * d;
    }
  return acc;
}

double loss_loc(const std::vector<double>& h_gt, const std::vector<double>& l_gt, const std::vector<double>& l) {
  return weighted_sq(h_gt, l_gt, l, "loss_loc");
}

double loss_delta(const std::vector<double>& h_gt, const std::vector<double>& d_gt, const std::vector<double>& d) {
  return weighted_sq(h_gt, d_gt, d, "loss_delta");
}

double solve_root_depth(const Intrinsics& k, const Eigen::Vector2d& uv_root,
                        const Eigen::Vector2d& uv_wrist, double d_w, double l_ref) {
  k.validate();
  if (l_ref <= 0.0) throw std::invalid_argument("solve_root_depth: reference bone length must be positive");
  const Eigen::Matrix3d k_inv = k.k.inverse();
  const Eigen::Vector3d a = k_inv * Eigen::Vector3d(uv_root.x(), uv_root.y(), 1.0);
  const Eigen::Vector3d b = k_inv * Eigen::Vector3d(uv_wrist.x(), uv_wrist.y(), 1.0);

  // || z*(a-b) - l_ref*d_w*b ||^2 = l_ref^2
  const Eigen::Vector3d c = a - b;
  const Eigen::Vector3d e = l_ref * d_w * b;
  const double cc = c.squaredNorm();
  if (cc < 1e-18) throw std::domain_error("solve_root_depth: root and wrist rays coincide");
  const double ce = c.dot(e);
  const double disc = ce * ce - cc * (e.squaredNorm() - l_ref * l_ref);
  if (disc < 0.0) throw std::domain_error("solve_root_depth: no real solution");
  const double sq = std::sqrt(disc);
  const double hi = (ce + sq) / cc;
  const double lo = (ce - sq) / cc;
  const double z = hi > 0.0 ? hi : lo;
  if (z <= 0.0) throw std::domain_error("solve_root_depth: no positive solution");
  return z;
}

Eigen::Vector3d recover_translation(const Intrinsics& k, const Eigen::Vector2d& uv_root, double z_r) {
  k.validate();
  if (z_r <= 0.0) throw std::invalid_argument("recover_translation: depth must be positive");
  return z_r * (k.k.inverse() * Eigen::Vector3d(uv_root.x(), uv_root.y(), 1.0));
}

// ---- binary blob ----

static constexpr char kMapsMagic[9] = "HIKMAPS1";

std::string serialize_maps(const MapStack& maps) {
  std::string out;
  out.reserve(16 + 4 * (maps.heat.size() + maps.loc.size() + maps.delta.size()));
  out.append(kMapsMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(maps.joints));
  put_u32(out, static_cast<std::uint32_t>(maps.resolution));
  for (double v : maps.heat) put_f32(out, static_cast<float>(v));
  for (double v : maps.loc) put_f32(out, static_cast<float>(v));
  for (double v : maps.delta) put_f32(out, static_cast<float>(v));
  return out;
}

MapStack parse_maps(const std::string& blob) {
  if (blob.size() < 16 || blob.compare(0, 8, kMapsMagic, 8) != 0)
    throw std::runtime_error("parse_maps: bad magic");
  ByteReader r(blob, 8);
  MapStack maps;
  maps.joints = static_cast<int>(r.u32());
  maps.resolution = static_cast<int>(r.u32());
  if (maps.joints <= 0 || maps.resolution <= 0 || maps.joints > 1024 || maps.resolution > 4096)
    throw std::runtime_error("parse_maps: implausible header");
  const std::size_t px = static_cast<std::size_t>(maps.joints) * maps.resolution * maps.resolution;
  if (r.remaining() != 4 * (px + 3 * px + 3 * px)) throw std::runtime_error("parse_maps: size mismatch");
  maps.heat.resize(px);
  maps.loc.resize(3 * px);
  maps.delta.resize(3 * px);
  for (double& v : maps.heat) v = r.f32();
  for (double& v : maps.loc) v = r.f32();
  for (double& v : maps.delta) v = r.f32();
  return maps;
}

void save_maps(const MapStack& maps, const std::string& path) { write_file(path, serialize_maps(maps)); }

MapStack load_maps(const std::string& path) { return parse_maps(read_file(path)); }

}  // namespace handik
