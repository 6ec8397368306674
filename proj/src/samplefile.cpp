#include "handik/samplefile.hpp"

#include <stdexcept>

#include <json.hpp>

#include "handik/util.hpp"

namespace handik {

void write_samples(std::span<const IkSample> samples, int joints, const std::string& path) {
  nlohmann::json header;
  header["format"] = "handik-samples-v1";
  header["count"] = samples.size();
  header["joints"] = joints;

  std::string blob = header.dump();
  blob.push_back('\n');
  blob.reserve(blob.size() + samples.size() * (2 + 4 * (12 + 4 + 3) * static_cast<std::size_t>(joints)));
  for (const IkSample& s : samples) {
    if (s.input.joints() != joints || s.target_positions.count() != joints)
      throw std::invalid_argument("write_samples: sample joint count mismatch");
    put_u8(blob, static_cast<std::uint8_t>(s.kind));
    put_u8(blob, s.target_rotations ? 1 : 0);
    const Eigen::VectorXd flat = s.input.flatten();
    for (Eigen::Index i = 0; i < flat.size(); ++i) put_f32(blob, static_cast<float>(flat(i)));
    if (s.target_rotations) {
      for (const Quaternion& q : s.target_rotations->rotations) {
        put_f32(blob, static_cast<float>(q.w));
        put_f32(blob, static_cast<float>(q.x));
        put_f32(blob, static_cast<float>(q.y));
        put_f32(blob, static_cast<float>(q.z));
      }
    }
    for (int j = 0; j < joints; ++j)
      for (int c = 0; c < 3; ++c) put_f32(blob, static_cast<float>(s.target_positions.positions(j, c)));
  }
  write_file(path, blob);
}

SampleArchive read_samples(const std::string& path) {
  const std::string data = read_file(path);
  const std::size_t nl = data.find('\n');
  if (nl == std::string::npos) throw std::runtime_error("read_samples: missing header line");
  nlohmann::json header = nlohmann::json::parse(data.substr(0, nl));
  if (header.value("format", "") != std::string("handik-samples-v1"))
    throw std::runtime_error("read_samples: unsupported format in " + path);

  SampleArchive archive;
  archive.joints = header.at("joints").get<int>();
  const std::size_t count = header.at("count").get<std::size_t>();
  const int j = archive.joints;
  if (j <= 0) throw std::runtime_error("read_samples: bad joint count");

  ByteReader r(data, nl + 1);
  archive.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    IkSample s;
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw std::runtime_error("read_samples: unknown sample kind");
    s.kind = static_cast<SampleKind>(kind);
    const bool has_rot = r.u8() != 0;
    Eigen::VectorXd flat(12 * j);
    for (Eigen::Index k = 0; k < flat.size(); ++k) flat(k) = r.f32();
    s.input = IkInput::from_flat(flat, j);
    if (has_rot) {
      Pose pose;
      pose.rotations.reserve(static_cast<std::size_t>(j));
      for (int k = 0; k < j; ++k) {
        Quaternion q;
        q.w = r.f32();
        q.x = r.f32();
        q.y = r.f32();
        q.z = r.f32();
        pose.rotations.push_back(q);
      }
      s.target_rotations = std::move(pose);
    }
    s.target_positions.positions.resize(j, 3);
    s.target_positions.frame = JointFrame::normalized;
    for (int k = 0; k < j; ++k)
      for (int c = 0; c < 3; ++c) s.target_positions.positions(k, c) = r.f32();
    archive.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw std::runtime_error("read_samples: trailing bytes");
  return archive;
}

}  // namespace handik
