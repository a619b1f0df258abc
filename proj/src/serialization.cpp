#include "sensorfuse/serialization.hpp"

#include <sodium.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sensorfuse/errors.hpp"

namespace sensorfuse::io {

namespace {

void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw IoError("libsodium initialisation failed");
}

static_assert(std::endian::native == std::endian::little, "float payloads assume little endian");

std::string encode_f32(const std::vector<double>& values) {
  std::vector<float> f(values.begin(), values.end());
  return base64_encode(reinterpret_cast<const std::uint8_t*>(f.data()), f.size() * sizeof(float));
}

std::vector<double> decode_f32(const std::string& text, std::size_t expected) {
  const auto bytes = base64_decode(text);
  if (bytes.size() != expected * sizeof(float)) throw IoError("float payload has wrong length");
  std::vector<float> f(expected);
  std::memcpy(f.data(), bytes.data(), bytes.size());
  return {f.begin(), f.end()};
}

nlohmann::json depth_json(const geometry::DepthMap& d) {
  return {{"width", d.width},
          {"height", d.height},
          {"values", encode_f32(d.values)},
          {"valid", base64_encode(d.valid.data(), d.valid.size())}};
}

geometry::DepthMap depth_from(const nlohmann::json& j) {
  geometry::DepthMap d(j.at("width").get<int>(), j.at("height").get<int>());
  const std::size_t n = static_cast<std::size_t>(d.width) * d.height;
  d.values = decode_f32(j.at("values").get<std::string>(), n);
  d.valid = base64_decode(j.at("valid").get<std::string>());
  if (d.valid.size() != n) throw IoError("depth mask has wrong length");
  return d;
}

nlohmann::json image_json(const simkit::Image& im) {
  return {{"width", im.width},
          {"height", im.height},
          {"channels", im.channels},
          {"data", encode_f32(im.data)}};
}

simkit::Image image_from(const nlohmann::json& j) {
  simkit::Image im(j.at("width").get<int>(), j.at("height").get<int>(),
                   j.at("channels").get<int>());
  im.data = decode_f32(j.at("data").get<std::string>(), im.data.size());
  return im;
}

nlohmann::json cloud_json(const geometry::PointCloud& pc) {
  std::vector<double> flat;
  flat.reserve(pc.size() * 5);
  for (const auto& p : pc.points) {
    flat.insert(flat.end(), {p.x, p.y, p.z, p.intensity, p.velocity});
  }
  return {{"count", pc.size()}, {"data", encode_f32(flat)}};
}

geometry::PointCloud cloud_from(const nlohmann::json& j) {
  const std::size_t n = j.at("count").get<std::size_t>();
  const auto flat = decode_f32(j.at("data").get<std::string>(), n * 5);
  geometry::PointCloud pc;
  pc.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    pc.points[i] = {flat[5 * i], flat[5 * i + 1], flat[5 * i + 2], flat[5 * i + 3],
                    flat[5 * i + 4]};
  }
  return pc;
}

}  // namespace

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  ensure_sodium();
  constexpr int kVariant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_encoded_len(size, kVariant), '\0');
  sodium_bin2base64(out.data(), out.size(), data, size, kVariant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  ensure_sodium();
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw IoError("invalid base64 payload");
  }
  out.resize(len);
  return out;
}

std::string content_hash(const std::string& bytes) {
  ensure_sodium();
  unsigned char digest[32];
  crypto_generichash(digest, sizeof digest, reinterpret_cast<const unsigned char*>(bytes.data()),
                     bytes.size(), nullptr, 0);
  char hex[65];
  sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
  return hex;
}

nlohmann::json to_json(const Box3D& b) {
  return {{"class", std::string(class_name(b.cls))},
          {"x", b.x}, {"y", b.y}, {"z", b.z},
          {"w", b.w}, {"l", b.l}, {"h", b.h},
          {"yaw", b.yaw}, {"score", b.score}};
}

Box3D box_from_json(const nlohmann::json& j) {
  Box3D b;
  b.cls = parse_class(j.at("class").get<std::string>());
  b.x = j.at("x").get<double>();
  b.y = j.at("y").get<double>();
  b.z = j.at("z").get<double>();
  b.w = j.at("w").get<double>();
  b.l = j.at("l").get<double>();
  b.h = j.at("h").get<double>();
  b.yaw = j.at("yaw").get<double>();
  b.score = j.value("score", 1.0);
  return b;
}

nlohmann::json to_json(const simkit::Scene& scene) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& b : scene.objects) {
    auto o = to_json(b);
    o.erase("score");
    objs.push_back(std::move(o));
  }
  return {{"seed", scene.seed}, {"condition", scene.condition.to_string()}, {"objects", objs}};
}

simkit::Scene scene_from_json(const nlohmann::json& j) {
  simkit::Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.condition = simkit::Condition::parse(j.at("condition").get<std::string>());
  for (const auto& o : j.at("objects")) s.objects.push_back(box_from_json(o));
  return s;
}

nlohmann::json to_json(const simkit::SensorFrame& f) {
  return {{"seed", f.seed},
          {"condition", f.condition.to_string()},
          {"rgb_depth_sigma", f.rgb_depth_sigma},
          {"gated_depth_sigma", f.gated_depth_sigma},
          {"rgb_signal_gain", f.rgb_signal_gain},
          {"radar_object_returns", f.radar_object_returns},
          {"rgb_depth", depth_json(f.rgb_depth)},
          {"gated_depth", depth_json(f.gated_depth)},
          {"rgb", image_json(f.rgb)},
          {"gated", image_json(f.gated)},
          {"lidar", cloud_json(f.lidar)},
          {"radar", cloud_json(f.radar)}};
}

simkit::SensorFrame frame_from_json(const nlohmann::json& j) {
  simkit::SensorFrame f;
  f.seed = j.at("seed").get<std::uint64_t>();
  f.condition = simkit::Condition::parse(j.at("condition").get<std::string>());
  f.rgb_depth_sigma = j.at("rgb_depth_sigma").get<double>();
  f.gated_depth_sigma = j.at("gated_depth_sigma").get<double>();
  f.rgb_signal_gain = j.at("rgb_signal_gain").get<double>();
  f.radar_object_returns = j.at("radar_object_returns").get<std::size_t>();
  f.rgb_depth = depth_from(j.at("rgb_depth"));
  f.gated_depth = depth_from(j.at("gated_depth"));
  f.rgb = image_from(j.at("rgb"));
  f.gated = image_from(j.at("gated"));
  f.lidar = cloud_from(j.at("lidar"));
  f.radar = cloud_from(j.at("radar"));
  return f;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace sensorfuse::io
