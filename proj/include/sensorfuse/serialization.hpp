#pragma once

// JSON schema for replayable experiments.
//
// Scene:
//   {"seed": u64, "condition": "fog@0.05",
//    "objects": [{"class": "car", "x":, "y":, "z":, "w":, "l":, "h":, "yaw":}]}
//
// SensorFrame (array payloads are base64 of little-endian float32 values):
//   {"seed": u64, "condition": str,
//    "rgb_depth_sigma": f, "gated_depth_sigma": f, "rgb_signal_gain": f,
//    "radar_object_returns": n,
//    "rgb_depth":   {"width", "height", "values": b64 f32[w*h], "valid": b64 u8[w*h]},
//    "gated_depth": {...},
//    "rgb":   {"width", "height", "channels", "data": b64 f32[h*w*c]},
//    "gated": {...},
//    "lidar": {"count": n, "data": b64 f32[n*5] (x, y, z, intensity, velocity)},
//    "radar": {...}}
//
// Frames are quantised to float32 on write; a written frame read back and
// written again is byte-identical.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sensorfuse/simkit.hpp"

namespace sensorfuse::io {

std::string base64_encode(const std::uint8_t* data, std::size_t size);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// BLAKE2b-256 hex digest.
std::string content_hash(const std::string& bytes);

nlohmann::json to_json(const Box3D& box);
Box3D box_from_json(const nlohmann::json& j);
nlohmann::json to_json(const simkit::Scene& scene);
simkit::Scene scene_from_json(const nlohmann::json& j);
nlohmann::json to_json(const simkit::SensorFrame& frame);
simkit::SensorFrame frame_from_json(const nlohmann::json& j);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace sensorfuse::io
