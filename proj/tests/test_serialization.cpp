#include <gtest/gtest.h>

#include <filesystem>

#include "sensorfuse/checkpoint.hpp"
#include "sensorfuse/errors.hpp"
#include "sensorfuse/serialization.hpp"

using namespace sensorfuse;

namespace {

std::string b64(const std::string& s) {
  return io::base64_encode(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

}  // namespace

TEST(Base64, KnownVectors) {
  EXPECT_EQ(b64(""), "");
  EXPECT_EQ(b64("f"), "Zg==");
  EXPECT_EQ(b64("fo"), "Zm8=");
  EXPECT_EQ(b64("foo"), "Zm9v");
  EXPECT_EQ(b64("foobar"), "Zm9vYmFy");
  const auto back = io::base64_decode("Zm9vYmFy");
  EXPECT_EQ(std::string(back.begin(), back.end()), "foobar");
  EXPECT_THROW(io::base64_decode("Zm9v*mFy"), IoError);
}

TEST(ContentHash, Blake2b256KnownDigests) {
  EXPECT_EQ(io::content_hash("abc"), "bddd813c634239723171ef3fee98579b94964e3bb1cb3e427262c8c068d52319");
  EXPECT_EQ(io::content_hash(""), "0e5751c026e543b2e8ab2eb06099daa1d1e5df47778f7787faab45cdf12fe3a8");
}

TEST(SceneJson, RoundTrip) {
  simkit::SceneConfig cfg;
  const simkit::Scene s = simkit::generate_scene(cfg, 77, simkit::Condition::parse("snow@0.01"));
  const simkit::Scene back = io::scene_from_json(io::to_json(s));
  EXPECT_EQ(back.seed, s.seed);
  EXPECT_EQ(back.condition, s.condition);
  EXPECT_EQ(back.objects, s.objects);
}

TEST(FrameJson, SecondWriteIsByteIdentical) {
  const auto rig = simkit::RigConfig::desk();
  const auto frame = simkit::simulate(simkit::generate_scene(simkit::SceneConfig{}, 3), rig);
  const std::string first = io::to_json(frame).dump();
  const auto back = io::frame_from_json(nlohmann::json::parse(first));
  EXPECT_EQ(io::to_json(back).dump(), first);
  EXPECT_EQ(back.lidar.size(), frame.lidar.size());
  EXPECT_EQ(back.radar_object_returns, frame.radar_object_returns);
  EXPECT_EQ(back.rgb_depth.valid, frame.rgb_depth.valid);
  for (std::size_t i = 0; i < frame.lidar.size(); ++i) {
    EXPECT_NEAR(back.lidar.points[i].x, frame.lidar.points[i].x, 1e-5);
  }
}

TEST(Checkpoint, RoundTripPreservesEveryTensor) {
  model::ModelConfig cfg = model::ModelConfig::desk();
  cfg.encoder.channels = 4;
  cfg.decoder.layers = 1;
  const model::Model m(cfg, 5);
  const std::string bytes = checkpoint::serialize(m);
  const model::Model back = checkpoint::deserialize(bytes);
  EXPECT_EQ(checkpoint::serialize(back), bytes);
  EXPECT_EQ(back.config().to_json(), cfg.to_json());
  ASSERT_EQ(back.registry().count(), m.registry().count());
  for (std::size_t i = 0; i < m.registry().count(); ++i) {
    EXPECT_EQ(back.registry().at(i).name(), m.registry().at(i).name());
    EXPECT_EQ(back.registry().at(i).value(), m.registry().at(i).value());
  }
}

TEST(Checkpoint, RejectsCorruptInput) {
  model::ModelConfig cfg = model::ModelConfig::desk();
  cfg.encoder.channels = 4;
  cfg.decoder.layers = 1;
  std::string bytes = checkpoint::serialize(model::Model(cfg, 1));
  EXPECT_THROW(checkpoint::deserialize("not a checkpoint"), IoError);
  EXPECT_THROW(checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)), IoError);
  std::string bad = bytes;
  bad[8] = 7;  // version
  EXPECT_THROW(checkpoint::deserialize(bad), IoError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "sensorfuse_ckpt_test";
  std::filesystem::create_directories(dir);
  model::ModelConfig cfg = model::ModelConfig::desk();
  cfg.encoder.channels = 4;
  cfg.decoder.layers = 1;
  const model::Model m(cfg, 2);
  checkpoint::save(dir / "m.ckpt", m);
  EXPECT_EQ(checkpoint::serialize(checkpoint::load(dir / "m.ckpt")), checkpoint::serialize(m));
  EXPECT_THROW(checkpoint::load(dir / "missing.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}
