#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "priorformer/tensor.hpp"

namespace priorformer {

struct Frame {
  Tensor features;    // [N x C_feat] backbone feature tokens
  Tensor content;     // [C_cont]
  Tensor distortion;  // [C_dist]
};

// One video's extractor outputs at 1 frame per second.
struct FeatureSequence {
  std::string id;
  std::vector<Frame> frames;
  std::optional<double> mos;

  std::size_t frame_count() const { return frames.size(); }
  std::size_t tokens() const { return frames.at(0).features.dim(0); }
  std::size_t c_feat() const { return frames.at(0).features.dim(1); }
  std::size_t c_cont() const { return frames.at(0).content.size(); }
  std::size_t c_dist() const { return frames.at(0).distortion.size(); }

  // At least one frame, every frame shaped like the first, finite MOS.
  void validate() const;
};

// PFVF, all little-endian:
//   "PFVF" | u32 version=1 | u32 T, N, C_feat, C_cont, C_dist | u32 flags (bit0: MOS present) | f32 mos
//   per frame: N*C_feat f32 features, C_cont f32 content, C_dist f32 distortion
//   u32 CRC-32 (IEEE) of every preceding byte
// Values are narrowed to f32 on write and widened to f64 on read.
inline constexpr std::uint32_t kFeatureFileVersion = 1;

std::vector<std::uint8_t> encode_feature_file(const FeatureSequence& seq);
// `id` becomes the sequence id (the format carries none).
FeatureSequence decode_feature_file(const std::vector<std::uint8_t>& bytes, const std::string& id = "");

void write_feature_file(const FeatureSequence& seq, const std::filesystem::path& path);
// Id is the file stem.
FeatureSequence read_feature_file(const std::filesystem::path& path);

// Every *.pfvf file of a directory, sorted by file name.
std::vector<FeatureSequence> read_feature_dir(const std::filesystem::path& dir);

struct SynthSpec {
  std::size_t videos = 250;
  std::size_t frames = 8;
  std::size_t tokens = 4;
  std::size_t c_feat = 16;
  std::size_t c_cont = 8;
  std::size_t c_dist = 8;
  double sigma = 0.1;
  std::size_t content_clusters = 5;
  // Euclidean norms of the quality directions b1 (whole N x C_feat map) and d1.
  double feature_signal = 0.25;
  double distortion_signal = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per video: latent quality s ~ U[1, 5] (the MOS label), content = one of K
// fixed cluster centres + noise, distortion = d0 + s d1 + noise, features =
// b0 + s b1 + noise, with noise N(0, sigma^2) drawn per frame and element and
// d0, d1, b0, b1 fixed random directions of the seed.
std::vector<FeatureSequence> synth_dataset(const SynthSpec& spec);

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t size);

}  // namespace priorformer
