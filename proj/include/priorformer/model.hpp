#pragma once

#include <cstdint>
#include <filesystem>

#include "priorformer/autodiff.hpp"
#include "priorformer/config.hpp"
#include "priorformer/dataio.hpp"
#include "priorformer/params.hpp"
#include "priorformer/temporal.hpp"

namespace priorformer {

// Validates the config (ConfigError on D % H != 0 or zero extents) and draws
// seeded parameters.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

// Checks a video against the configured widths; DimensionError names the field.
void check_video(const FeatureSequence& video, const ModelConfig& config);

struct VideoForward {
  Var score;  // scalar Q
  QualityTrace trace;
};

// Each frame runs through the encoder independently; the quality-token
// outputs then feed the GRU, the FC head and temporal pooling (or the mean of
// q under w.o. TP).
VideoForward forward_video(Graph& g, const FeatureSequence& video, const ModelVars& params, const ModelConfig& config);

QualityTrace predict_video(const FeatureSequence& video, const ModelParams& params, const ModelConfig& config);

// PFMP, little-endian:
//   "PFMP" | u32 version | config block | u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u32 extents..., f64 values
//   u32 CRC-32 (IEEE) of every preceding byte
// Config block: u32 layers, heads, d_model, d_ff, tokens, c_feat, c_cont, c_dist,
// gru_hidden, tau; f64 gamma, layer_norm_eps; u32 ablation bits
// (1 content, 2 distortion, 4 pooling, 8 gru); u64 seed.
inline constexpr std::uint32_t kParamsFileVersion = 1;

struct StoredModel {
  ModelConfig config;
  ModelParams params;
};

std::vector<std::uint8_t> encode_params(const ModelParams& params, const ModelConfig& config,
                                        std::uint32_t version = kParamsFileVersion);
StoredModel decode_params(const std::vector<std::uint8_t>& bytes, const std::string& what = "parameter file");

void save_params(const ModelParams& params, const ModelConfig& config, const std::filesystem::path& path);
StoredModel load_params(const std::filesystem::path& path);

}  // namespace priorformer
