#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace priorformer {

struct EncoderConfig {
  std::size_t layers = 6;
  std::size_t heads = 8;
  std::size_t d_model = 512;
  std::size_t d_ff = 1024;
  // Feature tokens per frame, HW/P^2 of the backbone map (7x7 for ResNet-50 at 224px).
  std::size_t tokens = 49;
  std::size_t c_feat = 2048;
  std::size_t c_cont = 512;
  std::size_t c_dist = 512;
  double layer_norm_eps = 1e-5;

  void validate() const;
  std::size_t head_dim() const { return d_model / heads; }
};

struct PoolingConfig {
  std::size_t tau = 12;  // frames; 12 s at 1 fps
  double gamma = 0.5;

  void validate() const;
};

struct Ablation {
  bool use_content_token = true;
  bool use_distortion_token = true;
  bool use_temporal_pooling = true;
  bool use_gru = true;

  // "full", or "w.o. " followed by the removed parts joined with '+', e.g. "w.o. CT+DT".
  std::string tag() const;

  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t gru_hidden = 32;
  PoolingConfig pooling;
  Ablation ablation;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;

  // Rows of the token matrix: quality token + N features + enabled priors.
  std::size_t token_rows() const;
};

}  // namespace priorformer
