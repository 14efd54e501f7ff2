#include "priorformer/config.hpp"

#include <vector>

#include "priorformer/errors.hpp"

namespace priorformer {
namespace {

void require_positive(std::size_t value, const char* field) {
  if (value == 0) throw ConfigError(std::string(field) + " must be >= 1");
}

}  // namespace

void EncoderConfig::validate() const {
  require_positive(layers, "layers");
  require_positive(heads, "heads");
  require_positive(d_model, "d_model");
  require_positive(d_ff, "d_ff");
  require_positive(tokens, "tokens");
  require_positive(c_feat, "c_feat");
  require_positive(c_cont, "c_cont");
  require_positive(c_dist, "c_dist");
  if (d_model % heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (!(layer_norm_eps > 0)) throw ConfigError("layer_norm_eps must be positive");
}

void PoolingConfig::validate() const {
  require_positive(tau, "tau");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
}

std::string Ablation::tag() const {
  std::vector<std::string> removed;
  if (!use_content_token) removed.emplace_back("CT");
  if (!use_distortion_token) removed.emplace_back("DT");
  if (!use_gru) removed.emplace_back("GRU");
  if (!use_temporal_pooling) removed.emplace_back("TP");
  if (removed.empty()) return "full";
  std::string tag = "w.o. ";
  for (std::size_t i = 0; i < removed.size(); ++i) {
    if (i) tag += '+';
    tag += removed[i];
  }
  return tag;
}

void ModelConfig::validate() const {
  encoder.validate();
  require_positive(gru_hidden, "gru_hidden");
  pooling.validate();
}

std::size_t ModelConfig::token_rows() const {
  return 1 + encoder.tokens + (ablation.use_content_token ? 1 : 0) + (ablation.use_distortion_token ? 1 : 0);
}

}  // namespace priorformer
