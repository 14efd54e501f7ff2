#include "priorformer/params.hpp"

#include <cmath>
#include <random>

#include "priorformer/errors.hpp"

namespace priorformer {
namespace {

enum class InitRule { kFanInUniform, kZero, kOne, kSmallNormal };

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

InitRule rule_for(const std::string& name) {
  if (ends_with(name, "quality_token") || ends_with(name, "pos_embed")) return InitRule::kSmallNormal;
  if (ends_with(name, ".gain")) return InitRule::kOne;
  if (ends_with(name, "bias") || ends_with(name, ".b1") || ends_with(name, ".b2") || ends_with(name, ".b_z") ||
      ends_with(name, ".b_r") || ends_with(name, ".b_h")) {
    return InitRule::kZero;
  }
  return InitRule::kFanInUniform;
}

}  // namespace

std::vector<std::string> param_names(const ModelParams& m) {
  std::vector<std::string> names;
  visit_params(m, [&](const std::string& name, const Tensor&) { names.push_back(name); });
  return names;
}

std::size_t parameter_count(const ModelParams& m) {
  std::size_t n = 0;
  visit_params(m, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

ModelParams zero_params(const ModelConfig& config) {
  config.validate();
  const EncoderConfig& ec = config.encoder;
  const std::size_t d = ec.d_model, dh = config.gru_hidden;

  ModelParams p;
  EncoderParams& e = p.encoder;
  e.feat_w = Tensor({ec.c_feat, d});
  e.feat_b = Tensor({d});
  e.cont_w = Tensor({ec.c_cont, d});
  e.cont_b = Tensor({d});
  e.dist_w = Tensor({ec.c_dist, d});
  e.dist_b = Tensor({d});
  e.quality_token = Tensor({d});
  e.pos_embed = Tensor({ec.tokens + 3, d});
  e.layers.resize(ec.layers);
  for (auto& l : e.layers) {
    l.w_q = Tensor({d, d});
    l.w_k = Tensor({d, d});
    l.w_v = Tensor({d, d});
    l.w_o = Tensor({d, d});
    l.ff_w1 = Tensor({d, ec.d_ff});
    l.ff_b1 = Tensor({ec.d_ff});
    l.ff_w2 = Tensor({ec.d_ff, d});
    l.ff_b2 = Tensor({d});
    l.ln1_gain = Tensor({d});
    l.ln1_bias = Tensor({d});
    l.ln2_gain = Tensor({d});
    l.ln2_bias = Tensor({d});
  }

  TemporalParams& t = p.temporal;
  if (config.ablation.use_gru) {
    GruCellParams c;
    c.w_z = Tensor({d, dh});
    c.w_r = Tensor({d, dh});
    c.w_h = Tensor({d, dh});
    c.u_z = Tensor({dh, dh});
    c.u_r = Tensor({dh, dh});
    c.u_h = Tensor({dh, dh});
    c.b_z = Tensor({dh});
    c.b_r = Tensor({dh});
    c.b_h = Tensor({dh});
    t.cell = std::move(c);
    t.w_fc = Tensor({dh, 1});
  } else {
    t.w_fc = Tensor({d, 1});
  }
  t.b_fc = Tensor({1});
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zero_params(config);
  std::mt19937_64 rng(seed);
  visit_params(p, [&](const std::string& name, Tensor& t) {
    switch (rule_for(name)) {
      case InitRule::kFanInUniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : t.data()) v = dist(rng);
        break;
      }
      case InitRule::kSmallNormal: {
        std::normal_distribution<double> dist(0.0, 0.02);
        for (auto& v : t.data()) v = dist(rng);
        break;
      }
      case InitRule::kOne:
        for (auto& v : t.data()) v = 1.0;
        break;
      case InitRule::kZero:
        break;
    }
  });
  return p;
}

ModelVars bind_params(Graph& g, const ModelParams& params, bool trainable) {
  ModelVars vars = same_layout<Var>(params);
  auto src = param_refs(params);
  auto dst = param_refs(vars);
  for (std::size_t i = 0; i < src.size(); ++i) {
    *dst[i] = trainable ? g.variable(*src[i]) : g.constant(*src[i]);
  }
  return vars;
}

ModelParams collect_grads(const Graph& g, const ModelVars& vars) {
  ModelParams grads = same_layout<Tensor>(vars);
  auto src = param_refs(vars);
  auto dst = param_refs(grads);
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = g.grad(*src[i]);
  return grads;
}

}  // namespace priorformer
