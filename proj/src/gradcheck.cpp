#include "priorformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "priorformer/autodiff.hpp"
#include "priorformer/errors.hpp"
#include "priorformer/model.hpp"
#include "priorformer/train.hpp"

namespace priorformer {

ModelConfig gradcheck_config() {
  ModelConfig c;
  c.encoder.layers = 2;
  c.encoder.heads = 2;
  c.encoder.d_model = 8;
  c.encoder.d_ff = 16;
  c.encoder.tokens = 4;
  c.encoder.c_feat = 6;
  c.encoder.c_cont = 5;
  c.encoder.c_dist = 3;
  c.gru_hidden = 4;
  c.pooling.tau = 2;
  return c;
}

GradCheckReport check_model_gradients(const ModelConfig& config, std::uint64_t seed, std::size_t frames, double step) {
  if (frames == 0) throw ContractError("gradient check needs at least one frame");
  if (!(step > 0)) throw ContractError("gradient check step must be positive");
  ModelParams params = init_model(config, seed);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto draw = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = u(rng);
    return t;
  };
  FeatureSequence video;
  video.id = "gradcheck";
  const EncoderConfig& e = config.encoder;
  for (std::size_t t = 0; t < frames; ++t) {
    video.frames.push_back({draw({e.tokens, e.c_feat}), draw({e.c_cont}), draw({e.c_dist})});
  }
  video.mos = predict_video(video, params, config).score + 1.0 + 0.5 * (u(rng) + 1.0);

  const VideoGradient analytic = video_gradient(video, params, config);
  auto loss_at = [&](const ModelParams& p) {
    return std::fabs(predict_video(video, p, config).score - *video.mos);
  };

  GradCheckReport report;
  auto names = param_names(params);
  auto values = param_refs(params);
  auto grads = param_refs(analytic.grads);
  for (std::size_t k = 0; k < values.size(); ++k) {
    Tensor& w = *values[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + step;
      const double up = loss_at(params);
      w[i] = saved - step;
      const double down = loss_at(params);
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = (*grads[k])[i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      ++report.checked;
      if (report.worst_param.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = names[k];
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace priorformer
