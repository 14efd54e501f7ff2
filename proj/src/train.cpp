#include "priorformer/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "priorformer/errors.hpp"
#include "priorformer/metrics.hpp"
#include "priorformer/model.hpp"

namespace priorformer {
namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled exactly once; the first exception is rethrown on the caller.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

class Optimizer {
 public:
  Optimizer(const TrainConfig& tc, const ModelParams& like) : tc_(tc) {
    for (const Tensor* t : param_refs(like)) {
      first_.push_back(Tensor::zeros(t->shape()));
      second_.push_back(Tensor::zeros(t->shape()));
    }
  }

  void step(ModelParams& params, const ModelParams& grads) {
    auto p = param_refs(params);
    auto g = param_refs(grads);
    ++steps_;
    if (tc_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t k = 0; k < p.size(); ++k)
        for (std::size_t i = 0; i < p[k]->size(); ++i) (*p[k])[i] -= tc_.lr * (*g[k])[i];
      return;
    }
    const double c1 = 1.0 - std::pow(tc_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(tc_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < p.size(); ++k) {
      Tensor& m = first_[k];
      Tensor& v = second_[k];
      for (std::size_t i = 0; i < p[k]->size(); ++i) {
        const double gi = (*g[k])[i];
        m[i] = tc_.beta1 * m[i] + (1.0 - tc_.beta1) * gi;
        v[i] = tc_.beta2 * v[i] + (1.0 - tc_.beta2) * gi * gi;
        (*p[k])[i] -= tc_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + tc_.adam_eps);
      }
    }
  }

 private:
  TrainConfig tc_;
  std::vector<Tensor> first_, second_;
  std::uint64_t steps_ = 0;
};

double required_mos(const FeatureSequence& video) {
  if (!video.mos) throw ContractError("video '" + video.id + "' has no MOS label");
  return *video.mos;
}

bool all_finite(const ModelParams& p) {
  bool ok = true;
  visit_params(p, [&](const std::string&, const Tensor& t) { ok = ok && t.all_finite(); });
  return ok;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(lr >= 0)) throw ConfigError("lr must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(split_ratio > 0 && split_ratio < 1)) throw ConfigError("split_ratio must lie in (0, 1)");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (threads == 0) throw ConfigError("threads must be >= 1");
}

DatasetSplit split_dataset(const std::vector<FeatureSequence>& videos, double ratio, std::uint64_t seed) {
  if (videos.size() < 2) throw ContractError("split_dataset needs at least two videos");
  if (!(ratio > 0 && ratio < 1)) throw ConfigError("split_ratio must lie in (0, 1)");
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const double wanted = std::round(ratio * static_cast<double>(videos.size()));
  const std::size_t n_train = std::clamp<std::size_t>(static_cast<std::size_t>(wanted), 1, videos.size() - 1);
  DatasetSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? split.train : split.test).push_back(videos[order[i]]);
  }
  return split;
}

VideoGradient video_gradient(const FeatureSequence& video, const ModelParams& params, const ModelConfig& config) {
  const double mos = required_mos(video);
  Graph g;
  ModelVars vars = bind_params(g, params, true);
  VideoForward fwd = forward_video(g, video, vars, config);
  Var loss = ad::abs(ad::add_scalar(fwd.score, -mos));
  g.backward(loss);
  return {fwd.trace.score, loss.value().item(), collect_grads(g, vars)};
}

TrainResult train(const std::vector<FeatureSequence>& train_set, const ModelConfig& config, const TrainConfig& tc,
                  const std::vector<FeatureSequence>* validation, std::optional<ModelParams> initial) {
  tc.validate();
  config.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  for (const auto& v : train_set) {
    required_mos(v);
    check_video(v, config);
  }

  TrainResult result;
  result.params = initial ? std::move(*initial) : init_model(config, config.seed);
  Optimizer opt(tc, result.params);
  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t count = std::min(tc.batch_size, order.size() - start);
      std::vector<VideoGradient> parts(count);
      try {
        parallel_for(count, tc.threads, [&](std::size_t i) {
          parts[i] = video_gradient(train_set[order[start + i]], result.params, config);
        });
      } catch (const NumericError& e) {
        result.diverged = true;
        result.message = "epoch " + std::to_string(epoch) + ": " + e.what();
        return result;
      }

      ModelParams grads = std::move(parts[0].grads);
      auto acc = param_refs(grads);
      double batch_loss = parts[0].loss;
      for (std::size_t i = 1; i < count; ++i) {
        auto add = param_refs(parts[i].grads);
        for (std::size_t k = 0; k < acc.size(); ++k)
          for (std::size_t j = 0; j < acc[k]->size(); ++j) (*acc[k])[j] += (*add[k])[j];
        batch_loss += parts[i].loss;
      }
      for (Tensor* t : acc)
        for (auto& v : t->data()) v /= static_cast<double>(count);
      if (!std::isfinite(batch_loss)) {
        result.diverged = true;
        result.message = "epoch " + std::to_string(epoch) + ": non-finite loss";
        return result;
      }
      epoch_loss += batch_loss;

      ModelParams next = result.params;
      opt.step(next, grads);
      if (!all_finite(next)) {
        result.diverged = true;
        result.message = "epoch " + std::to_string(epoch) + ": parameters became non-finite";
        return result;
      }
      result.params = std::move(next);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
    if (validation && !validation->empty()) {
      try {
        EvalReport report = evaluate(result.params, config, *validation, tc.threads);
        stats.val_plcc = report.plcc;
        stats.val_srcc = report.srcc;
      } catch (const UndefinedCorrelation&) {
      } catch (const ContractError&) {
      }
    }
    result.history.push_back(stats);
  }
  return result;
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& config, const std::vector<FeatureSequence>& videos,
                    std::size_t threads) {
  for (const auto& v : videos) required_mos(v);
  EvalReport report;
  report.ablation = config.ablation.tag();
  report.predictions.resize(videos.size());
  parallel_for(videos.size(), threads,
               [&](std::size_t i) { report.predictions[i] = predict_video(videos[i], params, config).score; });
  for (const auto& v : videos) {
    report.ids.push_back(v.id);
    report.mos.push_back(*v.mos);
  }
  report.plcc = plcc(report.predictions, report.mos);
  report.srcc = srcc(report.predictions, report.mos);
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os.precision(10);
  os << "plcc\t" << report.plcc << '\t' << report.ablation << '\n';
  os << "srcc\t" << report.srcc << '\t' << report.ablation << '\n';
  os << "n\t" << report.predictions.size() << '\t' << report.ablation << '\n';
  return os.str();
}

}  // namespace priorformer
