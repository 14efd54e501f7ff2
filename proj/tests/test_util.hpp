#pragma once

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "priorformer/autodiff.hpp"
#include "priorformer/config.hpp"
#include "priorformer/dataio.hpp"
#include "priorformer/params.hpp"
#include "priorformer/tensor.hpp"

namespace priorformer::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

using OpBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Projects op(inputs) onto fixed random weights so the scalar loss has a
// non-trivial gradient, then compares backward() against central differences
// for every input. Returns the worst elementwise relative error.
inline double op_gradient_error(const OpBuilder& op, const std::vector<Tensor>& inputs, std::mt19937_64& rng) {
  Tensor weights;
  auto loss_of = [&](const std::vector<Tensor>& xs, std::vector<Var>* vars, Graph& g) {
    std::vector<Var> in;
    for (const auto& x : xs) in.push_back(g.variable(x));
    if (vars) *vars = in;
    Var out = op(g, in);
    if (weights.empty()) weights = random_tensor(rng, out.shape());
    return ad::sum(ad::mul(out, g.constant(weights)));
  };

  Graph g;
  std::vector<Var> vars;
  Var loss = loss_of(inputs, &vars, g);
  g.backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor& x) {
      std::vector<Tensor> xs = inputs;
      xs[k] = x;
      Graph local;
      return loss_of(xs, nullptr, local).value().item();
    };
    Tensor numeric = finite_diff_gradient(f, inputs[k]);
    worst = std::max(worst, max_relative_error(g.grad(vars[k]), numeric));
  }
  return worst;
}

// L=2, H=2, D=8, D_ff=16, N=4, Dh=4 with distinct input widths.
inline ModelConfig tiny_config() {
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

inline FeatureSequence random_video(std::mt19937_64& rng, const ModelConfig& c, std::size_t frames,
                                    std::optional<double> mos = 3.0) {
  FeatureSequence v;
  v.id = "random";
  v.mos = mos;
  for (std::size_t t = 0; t < frames; ++t) {
    v.frames.push_back({random_tensor(rng, {c.encoder.tokens, c.encoder.c_feat}),
                        random_tensor(rng, {c.encoder.c_cont}), random_tensor(rng, {c.encoder.c_dist})});
  }
  return v;
}

// Every parameter, biases and gains included, drawn uniform(-0.5, 0.5) so that
// nothing sits at its structured init value.
inline ModelParams random_params(std::mt19937_64& rng, const ModelConfig& c) {
  ModelParams p = zero_params(c);
  visit_params(p, [&](const std::string&, Tensor& t) { t = random_tensor(rng, t.shape(), -0.5, 0.5); });
  return p;
}

}  // namespace priorformer::testing
