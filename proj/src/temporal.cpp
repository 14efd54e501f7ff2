#include "priorformer/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "priorformer/errors.hpp"

namespace priorformer {
namespace {

struct Window {
  std::size_t first;
  std::size_t count;
};

void require_frame(std::size_t size, std::size_t t) {
  if (size == 0) throw ContractError("temporal pooling on an empty score sequence");
  if (t >= size) {
    throw ContractError("frame index " + std::to_string(t) + " out of range for " + std::to_string(size) + " frames");
  }
}

// Requires t > 0.
Window prev_window(std::size_t t, std::size_t tau) {
  const std::size_t first = t > tau ? t - tau : 0;
  return {first, t - first};
}

Window next_window(std::size_t size, std::size_t t, std::size_t tau) {
  const std::size_t last = std::min(size - 1, t + tau - 1);
  return {t, last - t + 1};
}

Var as_row(Var v) { return ad::reshape(v, {1, v.value().size()}); }

}  // namespace

Var gru_step(Var frame, Var h_prev, const GruCellVars& cell) {
  const std::size_t d = cell.w_z.value().dim(0), dh = cell.w_z.value().dim(1);
  if (frame.value().size() != d || h_prev.value().size() != dh) {
    throw DimensionError("gru_step: frame " + shape_str(frame.shape()) + " / state " + shape_str(h_prev.shape()) +
                         " do not match input width " + std::to_string(d) + " and hidden width " +
                         std::to_string(dh));
  }
  Var f = as_row(frame);
  Var h = as_row(h_prev);
  auto gate = [&](Var w, Var u, Var b, Var state) {
    return ad::add_bias(ad::add(ad::matmul(f, w), ad::matmul(state, u)), b);
  };
  Var z = ad::sigmoid(gate(cell.w_z, cell.u_z, cell.b_z, h));
  Var r = ad::sigmoid(gate(cell.w_r, cell.u_r, cell.b_r, h));
  Var candidate = ad::tanh(gate(cell.w_h, cell.u_h, cell.b_h, ad::mul(r, h)));
  // (1 - z) h + z h~  ==  h + z (h~ - h)
  Var next = ad::add(h, ad::mul(z, ad::sub(candidate, h)));
  return ad::reshape(next, {dh});
}

Var frame_score(Var h, const TemporalVars& params) {
  const std::size_t width = params.w_fc.value().dim(0);
  if (h.value().size() != width) {
    throw DimensionError("frame_score: state " + shape_str(h.shape()) + " vs head " + shape_str(params.w_fc.shape()));
  }
  return ad::reshape(ad::add_bias(ad::matmul(as_row(h), params.w_fc), params.b_fc), {1});
}

double memory_element(std::span<const double> q, std::size_t t, std::size_t tau) {
  require_frame(q.size(), t);
  if (t == 0) return q[0];
  const Window w = prev_window(t, tau);
  return *std::min_element(q.begin() + w.first, q.begin() + w.first + w.count);
}

double current_element(std::span<const double> q, std::size_t t, std::size_t tau) {
  require_frame(q.size(), t);
  const Window w = next_window(q.size(), t, tau);
  const auto window = q.subspan(w.first, w.count);
  const double lowest = *std::min_element(window.begin(), window.end());
  double norm = 0.0, weighted = 0.0;
  for (double v : window) {
    const double e = std::exp(lowest - v);
    norm += e;
    weighted += e * v;
  }
  return weighted / norm;
}

QualityTrace video_score(std::span<const double> q, const PoolingConfig& pooling) {
  pooling.validate();
  if (q.empty()) throw ContractError("video_score on an empty score sequence");
  QualityTrace trace;
  trace.q.assign(q.begin(), q.end());
  double total = 0.0;
  for (std::size_t t = 0; t < q.size(); ++t) {
    trace.m.push_back(memory_element(q, t, pooling.tau));
    trace.c.push_back(current_element(q, t, pooling.tau));
    total += pooling.gamma * trace.m.back() + (1.0 - pooling.gamma) * trace.c.back();
  }
  trace.score = total / static_cast<double>(q.size());
  return trace;
}

PooledScore video_score(Var q, const PoolingConfig& pooling) {
  pooling.validate();
  const std::size_t frames = q.value().size();
  if (frames == 0) throw ContractError("video_score on an empty score sequence");
  PooledScore out;
  std::vector<Var> blended;
  for (std::size_t t = 0; t < frames; ++t) {
    Var memory;
    if (t == 0) {
      memory = ad::slice_rows(q, 0, 1);
    } else {
      const Window w = prev_window(t, pooling.tau);
      memory = ad::min(ad::slice_rows(q, w.first, w.count));
    }
    const Window w = next_window(frames, t, pooling.tau);
    Var window = ad::slice_rows(q, w.first, w.count);
    Var weights = ad::softmax(ad::neg(window), 0);
    Var current = ad::sum(ad::mul(weights, window));

    out.memory.push_back(memory.value().item());
    out.current.push_back(current.value().item());
    blended.push_back(ad::add(ad::scale(ad::reshape(memory, {}), pooling.gamma),
                              ad::scale(current, 1.0 - pooling.gamma)));
  }
  out.score = ad::mean(ad::stack(blended));
  return out;
}

Var mean_score(Var q) { return ad::mean(q); }

}  // namespace priorformer
