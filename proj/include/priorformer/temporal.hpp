#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "priorformer/autodiff.hpp"
#include "priorformer/config.hpp"
#include "priorformer/params.hpp"

namespace priorformer {

// Frame indices below are 0-based. With T frames and window tau:
//   memory window  V_prev(t) = {max(0, t - tau), ..., t - 1}   (empty for t = 0, where m_0 = q_0)
//   current window V_next(t) = {t, ..., min(T - 1, t + tau - 1)}
// m_t is the window minimum; c_t is the softmin-weighted mean of its window,
// weights exp(-q_k) / sum_j exp(-q_j). The video score is
//   Q = (1/T) sum_t [gamma m_t + (1 - gamma) c_t].

struct QualityTrace {
  std::vector<double> q;  // frame scores
  std::vector<double> m;  // memory elements
  std::vector<double> c;  // current elements
  double score = 0.0;     // Q
};

// GRU cell on F_t [D] (or [1 x D]) and h_prev [Dh]; returns h_t [Dh].
//   z = sigma(F W_z + h U_z + b_z), r = sigma(F W_r + h U_r + b_r)
//   h~ = tanh(F W_h + (r * h) U_h + b_h), h_t = (1 - z) * h + z * h~
Var gru_step(Var frame, Var h_prev, const GruCellVars& cell);

// q_t = h W_fc + b_fc as a one-element tensor.
Var frame_score(Var h, const TemporalVars& params);

double memory_element(std::span<const double> q, std::size_t t, std::size_t tau);
double current_element(std::span<const double> q, std::size_t t, std::size_t tau);
QualityTrace video_score(std::span<const double> q, const PoolingConfig& pooling);

struct PooledScore {
  Var score;  // scalar Q
  std::vector<double> memory;
  std::vector<double> current;
};

// Differentiable pooling over q [T]. The min passes its gradient to the
// earliest minimiser of each window.
PooledScore video_score(Var q, const PoolingConfig& pooling);

// w.o. TP: plain mean of q.
Var mean_score(Var q);

}  // namespace priorformer
