#pragma once

// Straight-line scalar evaluation of the model, written against raw arrays
// only. Shares no kernels with the library so it can serve as an oracle.

#include <cmath>
#include <limits>
#include <vector>

#include "priorformer/config.hpp"
#include "priorformer/dataio.hpp"
#include "priorformer/params.hpp"

namespace ref {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Mat to_mat(const priorformer::Tensor& t) {
  const std::size_t rows = t.rank() == 1 ? 1 : t.dim(0);
  const std::size_t cols = t.size() / rows;
  Mat m(rows, Vec(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = t.data()[r * cols + c];
  return m;
}

inline Vec to_vec(const priorformer::Tensor& t) { return Vec(t.data().begin(), t.data().end()); }

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      out[i][j] = s;
    }
  return out;
}

inline Vec vecmat(const Vec& v, const Mat& m) { return matmul(Mat{v}, m)[0]; }

inline double gelu(double x) {
  const double pi = 3.14159265358979323846;
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / pi) * (x + 0.044715 * x * x * x)));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * (x[i] - mean) / std::sqrt(var + eps) + bias[i];
  return out;
}

inline Mat encoder_layer(const Mat& z, const priorformer::EncoderLayerParams& p, std::size_t heads, double eps) {
  const std::size_t rows = z.size(), d = z[0].size(), dk = d / heads;
  const Mat q = matmul(z, to_mat(p.w_q)), k = matmul(z, to_mat(p.w_k)), v = matmul(z, to_mat(p.w_v));
  Mat concat(rows, Vec(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < rows; ++i) {
      Vec w(rows);
      double norm = 0.0;
      for (std::size_t j = 0; j < rows; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) s += q[i][h * dk + c] * k[j][h * dk + c];
        w[j] = std::exp(s / std::sqrt(static_cast<double>(dk)));
        norm += w[j];
      }
      for (std::size_t c = 0; c < dk; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < rows; ++j) s += w[j] / norm * v[j][h * dk + c];
        concat[i][h * dk + c] = s;
      }
    }
  }
  const Mat attn = matmul(concat, to_mat(p.w_o));
  const Mat w1 = to_mat(p.ff_w1), w2 = to_mat(p.ff_w2);
  const Vec b1 = to_vec(p.ff_b1), b2 = to_vec(p.ff_b2);
  Mat out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    Vec res(d);
    for (std::size_t c = 0; c < d; ++c) res[c] = attn[i][c] + z[i][c];
    const Vec mid = layer_norm(res, to_vec(p.ln1_gain), to_vec(p.ln1_bias), eps);
    Vec hidden = vecmat(mid, w1);
    for (std::size_t c = 0; c < hidden.size(); ++c) hidden[c] = gelu(hidden[c] + b1[c]);
    Vec ff = vecmat(hidden, w2);
    for (std::size_t c = 0; c < d; ++c) ff[c] += b2[c] + mid[c];
    out[i] = layer_norm(ff, to_vec(p.ln2_gain), to_vec(p.ln2_bias), eps);
  }
  return out;
}

inline Mat tokens(const priorformer::Frame& frame, const priorformer::EncoderParams& p,
                  const priorformer::ModelConfig& config) {
  const Mat pe = to_mat(p.pos_embed);
  const std::size_t n = config.encoder.tokens;
  Mat z;
  Vec first = to_vec(p.quality_token);
  for (std::size_t c = 0; c < first.size(); ++c) first[c] += pe[0][c];
  z.push_back(first);
  const Mat f = matmul(to_mat(frame.features), to_mat(p.feat_w));
  const Vec fb = to_vec(p.feat_b);
  for (std::size_t i = 0; i < n; ++i) {
    Vec row = f[i];
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += fb[c] + pe[i + 1][c];
    z.push_back(row);
  }
  auto prior = [&](const priorformer::Tensor& x, const priorformer::Tensor& w, const priorformer::Tensor& b,
                   std::size_t slot) {
    Vec row = vecmat(to_vec(x), to_mat(w));
    const Vec bias = to_vec(b);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c] + pe[slot][c];
    z.push_back(row);
  };
  if (config.ablation.use_content_token) prior(frame.content, p.cont_w, p.cont_b, n + 1);
  if (config.ablation.use_distortion_token) prior(frame.distortion, p.dist_w, p.dist_b, n + 2);
  return z;
}

inline Vec encode(const priorformer::Frame& frame, const priorformer::EncoderParams& p,
                  const priorformer::ModelConfig& config) {
  Mat z = tokens(frame, p, config);
  for (const auto& layer : p.layers) z = encoder_layer(z, layer, config.encoder.heads, config.encoder.layer_norm_eps);
  return z[0];
}

inline Vec gru(const Vec& x, const Vec& h, const priorformer::GruCellParams& c) {
  const Vec xz = vecmat(x, to_mat(c.w_z)), xr = vecmat(x, to_mat(c.w_r)), xh = vecmat(x, to_mat(c.w_h));
  const Vec hz = vecmat(h, to_mat(c.u_z)), hr = vecmat(h, to_mat(c.u_r));
  const Vec bz = to_vec(c.b_z), br = to_vec(c.b_r), bh = to_vec(c.b_h);
  Vec z(h.size()), rh(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    z[i] = sigmoid(xz[i] + hz[i] + bz[i]);
    rh[i] = sigmoid(xr[i] + hr[i] + br[i]) * h[i];
  }
  const Vec hh = vecmat(rh, to_mat(c.u_h));
  Vec out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = (1.0 - z[i]) * h[i] + z[i] * std::tanh(xh[i] + hh[i] + bh[i]);
  return out;
}

// 0-based windows: previous = [t - tau, t - 1] clipped at 0 (m_0 = q_0),
// next = [t, t + tau - 1] clipped at T - 1.
inline double pool(const Vec& q, std::size_t tau, double gamma) {
  const long n = static_cast<long>(q.size()), w = static_cast<long>(tau);
  double total = 0.0;
  for (long t = 0; t < n; ++t) {
    double m = q[0];
    if (t > 0) {
      m = std::numeric_limits<double>::infinity();
      for (long k = std::max(0L, t - w); k < t; ++k) m = std::min(m, q[k]);
    }
    double num = 0.0, den = 0.0;
    for (long k = t; k <= std::min(n - 1, t + w - 1); ++k) {
      num += std::exp(-q[k]) * q[k];
      den += std::exp(-q[k]);
    }
    total += gamma * m + (1.0 - gamma) * num / den;
  }
  return total / static_cast<double>(n);
}

inline double predict(const priorformer::FeatureSequence& video, const priorformer::ModelParams& p,
                      const priorformer::ModelConfig& config) {
  Vec q;
  Vec h(config.gru_hidden, 0.0);
  const Vec w_fc = to_vec(p.temporal.w_fc);
  for (const auto& frame : video.frames) {
    Vec x = encode(frame, p.encoder, config);
    if (config.ablation.use_gru) {
      h = gru(x, h, *p.temporal.cell);
      x = h;
    }
    double s = p.temporal.b_fc.data()[0];
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w_fc[i];
    q.push_back(s);
  }
  if (!config.ablation.use_temporal_pooling) {
    double s = 0.0;
    for (double v : q) s += v;
    return s / static_cast<double>(q.size());
  }
  return pool(q, config.pooling.tau, config.pooling.gamma);
}

}  // namespace ref
