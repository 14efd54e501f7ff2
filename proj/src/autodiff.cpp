#include "priorformer/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "priorformer/errors.hpp"

namespace priorformer {

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::push(Node node) {
  if (!node.value.all_finite()) {
    throw NumericError("non-finite value produced at graph node " + std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.parents.reserve(parents.size());
  for (const Var& p : parents) {
    if (p.graph != this) throw ContractError("operand belongs to a different graph");
    n.parents.push_back(p.id);
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor::zeros(n.value.shape());
  return Tensor(n.value.shape(), n.grad);
}

std::span<double> Graph::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to a different graph");
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(value(loss).shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (std::int64_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, static_cast<std::uint32_t>(id));
  }
}

namespace ad {
namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.graph;
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Adds fn(i) into parent k's gradient for every element, if that parent wants one.
template <class Fn>
void accumulate(Graph& g, std::uint32_t self, std::size_t k, Fn&& fn) {
  const std::uint32_t p = g.parent(self, k);
  if (!g.requires_grad(p)) return;
  auto buf = g.grad_buffer(p);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += fn(i);
}

template <class Fn>
Var unary(Var a, Tensor out, Fn&& local_derivative) {
  return graph_of(a).record(std::move(out), {a}, [d = std::forward<Fn>(local_derivative)](Graph& g, std::uint32_t self) {
    auto go = g.grad_of(self);
    const Tensor& x = g.value(g.parent(self, 0));
    const Tensor& y = g.value(self);
    accumulate(g, self, 0, [&](std::size_t i) { return go[i] * d(x[i], y[i]); });
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return graph_of(a).record(std::move(out), {a, b}, [](Graph& g, std::uint32_t self) {
    auto go = g.grad_of(self);
    accumulate(g, self, 0, [&](std::size_t i) { return go[i]; });
    accumulate(g, self, 1, [&](std::size_t i) { return go[i]; });
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return graph_of(a).record(std::move(out), {a, b}, [](Graph& g, std::uint32_t self) {
    auto go = g.grad_of(self);
    accumulate(g, self, 0, [&](std::size_t i) { return go[i]; });
    accumulate(g, self, 1, [&](std::size_t i) { return -go[i]; });
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return graph_of(a).record(std::move(out), {a, b}, [](Graph& g, std::uint32_t self) {
    auto go = g.grad_of(self);
    const Tensor& x = g.value(g.parent(self, 0));
    const Tensor& y = g.value(g.parent(self, 1));
    accumulate(g, self, 0, [&](std::size_t i) { return go[i] * y[i]; });
    accumulate(g, self, 1, [&](std::size_t i) { return go[i] * x[i]; });
  });
}

Var scale(Var a, double k) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= k;
  return unary(a, std::move(out), [k](double, double) { return k; });
}

Var add_scalar(Var a, double k) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += k;
  return unary(a, std::move(out), [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  if (bias.value().size() != n || xv.rank() > 2) {
    throw DimensionError("add_bias: shape mismatch " + shape_str(xv.shape()) + " vs " + shape_str(bias.shape()));
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % n];
  return graph_of(x).record(std::move(out), {x, bias}, [n](Graph& g, std::uint32_t self) {
    auto go = g.grad_of(self);
    accumulate(g, self, 0, [&](std::size_t i) { return go[i]; });
    const std::uint32_t b = g.parent(self, 1);
    if (g.requires_grad(b)) {
      auto buf = g.grad_buffer(b);
      for (std::size_t i = 0; i < go.size(); ++i) buf[i % n] += go[i];
    }
  });
}

Var matmul(Var a, Var b) {
  Tensor out = kernels::matmul(a.value(), b.value());
  return graph_of(a).record(std::move(out), {a, b}, [](Graph& g, std::uint32_t self) {
    const std::uint32_t pa = g.parent(self, 0), pb = g.parent(self, 1);
    const Tensor& av = g.value(pa);
    const Tensor& bv = g.value(pb);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    auto go = g.grad_of(self);
    if (g.requires_grad(pa)) {
      // dA = dC B^T
      auto da = g.grad_buffer(pa);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * bv[p * n + j];
          da[i * k + p] += s;
        }
    }
    if (g.requires_grad(pb)) {
      // dB = A^T dC
      auto db = g.grad_buffer(pb);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * go[i * n + j];
        }
    }
  });
}

Var transpose(Var a) {
  Tensor out = kernels::transpose(a.value());
  return graph_of(a).record(std::move(out), {a}, [](Graph& g, std::uint32_t self) {
    const Tensor& y = g.value(self);
    const std::size_t r = y.dim(0), c = y.dim(1);
    auto go = g.grad_of(self);
    // input is [c x r]
    accumulate(g, self, 0, [&](std::size_t i) { return go[(i % r) * c + i / r]; });
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return unary(a, std::move(out), [](double, double) { return 1.0; });
}

Var softmax(Var x, std::size_t axis) {
  Tensor out = kernels::softmax(x.value(), axis);
  return graph_of(x).record(std::move(out), {x}, [axis](Graph& g, std::uint32_t self) {
    const Tensor& y = g.value(self);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= y.dim(i);
    for (std::size_t i = axis + 1; i < y.rank(); ++i) inner *= y.dim(i);
    const std::size_t len = y.dim(axis);
    auto go = g.grad_of(self);
    const std::uint32_t p = g.parent(self, 0);
    if (!g.requires_grad(p)) return;
    auto gx = g.grad_buffer(p);
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t b = 0; b < inner; ++b) {
        const std::size_t base = a * len * inner + b;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += go[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t at = base + i * inner;
          gx[at] += y[at] * (go[at] - dot);
        }
      }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tensor out = kernels::layer_norm(x.value(), gain.value(), bias.value(), eps);
  return graph_of(x).record(std::move(out), {x, gain, bias}, [eps](Graph& g, std::uint32_t self) {
    const std::uint32_t px = g.parent(self, 0), pg = g.parent(self, 1), pb = g.parent(self, 2);
    const Tensor& xv = g.value(px);
    const Tensor& gv = g.value(pg);
    const std::size_t d = gv.size();
    const std::size_t rows = xv.size() / d;
    auto go = g.grad_of(self);
    std::vector<double> xhat(d), dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = &xv.data()[r * d];
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += row[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= static_cast<double>(d);
      const double inv_std = 1.0 / std::sqrt(var + eps);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (row[j] - mean) * inv_std;
        dxhat[j] = go[r * d + j] * gv[j];
        sum_dxhat += dxhat[j];
        sum_dxhat_xhat += dxhat[j] * xhat[j];
      }
      if (g.requires_grad(px)) {
        auto gx = g.grad_buffer(px);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          gx[r * d + j] += inv_std * (dxhat[j] - inv_d * sum_dxhat - xhat[j] * inv_d * sum_dxhat_xhat);
        }
      }
      if (g.requires_grad(pg)) {
        auto gg = g.grad_buffer(pg);
        for (std::size_t j = 0; j < d; ++j) gg[j] += go[r * d + j] * xhat[j];
      }
      if (g.requires_grad(pb)) {
        auto gb = g.grad_buffer(pb);
        for (std::size_t j = 0; j < d; ++j) gb[j] += go[r * d + j];
      }
    }
  });
}

Var gelu(Var x) {
  return unary(x, kernels::gelu(x.value()), [](double xi, double) { return kernels::gelu_derivative(xi); });
}

Var sigmoid(Var x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernels::sigmoid(x.value()[i]);
  return unary(x, std::move(out), [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.value()[i]);
  return unary(x, std::move(out), [](double, double y) { return 1.0 - y * y; });
}

Var abs(Var x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x.value()[i]);
  return unary(x, std::move(out), [](double xi, double) { return xi > 0 ? 1.0 : (xi < 0 ? -1.0 : 0.0); });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return graph_of(x).record(Tensor::scalar(s), {x}, [](Graph& g, std::uint32_t self) {
    const double go = g.grad_of(self)[0];
    accumulate(g, self, 0, [go](std::size_t) { return go; });
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var min(Var x) {
  const auto data = x.value().data();
  const std::size_t arg = static_cast<std::size_t>(std::min_element(data.begin(), data.end()) - data.begin());
  return graph_of(x).record(Tensor::scalar(data[arg]), {x}, [arg](Graph& g, std::uint32_t self) {
    const double go = g.grad_of(self)[0];
    const std::uint32_t p = g.parent(self, 0);
    if (g.requires_grad(p)) g.grad_buffer(p)[arg] += go;
  });
}

Var slice_rows(Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  const bool vec = xv.rank() == 1;
  const std::size_t rows = vec ? xv.size() : xv.rows();
  const std::size_t width = vec ? 1 : xv.cols();
  if (count == 0 || start + count > rows) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(xv.shape()));
  }
  Shape shape = vec ? Shape{count} : Shape{count, width};
  std::vector<double> data(xv.data().begin() + start * width, xv.data().begin() + (start + count) * width);
  const std::size_t offset = start * width;
  return graph_of(x).record(Tensor(std::move(shape), std::move(data)), {x}, [offset](Graph& g, std::uint32_t self) {
    auto go = g.grad_of(self);
    const std::uint32_t p = g.parent(self, 0);
    if (!g.requires_grad(p)) return;
    auto gx = g.grad_buffer(p);
    for (std::size_t i = 0; i < go.size(); ++i) gx[offset + i] += go[i];
  });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || count == 0 || start + count > xv.dim(1)) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(xv.shape()));
  }
  const std::size_t rows = xv.dim(0), width = xv.dim(1);
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = xv.at(r, start + c);
  return graph_of(x).record(std::move(out), {x}, [start, width](Graph& g, std::uint32_t self) {
    const Tensor& y = g.value(self);
    auto go = g.grad_of(self);
    const std::uint32_t p = g.parent(self, 0);
    if (!g.requires_grad(p)) return;
    auto gx = g.grad_buffer(p);
    const std::size_t rows = y.dim(0), count = y.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c) gx[r * width + start + c] += go[r * count + c];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  const std::size_t width = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<double> data;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() > 2 || v.cols() != width) {
      throw DimensionError("concat_rows: width mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(v.shape()));
    }
    rows += v.rows();
    data.insert(data.end(), v.data().begin(), v.data().end());
  }
  return graph_of(parts[0]).record(Tensor({rows, width}, std::move(data)), parts, [](Graph& g, std::uint32_t self) {
    auto go = g.grad_of(self);
    std::size_t offset = 0;
    for (std::size_t k = 0;; ++k) {
      if (offset >= go.size()) break;
      const std::uint32_t p = g.parent(self, k);
      const std::size_t n = g.value(p).size();
      if (g.requires_grad(p)) {
        auto gx = g.grad_buffer(p);
        for (std::size_t i = 0; i < n; ++i) gx[i] += go[offset + i];
      }
      offset += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const std::size_t rows = parts[0].value().rows();
  std::size_t width = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    width += p.value().cols();
  }
  Tensor out({rows, width});
  std::size_t col = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out.at(r, col + c) = v.at(r, c);
    col += v.cols();
  }
  return graph_of(parts[0]).record(std::move(out), parts, [](Graph& g, std::uint32_t self) {
    auto go = g.grad_of(self);
    const Tensor& y = g.value(self);
    const std::size_t rows = y.dim(0), width = y.dim(1);
    std::size_t col = 0;
    for (std::size_t k = 0; col < width; ++k) {
      const std::uint32_t p = g.parent(self, k);
      const std::size_t w = g.value(p).cols();
      if (g.requires_grad(p)) {
        auto gx = g.grad_buffer(p);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) gx[r * w + c] += go[r * width + col + c];
      }
      col += w;
    }
  });
}

Var stack(std::span<const Var> scalars) {
  if (scalars.empty()) throw ContractError("stack: no operands");
  std::vector<double> data;
  data.reserve(scalars.size());
  for (const Var& s : scalars) data.push_back(s.value().item());
  const std::size_t n = data.size();
  return graph_of(scalars[0]).record(Tensor({n}, std::move(data)), scalars, [n](Graph& g, std::uint32_t self) {
    auto go = g.grad_of(self);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint32_t p = g.parent(self, k);
      if (g.requires_grad(p)) g.grad_buffer(p)[0] += go[k];
    }
  });
}

}  // namespace ad

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0)) throw ContractError("finite_diff_gradient: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  if (analytic.size() != numeric.size()) {
    throw DimensionError("max_relative_error: " + shape_str(analytic.shape()) + " vs " + shape_str(numeric.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = numeric[i];
    const double denom = std::max({std::fabs(a), std::fabs(b), floor});
    worst = std::max(worst, std::fabs(a - b) / denom);
  }
  return worst;
}

}  // namespace priorformer
