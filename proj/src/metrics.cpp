#include "priorformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "priorformer/errors.hpp"

namespace priorformer {
namespace {

void require_pairs(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw ContractError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  if (a.size() < 2) throw ContractError(std::string(what) + ": need at least two pairs");
}

}  // namespace

double plcc(std::span<const double> pred, std::span<const double> mos) {
  require_pairs(pred, mos, "plcc");
  const double n = static_cast<double>(pred.size());
  const double mean_p = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  const double mean_m = std::accumulate(mos.begin(), mos.end(), 0.0) / n;
  double cov = 0.0, var_p = 0.0, var_m = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mean_p, dm = mos[i] - mean_m;
    cov += dp * dm;
    var_p += dp * dp;
    var_m += dm * dm;
  }
  if (var_p == 0.0 || var_m == 0.0) throw UndefinedCorrelation("correlation undefined: zero variance input");
  return std::clamp(cov / std::sqrt(var_p * var_m), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share rank mean(i+1 .. j+1)
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> pred, std::span<const double> mos) {
  require_pairs(pred, mos, "srcc");
  const auto rp = average_ranks(pred);
  const auto rm = average_ranks(mos);
  return plcc(rp, rm);
}

double l1_loss(std::span<const double> pred, std::span<const double> mos) {
  if (pred.size() != mos.size()) {
    throw ContractError("l1_loss: length mismatch " + std::to_string(pred.size()) + " vs " +
                        std::to_string(mos.size()));
  }
  if (pred.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += std::fabs(pred[i] - mos[i]);
  return total / static_cast<double>(pred.size());
}

}  // namespace priorformer
