#pragma once

#include <span>
#include <vector>

namespace priorformer {

// Pearson correlation of the raw values. Throws ContractError on unequal
// lengths or fewer than two pairs, UndefinedCorrelation on zero variance.
double plcc(std::span<const double> pred, std::span<const double> mos);

// Spearman correlation computed as Pearson on average ranks, so tied values
// share the mean of the positions they occupy.
double srcc(std::span<const double> pred, std::span<const double> mos);

// 1-based average ranks.
std::vector<double> average_ranks(std::span<const double> values);

double l1_loss(std::span<const double> pred, std::span<const double> mos);

}  // namespace priorformer
