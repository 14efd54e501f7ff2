#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "priorformer/config.hpp"

namespace priorformer {

// L=2, H=2, D=8, D_ff=16, N=4, D_h=4 with small input widths.
ModelConfig gradcheck_config();

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;  // scalar parameters compared
};

// Compares the backward pass of the L1 video loss against central differences
// for every scalar parameter. Parameters come from init_model(config, seed);
// the random video (T frames) and its MOS come from the same seed, with the
// MOS kept well away from the prediction so the |.| kink is never crossed.
// Some gradients at init are ~1e-9; the default step balances rounding of the
// O(1) loss against truncation error for those.
GradCheckReport check_model_gradients(const ModelConfig& config, std::uint64_t seed, std::size_t frames = 3,
                                      double step = 7e-5);

}  // namespace priorformer
