#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vrpcp/gradcheck.hpp"

namespace vrpcp {

/// Finite-difference checks at f64 over every differentiable op, the losses,
/// the attention cell, the composed teacher forward with the task loss and
/// each student with the full training loss. `probes` entries per case.
/// `on_result` sees each case as it finishes.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 1, int probes = 12,
                                                 const std::function<void(const GradCheckResult&)>& on_result = {});

}  // namespace vrpcp
