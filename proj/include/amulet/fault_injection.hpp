#pragma once

/// @file fault_injection.hpp
/// @brief Deliberately wrong variants used to check that the verification
/// harness can fail. Not for production paths.

#include "amulet/optimizer.hpp"

namespace amulet::fault {

/// closed_form_step with the normalizing coefficient 1/(t*lambda*eta + 1)
/// replaced by 1/((t*lambda*eta + 1) * denominator_scale).
IterState closed_form_step_perturbed(const IterState& state, const AmuletParams& params,
                                     double denominator_scale);

}  // namespace amulet::fault
