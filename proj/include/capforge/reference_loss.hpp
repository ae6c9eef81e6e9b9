#pragma once

#include "capforge/decoder.hpp"
#include "capforge/training.hpp"

namespace capforge {

// Scalar-loop evaluation of the regularized sequence loss in long double.
// Shares no code with the Eigen forward pass; finite-difference checks use
// it because double roundoff in the loss (~1e-10 after dividing by 2*eps)
// swamps coordinates whose true gradient is below ~1e-6.
long double reference_loss(const DecoderParams& params, const TrainingExample& example, double lambda,
                           TokenId start_id);

}  // namespace capforge
