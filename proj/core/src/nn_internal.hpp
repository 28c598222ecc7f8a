#pragma once

#include "advforge/nn.hpp"

namespace advforge::nn::detail {

/// Gradient w.r.t. the input of layer i given the gradient w.r.t. its output,
/// with gates frozen at `trace`.
Vec layer_backward_input(const Network& net, const ForwardTrace& trace, std::size_t i,
                         const Vec& g);

}  // namespace advforge::nn::detail
