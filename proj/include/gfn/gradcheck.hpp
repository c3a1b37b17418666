#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gfn/tape.hpp"
#include "gfn/tensor.hpp"

namespace gfn::diff {

/// Builds a loss on a fresh tape; must be deterministic so central-difference
/// evaluations see the same function (draw any randomness from a fixed seed
/// inside the closure).
using LossBuilder = std::function<Tape::NodeId(Tape&)>;

/// Compares analytic gradients against central differences at step h and
/// returns the max over all parameter entries of
///   |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double gradient_check(std::span<Tensor* const> params, const LossBuilder& build_loss, double h);

/// Gradients for a parameter list after backward(), in the same order.
std::vector<Tensor> collect_grads(const Tape& tape, std::span<Tensor* const> params);

}  // namespace gfn::diff
