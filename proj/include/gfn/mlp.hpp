#pragma once

#include <vector>

#include "gfn/rng.hpp"
#include "gfn/tape.hpp"
#include "gfn/tensor.hpp"

namespace gfn::diff {

enum class Activation { kLeakyRelu, kTanh, kIdentity };

/// Fully-connected net. Weights are [out,in]; the activation is applied
/// between layers and, when activate_output is set, after the last layer too
/// (used for shared trunks whose heads are separate linear layers).
struct Mlp {
  std::vector<int> layer_sizes;
  Activation activation = Activation::kLeakyRelu;
  double leaky_slope = 0.01;
  bool activate_output = false;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  static Mlp make(std::vector<int> layer_sizes, Activation act, SeededRng& rng,
                  bool activate_output = false);

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return weights.size(); }

  /// Tape-free forward pass; x is [in] or [B,in].
  Tensor eval(const Tensor& x) const;

  /// Taped forward pass from an existing node.
  Tape::NodeId forward(Tape& tape, Tape::NodeId x);

  std::vector<Tensor*> params();
  std::int64_t param_count() const;
};

/// Runs the net on a constant input, recording every operation on the tape.
Tape::NodeId forward_mlp(Tape& tape, Mlp& mlp, const Tensor& input);

}  // namespace gfn::diff
