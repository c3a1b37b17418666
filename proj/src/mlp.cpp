#include "gfn/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace gfn::diff {

Mlp Mlp::make(std::vector<int> layer_sizes, Activation act, SeededRng& rng, bool activate_output) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("Mlp: need at least in/out sizes");
  for (int s : layer_sizes)
    if (s < 1) throw std::invalid_argument("Mlp: layer sizes must be positive");
  Mlp m;
  m.layer_sizes = std::move(layer_sizes);
  m.activation = act;
  m.activate_output = activate_output;
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    const int in = m.layer_sizes[l];
    const int out = m.layer_sizes[l + 1];
    Tensor w = Tensor::zeros({out, in});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
    m.biases.push_back(Tensor::zeros({out}));
  }
  return m;
}

namespace {

void apply_activation(Tensor& t, Activation act, double slope) {
  switch (act) {
    case Activation::kLeakyRelu:
      for (double& v : t.data) v = v > 0.0 ? v : slope * v;
      break;
    case Activation::kTanh:
      for (double& v : t.data) v = std::tanh(v);
      break;
    case Activation::kIdentity:
      break;
  }
}

}  // namespace

Tensor Mlp::eval(const Tensor& x) const {
  const bool batched = x.shape.size() == 2;
  const int rows = batched ? x.shape[0] : 1;
  Tensor cur = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Tensor& w = weights[l];
    const Tensor& b = biases[l];
    const int out = w.shape[0];
    const int in = w.shape[1];
    const int cur_in = batched ? cur.shape[1] : static_cast<int>(cur.size());
    if (cur_in != in)
      throw std::invalid_argument("Mlp::eval: input width " + std::to_string(cur_in) +
                                  " does not match layer input " + std::to_string(in));
    Tensor next = batched ? Tensor::zeros({rows, out}) : Tensor::zeros({out});
    for (int r = 0; r < rows; ++r) {
      const double* xr = cur.data.data() + static_cast<std::size_t>(r) * in;
      double* yr = next.data.data() + static_cast<std::size_t>(r) * out;
      for (int o = 0; o < out; ++o) {
        const double* wr = w.data.data() + static_cast<std::size_t>(o) * in;
        double acc = b.data[o];
        for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
    if (l + 1 < weights.size() || activate_output)
      apply_activation(next, activation, leaky_slope);
    cur = std::move(next);
  }
  return cur;
}

Tape::NodeId Mlp::forward(Tape& tape, Tape::NodeId x) {
  Tape::NodeId cur = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    cur = tape.linear(cur, tape.param(&weights[l]), tape.param(&biases[l]));
    if (l + 1 < weights.size() || activate_output) {
      switch (activation) {
        case Activation::kLeakyRelu:
          cur = tape.leaky_relu(cur, leaky_slope);
          break;
        case Activation::kTanh:
          cur = tape.tanh_act(cur);
          break;
        case Activation::kIdentity:
          break;
      }
    }
  }
  return cur;
}

std::vector<Tensor*> Mlp::params() {
  std::vector<Tensor*> ps;
  ps.reserve(weights.size() * 2);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    ps.push_back(&weights[l]);
    ps.push_back(&biases[l]);
  }
  return ps;
}

std::int64_t Mlp::param_count() const {
  std::int64_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

Tape::NodeId forward_mlp(Tape& tape, Mlp& mlp, const Tensor& input) {
  return mlp.forward(tape, tape.input(input));
}

}  // namespace gfn::diff
