#include "gfn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace gfn::diff {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: params/grads count mismatch");
  if (state.first_moment.empty()) {
    state.first_moment.reserve(params.size());
    state.second_moment.reserve(params.size());
    for (const Tensor* p : params) {
      state.first_moment.push_back(Tensor::zeros(p->shape));
      state.second_moment.push_back(Tensor::zeros(p->shape));
    }
  }
  if (state.first_moment.size() != params.size())
    throw std::invalid_argument("adam_step: state sized for a different parameter list");

  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!p.same_extent(g)) throw std::invalid_argument("adam_step: gradient shape mismatch");
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      m.data[k] = state.beta1 * m.data[k] + (1.0 - state.beta1) * g.data[k];
      v.data[k] = state.beta2 * v.data[k] + (1.0 - state.beta2) * g.data[k] * g.data[k];
      const double mhat = m.data[k] / c1;
      const double vhat = v.data[k] / c2;
      p.data[k] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace gfn::diff
