#include "gfn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gfn::diff {

std::vector<Tensor> collect_grads(const Tape& tape, std::span<Tensor* const> params) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Tensor* p : params) grads.push_back(tape.grad_for(p));
  return grads;
}

double gradient_check(std::span<Tensor* const> params, const LossBuilder& build_loss, double h) {
  if (h <= 0.0) throw std::invalid_argument("gradient_check: h must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    Tape::NodeId loss = build_loss(tape);
    tape.backward(loss);
    analytic = collect_grads(tape, params);
  }

  auto eval = [&]() {
    Tape tape;
    return tape.value(build_loss(tape)).scalar_value();
  };

  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      const double saved = p.data[k];
      p.data[k] = saved + h;
      const double up = eval();
      p.data[k] = saved - h;
      const double down = eval();
      p.data[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].data[k];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace gfn::diff
