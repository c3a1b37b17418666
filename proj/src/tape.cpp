#include "gfn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gfn::diff {

namespace {
constexpr double kMaskedLogProb = -1e30;
}

Tape::NodeId Tape::param(Tensor* p) {
  auto it = bound_params_.find(p);
  if (it != bound_params_.end()) return it->second;
  Node n;
  n.op = Op::kLeaf;
  n.value = *p;
  NodeId id = push(std::move(n));
  bound_params_.emplace(p, id);
  return id;
}

Tape::NodeId Tape::input(Tensor v) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  return push(std::move(n));
}

Tape::NodeId Tape::constant(double v) { return input(Tensor::scalar(v)); }

Tape::NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor& bv = nodes_[b].value;
  if (wv.shape.size() != 2) throw std::invalid_argument("linear: weight must be 2-D");
  const int out = wv.shape[0];
  const int in = wv.shape[1];
  if (bv.size() != out) throw std::invalid_argument("linear: bias size mismatch");
  const bool batched = xv.shape.size() == 2;
  const int rows = batched ? xv.shape[0] : 1;
  const int xin = batched ? xv.shape[1] : static_cast<int>(xv.size());
  if (xin != in)
    throw std::invalid_argument("linear: input width " + std::to_string(xin) +
                                " does not match layer input " + std::to_string(in));

  Node n;
  n.op = Op::kLinear;
  n.a = x;
  n.b = w;
  n.c = b;
  n.value = batched ? Tensor::zeros({rows, out}) : Tensor::zeros({out});
  const double* xd = xv.data.data();
  const double* wd = wv.data.data();
  double* yd = n.value.data.data();
  for (int r = 0; r < rows; ++r) {
    const double* xr = xd + static_cast<std::size_t>(r) * in;
    double* yr = yd + static_cast<std::size_t>(r) * out;
    for (int o = 0; o < out; ++o) {
      const double* wr = wd + static_cast<std::size_t>(o) * in;
      double acc = bv.data[o];
      for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return push(std::move(n));
}

Tape::NodeId Tape::leaky_relu(NodeId x, double slope) {
  Node n;
  n.op = Op::kLeakyRelu;
  n.a = x;
  n.aux = slope;
  n.value = nodes_[x].value;
  for (double& v : n.value.data) v = v > 0.0 ? v : slope * v;
  return push(std::move(n));
}

Tape::NodeId Tape::tanh_act(NodeId x) {
  Node n;
  n.op = Op::kTanh;
  n.a = x;
  n.value = nodes_[x].value;
  for (double& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

Tape::NodeId Tape::row_masked_log_softmax(NodeId x, std::vector<std::vector<std::int32_t>> valid) {
  const Tensor& xv = nodes_[x].value;
  const int rows = xv.rows();
  const int cols = xv.cols();
  if (static_cast<int>(valid.size()) != rows)
    throw std::invalid_argument("row_masked_log_softmax: one mask per row required");

  Node n;
  n.op = Op::kRowMaskedLogSoftmax;
  n.a = x;
  n.value = xv;
  for (int r = 0; r < rows; ++r) {
    double* row = n.value.data.data() + static_cast<std::size_t>(r) * cols;
    const auto& vs = valid[r];
    for (int c = 0; c < cols; ++c) row[c] = kMaskedLogProb;
    if (vs.empty()) continue;
    const double* xr = xv.data.data() + static_cast<std::size_t>(r) * cols;
    double mx = xr[vs[0]];
    for (std::int32_t c : vs) mx = std::max(mx, xr[c]);
    double sum = 0.0;
    for (std::int32_t c : vs) sum += std::exp(xr[c] - mx);
    const double lse = mx + std::log(sum);
    for (std::int32_t c : vs) row[c] = xr[c] - lse;
  }
  n.masks = std::move(valid);
  return push(std::move(n));
}

Tape::NodeId Tape::masked_log_softmax(NodeId x, std::vector<std::int32_t> valid) {
  return row_masked_log_softmax(x, {std::move(valid)});
}

Tape::NodeId Tape::pick(NodeId x, std::int64_t flat_index) {
  const Tensor& xv = nodes_[x].value;
  if (flat_index < 0 || flat_index >= xv.size())
    throw std::invalid_argument("pick: index out of range");
  Node n;
  n.op = Op::kPick;
  n.a = x;
  n.index = flat_index;
  n.value = Tensor::scalar(xv.data[static_cast<std::size_t>(flat_index)]);
  return push(std::move(n));
}

Tape::NodeId Tape::pick2(NodeId x, int row, int col) {
  return pick(x, static_cast<std::int64_t>(row) * nodes_[x].value.cols() + col);
}

void Tape::check_scalar_operands(const std::vector<std::pair<double, NodeId>>& terms) const {
  for (const auto& [coef, id] : terms)
    if (nodes_[id].value.size() != 1)
      throw std::invalid_argument("affine_combine: operands must be scalar");
}

Tape::NodeId Tape::affine_combine(const std::vector<std::pair<double, NodeId>>& terms, double bias) {
  check_scalar_operands(terms);
  double acc = bias;
  for (const auto& [coef, id] : terms) acc += coef * nodes_[id].value.data[0];
  Node n;
  n.op = Op::kAffine;
  n.affine = terms;
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

Tape::NodeId Tape::sum_scalars(const std::vector<NodeId>& ids) {
  std::vector<std::pair<double, NodeId>> terms;
  terms.reserve(ids.size());
  for (NodeId id : ids) terms.emplace_back(1.0, id);
  return affine_combine(terms, 0.0);
}

Tape::NodeId Tape::mean_scalars(const std::vector<NodeId>& ids) {
  if (ids.empty()) throw std::invalid_argument("mean_scalars: empty");
  std::vector<std::pair<double, NodeId>> terms;
  terms.reserve(ids.size());
  const double c = 1.0 / static_cast<double>(ids.size());
  for (NodeId id : ids) terms.emplace_back(c, id);
  return affine_combine(terms, 0.0);
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  if (!nodes_[a].value.same_extent(nodes_[b].value))
    throw std::invalid_argument("add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = nodes_[a].value;
  for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += nodes_[b].value.data[i];
  return push(std::move(n));
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  if (!nodes_[a].value.same_extent(nodes_[b].value))
    throw std::invalid_argument("sub: shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = nodes_[a].value;
  for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] -= nodes_[b].value.data[i];
  return push(std::move(n));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  if (!nodes_[a].value.same_extent(nodes_[b].value))
    throw std::invalid_argument("mul: shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.value = nodes_[a].value;
  for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= nodes_[b].value.data[i];
  return push(std::move(n));
}

Tape::NodeId Tape::neg(NodeId a) {
  Node n;
  n.op = Op::kNeg;
  n.a = a;
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v = -v;
  return push(std::move(n));
}

Tape::NodeId Tape::square(NodeId a) {
  Node n;
  n.op = Op::kSquare;
  n.a = a;
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v = v * v;
  return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.aux = c;
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v *= c;
  return push(std::move(n));
}

Tape::NodeId Tape::add_const(NodeId a, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.a = a;
  n.aux = c;
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v += c;
  return push(std::move(n));
}

void Tape::backward(NodeId loss) {
  if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size()))
    throw std::invalid_argument("backward: bad loss node");
  if (nodes_[loss].value.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");

  for (auto& n : nodes_) {
    n.grad = Tensor::zeros(n.value.shape);
  }
  nodes_[loss].grad.data[0] = 1.0;
  backward_done_ = true;

  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    bool any = false;
    for (double g : n.grad.data)
      if (g != 0.0) {
        any = true;
        break;
      }
    if (!any) continue;
    const double* g = n.grad.data.data();
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kLinear: {
        const Tensor& xv = nodes_[n.a].value;
        const Tensor& wv = nodes_[n.b].value;
        Tensor& gx = nodes_[n.a].grad;
        Tensor& gw = nodes_[n.b].grad;
        Tensor& gb = nodes_[n.c].grad;
        const int out = wv.shape[0];
        const int in = wv.shape[1];
        const int rows = n.value.shape.size() == 2 ? n.value.shape[0] : 1;
        for (int r = 0; r < rows; ++r) {
          const double* gr = g + static_cast<std::size_t>(r) * out;
          const double* xr = xv.data.data() + static_cast<std::size_t>(r) * in;
          double* gxr = gx.data.data() + static_cast<std::size_t>(r) * in;
          for (int o = 0; o < out; ++o) {
            const double go = gr[o];
            if (go == 0.0) continue;
            gb.data[o] += go;
            const double* wr = wv.data.data() + static_cast<std::size_t>(o) * in;
            double* gwr = gw.data.data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) {
              gwr[i] += go * xr[i];
              gxr[i] += go * wr[i];
            }
          }
        }
        break;
      }
      case Op::kLeakyRelu: {
        const Tensor& xv = nodes_[n.a].value;
        Tensor& gx = nodes_[n.a].grad;
        for (std::size_t i = 0; i < gx.data.size(); ++i)
          gx.data[i] += g[i] * (xv.data[i] > 0.0 ? 1.0 : n.aux);
        break;
      }
      case Op::kTanh: {
        Tensor& gx = nodes_[n.a].grad;
        for (std::size_t i = 0; i < gx.data.size(); ++i)
          gx.data[i] += g[i] * (1.0 - n.value.data[i] * n.value.data[i]);
        break;
      }
      case Op::kRowMaskedLogSoftmax: {
        Tensor& gx = nodes_[n.a].grad;
        const int cols = n.value.cols();
        for (std::size_t r = 0; r < n.masks.size(); ++r) {
          const auto& vs = n.masks[r];
          if (vs.empty()) continue;
          const double* gr = g + r * cols;
          const double* yr = n.value.data.data() + r * cols;
          double gsum = 0.0;
          for (std::int32_t c : vs) gsum += gr[c];
          if (gsum == 0.0) {
            bool row_any = false;
            for (std::int32_t c : vs)
              if (gr[c] != 0.0) {
                row_any = true;
                break;
              }
            if (!row_any) continue;
          }
          double* gxr = gx.data.data() + r * cols;
          for (std::int32_t c : vs) gxr[c] += gr[c] - std::exp(yr[c]) * gsum;
        }
        break;
      }
      case Op::kPick:
        nodes_[n.a].grad.data[static_cast<std::size_t>(n.index)] += g[0];
        break;
      case Op::kAffine:
        for (const auto& [coef, id2] : n.affine) nodes_[id2].grad.data[0] += coef * g[0];
        break;
      case Op::kAdd: {
        Tensor& ga = nodes_[n.a].grad;
        Tensor& gb2 = nodes_[n.b].grad;
        for (std::size_t i = 0; i < ga.data.size(); ++i) {
          ga.data[i] += g[i];
          gb2.data[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        Tensor& ga = nodes_[n.a].grad;
        Tensor& gb2 = nodes_[n.b].grad;
        for (std::size_t i = 0; i < ga.data.size(); ++i) {
          ga.data[i] += g[i];
          gb2.data[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        Tensor& ga = nodes_[n.a].grad;
        Tensor& gb2 = nodes_[n.b].grad;
        const Tensor& av = nodes_[n.a].value;
        const Tensor& bv = nodes_[n.b].value;
        for (std::size_t i = 0; i < ga.data.size(); ++i) {
          ga.data[i] += g[i] * bv.data[i];
          gb2.data[i] += g[i] * av.data[i];
        }
        break;
      }
      case Op::kNeg: {
        Tensor& ga = nodes_[n.a].grad;
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] -= g[i];
        break;
      }
      case Op::kSquare: {
        Tensor& ga = nodes_[n.a].grad;
        const Tensor& av = nodes_[n.a].value;
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += 2.0 * g[i] * av.data[i];
        break;
      }
      case Op::kScale: {
        Tensor& ga = nodes_[n.a].grad;
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g[i] * n.aux;
        break;
      }
      case Op::kAddConst: {
        Tensor& ga = nodes_[n.a].grad;
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g[i];
        break;
      }
    }
  }
}

const Tensor& Tape::grad(NodeId id) const {
  if (!backward_done_) throw std::logic_error("grad: backward() has not run");
  return nodes_[id].grad;
}

Tensor Tape::grad_for(const Tensor* p) const {
  auto it = bound_params_.find(p);
  if (it == bound_params_.end() || !backward_done_) return Tensor::zeros(p->shape);
  return nodes_[it->second].grad;
}

}  // namespace gfn::diff
