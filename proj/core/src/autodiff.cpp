#include "demoe/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "demoe/error.hpp"

namespace demoe::ad {

const Tensor& Var::value() const {
  if (tape == nullptr) throw ArgumentError("Var is not attached to a tape");
  return tape->value(*this);
}

void Tape::check(Var v) const {
  if (v.tape != this) throw ArgumentError("variable belongs to a different tape");
  if (v.id >= nodes_.size()) throw ArgumentError("variable id " + std::to_string(v.id) + " out of range");
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  bool any = false;
  for (const Var& p : parents) {
    check(p);
    node.parents.push_back(p.id);
    any = any || nodes_[p.id].requires_grad;
  }
  if (grad_enabled_ && any) {
    node.requires_grad = true;
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id].requires_grad;
}

std::span<const std::uint32_t> Tape::parents(Var v) const {
  check(v);
  return nodes_[v.id].parents;
}

Tensor& Tape::grad(Var v) {
  check(v);
  return grad(v.id);
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty() && node.value.numel() > 0) node.grad = Tensor(node.value.shape());
  return node.grad;
}

bool Tape::has_grad(Var v) const {
  check(v);
  return !nodes_[v.id].grad.empty();
}

Tensor Tape::grad_or_zero(Var v) const {
  check(v);
  const Node& node = nodes_[v.id];
  return node.grad.empty() ? Tensor(node.value.shape()) : node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this || loss.id >= nodes_.size()) {
    throw ArgumentError("backward: loss was not recorded on this tape");
  }
  if (nodes_[loss.id].value.numel() != 1) {
    throw ArgumentError("backward: loss must be a scalar, got shape " +
                        nodes_[loss.id].value.shape().str());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  grad(loss.id)[0] = 1.0f;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && !node.grad.empty()) node.backward(*this);
  }
}

void Tape::clear() {
  nodes_.clear();
}

namespace {

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = vars.begin()->tape;
  if (t == nullptr) throw ArgumentError("variable is not attached to a tape");
  for (const Var& v : vars) {
    if (v.tape != t) throw ArgumentError("operands live on different tapes");
  }
  return *t;
}

// Gradient buffer of a parent, or nullptr when it does not need one.
Tensor* grad_if(Tape& t, Var v) {
  return t.requires_grad(v) ? &t.grad(v) : nullptr;
}

}  // namespace

Var conv2d(Var x, Var w, Var b, ops::ConvMode mode) {
  Tape& t = same_tape({x, w, b});
  Tensor out = ops::conv2d(x.value(), w.value(), b.value(), mode);
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {x, w, b}, [x, w, b, mode, self](Tape& tp) {
    const Tensor& g = tp.grad(self);
    ops::conv2d_backward(tp.value(x), tp.value(w), g, mode, grad_if(tp, x), grad_if(tp, w),
                         grad_if(tp, b));
  });
}

Var conv2d(Var x, Var w, ops::ConvMode mode) {
  Tape& t = same_tape({x, w});
  Tensor out = ops::conv2d(x.value(), w.value(), Tensor(), mode);
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {x, w}, [x, w, mode, self](Tape& tp) {
    ops::conv2d_backward(tp.value(x), tp.value(w), tp.grad(self), mode, grad_if(tp, x),
                         grad_if(tp, w), nullptr);
  });
}

Var layer_norm_channels(Var x, Var gamma, Var beta, float eps) {
  Tape& t = same_tape({x, gamma, beta});
  auto stats = std::make_shared<ops::LayerNormStats>();
  Tensor out = ops::layer_norm_channels(x.value(), gamma.value(), beta.value(), eps,
                                        t.grad_enabled() ? stats.get() : nullptr);
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, stats, self](Tape& tp) {
    ops::layer_norm_channels_backward(tp.value(x), tp.value(gamma), *stats, tp.grad(self),
                                      grad_if(tp, x), grad_if(tp, gamma), grad_if(tp, beta));
  });
}

Var simple_gate(Var x) {
  Tape& t = same_tape({x});
  Tensor out = ops::simple_gate(x.value());
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {x}, [x, self](Tape& tp) {
    ops::simple_gate_backward(tp.value(x), tp.grad(self), tp.grad(x));
  });
}

Var global_avg_pool(Var x) {
  Tape& t = same_tape({x});
  Tensor out = ops::global_avg_pool(x.value());
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {x}, [x, self](Tape& tp) {
    ops::global_avg_pool_backward(tp.value(x).shape(), tp.grad(self), tp.grad(x));
  });
}

Var simplified_channel_attention(Var x, Var w, Var b) {
  const Shape& ws = w.shape();
  if (ws.n != x.shape().c || ws.c != x.shape().c) {
    throw ShapeError("simplified_channel_attention: weight " + ws.str() + " does not map " +
                     std::to_string(x.shape().c) + " channels to themselves");
  }
  const Var pooled = global_avg_pool(x);
  const Var scale = conv2d(pooled, w, b, ops::ConvMode::pointwise_1x1);
  return mul(x, scale);
}

Var pixel_shuffle(Var x, ops::ShuffleDirection direction, std::size_t r) {
  Tape& t = same_tape({x});
  Tensor out = ops::pixel_shuffle(x.value(), direction, r);
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {x}, [x, direction, r, self](Tape& tp) {
    const auto inverse = direction == ops::ShuffleDirection::up ? ops::ShuffleDirection::down
                                                                : ops::ShuffleDirection::up;
    const Tensor back = ops::pixel_shuffle(tp.grad(self), inverse, r);
    Tensor& dx = tp.grad(x);
    for (std::size_t i = 0; i < back.numel(); ++i) dx[i] += back[i];
  });
}

Var softmax_channels(Var x) {
  Tape& t = same_tape({x});
  Tensor out = ops::softmax_channels(x.value());
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {x}, [x, self](Tape& tp) {
    ops::softmax_channels_backward(tp.value(Var{&tp, self}), tp.grad(self), tp.grad(x));
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape({a, b});
  Tensor out = ops::mul_broadcast(a.value(), b.value());
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {a, b}, [a, b, self](Tape& tp) {
    ops::mul_broadcast_backward(tp.value(a), tp.value(b), tp.grad(self), grad_if(tp, a), grad_if(tp, b));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape({a, b});
  Tensor out = ops::add_broadcast(a.value(), b.value());
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {a, b}, [a, b, self](Tape& tp) {
    ops::add_broadcast_backward(tp.value(b).shape(), tp.grad(self), grad_if(tp, a), grad_if(tp, b));
  });
}

Var sum(Var x) {
  Tape& t = same_tape({x});
  double acc = 0.0;
  for (float v : x.value().data()) acc += v;
  Tensor out({1, 1, 1, 1}, static_cast<float>(acc));
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {x}, [x, self](Tape& tp) {
    const float g = tp.grad(self)[0];
    Tensor& dx = tp.grad(x);
    for (float& v : dx.data()) v += g;
  });
}

Var gated_sum(std::span<const Var> experts, Var gates, const std::vector<std::vector<bool>>& mask) {
  if (experts.empty()) throw ArgumentError("gated_sum: no experts");
  Tape& t = same_tape({gates});
  const Shape es = experts.front().shape();
  const Shape& gs = gates.shape();
  if (gs.n != es.n || gs.c != experts.size() || gs.h != 1 || gs.w != 1) {
    throw ShapeError("gated_sum: gates " + gs.str() + " do not match " +
                     std::to_string(experts.size()) + " experts of batch " + std::to_string(es.n));
  }
  if (mask.size() != es.n) throw ShapeError("gated_sum: selection mask batch size mismatch");
  for (const Var& e : experts) {
    if (e.tape != &t) throw ArgumentError("operands live on different tapes");
    if (!(e.shape() == es)) throw ShapeError("gated_sum: expert outputs differ in shape");
  }
  for (const auto& row : mask) {
    if (row.size() != experts.size()) throw ShapeError("gated_sum: selection mask width mismatch");
    if (std::none_of(row.begin(), row.end(), [](bool b) { return b; })) {
      throw ArgumentError("gated_sum: empty expert selection");
    }
  }

  const std::size_t per = es.sample();
  const std::size_t num = experts.size();
  Tensor out(es);
  const Tensor& g = gates.value();
  for (std::size_t n = 0; n < es.n; ++n) {
    float* o = out.ptr() + n * per;
    bool first = true;
    for (std::size_t i = 0; i < num; ++i) {
      if (!mask[n][i]) continue;
      const float wgt = g[n * num + i];
      const float* e = experts[i].value().ptr() + n * per;
      if (first) {
        for (std::size_t k = 0; k < per; ++k) o[k] = wgt * e[k];
        first = false;
      } else {
        for (std::size_t k = 0; k < per; ++k) o[k] += wgt * e[k];
      }
    }
  }

  std::vector<Var> parents(experts.begin(), experts.end());
  parents.push_back(gates);
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  std::vector<Var> ex(experts.begin(), experts.end());
  return t.record(std::move(out), std::span<const Var>(parents),
                  [ex, gates, mask, per, num, self](Tape& tp) {
                    const Tensor& dout = tp.grad(self);
                    const Tensor& gv = tp.value(gates);
                    Tensor* dg = grad_if(tp, gates);
                    for (std::size_t i = 0; i < num; ++i) {
                      Tensor* de = grad_if(tp, ex[i]);
                      const Tensor& ev = tp.value(ex[i]);
                      for (std::size_t n = 0; n < mask.size(); ++n) {
                        if (!mask[n][i]) continue;
                        const float wgt = gv[n * num + i];
                        const float* d = dout.ptr() + n * per;
                        if (de != nullptr) {
                          float* dst = de->ptr() + n * per;
                          for (std::size_t k = 0; k < per; ++k) dst[k] += wgt * d[k];
                        }
                        if (dg != nullptr) {
                          const float* e = ev.ptr() + n * per;
                          double acc = 0.0;
                          for (std::size_t k = 0; k < per; ++k) acc += static_cast<double>(d[k]) * e[k];
                          (*dg)[n * num + i] += static_cast<float>(acc);
                        }
                      }
                    }
                  });
}

Var l1_loss(Var pred, Var target) {
  Tape& t = same_tape({pred, target});
  const Tensor& p = pred.value();
  const Tensor& q = target.value();
  if (!(p.shape() == q.shape())) {
    throw ShapeError("l1_loss: prediction " + p.shape().str() + " vs target " + q.shape().str());
  }
  if (p.numel() == 0) throw ShapeError("l1_loss: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) acc += std::fabs(static_cast<double>(p[i]) - q[i]);
  Tensor out({1, 1, 1, 1}, static_cast<float>(acc / static_cast<double>(p.numel())));
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {pred, target}, [pred, target, self](Tape& tp) {
    const Tensor& pv = tp.value(pred);
    const Tensor& qv = tp.value(target);
    const float g = tp.grad(self)[0] / static_cast<float>(pv.numel());
    Tensor* dp = grad_if(tp, pred);
    Tensor* dq = grad_if(tp, target);
    for (std::size_t i = 0; i < pv.numel(); ++i) {
      const float s = pv[i] > qv[i] ? g : (pv[i] < qv[i] ? -g : 0.0f);
      if (dp != nullptr) (*dp)[i] += s;
      if (dq != nullptr) (*dq)[i] -= s;
    }
  });
}

Var cross_entropy_from_probs(Var probs, std::span<const int> labels) {
  Tape& t = same_tape({probs});
  const Tensor& p = probs.value();
  const Shape& s = p.shape();
  if (s.h != 1 || s.w != 1 || labels.size() != s.n) {
    throw ShapeError("cross_entropy: probabilities " + s.str() + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  constexpr float kFloor = 1e-12f;
  double acc = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= s.c) {
      throw ArgumentError("cross_entropy: label " + std::to_string(labels[n]) + " out of range");
    }
    acc -= std::log(std::max(p[n * s.c + static_cast<std::size_t>(labels[n])], kFloor));
  }
  Tensor out({1, 1, 1, 1}, static_cast<float>(acc / static_cast<double>(s.n)));
  std::vector<int> lab(labels.begin(), labels.end());
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), {probs}, [probs, lab, self](Tape& tp) {
    const Tensor& pv = tp.value(probs);
    const std::size_t k = pv.shape().c;
    const float g = tp.grad(self)[0] / static_cast<float>(lab.size());
    Tensor& dp = tp.grad(probs);
    for (std::size_t n = 0; n < lab.size(); ++n) {
      const std::size_t i = n * k + static_cast<std::size_t>(lab[n]);
      if (pv[i] > kFloor) dp[i] -= g / pv[i];
    }
  });
}

Var weighted_sum(std::span<const Var> scalars, std::span<const float> weights) {
  if (scalars.empty() || scalars.size() != weights.size()) {
    throw ArgumentError("weighted_sum: term and weight counts differ");
  }
  Tape& t = *scalars.front().tape;
  double acc = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].tape != &t) throw ArgumentError("operands live on different tapes");
    if (scalars[i].value().numel() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    acc += static_cast<double>(weights[i]) * scalars[i].value()[0];
  }
  Tensor out({1, 1, 1, 1}, static_cast<float>(acc));
  std::vector<Var> sv(scalars.begin(), scalars.end());
  std::vector<float> wv(weights.begin(), weights.end());
  const std::uint32_t self = static_cast<std::uint32_t>(t.size());
  return t.record(std::move(out), std::span<const Var>(sv), [sv, wv, self](Tape& tp) {
    const float g = tp.grad(self)[0];
    for (std::size_t i = 0; i < sv.size(); ++i) {
      if (tp.requires_grad(sv[i])) tp.grad(sv[i])[0] += wv[i] * g;
    }
  });
}

}  // namespace demoe::ad
