#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "terramesh/tensor.hpp"

namespace terramesh {

class Tape;

// Handle to a node on a recording tape. Cheap to copy; the tape owns storage.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  inline const Tensor& value() const;
  inline const Tensor& grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Operations append nodes in topological order; backward
// traverses once in reverse. A tape is single-use: running backward a second
// time is an error. A tape and its Vars are confined to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Var leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor(), {}, nullptr});
    return Var(this, nodes_.size() - 1);
  }

  // Records an operation with an explicit backward rule. The rule reads the
  // output gradient via grad(out) and accumulates into the parents.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(parents), std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  Tensor& mutable_value(std::size_t id) { return nodes_.at(id).value; }

  // Gradient buffer, allocated (zeroed) on first access.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  bool grad_written(std::size_t id) const { return nodes_.at(id).grad.numel() != 0; }

  void accumulate_grad(std::size_t id, std::size_t flat_index, double g) {
    grad(id)[flat_index] += g;
  }

  std::size_t size() const { return nodes_.size(); }

  bool backward_has_run() const { return backward_ran_; }

  void backward(const Var& root) {
    if (root.tape() != this) throw std::logic_error("backward: Var belongs to a different tape");
    if (backward_ran_) throw std::logic_error("backward: tape is single-use, already ran");
    const Tensor& v = value(root.id());
    if (!v.is_scalar()) {
      throw std::invalid_argument("backward: root must be scalar, got shape " + v.shape_string());
    }
    backward_ran_ = true;
    grad(root.id())[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.numel() != 0) n.backward(*this);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool backward_ran_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return const_cast<Tape*>(tape_)->grad(id_); }

namespace detail {

inline void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() != b.tape()) {
    throw std::logic_error(std::string(op) + ": operands on different tapes");
  }
}

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                              " vs " + b.shape_string());
}

// Elementwise binary ops allow exact-shape operands, or one scalar operand.
enum class BroadcastKind { Match, ScalarLeft, ScalarRight };

inline BroadcastKind binary_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return BroadcastKind::Match;
  if (a.is_scalar()) return BroadcastKind::ScalarLeft;
  if (b.is_scalar()) return BroadcastKind::ScalarRight;
  shape_error(op, a, b);
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require_same_tape(a, b, "add");
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto kind = detail::binary_kind("add", av, bv);
  const Tensor& big = (kind == detail::BroadcastKind::ScalarLeft) ? bv : av;
  Tensor out(big.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double x = (kind == detail::BroadcastKind::ScalarLeft) ? av[0] : av[i];
    double y = (kind == detail::BroadcastKind::ScalarRight) ? bv[0] : bv[i];
    out[i] = x + y;
  }
  std::size_t ai = a.id(), bi = b.id(), oi = t.size();
  return t.record(std::move(out), {ai, bi}, [ai, bi, oi, kind](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    Tensor& ga = tp.grad(ai);
    Tensor& gb = tp.grad(bi);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[(kind == detail::BroadcastKind::ScalarLeft) ? 0 : i] += g[i];
      gb[(kind == detail::BroadcastKind::ScalarRight) ? 0 : i] += g[i];
    }
  });
}

inline Var subtract(const Var& a, const Var& b) {
  detail::require_same_tape(a, b, "subtract");
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto kind = detail::binary_kind("subtract", av, bv);
  const Tensor& big = (kind == detail::BroadcastKind::ScalarLeft) ? bv : av;
  Tensor out(big.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double x = (kind == detail::BroadcastKind::ScalarLeft) ? av[0] : av[i];
    double y = (kind == detail::BroadcastKind::ScalarRight) ? bv[0] : bv[i];
    out[i] = x - y;
  }
  std::size_t ai = a.id(), bi = b.id(), oi = t.size();
  return t.record(std::move(out), {ai, bi}, [ai, bi, oi, kind](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    Tensor& ga = tp.grad(ai);
    Tensor& gb = tp.grad(bi);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[(kind == detail::BroadcastKind::ScalarLeft) ? 0 : i] += g[i];
      gb[(kind == detail::BroadcastKind::ScalarRight) ? 0 : i] -= g[i];
    }
  });
}

inline Var multiply(const Var& a, const Var& b) {
  detail::require_same_tape(a, b, "multiply");
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto kind = detail::binary_kind("multiply", av, bv);
  const Tensor& big = (kind == detail::BroadcastKind::ScalarLeft) ? bv : av;
  Tensor out(big.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double x = (kind == detail::BroadcastKind::ScalarLeft) ? av[0] : av[i];
    double y = (kind == detail::BroadcastKind::ScalarRight) ? bv[0] : bv[i];
    out[i] = x * y;
  }
  std::size_t ai = a.id(), bi = b.id(), oi = t.size();
  return t.record(std::move(out), {ai, bi}, [ai, bi, oi, kind](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    const Tensor& av2 = tp.value(ai);
    const Tensor& bv2 = tp.value(bi);
    Tensor& ga = tp.grad(ai);
    Tensor& gb = tp.grad(bi);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      double x = (kind == detail::BroadcastKind::ScalarLeft) ? av2[0] : av2[i];
      double y = (kind == detail::BroadcastKind::ScalarRight) ? bv2[0] : bv2[i];
      ga[(kind == detail::BroadcastKind::ScalarLeft) ? 0 : i] += g[i] * y;
      gb[(kind == detail::BroadcastKind::ScalarRight) ? 0 : i] += g[i] * x;
    }
  });
}

inline Var matmul(const Var& a, const Var& b) {
  detail::require_same_tape(a, b, "matmul");
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    detail::shape_error("matmul", av, bv);
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  }
  std::size_t ai = a.id(), bi = b.id(), oi = t.size();
  return t.record(std::move(out), {ai, bi}, [ai, bi, oi, m, k, n](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    const Tensor& av2 = tp.value(ai);
    const Tensor& bv2 = tp.value(bi);
    Tensor& ga = tp.grad(ai);
    Tensor& gb = tp.grad(bi);
    // dL/dA = G B^T, dL/dB = A^T G
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g[i * n + j];
        if (gij == 0.0) continue;
        for (std::size_t p = 0; p < k; ++p) {
          ga[i * k + p] += gij * bv2[p * n + j];
          gb[p * n + j] += gij * av2[i * k + p];
        }
      }
    }
  });
}

inline Var relu(const Var& a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  std::size_t ai = a.id(), oi = t.size();
  return t.record(std::move(out), {ai}, [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    const Tensor& av2 = tp.value(ai);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (av2[i] > 0.0) ga[i] += g[i];
  });
}

inline Var absval(const Var& a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(av[i]);
  std::size_t ai = a.id(), oi = t.size();
  return t.record(std::move(out), {ai}, [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    const Tensor& av2 = tp.value(ai);
    Tensor& ga = tp.grad(ai);
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (av2[i] > 0.0) ga[i] += g[i];
      else if (av2[i] < 0.0) ga[i] -= g[i];
    }
  });
}

// Square root. Inputs near zero get zero gradient (subgradient choice used by
// the l2,1 Laplacian rows); the cutoff is on sqrt(x) itself.
inline Var sqrtval(const Var& a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (av[i] < 0.0) throw std::domain_error("sqrt: negative input");
    out[i] = std::sqrt(av[i]);
  }
  std::size_t ai = a.id(), oi = t.size();
  return t.record(std::move(out), {ai}, [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    const Tensor& ov = tp.value(oi);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (ov[i] > 1e-12) ga[i] += g[i] * 0.5 / ov[i];
  });
}

inline Var sum(const Var& a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
  std::size_t ai = a.id(), oi = t.size();
  return t.record(Tensor::scalar(s), {ai}, [ai, oi](Tape& tp) {
    const double g = tp.grad(oi)[0];
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

inline Var mean(const Var& a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
  const double inv = 1.0 / static_cast<double>(av.numel());
  std::size_t ai = a.id(), oi = t.size();
  return t.record(Tensor::scalar(s * inv), {ai}, [ai, oi, inv](Tape& tp) {
    const double g = tp.grad(oi)[0] * inv;
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

// Concatenation along the last axis of two tensors with equal leading dims.
inline Var concat(const Var& a, const Var& b) {
  detail::require_same_tape(a, b, "concat");
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank() || av.rank() == 0) detail::shape_error("concat", av, bv);
  for (std::size_t d = 0; d + 1 < av.rank(); ++d)
    if (av.dim(d) != bv.dim(d)) detail::shape_error("concat", av, bv);
  const std::size_t la = av.dim(av.rank() - 1), lb = bv.dim(bv.rank() - 1);
  std::vector<std::size_t> shape = av.shape();
  shape.back() = la + lb;
  const std::size_t rows = av.numel() / la;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < la; ++i) out[r * (la + lb) + i] = av[r * la + i];
    for (std::size_t i = 0; i < lb; ++i) out[r * (la + lb) + la + i] = bv[r * lb + i];
  }
  std::size_t ai = a.id(), bi = b.id(), oi = t.size();
  return t.record(std::move(out), {ai, bi}, [ai, bi, oi, rows, la, lb](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    Tensor& ga = tp.grad(ai);
    Tensor& gb = tp.grad(bi);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < la; ++i) ga[r * la + i] += g[r * (la + lb) + i];
      for (std::size_t i = 0; i < lb; ++i) gb[r * lb + i] += g[r * (la + lb) + la + i];
    }
  });
}

// Index select along the first axis. Duplicate indices accumulate gradient.
inline Var gather(const Var& a, std::vector<std::size_t> indices) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const std::size_t rows = av.dim(0);
  const std::size_t rowlen = av.numel() / rows;
  for (std::size_t idx : indices) {
    if (idx >= rows) throw std::out_of_range("gather: index " + std::to_string(idx) +
                                             " out of range for " + av.shape_string());
  }
  std::vector<std::size_t> shape = av.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t r = 0; r < indices.size(); ++r)
    for (std::size_t c = 0; c < rowlen; ++c) out[r * rowlen + c] = av[indices[r] * rowlen + c];
  std::size_t ai = a.id(), oi = t.size();
  return t.record(std::move(out), {ai},
                  [ai, oi, rowlen, idx = std::move(indices)](Tape& tp) {
                    const Tensor& g = tp.grad(oi);
                    Tensor& ga = tp.grad(ai);
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      for (std::size_t c = 0; c < rowlen; ++c)
                        ga[idx[r] * rowlen + c] += g[r * rowlen + c];
                  });
}

inline Var reshape(const Var& a, std::vector<std::size_t> shape) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(std::move(shape), av.vec());
  if (out.numel() != av.numel()) detail::shape_error("reshape", av, out);
  std::size_t ai = a.id(), oi = t.size();
  return t.record(std::move(out), {ai}, [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

inline Var scale(const Var& a, double c) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c;
  std::size_t ai = a.id(), oi = t.size();
  return t.record(std::move(out), {ai}, [ai, oi, c](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c;
  });
}

// Elementwise minimum. The argmin index is a constant of the backward pass:
// gradient is routed to whichever operand won (ties go to the first).
inline Var minimum(const Var& a, const Var& b) {
  detail::require_same_tape(a, b, "minimum");
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) detail::shape_error("minimum", av, bv);
  Tensor out(av.shape());
  std::vector<char> from_a(av.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    from_a[i] = av[i] <= bv[i];
    out[i] = from_a[i] ? av[i] : bv[i];
  }
  std::size_t ai = a.id(), bi = b.id(), oi = t.size();
  return t.record(std::move(out), {ai, bi},
                  [ai, bi, oi, sel = std::move(from_a)](Tape& tp) {
                    const Tensor& g = tp.grad(oi);
                    Tensor& ga = tp.grad(ai);
                    Tensor& gb = tp.grad(bi);
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                      if (sel[i]) ga[i] += g[i];
                      else gb[i] += g[i];
                    }
                  });
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter-list optimizer state. Moments are lazily sized on first step.
struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// Core update rule on plain tensors, shared by the Var-level step and the
// training loops that keep parameters outside any tape.
inline void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                        long step, double lr, const AdamConfig& c = {}) {
  if (!param.same_shape(grad)) detail::shape_error("adam_update", param, grad);
  if (m.numel() == 0) m = Tensor(param.shape());
  if (v.numel() == 0) v = Tensor(param.shape());
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.numel(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

// Applies one bias-corrected Adam step to tape leaves in place and zeroes
// their gradients. Requires backward to have run on the tape.
inline void adam_step(std::vector<Var>& params, AdamState& state, double lr) {
  if (state.m.size() < params.size()) state.m.resize(params.size());
  if (state.v.size() < params.size()) state.v.resize(params.size());
  for (const Var& p : params) {
    if (!p.valid() || !p.tape()->backward_has_run() || !p.tape()->grad_written(p.id())) {
      throw std::logic_error("adam_step: parameter has no gradient (backward not run?)");
    }
  }
  ++state.step;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tape& t = *params[k].tape();
    Tensor& value = t.mutable_value(params[k].id());
    Tensor& g = t.grad(params[k].id());
    adam_update(value, g, state.m[k], state.v[k], state.step, lr, state.config);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = 0.0;
  }
}

}  // namespace terramesh
