#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "ndsq/common.hpp"

// Continuous stack, queue, and double-ended queue memories. Each structure is
// an append-only value matrix V (one row per pushed vector, rows immutable)
// paired with a strength vector s (certainty mass per row). A step consumes a
// pop strength u, a push strength d and a pushed value v (doubled per end for
// the deque), appends the value, re-weights the strengths, and emits a read:
// the unit-mass weighted sum of rows traversed from the structure's reading
// end. All state transitions are pure functions with no trainable parameters;
// the *_backward functions return exact adjoints of the transition.

namespace ndsq {

enum class MemoryKind { Stack, Queue, Deque };

inline const char* to_string(MemoryKind kind) {
  switch (kind) {
    case MemoryKind::Stack: return "stack";
    case MemoryKind::Queue: return "queue";
    case MemoryKind::Deque: return "deque";
  }
  return "?";
}

template <class Scalar>
struct MemoryState {
  MemoryKind kind = MemoryKind::Stack;
  Index width = 0;              // embedding width m
  Matrix<Scalar> values;        // rows() x width, rows never mutated once written
  Vector<Scalar> strengths;     // one mass per row

  Index rows() const { return strengths.size(); }
  Scalar total_strength() const { return rows() == 0 ? Scalar(0) : strengths.sum(); }

  static MemoryState empty(MemoryKind kind, Index width) {
    MemoryState state;
    state.kind = kind;
    state.width = width;
    state.values.resize(0, width);
    state.strengths.resize(0);
    return state;
  }
};

/// Controller-supplied inputs for one step. Stack/queue use value/push/pop;
/// the deque reads those as its top end and adds the *_bot set.
template <class Scalar>
struct MemorySignals {
  Vector<Scalar> value;
  Scalar push = 0;
  Scalar pop = 0;
  Vector<Scalar> value_bot;
  Scalar push_bot = 0;
  Scalar pop_bot = 0;
};

template <class Scalar>
struct ReadResult {
  Vector<Scalar> read;           // r_t
  Vector<Scalar> weights;        // per-row mass used by the read, each in [0,1]
  Vector<Scalar> read_bot;       // deque only
  Vector<Scalar> weights_bot;    // deque only
};

/// Adjoints of (next state, read) fed into a backward step. Zero-sized members
/// mean an all-zero adjoint.
template <class Scalar>
struct MemoryUpstream {
  Matrix<Scalar> d_values;
  Vector<Scalar> d_strengths;
  Vector<Scalar> d_read;
  Vector<Scalar> d_read_bot;
};

/// Adjoints of (previous state, signals) returned by a backward step.
template <class Scalar>
struct MemoryAdjoints {
  Matrix<Scalar> d_values;
  Vector<Scalar> d_strengths;
  Vector<Scalar> d_value;
  Scalar d_pop = 0;
  Scalar d_push = 0;
  Vector<Scalar> d_value_bot;
  Scalar d_pop_bot = 0;
  Scalar d_push_bot = 0;
};

namespace detail {

// Test hook: corrupts one branch of the stack backward primitives so the
// gradient suite can demonstrate it actually pins each term.
enum class BackwardMutation {
  None,
  PopCarryDropped,       // propagation to lower rows when the pop bites -> 0
  PopDiagonalDropped,    // the Kronecker-delta pass-through -> 0
  PopSignFlipped,        // d(pop) accumulation -1 -> +1
  ReadDiagonalDropped,   // the delta branch of the read-weight adjoint -> 0
  ReadCarrySignFlipped,  // the -1 branch of the read-weight adjoint -> +1
};

inline thread_local BackwardMutation backward_mutation = BackwardMutation::None;

}  // namespace detail

// ---------------------------------------------------------------------------
// Strength-vector primitives. "Top" traversals run from the highest index
// down (stack pop/read, deque top end); "bottom" runs from the lowest index
// up (queue pop/read, deque bottom end). Each costs O(n) via a running
// suffix/prefix accumulator. At min/max ties the derivative of the left
// argument is taken; the backward primitives recompute the forward's
// accumulators in the same order so branch decisions agree bit for bit.
// ---------------------------------------------------------------------------

/// Removes pop mass from the top: s'[i] = max(0, s[i] - max(0, u - sum_{j>i} s[j])).
template <class Scalar>
Vector<Scalar> pop_from_top(const Vector<Scalar>& s, Scalar pop) {
  const Index n = s.size();
  Vector<Scalar> out(n);
  Scalar above = 0;
  for (Index i = n - 1; i >= 0; --i) {
    out[i] = std::max(Scalar(0), s[i] - std::max(Scalar(0), pop - above));
    above += s[i];
  }
  return out;
}

template <class Scalar>
Vector<Scalar> pop_from_bottom(const Vector<Scalar>& s, Scalar pop) {
  const Index n = s.size();
  Vector<Scalar> out(n);
  Scalar below = 0;
  for (Index i = 0; i < n; ++i) {
    out[i] = std::max(Scalar(0), s[i] - std::max(Scalar(0), pop - below));
    below += s[i];
  }
  return out;
}

/// Sum of w[i] * V.row(i), accumulated strictly in ascending row order so that
/// zero-weight rows are bit-transparent (the deque degeneracies compare reads
/// against the plain stack/queue with ==).
template <class Scalar>
Vector<Scalar> weighted_row_sum(const Matrix<Scalar>& V, const Vector<Scalar>& w) {
  Vector<Scalar> out = Vector<Scalar>::Zero(V.cols());
  for (Index i = 0; i < V.rows(); ++i) out += w[i] * V.row(i).transpose();
  return out;
}

/// Weights of a unit-mass read consuming from the top:
/// w[i] = min(s[i], max(0, 1 - sum_{j>i} s[j])).
template <class Scalar>
Vector<Scalar> read_weights_from_top(const Vector<Scalar>& s) {
  const Index n = s.size();
  Vector<Scalar> w(n);
  Scalar above = 0;
  for (Index i = n - 1; i >= 0; --i) {
    w[i] = std::min(s[i], std::max(Scalar(0), Scalar(1) - above));
    above += s[i];
  }
  return w;
}

template <class Scalar>
Vector<Scalar> read_weights_from_bottom(const Vector<Scalar>& s) {
  const Index n = s.size();
  Vector<Scalar> w(n);
  Scalar below = 0;
  for (Index i = 0; i < n; ++i) {
    w[i] = std::min(s[i], std::max(Scalar(0), Scalar(1) - below));
    below += s[i];
  }
  return w;
}

/// Adjoint of pop_from_top. `popped` must be the forward output for (s, pop).
/// Accumulates into d_s and d_pop. Rows zeroed by the pop (popped[i] == 0)
/// carry no gradient; where the pop bites row i (u exceeds the mass above it),
/// every surviving row additionally passes gradient to all rows above.
template <class Scalar>
void pop_from_top_backward(const Vector<Scalar>& s, Scalar pop, const Vector<Scalar>& popped,
                           const Vector<Scalar>& d_popped, Vector<Scalar>& d_s, Scalar& d_pop) {
  using detail::BackwardMutation;
  const Index n = s.size();
  Vector<Scalar> above(n);
  Scalar acc = 0;
  for (Index i = n - 1; i >= 0; --i) {
    above[i] = acc;
    acc += s[i];
  }
  const BackwardMutation mut = detail::backward_mutation;
  Scalar carried = 0;  // sum over lower rows i of d_popped[i] where the pop bit row i
  for (Index i = 0; i < n; ++i) {
    const bool active = popped[i] > Scalar(0);
    const bool bites = pop - above[i] > Scalar(0);
    Scalar diag = active ? d_popped[i] : Scalar(0);
    if (mut == BackwardMutation::PopDiagonalDropped) diag = 0;
    d_s[i] += diag + carried;
    if (active && bites) {
      if (mut != BackwardMutation::PopCarryDropped) carried += d_popped[i];
      d_pop += (mut == BackwardMutation::PopSignFlipped) ? d_popped[i] : -d_popped[i];
    }
  }
}

template <class Scalar>
void pop_from_bottom_backward(const Vector<Scalar>& s, Scalar pop, const Vector<Scalar>& popped,
                              const Vector<Scalar>& d_popped, Vector<Scalar>& d_s, Scalar& d_pop) {
  const Index n = s.size();
  Vector<Scalar> below(n);
  Scalar acc = 0;
  for (Index i = 0; i < n; ++i) {
    below[i] = acc;
    acc += s[i];
  }
  Scalar carried = 0;
  for (Index i = n - 1; i >= 0; --i) {
    const bool active = popped[i] > Scalar(0);
    const bool bites = pop - below[i] > Scalar(0);
    d_s[i] += (active ? d_popped[i] : Scalar(0)) + carried;
    if (active && bites) {
      carried += d_popped[i];
      d_pop -= d_popped[i];
    }
  }
}

/// Adjoint of (w = read_weights_from_top(s), r = V^T w) given d_r.
/// Accumulates into d_s and d_V; `w` must be the forward weights.
template <class Scalar>
void read_from_top_backward(const Vector<Scalar>& s, const Matrix<Scalar>& V,
                            const Vector<Scalar>& w, const Vector<Scalar>& d_r,
                            Vector<Scalar>& d_s, Matrix<Scalar>& d_V) {
  using detail::BackwardMutation;
  const Index n = s.size();
  Vector<Scalar> above(n);
  Scalar acc = 0;
  for (Index i = n - 1; i >= 0; --i) {
    above[i] = acc;
    acc += s[i];
  }
  const BackwardMutation mut = detail::backward_mutation;
  const Scalar carry_sign = (mut == BackwardMutation::ReadCarrySignFlipped) ? 1 : -1;
  Scalar carried = 0;  // sum of V.row(i) . d_r over lower rows whose weight was capped
  for (Index i = 0; i < n; ++i) {
    const Scalar c = V.row(i).dot(d_r);
    d_V.row(i) += w[i] * d_r.transpose();
    const Scalar cap = std::max(Scalar(0), Scalar(1) - above[i]);
    if (s[i] <= cap) {
      if (mut != BackwardMutation::ReadDiagonalDropped) d_s[i] += c;
      d_s[i] += carry_sign * carried;
    } else {
      d_s[i] += carry_sign * carried;
      if (above[i] < Scalar(1)) carried += c;
    }
  }
}

template <class Scalar>
void read_from_bottom_backward(const Vector<Scalar>& s, const Matrix<Scalar>& V,
                               const Vector<Scalar>& w, const Vector<Scalar>& d_r,
                               Vector<Scalar>& d_s, Matrix<Scalar>& d_V) {
  const Index n = s.size();
  Vector<Scalar> below(n);
  Scalar acc = 0;
  for (Index i = 0; i < n; ++i) {
    below[i] = acc;
    acc += s[i];
  }
  Scalar carried = 0;
  for (Index i = n - 1; i >= 0; --i) {
    const Scalar c = V.row(i).dot(d_r);
    d_V.row(i) += w[i] * d_r.transpose();
    const Scalar cap = std::max(Scalar(0), Scalar(1) - below[i]);
    if (s[i] <= cap) {
      d_s[i] += c - carried;
    } else {
      d_s[i] -= carried;
      if (below[i] < Scalar(1)) carried += c;
    }
  }
}

// ---------------------------------------------------------------------------
// Step functions
// ---------------------------------------------------------------------------

namespace detail {

template <class Scalar>
void check_signal(const MemoryState<Scalar>& state, const Vector<Scalar>& value, Scalar push,
                  Scalar pop, const char* end) {
  if (value.size() != state.width)
    throw DimensionError(std::string("memory value width ") + std::to_string(value.size()) +
                         " does not match state width " + std::to_string(state.width) + " (" +
                         end + ")");
  if (!value.allFinite() || !std::isfinite(static_cast<double>(push)) ||
      !std::isfinite(static_cast<double>(pop)))
    throw NumericError(std::string("non-finite memory signal (") + end + ")");
}

template <class Scalar>
void require_kind(const MemoryState<Scalar>& state, MemoryKind kind) {
  if (state.kind != kind)
    throw DimensionError(std::string("expected a ") + to_string(kind) + " state, got " +
                         to_string(state.kind));
}

}  // namespace detail

template <class Scalar>
std::pair<MemoryState<Scalar>, ReadResult<Scalar>> stack_step(const MemoryState<Scalar>& state,
                                                              const MemorySignals<Scalar>& sig) {
  detail::require_kind(state, MemoryKind::Stack);
  detail::check_signal(state, sig.value, sig.push, sig.pop, "top");
  const Index t = state.rows() + 1;
  MemoryState<Scalar> next = MemoryState<Scalar>::empty(state.kind, state.width);
  next.values.resize(t, state.width);
  next.values.topRows(t - 1) = state.values;
  next.values.row(t - 1) = sig.value.transpose();
  next.strengths.resize(t);
  next.strengths.head(t - 1) = pop_from_top(state.strengths, sig.pop);
  next.strengths[t - 1] = sig.push;
  ReadResult<Scalar> read;
  read.weights = read_weights_from_top(next.strengths);
  read.read = weighted_row_sum(next.values, read.weights);
  return {std::move(next), std::move(read)};
}

template <class Scalar>
std::pair<MemoryState<Scalar>, ReadResult<Scalar>> queue_step(const MemoryState<Scalar>& state,
                                                              const MemorySignals<Scalar>& sig) {
  detail::require_kind(state, MemoryKind::Queue);
  detail::check_signal(state, sig.value, sig.push, sig.pop, "front");
  const Index t = state.rows() + 1;
  MemoryState<Scalar> next = MemoryState<Scalar>::empty(state.kind, state.width);
  next.values.resize(t, state.width);
  next.values.topRows(t - 1) = state.values;
  next.values.row(t - 1) = sig.value.transpose();
  next.strengths.resize(t);
  // Pop and read run from the lowest index (the front); push still appends.
  next.strengths.head(t - 1) = pop_from_bottom(state.strengths, sig.pop);
  next.strengths[t - 1] = sig.push;
  ReadResult<Scalar> read;
  read.weights = read_weights_from_bottom(next.strengths);
  read.read = weighted_row_sum(next.values, read.weights);
  return {std::move(next), std::move(read)};
}

template <class Scalar>
std::pair<MemoryState<Scalar>, ReadResult<Scalar>> deque_step(const MemoryState<Scalar>& state,
                                                              const MemorySignals<Scalar>& sig) {
  detail::require_kind(state, MemoryKind::Deque);
  detail::check_signal(state, sig.value, sig.push, sig.pop, "top");
  detail::check_signal(state, sig.value_bot, sig.push_bot, sig.pop_bot, "bot");
  const Index n_old = state.rows();
  const Index n_new = n_old + 2;
  MemoryState<Scalar> next = MemoryState<Scalar>::empty(state.kind, state.width);
  next.values.resize(n_new, state.width);
  next.values.row(0) = sig.value_bot.transpose();
  next.values.middleRows(1, n_old) = state.values;
  next.values.row(n_new - 1) = sig.value.transpose();
  // Top pop first, then bottom pop, then both pushes.
  Vector<Scalar> after_top = pop_from_top(state.strengths, sig.pop);
  next.strengths.resize(n_new);
  next.strengths[0] = sig.push_bot;
  next.strengths.segment(1, n_old) = pop_from_bottom(after_top, sig.pop_bot);
  next.strengths[n_new - 1] = sig.push;
  ReadResult<Scalar> read;
  read.weights = read_weights_from_top(next.strengths);
  read.read = weighted_row_sum(next.values, read.weights);
  read.weights_bot = read_weights_from_bottom(next.strengths);
  read.read_bot = weighted_row_sum(next.values, read.weights_bot);
  return {std::move(next), std::move(read)};
}

template <class Scalar>
std::pair<MemoryState<Scalar>, ReadResult<Scalar>> memory_step(const MemoryState<Scalar>& state,
                                                               const MemorySignals<Scalar>& sig) {
  switch (state.kind) {
    case MemoryKind::Stack: return stack_step(state, sig);
    case MemoryKind::Queue: return queue_step(state, sig);
    case MemoryKind::Deque: return deque_step(state, sig);
  }
  throw DimensionError("unknown memory kind");
}

// ---------------------------------------------------------------------------
// Backward steps. `prev`/`sig`/`next`/`read` must be the exact forward
// quantities; `up` carries the loss adjoints of (next, read).
// ---------------------------------------------------------------------------

namespace detail {

template <class Scalar>
void init_upstream(const MemoryUpstream<Scalar>& up, Index rows, Index width,
                   Matrix<Scalar>& d_values, Vector<Scalar>& d_strengths) {
  if (up.d_values.size() != 0) {
    if (up.d_values.rows() != rows || up.d_values.cols() != width)
      throw DimensionError("upstream value adjoint shape mismatch");
    d_values = up.d_values;
  } else {
    d_values = Matrix<Scalar>::Zero(rows, width);
  }
  if (up.d_strengths.size() != 0) {
    if (up.d_strengths.size() != rows) throw DimensionError("upstream strength adjoint size mismatch");
    d_strengths = up.d_strengths;
  } else {
    d_strengths = Vector<Scalar>::Zero(rows);
  }
}

template <class Scalar>
const Vector<Scalar>* optional_read_adjoint(const Vector<Scalar>& d_read, Index width,
                                            const char* what) {
  if (d_read.size() == 0) return nullptr;
  if (d_read.size() != width) throw DimensionError(std::string(what) + " adjoint width mismatch");
  return &d_read;
}

}  // namespace detail

template <class Scalar>
MemoryAdjoints<Scalar> stack_step_backward(const MemoryState<Scalar>& prev,
                                           const MemorySignals<Scalar>& sig,
                                           const MemoryState<Scalar>& next,
                                           const ReadResult<Scalar>& read,
                                           const MemoryUpstream<Scalar>& up) {
  detail::require_kind(prev, MemoryKind::Stack);
  const Index t = next.rows();
  const Index m = next.width;
  if (prev.rows() + 1 != t) throw DimensionError("stack backward: state rows do not chain");
  Matrix<Scalar> d_values_new;
  Vector<Scalar> d_strengths_new;
  detail::init_upstream(up, t, m, d_values_new, d_strengths_new);
  if (const auto* d_read = detail::optional_read_adjoint(up.d_read, m, "read"))
    read_from_top_backward(next.strengths, next.values, read.weights, *d_read, d_strengths_new,
                           d_values_new);

  MemoryAdjoints<Scalar> adj;
  adj.d_push = d_strengths_new[t - 1];
  adj.d_value = d_values_new.row(t - 1).transpose();
  adj.d_values = d_values_new.topRows(t - 1);
  adj.d_strengths = Vector<Scalar>::Zero(t - 1);
  adj.d_pop = 0;
  const Vector<Scalar> popped = next.strengths.head(t - 1);
  const Vector<Scalar> d_popped = d_strengths_new.head(t - 1);
  pop_from_top_backward(prev.strengths, sig.pop, popped, d_popped, adj.d_strengths, adj.d_pop);
  return adj;
}

template <class Scalar>
MemoryAdjoints<Scalar> queue_step_backward(const MemoryState<Scalar>& prev,
                                           const MemorySignals<Scalar>& sig,
                                           const MemoryState<Scalar>& next,
                                           const ReadResult<Scalar>& read,
                                           const MemoryUpstream<Scalar>& up) {
  detail::require_kind(prev, MemoryKind::Queue);
  const Index t = next.rows();
  const Index m = next.width;
  if (prev.rows() + 1 != t) throw DimensionError("queue backward: state rows do not chain");
  Matrix<Scalar> d_values_new;
  Vector<Scalar> d_strengths_new;
  detail::init_upstream(up, t, m, d_values_new, d_strengths_new);
  if (const auto* d_read = detail::optional_read_adjoint(up.d_read, m, "read"))
    read_from_bottom_backward(next.strengths, next.values, read.weights, *d_read, d_strengths_new,
                              d_values_new);

  MemoryAdjoints<Scalar> adj;
  adj.d_push = d_strengths_new[t - 1];
  adj.d_value = d_values_new.row(t - 1).transpose();
  adj.d_values = d_values_new.topRows(t - 1);
  adj.d_strengths = Vector<Scalar>::Zero(t - 1);
  adj.d_pop = 0;
  const Vector<Scalar> popped = next.strengths.head(t - 1);
  const Vector<Scalar> d_popped = d_strengths_new.head(t - 1);
  pop_from_bottom_backward(prev.strengths, sig.pop, popped, d_popped, adj.d_strengths, adj.d_pop);
  return adj;
}

template <class Scalar>
MemoryAdjoints<Scalar> deque_step_backward(const MemoryState<Scalar>& prev,
                                           const MemorySignals<Scalar>& sig,
                                           const MemoryState<Scalar>& next,
                                           const ReadResult<Scalar>& read,
                                           const MemoryUpstream<Scalar>& up) {
  detail::require_kind(prev, MemoryKind::Deque);
  const Index n_new = next.rows();
  const Index n_old = n_new - 2;
  const Index m = next.width;
  if (prev.rows() != n_old) throw DimensionError("deque backward: state rows do not chain");
  Matrix<Scalar> d_values_new;
  Vector<Scalar> d_strengths_new;
  detail::init_upstream(up, n_new, m, d_values_new, d_strengths_new);
  if (const auto* d_read = detail::optional_read_adjoint(up.d_read, m, "read_top"))
    read_from_top_backward(next.strengths, next.values, read.weights, *d_read, d_strengths_new,
                           d_values_new);
  if (const auto* d_read = detail::optional_read_adjoint(up.d_read_bot, m, "read_bot"))
    read_from_bottom_backward(next.strengths, next.values, read.weights_bot, *d_read,
                              d_strengths_new, d_values_new);

  MemoryAdjoints<Scalar> adj;
  adj.d_push_bot = d_strengths_new[0];
  adj.d_push = d_strengths_new[n_new - 1];
  adj.d_value_bot = d_values_new.row(0).transpose();
  adj.d_value = d_values_new.row(n_new - 1).transpose();
  adj.d_values = d_values_new.middleRows(1, n_old);

  // Chain back through the two pop stages; the intermediate stage output is
  // recomputed with the same accumulation order as the forward pass.
  const Vector<Scalar> after_top = pop_from_top(prev.strengths, sig.pop);
  const Vector<Scalar> after_both = next.strengths.segment(1, n_old);
  const Vector<Scalar> d_after_both = d_strengths_new.segment(1, n_old);
  Vector<Scalar> d_after_top = Vector<Scalar>::Zero(n_old);
  adj.d_pop_bot = 0;
  pop_from_bottom_backward(after_top, sig.pop_bot, after_both, d_after_both, d_after_top,
                           adj.d_pop_bot);
  adj.d_strengths = Vector<Scalar>::Zero(n_old);
  adj.d_pop = 0;
  pop_from_top_backward(prev.strengths, sig.pop, after_top, d_after_top, adj.d_strengths,
                        adj.d_pop);
  return adj;
}

template <class Scalar>
MemoryAdjoints<Scalar> memory_step_backward(const MemoryState<Scalar>& prev,
                                            const MemorySignals<Scalar>& sig,
                                            const MemoryState<Scalar>& next,
                                            const ReadResult<Scalar>& read,
                                            const MemoryUpstream<Scalar>& up) {
  switch (prev.kind) {
    case MemoryKind::Stack: return stack_step_backward(prev, sig, next, read, up);
    case MemoryKind::Queue: return queue_step_backward(prev, sig, next, read, up);
    case MemoryKind::Deque: return deque_step_backward(prev, sig, next, read, up);
  }
  throw DimensionError("unknown memory kind");
}

// ---------------------------------------------------------------------------
// Tie margins. Gradient tests keep finite-difference probes away from
// subgradient kinks; this reports the smallest |left - right| gap over every
// min/max comparison one step makes.
// ---------------------------------------------------------------------------

namespace detail {

template <class Scalar>
void pop_margin(const Vector<Scalar>& s, Scalar pop, bool from_top, Scalar& margin) {
  const Index n = s.size();
  auto visit = [&](Index i, Scalar outside) {
    margin = std::min(margin, std::abs(pop - outside));
    const Scalar inner = std::max(Scalar(0), pop - outside);
    // s[i] == inner == 0 is a doubly-clamped point, not a kink: both sides are
    // saturated maxes whose own slack is probed separately.
    if (s[i] != Scalar(0) || inner != Scalar(0))
      margin = std::min(margin, std::abs(s[i] - inner));
  };
  Scalar acc = 0;
  if (from_top) {
    for (Index i = n - 1; i >= 0; --i) {
      visit(i, acc);
      acc += s[i];
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      visit(i, acc);
      acc += s[i];
    }
  }
}

template <class Scalar>
void read_margin(const Vector<Scalar>& s, bool from_top, Scalar& margin) {
  const Index n = s.size();
  auto visit = [&](Index i, Scalar outside) {
    margin = std::min(margin, std::abs(Scalar(1) - outside));
    const Scalar cap = std::max(Scalar(0), Scalar(1) - outside);
    if (s[i] != Scalar(0) || cap != Scalar(0))
      margin = std::min(margin, std::abs(s[i] - cap));
  };
  Scalar acc = 0;
  if (from_top) {
    for (Index i = n - 1; i >= 0; --i) {
      visit(i, acc);
      acc += s[i];
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      visit(i, acc);
      acc += s[i];
    }
  }
}

}  // namespace detail

template <class Scalar>
Scalar step_tie_margin(const MemoryState<Scalar>& state, const MemorySignals<Scalar>& sig) {
  Scalar margin = std::numeric_limits<Scalar>::infinity();
  switch (state.kind) {
    case MemoryKind::Stack: {
      detail::pop_margin(state.strengths, sig.pop, true, margin);
      Vector<Scalar> s(state.rows() + 1);
      s.head(state.rows()) = pop_from_top(state.strengths, sig.pop);
      s[state.rows()] = sig.push;
      detail::read_margin(s, true, margin);
      break;
    }
    case MemoryKind::Queue: {
      detail::pop_margin(state.strengths, sig.pop, false, margin);
      Vector<Scalar> s(state.rows() + 1);
      s.head(state.rows()) = pop_from_bottom(state.strengths, sig.pop);
      s[state.rows()] = sig.push;
      detail::read_margin(s, false, margin);
      break;
    }
    case MemoryKind::Deque: {
      detail::pop_margin(state.strengths, sig.pop, true, margin);
      Vector<Scalar> after_top = pop_from_top(state.strengths, sig.pop);
      detail::pop_margin(after_top, sig.pop_bot, false, margin);
      Vector<Scalar> s(state.rows() + 2);
      s[0] = sig.push_bot;
      s.segment(1, state.rows()) = pop_from_bottom(after_top, sig.pop_bot);
      s[state.rows() + 1] = sig.push;
      detail::read_margin(s, true, margin);
      detail::read_margin(s, false, margin);
      break;
    }
  }
  return margin;
}

}  // namespace ndsq
