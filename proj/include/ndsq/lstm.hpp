#pragma once

#include <utility>

#include "ndsq/common.hpp"

namespace ndsq {

template <class Scalar>
Vector<Scalar> sigmoid(const Vector<Scalar>& x) {
  return ((-x.array()).exp() + Scalar(1)).inverse().matrix();
}

/// Single LSTM cell: input/forget/output gates and a tanh candidate over the
/// concatenation [x; h_prev], no peepholes. Gate blocks are stacked
/// [input; forget; cell; output] in one weight matrix for a single GEMV.
template <class Scalar>
struct LstmParams {
  Matrix<Scalar> weights;  // 4H x (I + H)
  Vector<Scalar> bias;     // 4H

  Index hidden_size() const { return weights.rows() / 4; }
  Index input_size() const { return weights.cols() - hidden_size(); }

  static LstmParams zero(Index input, Index hidden) {
    LstmParams p;
    p.weights = Matrix<Scalar>::Zero(4 * hidden, input + hidden);
    p.bias = Vector<Scalar>::Zero(4 * hidden);
    return p;
  }
};

template <class Scalar>
struct LstmState {
  Vector<Scalar> h, c;

  static LstmState zero(Index hidden) {
    return {Vector<Scalar>::Zero(hidden), Vector<Scalar>::Zero(hidden)};
  }
};

/// Forward activations needed by the backward pass.
template <class Scalar>
struct LstmCache {
  Vector<Scalar> z;  // [x; h_prev]
  Vector<Scalar> gate_in, gate_forget, gate_cell, gate_out;
  Vector<Scalar> c_prev, tanh_c;
};

template <class Scalar>
LstmState<Scalar> lstm_cell(const LstmParams<Scalar>& params, const LstmState<Scalar>& prev,
                            const Vector<Scalar>& x, LstmCache<Scalar>* cache = nullptr) {
  const Index hidden = params.hidden_size();
  if (x.size() != params.input_size() || prev.h.size() != hidden || prev.c.size() != hidden)
    throw DimensionError("lstm_cell: input/state width mismatch");
  Vector<Scalar> z(x.size() + hidden);
  z << x, prev.h;
  Vector<Scalar> pre = params.weights * z + params.bias;
  Vector<Scalar> gi = sigmoid<Scalar>(pre.segment(0, hidden));
  Vector<Scalar> gf = sigmoid<Scalar>(pre.segment(hidden, hidden));
  Vector<Scalar> gc = pre.segment(2 * hidden, hidden).array().tanh().matrix();
  Vector<Scalar> go = sigmoid<Scalar>(pre.segment(3 * hidden, hidden));

  LstmState<Scalar> next;
  next.c = gf.cwiseProduct(prev.c) + gi.cwiseProduct(gc);
  Vector<Scalar> tc = next.c.array().tanh().matrix();
  next.h = go.cwiseProduct(tc);
  if (cache) {
    cache->z = std::move(z);
    cache->gate_in = std::move(gi);
    cache->gate_forget = std::move(gf);
    cache->gate_cell = std::move(gc);
    cache->gate_out = std::move(go);
    cache->c_prev = prev.c;
    cache->tanh_c = std::move(tc);
  }
  return next;
}

/// Accumulates parameter gradients into `grad` and writes the adjoints of the
/// cell inputs. d_h / d_c are the loss adjoints of (h_t, c_t).
template <class Scalar>
void lstm_cell_backward(const LstmParams<Scalar>& params, const LstmCache<Scalar>& cache,
                        const Vector<Scalar>& d_h, const Vector<Scalar>& d_c_in,
                        LstmParams<Scalar>& grad, Vector<Scalar>& d_x, Vector<Scalar>& d_h_prev,
                        Vector<Scalar>& d_c_prev) {
  const Index hidden = params.hidden_size();
  const Index input = params.input_size();
  const auto& gi = cache.gate_in;
  const auto& gf = cache.gate_forget;
  const auto& gc = cache.gate_cell;
  const auto& go = cache.gate_out;
  const auto& tc = cache.tanh_c;

  Vector<Scalar> d_c =
      d_c_in + (d_h.array() * go.array() * (1 - tc.array().square())).matrix();
  Vector<Scalar> pre_grad(4 * hidden);
  // sigma' = g(1-g), tanh' = 1 - g^2
  pre_grad.segment(0, hidden) =
      (d_c.array() * gc.array() * gi.array() * (1 - gi.array())).matrix();
  pre_grad.segment(hidden, hidden) =
      (d_c.array() * cache.c_prev.array() * gf.array() * (1 - gf.array())).matrix();
  pre_grad.segment(2 * hidden, hidden) =
      (d_c.array() * gi.array() * (1 - gc.array().square())).matrix();
  pre_grad.segment(3 * hidden, hidden) =
      (d_h.array() * tc.array() * go.array() * (1 - go.array())).matrix();

  grad.weights.noalias() += pre_grad * cache.z.transpose();
  grad.bias += pre_grad;
  Vector<Scalar> d_z = params.weights.transpose() * pre_grad;
  d_x = d_z.head(input);
  d_h_prev = d_z.tail(hidden);
  d_c_prev = d_c.cwiseProduct(gf);
}

}  // namespace ndsq
