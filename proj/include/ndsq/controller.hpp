#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ndsq/common.hpp"
#include "ndsq/lstm.hpp"
#include "ndsq/memory.hpp"

// The memory-augmented recurrent layer and the Deep LSTM benchmarks. A
// controller step replicates the interface of a recurrent layer: it takes the
// previous recurrent state (controller state, previous read(s), memory state)
// and an input vector, concatenates the input with the previous read(s), runs
// the LSTM, projects its hidden state into push/pop/value signals for the
// memory and into the layer output, steps the memory, and repacks the state.

namespace ndsq {

enum class ModelKind {
  StackLstm,
  QueueLstm,
  DequeLstm,
  DeepLstm1,
  DeepLstm2,
  DeepLstm4,
  DeepLstm8,
};

inline bool is_memory_model(ModelKind kind) {
  return kind == ModelKind::StackLstm || kind == ModelKind::QueueLstm ||
         kind == ModelKind::DequeLstm;
}

inline MemoryKind memory_kind_of(ModelKind kind) {
  switch (kind) {
    case ModelKind::StackLstm: return MemoryKind::Stack;
    case ModelKind::QueueLstm: return MemoryKind::Queue;
    case ModelKind::DequeLstm: return MemoryKind::Deque;
    default: throw DimensionError("model has no memory structure");
  }
}

inline int layer_count(ModelKind kind) {
  switch (kind) {
    case ModelKind::DeepLstm1: return 1;
    case ModelKind::DeepLstm2: return 2;
    case ModelKind::DeepLstm4: return 4;
    case ModelKind::DeepLstm8: return 8;
    default: return 1;
  }
}

/// Number of read vectors carried in the recurrent state (0, 1, or 2).
inline int read_count(ModelKind kind) {
  if (kind == ModelKind::DequeLstm) return 2;
  return is_memory_model(kind) ? 1 : 0;
}

inline const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::StackLstm: return "stack-lstm";
    case ModelKind::QueueLstm: return "queue-lstm";
    case ModelKind::DequeLstm: return "deque-lstm";
    case ModelKind::DeepLstm1: return "deep-lstm-1";
    case ModelKind::DeepLstm2: return "deep-lstm-2";
    case ModelKind::DeepLstm4: return "deep-lstm-4";
    case ModelKind::DeepLstm8: return "deep-lstm-8";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& name) {
  for (ModelKind kind : {ModelKind::StackLstm, ModelKind::QueueLstm, ModelKind::DequeLstm,
                         ModelKind::DeepLstm1, ModelKind::DeepLstm2, ModelKind::DeepLstm4,
                         ModelKind::DeepLstm8})
    if (name == to_string(kind)) return kind;
  throw ConfigError("unknown model kind '" + name + "'");
}

struct ModelConfig {
  ModelKind kind = ModelKind::StackLstm;
  Index hidden = 256;
  Index mem_width = 256;     // memory embedding width m
  Index embed = 64;          // input embedding width; also the width of o_t
  Index input_symbols = 0;   // rows of the input embedding table
  Index output_classes = 0;  // target vocabulary plus EOS

  Index controller_input() const { return embed + read_count(kind) * mem_width; }

  void validate() const {
    if (hidden <= 0 || embed <= 0 || input_symbols <= 0 || output_classes <= 0)
      throw ConfigError("model widths must be positive");
    if (is_memory_model(kind) && mem_width <= 0)
      throw ConfigError("memory width must be positive");
  }
};

/// Projections from the controller output into one memory end's signals.
template <class Scalar>
struct ProjectionParams {
  Vector<Scalar> w_push;
  Scalar b_push = 0;
  Vector<Scalar> w_pop;
  Scalar b_pop = 0;
  Matrix<Scalar> w_value;  // mem_width x hidden
  Vector<Scalar> b_value;
};

template <class Scalar>
struct ModelParameters {
  ModelConfig config;
  Matrix<Scalar> input_embed;  // input_symbols x embed
  std::vector<LstmParams<Scalar>> layers;
  std::vector<Vector<Scalar>> h0, c0;  // trainable initial state per layer
  std::vector<ProjectionParams<Scalar>> proj;  // memory models: [top] or [top, bot]
  Matrix<Scalar> w_out;  // embed x hidden
  Vector<Scalar> b_out;
  Matrix<Scalar> out_embed;  // output_classes x embed
  Vector<Scalar> out_bias;
};

/// Visits every trainable tensor as (name, flat data, size), in a fixed order
/// shared by the optimizer, the gradient checker, and the checkpoint format.
template <class Params, class Fn>
void for_each_parameter(Params& params, Fn&& fn) {
  fn("input_embedding", params.input_embed.data(), params.input_embed.size());
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const std::string tag = "lstm" + std::to_string(k);
    fn(tag + ".weights", params.layers[k].weights.data(), params.layers[k].weights.size());
    fn(tag + ".bias", params.layers[k].bias.data(), params.layers[k].bias.size());
    fn(tag + ".h0", params.h0[k].data(), params.h0[k].size());
    fn(tag + ".c0", params.c0[k].data(), params.c0[k].size());
  }
  for (std::size_t e = 0; e < params.proj.size(); ++e) {
    const std::string tag = params.proj.size() == 2 ? (e == 0 ? "proj.top" : "proj.bot") : "proj";
    auto& pr = params.proj[e];
    fn(tag + ".push_w", pr.w_push.data(), pr.w_push.size());
    fn(tag + ".push_b", &pr.b_push, Index(1));
    fn(tag + ".pop_w", pr.w_pop.data(), pr.w_pop.size());
    fn(tag + ".pop_b", &pr.b_pop, Index(1));
    fn(tag + ".value_w", pr.w_value.data(), pr.w_value.size());
    fn(tag + ".value_b", pr.b_value.data(), pr.b_value.size());
  }
  fn("output.proj_w", params.w_out.data(), params.w_out.size());
  fn("output.proj_b", params.b_out.data(), params.b_out.size());
  fn("output.embedding", params.out_embed.data(), params.out_embed.size());
  fn("output.bias", params.out_bias.data(), params.out_bias.size());
}

template <class Scalar>
ModelParameters<Scalar> zeros_like(const ModelParameters<Scalar>& params) {
  ModelParameters<Scalar> out = params;
  for_each_parameter(out, [](const std::string&, Scalar* data, Index n) {
    std::fill_n(data, n, Scalar(0));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Initialization and counting
// ---------------------------------------------------------------------------

/// Deterministic in (config, seed). Weights, embeddings and initial states are
/// uniform in [-0.08, 0.08]; biases are zero except the forget-gate block (+1)
/// and the pop bias (-1, both ends for the deque).
template <class Scalar>
ModelParameters<Scalar> init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParameters<Scalar> p;
  p.config = config;
  const Index H = config.hidden;
  const int layers = layer_count(config.kind);
  p.input_embed.resize(config.input_symbols, config.embed);
  for (int k = 0; k < layers; ++k) {
    const Index in_k = (k == 0) ? config.controller_input() : H;
    p.layers.push_back(LstmParams<Scalar>::zero(in_k, H));
    p.h0.push_back(Vector<Scalar>::Zero(H));
    p.c0.push_back(Vector<Scalar>::Zero(H));
  }
  const int ends = (config.kind == ModelKind::DequeLstm) ? 2 : is_memory_model(config.kind) ? 1 : 0;
  for (int e = 0; e < ends; ++e) {
    ProjectionParams<Scalar> pr;
    pr.w_push = Vector<Scalar>::Zero(H);
    pr.w_pop = Vector<Scalar>::Zero(H);
    pr.w_value = Matrix<Scalar>::Zero(config.mem_width, H);
    pr.b_value = Vector<Scalar>::Zero(config.mem_width);
    p.proj.push_back(std::move(pr));
  }
  p.w_out = Matrix<Scalar>::Zero(config.embed, H);
  p.b_out = Vector<Scalar>::Zero(config.embed);
  p.out_embed = Matrix<Scalar>::Zero(config.output_classes, config.embed);
  p.out_bias = Vector<Scalar>::Zero(config.output_classes);

  Rng rng(seed, kStreamInit);
  for_each_parameter(p, [&rng](const std::string&, Scalar* data, Index n) {
    for (Index i = 0; i < n; ++i) data[i] = static_cast<Scalar>(rng.uniform(-0.08, 0.08));
  });
  for (int k = 0; k < layers; ++k) {
    p.layers[k].bias.setZero();
    p.layers[k].bias.segment(H, H).setOnes();  // forget gate
  }
  for (auto& pr : p.proj) {
    pr.b_push = 0;
    pr.b_pop = -1;
    pr.b_value.setZero();
  }
  p.b_out.setZero();
  p.out_bias.setZero();
  return p;
}

struct ParameterCount {
  std::int64_t embeddings = 0;      // input table + output table + class bias
  std::int64_t recurrent_core = 0;  // gate weights/biases + trainable h0/c0
  std::int64_t projections = 0;     // push/pop/value sets
  std::int64_t output_layer = 0;    // o_t projection

  std::int64_t total() const { return embeddings + recurrent_core + projections + output_layer; }
};

inline ParameterCount count_parameters(const ModelConfig& config) {
  config.validate();
  ParameterCount count;
  const std::int64_t H = config.hidden;
  count.embeddings = config.input_symbols * config.embed +
                     config.output_classes * config.embed + config.output_classes;
  const int layers = layer_count(config.kind);
  for (int k = 0; k < layers; ++k) {
    const std::int64_t in_k = (k == 0) ? config.controller_input() : H;
    count.recurrent_core += 4 * H * (in_k + H) + 4 * H + 2 * H;
  }
  const int ends = (config.kind == ModelKind::DequeLstm) ? 2 : is_memory_model(config.kind) ? 1 : 0;
  count.projections = ends * (2 * (H + 1) + config.mem_width * H + config.mem_width);
  count.output_layer = config.embed * H + config.embed;
  return count;
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

template <class Scalar>
struct RecurrentState {
  std::vector<LstmState<Scalar>> layers;
  Vector<Scalar> read, read_bot;  // previous read(s); memory models only
  MemoryState<Scalar> memory;
};

/// h0/c0 from the parameters; reads and the memory state start at zero and are
/// not trainable.
template <class Scalar>
RecurrentState<Scalar> initial_state(const ModelParameters<Scalar>& params) {
  RecurrentState<Scalar> state;
  for (std::size_t k = 0; k < params.layers.size(); ++k)
    state.layers.push_back({params.h0[k], params.c0[k]});
  const ModelConfig& config = params.config;
  if (is_memory_model(config.kind)) {
    state.read = Vector<Scalar>::Zero(config.mem_width);
    if (config.kind == ModelKind::DequeLstm)
      state.read_bot = Vector<Scalar>::Zero(config.mem_width);
    state.memory = MemoryState<Scalar>::empty(memory_kind_of(config.kind), config.mem_width);
  }
  return state;
}

template <class Scalar>
struct StepCache {
  std::vector<LstmCache<Scalar>> lstm;
  MemorySignals<Scalar> signals;
  ReadResult<Scalar> read;
  Vector<Scalar> out;  // o_t
};

namespace detail {

template <class Scalar>
Scalar scalar_sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace detail

/// One step of the recurrent layer. Returns the next state and writes the
/// layer output o_t. Pass a cache to enable the backward pass.
template <class Scalar>
RecurrentState<Scalar> controller_step(const ModelParameters<Scalar>& params,
                                       const RecurrentState<Scalar>& prev,
                                       const Vector<Scalar>& input, Vector<Scalar>& output,
                                       StepCache<Scalar>* cache = nullptr) {
  const ModelConfig& config = params.config;
  if (input.size() != config.embed) throw DimensionError("controller input width mismatch");
  if (prev.layers.size() != params.layers.size())
    throw DimensionError("controller state layer count mismatch");

  RecurrentState<Scalar> next;
  next.layers.resize(prev.layers.size());
  if (cache) cache->lstm.resize(prev.layers.size());

  Vector<Scalar> x;
  if (is_memory_model(config.kind)) {
    if (prev.memory.kind != memory_kind_of(config.kind))
      throw DimensionError("memory kind mismatch between model and state");
    x.resize(config.controller_input());
    if (config.kind == ModelKind::DequeLstm)
      x << input, prev.read, prev.read_bot;
    else
      x << input, prev.read;
  } else {
    x = input;
  }

  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    next.layers[k] =
        lstm_cell(params.layers[k], prev.layers[k], x, cache ? &cache->lstm[k] : nullptr);
    x = next.layers[k].h;
  }
  const Vector<Scalar>& h = next.layers.back().h;

  if (is_memory_model(config.kind)) {
    MemorySignals<Scalar> sig;
    sig.push = detail::scalar_sigmoid(params.proj[0].w_push.dot(h) + params.proj[0].b_push);
    sig.pop = detail::scalar_sigmoid(params.proj[0].w_pop.dot(h) + params.proj[0].b_pop);
    sig.value = ((params.proj[0].w_value * h + params.proj[0].b_value).array().tanh()).matrix();
    if (config.kind == ModelKind::DequeLstm) {
      sig.push_bot = detail::scalar_sigmoid(params.proj[1].w_push.dot(h) + params.proj[1].b_push);
      sig.pop_bot = detail::scalar_sigmoid(params.proj[1].w_pop.dot(h) + params.proj[1].b_pop);
      sig.value_bot =
          ((params.proj[1].w_value * h + params.proj[1].b_value).array().tanh()).matrix();
    }
    auto [mem_next, read] = memory_step(prev.memory, sig);
    next.memory = std::move(mem_next);
    next.read = read.read;
    if (config.kind == ModelKind::DequeLstm) next.read_bot = read.read_bot;
    if (cache) {
      cache->signals = std::move(sig);
      cache->read = std::move(read);
    }
  }

  output = ((params.w_out * h + params.b_out).array().tanh()).matrix();
  if (cache) cache->out = output;
  return next;
}

/// Loss adjoints of one recurrent state (and, for memory models, of the
/// memory pair). Zero-sized members mean zero.
template <class Scalar>
struct StateAdjoint {
  std::vector<Vector<Scalar>> d_h, d_c;
  Vector<Scalar> d_read, d_read_bot;
  Matrix<Scalar> d_values;
  Vector<Scalar> d_strengths;

  static StateAdjoint zero(const ModelParameters<Scalar>& params) {
    StateAdjoint adj;
    const Index H = params.config.hidden;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
      adj.d_h.push_back(Vector<Scalar>::Zero(H));
      adj.d_c.push_back(Vector<Scalar>::Zero(H));
    }
    if (is_memory_model(params.config.kind)) {
      adj.d_read = Vector<Scalar>::Zero(params.config.mem_width);
      if (params.config.kind == ModelKind::DequeLstm)
        adj.d_read_bot = Vector<Scalar>::Zero(params.config.mem_width);
    }
    return adj;
  }
};

/// Exact adjoint of controller_step. Consumes the adjoints of (next state,
/// output), accumulates parameter gradients, and produces the adjoints of
/// (previous state, input).
template <class Scalar>
void controller_step_backward(const ModelParameters<Scalar>& params,
                              const RecurrentState<Scalar>& prev,
                              const RecurrentState<Scalar>& next, const StepCache<Scalar>& cache,
                              const Vector<Scalar>& d_output, StateAdjoint<Scalar>& d_next,
                              ModelParameters<Scalar>& grads, StateAdjoint<Scalar>& d_prev,
                              Vector<Scalar>& d_input) {
  const ModelConfig& config = params.config;
  const std::size_t layers = params.layers.size();
  const Vector<Scalar>& h = next.layers.back().h;

  Vector<Scalar> d_h_top = d_next.d_h.back();
  if (d_output.size() != 0) {
    Vector<Scalar> pre = (d_output.array() * (1 - cache.out.array().square())).matrix();
    grads.w_out.noalias() += pre * h.transpose();
    grads.b_out += pre;
    d_h_top.noalias() += params.w_out.transpose() * pre;
  }

  d_prev = StateAdjoint<Scalar>::zero(params);

  if (is_memory_model(config.kind)) {
    MemoryUpstream<Scalar> up;
    up.d_values = std::move(d_next.d_values);
    up.d_strengths = std::move(d_next.d_strengths);
    up.d_read = d_next.d_read;
    up.d_read_bot = d_next.d_read_bot;
    MemoryAdjoints<Scalar> adj =
        memory_step_backward(prev.memory, cache.signals, next.memory, cache.read, up);
    d_prev.d_values = std::move(adj.d_values);
    d_prev.d_strengths = std::move(adj.d_strengths);

    const int ends = (config.kind == ModelKind::DequeLstm) ? 2 : 1;
    for (int e = 0; e < ends; ++e) {
      const Scalar push = (e == 0) ? cache.signals.push : cache.signals.push_bot;
      const Scalar pop = (e == 0) ? cache.signals.pop : cache.signals.pop_bot;
      const Vector<Scalar>& value = (e == 0) ? cache.signals.value : cache.signals.value_bot;
      const Scalar d_push = (e == 0) ? adj.d_push : adj.d_push_bot;
      const Scalar d_pop = (e == 0) ? adj.d_pop : adj.d_pop_bot;
      const Vector<Scalar>& d_value = (e == 0) ? adj.d_value : adj.d_value_bot;
      auto& pr = params.proj[e];
      auto& gr = grads.proj[e];

      const Scalar pre_push = d_push * push * (1 - push);
      const Scalar pre_pop = d_pop * pop * (1 - pop);
      gr.w_push += pre_push * h;
      gr.b_push += pre_push;
      gr.w_pop += pre_pop * h;
      gr.b_pop += pre_pop;
      d_h_top += pre_push * pr.w_push + pre_pop * pr.w_pop;

      Vector<Scalar> pre_value = (d_value.array() * (1 - value.array().square())).matrix();
      gr.w_value.noalias() += pre_value * h.transpose();
      gr.b_value += pre_value;
      d_h_top.noalias() += pr.w_value.transpose() * pre_value;
    }
  }

  // LSTM stack, top layer first.
  Vector<Scalar> d_x;
  for (std::size_t k = layers; k-- > 0;) {
    const Vector<Scalar>& d_h_k = (k == layers - 1) ? d_h_top : d_next.d_h[k];
    lstm_cell_backward(params.layers[k], cache.lstm[k], d_h_k, d_next.d_c[k], grads.layers[k],
                       d_x, d_prev.d_h[k], d_prev.d_c[k]);
    if (k > 0) d_next.d_h[k - 1] += d_x;  // layer input was the hidden state below
  }

  if (is_memory_model(config.kind)) {
    const Index m = config.mem_width;
    d_input = d_x.head(config.embed);
    d_prev.d_read = d_x.segment(config.embed, m);
    if (config.kind == ModelKind::DequeLstm) d_prev.d_read_bot = d_x.tail(m);
  } else {
    d_input = std::move(d_x);
  }
}

}  // namespace ndsq
