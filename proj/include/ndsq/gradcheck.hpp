#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ndsq/common.hpp"
#include "ndsq/memory.hpp"
#include "ndsq/seqmodel.hpp"

// Finite-difference verification of the analytic backward passes. The numeric
// side only ever evaluates forward functions, so it is independent of the
// adjoint code it checks. All checks run in double precision.

namespace ndsq {

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;

  double max_rel_error() const {
    double worst = 0;
    for (const auto& g : groups) worst = std::max(worst, g.max_rel_error);
    return worst;
  }
  bool passes(double tolerance) const { return max_rel_error() < tolerance; }
};

/// |a - b| relative to the larger magnitude, floored so that finite-difference
/// noise on near-zero gradients does not register as error.
inline double rel_error(double a, double b, double floor = 1e-2) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ---------------------------------------------------------------------------
// Memory-only check: a T-step trace from the empty structure, with a scalar
// loss probing every read and the final state. Inputs are the per-step
// signals; the analytic adjoints come from chaining *_step_backward, the
// numeric ones from central differences of the forward loss.
// ---------------------------------------------------------------------------

struct MemoryFdProblem {
  MemoryKind kind = MemoryKind::Stack;
  Index width = 1;
  std::vector<MemorySignals<double>> signals;
  std::vector<Vector<double>> read_probes;      // one per step; empty => unprobed
  std::vector<Vector<double>> read_bot_probes;  // deque only
  Matrix<double> final_value_probe;             // empty => unprobed
  Vector<double> final_strength_probe;
};

namespace detail {

inline double memory_fd_loss(const MemoryFdProblem& prob) {
  MemoryState<double> state = MemoryState<double>::empty(prob.kind, prob.width);
  double loss = 0;
  for (std::size_t t = 0; t < prob.signals.size(); ++t) {
    auto [next, read] = memory_step(state, prob.signals[t]);
    if (prob.read_probes[t].size() != 0) loss += prob.read_probes[t].dot(read.read);
    if (prob.kind == MemoryKind::Deque && prob.read_bot_probes[t].size() != 0)
      loss += prob.read_bot_probes[t].dot(read.read_bot);
    state = std::move(next);
  }
  if (prob.final_value_probe.size() != 0)
    loss += (prob.final_value_probe.array() * state.values.array()).sum();
  if (prob.final_strength_probe.size() != 0)
    loss += prob.final_strength_probe.dot(state.strengths);
  return loss;
}

/// Smallest tie margin over all steps of the trace.
inline double memory_trace_margin(const MemoryFdProblem& prob) {
  MemoryState<double> state = MemoryState<double>::empty(prob.kind, prob.width);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& sig : prob.signals) {
    margin = std::min(margin, step_tie_margin(state, sig));
    state = memory_step(state, sig).first;
  }
  return margin;
}

/// Adjoints of every signal scalar, in the flat order used by the FD sweep:
/// per step [value..., pop, push] then for the deque [value_bot..., pop_bot,
/// push_bot].
inline std::vector<double> memory_analytic_adjoints(const MemoryFdProblem& prob) {
  const std::size_t steps = prob.signals.size();
  std::vector<MemoryState<double>> states;
  std::vector<ReadResult<double>> reads;
  states.reserve(steps + 1);
  states.push_back(MemoryState<double>::empty(prob.kind, prob.width));
  for (std::size_t t = 0; t < steps; ++t) {
    auto [next, read] = memory_step(states.back(), prob.signals[t]);
    states.push_back(std::move(next));
    reads.push_back(std::move(read));
  }

  Matrix<double> carry_values = prob.final_value_probe;
  Vector<double> carry_strengths = prob.final_strength_probe;
  std::vector<double> flat;
  std::vector<std::vector<double>> per_step(steps);
  for (std::size_t t = steps; t-- > 0;) {
    MemoryUpstream<double> up;
    up.d_values = carry_values;
    up.d_strengths = carry_strengths;
    up.d_read = prob.read_probes[t];
    if (prob.kind == MemoryKind::Deque) up.d_read_bot = prob.read_bot_probes[t];
    MemoryAdjoints<double> adj =
        memory_step_backward(states[t], prob.signals[t], states[t + 1], reads[t], up);
    std::vector<double>& row = per_step[t];
    for (Index k = 0; k < adj.d_value.size(); ++k) row.push_back(adj.d_value[k]);
    row.push_back(adj.d_pop);
    row.push_back(adj.d_push);
    if (prob.kind == MemoryKind::Deque) {
      for (Index k = 0; k < adj.d_value_bot.size(); ++k) row.push_back(adj.d_value_bot[k]);
      row.push_back(adj.d_pop_bot);
      row.push_back(adj.d_push_bot);
    }
    carry_values = std::move(adj.d_values);
    carry_strengths = std::move(adj.d_strengths);
  }
  for (const auto& row : per_step) flat.insert(flat.end(), row.begin(), row.end());
  return flat;
}

template <class Mutator>
double memory_fd_derivative(MemoryFdProblem& prob, Mutator&& set, double x0, double h) {
  set(x0 + h);
  const double up = memory_fd_loss(prob);
  set(x0 - h);
  const double down = memory_fd_loss(prob);
  set(x0);
  return (up - down) / (2 * h);
}

inline double memory_compare(MemoryFdProblem& prob, double h, double floor) {
  const std::vector<double> analytic = memory_analytic_adjoints(prob);
  std::size_t idx = 0;
  double worst = 0;
  auto check = [&](double* slot) {
    const double fd =
        memory_fd_derivative(prob, [slot](double v) { *slot = v; }, *slot, h);
    worst = std::max(worst, rel_error(analytic[idx], fd, floor));
    ++idx;
  };
  for (auto& sig : prob.signals) {
    for (Index k = 0; k < sig.value.size(); ++k) check(&sig.value[k]);
    check(&sig.pop);
    check(&sig.push);
    if (prob.kind == MemoryKind::Deque) {
      for (Index k = 0; k < sig.value_bot.size(); ++k) check(&sig.value_bot[k]);
      check(&sig.pop_bot);
      check(&sig.push_bot);
    }
  }
  return worst;
}

inline MemoryFdProblem random_memory_problem(MemoryKind kind, Index width, int steps, Rng& rng,
                                             bool probe_final = true) {
  MemoryFdProblem prob;
  prob.kind = kind;
  prob.width = width;
  auto rand_vec = [&](Index n, double lo, double hi) {
    Vector<double> v(n);
    for (Index i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
  };
  // Mix accumulating steps (strong push, weak pop) with churning ones so that
  // mass actually builds up and pops bite partway into the structure; pure
  // uniform signals keep the structure nearly drained and leave whole branch
  // families unexercised.
  auto rand_signal = [&](double& push, double& pop) {
    if (rng.uniform() < 0.5) {
      push = rng.uniform(0.5, 0.98);
      pop = rng.uniform(0.02, 0.3);
    } else {
      push = rng.uniform(0.02, 0.98);
      pop = rng.uniform(0.3, 0.98);
    }
  };
  for (int t = 0; t < steps; ++t) {
    MemorySignals<double> sig;
    sig.value = rand_vec(width, -1.5, 1.5);
    rand_signal(sig.push, sig.pop);
    if (kind == MemoryKind::Deque) {
      sig.value_bot = rand_vec(width, -1.5, 1.5);
      rand_signal(sig.push_bot, sig.pop_bot);
    }
    prob.signals.push_back(std::move(sig));
    prob.read_probes.push_back(rand_vec(width, -1.0, 1.0));
    prob.read_bot_probes.push_back(kind == MemoryKind::Deque ? rand_vec(width, -1.0, 1.0)
                                                             : Vector<double>());
  }
  if (probe_final) {
    const Index rows = (kind == MemoryKind::Deque) ? 2 * steps : steps;
    prob.final_value_probe.resize(rows, width);
    for (Index i = 0; i < rows; ++i) prob.final_value_probe.row(i) = rand_vec(width, -0.5, 0.5);
    prob.final_strength_probe = rand_vec(rows, -0.5, 0.5);
  }
  return prob;
}

/// Trace that deterministically exercises every branch of the pop and read
/// adjoints: mass piles up, then a mid-sized pop zeroes the top rows and bites
/// a surviving lower row, and the read cap truncates a deep large row.
inline MemoryFdProblem branch_covering_problem(MemoryKind kind, Rng& rng) {
  MemoryFdProblem prob;
  prob.kind = kind;
  prob.width = 1;
  const double pushes[] = {0.9, 0.8, 0.1, 0.2, 0.3};
  const double pops[] = {0.01, 0.01, 0.01, 0.01, 0.45};
  auto rand_vec = [&](double lo, double hi) {
    return Vector<double>::Constant(1, rng.uniform(lo, hi)).eval();
  };
  for (int t = 0; t < 5; ++t) {
    MemorySignals<double> sig;
    sig.value = rand_vec(-1.5, 1.5);
    sig.push = pushes[t];
    sig.pop = pops[t];
    if (kind == MemoryKind::Deque) {
      sig.value_bot = rand_vec(-1.5, 1.5);
      sig.push_bot = pushes[4 - t];
      sig.pop_bot = (t == 4) ? 0.35 : 0.01;
    }
    prob.signals.push_back(std::move(sig));
    prob.read_probes.push_back(rand_vec(0.5, 1.5));
    prob.read_bot_probes.push_back(kind == MemoryKind::Deque ? rand_vec(0.5, 1.5)
                                                             : Vector<double>());
  }
  const Index rows = (kind == MemoryKind::Deque) ? 10 : 5;
  prob.final_value_probe.resize(rows, 1);
  for (Index i = 0; i < rows; ++i) prob.final_value_probe.row(i) = rand_vec(-0.5, 0.5);
  prob.final_strength_probe.resize(rows);
  for (Index i = 0; i < rows; ++i) prob.final_strength_probe[i] = rng.uniform(-0.5, 0.5);
  return prob;
}

}  // namespace detail

/// Compares one problem's analytic adjoints against central differences and
/// returns the worst relative error over every input scalar.
inline double memory_fd_max_error(MemoryFdProblem problem, double step = 1e-6,
                                  double floor = 1e-2) {
  return detail::memory_compare(problem, step, floor);
}

/// Random memory-only traces (steps in [1, max_steps], width in [1,
/// max_width]); configurations within `tie_margin` of a min/max tie are
/// redrawn. One report group per trial batch.
inline GradCheckReport grad_check_memory(MemoryKind kind, int trials, int max_steps,
                                         Index max_width, std::uint64_t seed,
                                         double step = 1e-6, double tie_margin = 1e-4) {
  Rng rng(seed, kStreamGradCheck);
  GradCheckGroup group;
  group.name = std::string("memory.") + to_string(kind);
  for (int trial = 0; trial < trials; ++trial) {
    MemoryFdProblem prob;
    do {
      if (trial % 4 == 0) {
        prob = detail::branch_covering_problem(kind, rng);
      } else {
        const int steps = static_cast<int>(rng.uniform_int(1, max_steps));
        const Index width = rng.uniform_int(1, max_width);
        prob = detail::random_memory_problem(kind, width, steps, rng);
      }
    } while (detail::memory_trace_margin(prob) < tie_margin);
    const double err = detail::memory_compare(prob, step, 1e-2);
    if (err > group.max_rel_error) group.max_rel_error = err;
  }
  GradCheckReport report;
  report.groups.push_back(group);
  return report;
}

// ---------------------------------------------------------------------------
// Whole-model check: analytic BPTT against central differences of the summed
// cross-entropy, per parameter group, on randomly initialized small models
// and random examples.
// ---------------------------------------------------------------------------

inline GradCheckReport grad_check_model(const ModelConfig& config, const Vocabulary& vocab,
                                        int trials, std::uint64_t seed, double step = 1e-6,
                                        double floor = 1e-2) {
  Rng rng(seed, kStreamGradCheck);
  GradCheckReport report;
  for (int trial = 0; trial < trials; ++trial) {
    ModelParameters<double> params = init_parameters<double>(config, rng.next());
    const int src_len = static_cast<int>(rng.uniform_int(2, 4));
    std::vector<int> source, target;
    for (int i = 0; i < src_len; ++i)
      source.push_back(vocab.source_id(static_cast<int>(rng.uniform_int(0, vocab.n_source - 1))));
    const int tgt_len = static_cast<int>(rng.uniform_int(1, 4));
    for (int i = 0; i < tgt_len; ++i)
      target.push_back(vocab.target_id(static_cast<int>(rng.uniform_int(0, vocab.n_target - 1))));
    const TransductionExample ex = encode_example(source, target, vocab);

    const ForwardResult<double> fwd = model_forward(params, vocab, ex);
    const ModelParameters<double> grads = model_backward(params, vocab, ex, fwd);

    auto grads_copy = grads;
    std::vector<std::pair<std::string, std::pair<double*, Index>>> flat, flat_grads;
    for_each_parameter(params, [&](const std::string& name, double* data, Index n) {
      flat.push_back({name, {data, n}});
    });
    for_each_parameter(grads_copy, [&](const std::string& name, double* data, Index n) {
      flat_grads.push_back({name, {data, n}});
    });
    if (report.groups.empty())
      for (const auto& [name, view] : flat) report.groups.push_back({name, 0, 0, 0});

    for (std::size_t g = 0; g < flat.size(); ++g) {
      GradCheckGroup& group = report.groups[g];
      for (Index i = 0; i < flat[g].second.second; ++i) {
        double& slot = flat[g].second.first[i];
        const double x0 = slot;
        slot = x0 + step;
        const double up = model_forward(params, vocab, ex).loss.nll;
        slot = x0 - step;
        const double down = model_forward(params, vocab, ex).loss.nll;
        slot = x0;
        const double fd = (up - down) / (2 * step);
        const double analytic = flat_grads[g].second.first[i];
        const double err = rel_error(analytic, fd, floor);
        if (err > group.max_rel_error) {
          group.max_rel_error = err;
          group.worst_analytic = analytic;
          group.worst_numeric = fd;
        }
      }
    }
  }
  return report;
}

/// Small default configuration for whole-model checks (the CLI's gradcheck).
inline std::pair<ModelConfig, Vocabulary> grad_check_problem(ModelKind kind) {
  Vocabulary vocab = Vocabulary::synthetic(5);
  ModelConfig config;
  config.kind = kind;
  config.hidden = 4;
  config.mem_width = 3;
  config.embed = 3;
  config.input_symbols = vocab.input_symbols();
  config.output_classes = vocab.output_classes();
  return {config, vocab};
}

}  // namespace ndsq
