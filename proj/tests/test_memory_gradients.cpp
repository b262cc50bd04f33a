#include <doctest.h>

#include "ndsq/gradcheck.hpp"
#include "ndsq/memory.hpp"
#include "support/test_util.hpp"

using namespace ndsq;

namespace {

MemorySignals<double> sig1(double v, double push, double pop) {
  MemorySignals<double> s;
  s.value = Vector<double>::Constant(1, v);
  s.push = push;
  s.pop = pop;
  return s;
}

Vector<double> rand_vec(Rng& rng, Index n, double lo, double hi) {
  return Vector<double>::NullaryExpr(n, [&](Index) { return rng.uniform(lo, hi); });
}

}  // namespace

TEST_CASE("zero upstream gives zero adjoints") {
  Rng rng(31);
  for (MemoryKind kind : {MemoryKind::Stack, MemoryKind::Queue, MemoryKind::Deque}) {
    auto state = MemoryState<double>::empty(kind, 2);
    for (int t = 0; t < 4; ++t) {
      MemorySignals<double> sig;
      sig.value = rand_vec(rng, 2, -1, 1);
      sig.push = rng.uniform(0.1, 0.9);
      sig.pop = rng.uniform(0.1, 0.9);
      if (kind == MemoryKind::Deque) {
        sig.value_bot = rand_vec(rng, 2, -1, 1);
        sig.push_bot = rng.uniform(0.1, 0.9);
        sig.pop_bot = rng.uniform(0.1, 0.9);
      }
      auto [next, read] = memory_step(state, sig);
      MemoryUpstream<double> up;  // all empty => zero
      auto adj = memory_step_backward(state, sig, next, read, up);
      CHECK(adj.d_values.isZero(0.0));
      CHECK(adj.d_strengths.isZero(0.0));
      CHECK(adj.d_value.isZero(0.0));
      CHECK(adj.d_pop == 0.0);
      CHECK(adj.d_push == 0.0);
      state = std::move(next);
    }
  }
}

TEST_CASE("stack first-step adjoints have the closed form") {
  auto state = MemoryState<double>::empty(MemoryKind::Stack, 1);
  auto sig = sig1(5.0, 0.8, 0.3);
  auto [next, read] = stack_step(state, sig);
  MemoryUpstream<double> up;
  up.d_read = Vector<double>::Constant(1, 1.0);
  auto adj = stack_step_backward(state, sig, next, read, up);
  CHECK(adj.d_value[0] == doctest::Approx(0.8).epsilon(1e-12));  // dr/dv = d
  CHECK(adj.d_push == doctest::Approx(5.0).epsilon(1e-12));      // via the delta branch
  CHECK(adj.d_pop == 0.0);
}

TEST_CASE("stack trace step three matches finite differences") {
  Rng rng(32);
  MemoryFdProblem prob;
  prob.kind = MemoryKind::Stack;
  prob.width = 1;
  prob.signals = {sig1(1.0, 0.8, 0.0), sig1(2.0, 0.5, 0.1), sig1(3.0, 0.9, 0.9)};
  prob.read_probes = {Vector<double>(), Vector<double>(), rand_vec(rng, 1, 0.5, 1.5)};
  prob.read_bot_probes.resize(3);
  prob.final_value_probe = Matrix<double>::NullaryExpr(3, 1, [&](Index, Index) {
    return rng.uniform(-1, 1);
  });
  prob.final_strength_probe = rand_vec(rng, 3, -1, 1);
  CHECK(memory_fd_max_error(prob) < 1e-8);
}

TEST_CASE("queue two-step configuration matches finite differences") {
  // The printed example (d2 = 0.9) puts the second read weight exactly on a
  // min tie; d2 = 0.85 keeps the same branch structure a safe margin away.
  MemoryFdProblem prob;
  prob.kind = MemoryKind::Queue;
  prob.width = 1;
  prob.signals = {sig1(1.0, 0.6, 0.0), sig1(2.0, 0.85, 0.5)};
  prob.read_probes = {Vector<double>(), Vector<double>::Constant(1, 1.0)};
  prob.read_bot_probes.resize(2);
  REQUIRE(detail::memory_trace_margin(prob) > 1e-4);
  CHECK(memory_fd_max_error(prob) < 1e-8);
}

TEST_CASE("deque one-step configuration matches finite differences") {
  // Asymmetric pushes (0.5 / 0.4); the printed 0.5 / 0.5 pair ties the top
  // read's min at row 1.
  Rng rng(33);
  MemoryFdProblem prob;
  prob.kind = MemoryKind::Deque;
  prob.width = 1;
  MemorySignals<double> sig = sig1(2.0, 0.5, 0.0);
  sig.value_bot = Vector<double>::Constant(1, 1.0);
  sig.push_bot = 0.4;
  sig.pop_bot = 0.0;
  prob.signals = {sig};
  prob.read_probes = {rand_vec(rng, 1, 0.5, 1.5)};
  prob.read_bot_probes = {rand_vec(rng, 1, 0.5, 1.5)};
  REQUIRE(detail::memory_trace_margin(prob) > 1e-4);
  CHECK(memory_fd_max_error(prob) < 1e-8);
}

TEST_CASE("random traces match finite differences") {
  for (MemoryKind kind : {MemoryKind::Stack, MemoryKind::Queue, MemoryKind::Deque}) {
    auto report = grad_check_memory(kind, 40, 6, 4, 91);
    INFO("kind ", to_string(kind), " max rel error ", report.max_rel_error());
    CHECK(report.max_rel_error() < 1e-5);
  }
}

TEST_CASE("each backward branch is pinned by the gradient suite") {
  using detail::BackwardMutation;
  // Clean baseline first; then every single-branch corruption must blow past
  // the detection threshold.
  CHECK(grad_check_memory(MemoryKind::Stack, 20, 6, 2, 7).max_rel_error() < 1e-6);
  for (BackwardMutation mut :
       {BackwardMutation::PopCarryDropped, BackwardMutation::PopDiagonalDropped,
        BackwardMutation::PopSignFlipped, BackwardMutation::ReadDiagonalDropped,
        BackwardMutation::ReadCarrySignFlipped}) {
    ndsq::testing::MutationGuard guard(mut);
    const double err = grad_check_memory(MemoryKind::Stack, 20, 6, 2, 7).max_rel_error();
    INFO("mutation ", static_cast<int>(mut), " err ", err);
    CHECK(err > 1e-2);
  }
}

TEST_CASE("backward validates shapes") {
  auto state = MemoryState<double>::empty(MemoryKind::Stack, 2);
  MemorySignals<double> sig;
  sig.value = Vector<double>::Constant(2, 1.0);
  sig.push = 0.5;
  sig.pop = 0.0;
  auto [next, read] = stack_step(state, sig);
  MemoryUpstream<double> up;
  up.d_read = Vector<double>::Zero(3);  // wrong width
  CHECK_THROWS_AS(stack_step_backward(state, sig, next, read, up), DimensionError);
}
