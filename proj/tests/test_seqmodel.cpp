#include "ndsq/seqmodel.hpp"

#include <doctest.h>

#include "ndsq/gradcheck.hpp"
#include "support/model_fd.hpp"

using namespace ndsq;

namespace {

ModelParameters<double> tiny_model(ModelKind kind, const Vocabulary& vocab, std::uint64_t seed) {
  ModelConfig config;
  config.kind = kind;
  config.hidden = 4;
  config.mem_width = 3;
  config.embed = 3;
  config.input_symbols = vocab.input_symbols();
  config.output_classes = vocab.output_classes();
  return init_parameters<double>(config, seed);
}

TransductionExample random_example(const Vocabulary& vocab, Rng& rng, int src_len, int tgt_len) {
  std::vector<int> source, target;
  for (int i = 0; i < src_len; ++i)
    source.push_back(vocab.source_id(static_cast<int>(rng.uniform_int(0, vocab.n_source - 1))));
  for (int i = 0; i < tgt_len; ++i)
    target.push_back(vocab.target_id(static_cast<int>(rng.uniform_int(0, vocab.n_target - 1))));
  return encode_example(source, target, vocab);
}

}  // namespace

TEST_CASE("joint encoding layout") {
  Vocabulary vocab = Vocabulary::synthetic(16);
  auto ex = encode_example({5, 7}, {5, 7}, vocab);
  CHECK(ex.joint == std::vector<int>{0, 5, 7, 1, 5, 7, 2});

  auto empty = encode_example({}, {}, vocab);
  CHECK(empty.joint == std::vector<int>{0, 1, 2});

  CHECK_THROWS_AS(encode_example({2}, {}, vocab), VocabError);   // reserved index
  CHECK_THROWS_AS(encode_example({}, {19}, vocab), VocabError);  // past the vocabulary
}

TEST_CASE("joint encoding is position-exact and round-trips") {
  Rng rng(40);
  Vocabulary vocab = Vocabulary::synthetic(32);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = static_cast<int>(rng.uniform_int(1, 8));
    std::vector<int> source;
    for (int i = 0; i < n; ++i)
      source.push_back(vocab.source_id(static_cast<int>(rng.uniform_int(0, 31))));
    auto ex = encode_example(source, source, vocab);  // copy pair
    REQUIRE(ex.joint.size() == 2 * source.size() + 3);
    CHECK(ex.joint.front() == Vocabulary::kSos);
    CHECK(ex.joint[source.size() + 1] == Vocabulary::kSep);
    CHECK(ex.joint.back() == Vocabulary::kEos);
    const std::vector<int> src_slice(ex.joint.begin() + 1, ex.joint.begin() + 1 + n);
    const std::vector<int> tgt_slice(ex.joint.begin() + n + 2, ex.joint.end() - 1);
    CHECK(src_slice == ex.source);
    CHECK(tgt_slice == ex.target);
  }
}

TEST_CASE("zero output layer gives a uniform softmax and vocabulary-sized perplexity") {
  Vocabulary vocab = Vocabulary::synthetic(6);
  auto params = tiny_model(ModelKind::StackLstm, vocab, 50);
  params.out_embed.setZero();
  params.out_bias.setZero();
  Rng rng(51);
  auto ex = random_example(vocab, rng, 3, 3);
  auto fwd = model_forward(params, vocab, ex);
  CHECK(fwd.loss.positions == 4);  // |target| + 1, EOS included
  CHECK(fwd.loss.perplexity() == doctest::Approx(7.0).epsilon(1e-12));  // |classes| = 6 + 1
  for (Index p = 0; p < fwd.probs.cols(); ++p)
    for (Index c = 0; c < fwd.probs.rows(); ++c)
      CHECK(fwd.probs(c, p) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("emitted logits independently recompute to the reported loss") {
  Vocabulary vocab = Vocabulary::synthetic(9);
  auto params = tiny_model(ModelKind::QueueLstm, vocab, 52);
  Rng rng(53);
  auto ex = random_example(vocab, rng, 4, 5);
  auto fwd = model_forward(params, vocab, ex);

  double nll = 0;
  for (Index pos = 0; pos < fwd.logits.cols(); ++pos) {
    const Vector<double> z = fwd.logits.col(pos);
    const double zmax = z.maxCoeff();
    double denom = 0;
    for (Index c = 0; c < z.size(); ++c) denom += std::exp(z[c] - zmax);
    const int next_sym = ex.joint[fwd.trace.sep_step + pos + 1];
    nll -= (z[vocab.class_of(next_sym)] - zmax) - std::log(denom);
  }
  CHECK(fwd.loss.nll == doctest::Approx(nll).epsilon(1e-12));
}

TEST_CASE("softmax columns are normalized") {
  Vocabulary vocab = Vocabulary::synthetic(12);
  auto params = tiny_model(ModelKind::DequeLstm, vocab, 54);
  Rng rng(55);
  auto ex = random_example(vocab, rng, 5, 4);
  auto fwd = model_forward(params, vocab, ex);
  for (Index pos = 0; pos < fwd.probs.cols(); ++pos) {
    CHECK(fwd.probs.col(pos).minCoeff() >= 0.0);
    CHECK(fwd.probs.col(pos).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("forward is deterministic") {
  Vocabulary vocab = Vocabulary::synthetic(8);
  auto params = tiny_model(ModelKind::StackLstm, vocab, 56);
  Rng rng(57);
  auto ex = random_example(vocab, rng, 4, 4);
  auto a = model_forward(params, vocab, ex);
  auto b = model_forward(params, vocab, ex);
  CHECK(a.logits == b.logits);
  CHECK(a.loss.nll == b.loss.nll);
}

TEST_CASE("zero position mask zeroes the gradient") {
  Vocabulary vocab = Vocabulary::synthetic(7);
  auto params = tiny_model(ModelKind::StackLstm, vocab, 58);
  Rng rng(59);
  auto ex = random_example(vocab, rng, 3, 3);
  auto fwd = model_forward(params, vocab, ex);
  const Vector<double> mask = Vector<double>::Zero(fwd.loss.positions);
  auto grads = model_backward(params, vocab, ex, fwd, &mask);
  bool all_zero = true;
  for_each_parameter(grads, [&](const std::string&, double* data, Index n) {
    for (Index i = 0; i < n; ++i) all_zero = all_zero && data[i] == 0.0;
  });
  CHECK(all_zero);
}

TEST_CASE("whole-model gradients match finite differences") {
  Rng rng(60);
  for (ModelKind kind : {ModelKind::StackLstm, ModelKind::QueueLstm, ModelKind::DequeLstm,
                         ModelKind::DeepLstm2}) {
    CAPTURE(to_string(kind));
    Vocabulary vocab = Vocabulary::synthetic(5);
    auto params = tiny_model(kind, vocab, 61);
    auto ex = random_example(vocab, rng, 4, 4);
    auto fwd = model_forward(params, vocab, ex);
    auto grads = model_backward(params, vocab, ex, fwd);
    const double err = ndsq::testing::fd_parameter_max_err(params, grads, [&]() {
      return static_cast<double>(model_forward(params, vocab, ex).loss.nll);
    });
    INFO("max rel error ", err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("initial hidden state receives gradient") {
  Vocabulary vocab = Vocabulary::synthetic(6);
  auto params = tiny_model(ModelKind::StackLstm, vocab, 62);
  Rng rng(63);
  auto ex = random_example(vocab, rng, 3, 2);
  auto fwd = model_forward(params, vocab, ex);
  auto grads = model_backward(params, vocab, ex, fwd);
  CHECK(grads.h0[0].cwiseAbs().maxCoeff() > 0.0);
  CHECK(grads.c0[0].cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("grad_check_model reports per-group errors") {
  auto [config, vocab] = grad_check_problem(ModelKind::StackLstm);
  auto report = grad_check_model(config, vocab, 2, 64);
  CHECK(report.groups.size() > 5);
  CHECK(report.passes(1e-4));
  CHECK(report.max_rel_error() < 1e-4);
}

TEST_CASE("greedy decode") {
  Vocabulary vocab = Vocabulary::synthetic(5);
  auto params = tiny_model(ModelKind::QueueLstm, vocab, 65);
  const std::vector<int> source{vocab.source_id(0), vocab.source_id(3)};

  SUBCASE("forced EOS gives an empty, non-truncated prediction") {
    params.out_embed.setZero();
    params.out_bias.setZero();
    params.out_bias[vocab.n_target] = 10.0;
    auto result = greedy_decode(params, vocab, source, 20);
    CHECK(result.symbols.empty());
    CHECK_FALSE(result.truncated);
  }

  SUBCASE("cap reached without EOS sets the truncation flag") {
    params.out_embed.setZero();
    params.out_bias.setZero();
    params.out_bias[1] = 10.0;  // force a content symbol forever
    auto result = greedy_decode(params, vocab, source, 6);
    CHECK(result.symbols.size() == 6);
    CHECK(result.truncated);
    for (int sym : result.symbols) CHECK(sym == vocab.target_id(1));
  }

  SUBCASE("ties break toward the lowest class index") {
    params.out_embed.setZero();
    params.out_bias.setZero();  // all logits equal -> class 0 wins
    auto result = greedy_decode(params, vocab, source, 3);
    REQUIRE(!result.symbols.empty());
    CHECK(result.symbols[0] == vocab.target_id(0));
  }
}

TEST_CASE("forward rejects vocab mismatches") {
  Vocabulary vocab = Vocabulary::synthetic(6);
  Vocabulary other = Vocabulary::synthetic(9);
  auto params = tiny_model(ModelKind::StackLstm, vocab, 66);
  Rng rng(67);
  auto ex = random_example(other, rng, 3, 3);
  CHECK_THROWS_AS(model_forward(params, other, ex), DimensionError);
}
