#include <doctest.h>

#include <cmath>

#include "fedsim/errors.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/model.hpp"
#include "fedsim/oracles.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

Tensor randn_batch(Rng& rng, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("zero classifier gives uniform probabilities") {
  Rng rng(10);
  EncoderSpec spec = EncoderSpec::mlp(4, {6});
  ParameterSet params = init_params(spec, 5, rng);
  for (double& v : params.classifier_w.data) v = 0.0;
  for (double& v : params.classifier_b.data) v = 0.0;
  const Tensor batch = randn_batch(rng, {3, 4});
  const auto ctx = forward(params, spec, batch, false);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 5; ++c)
      CHECK(ctx.probabilities.at(i, c) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax of [1,2,3]") {
  const double logits[3] = {1.0, 2.0, 3.0};
  double probs[3];
  kernels::softmax_rows(logits, probs, 1, 3);
  CHECK(probs[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(probs[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(probs[2] == doctest::Approx(0.66524).epsilon(1e-4));
}

TEST_CASE("single-label model predicts exactly 1") {
  Rng rng(11);
  EncoderSpec spec = EncoderSpec::mlp(3, {4});
  ParameterSet params = init_params(spec, 1, rng);
  const Tensor batch = randn_batch(rng, {2, 3});
  const auto ctx = forward(params, spec, batch, false);
  CHECK(ctx.probabilities.at(0, 0) == 1.0);
  CHECK(ctx.probabilities.at(1, 0) == 1.0);
}

TEST_CASE("probability rows sum to 1 and representations have width r") {
  Rng rng(12);
  for (int arch = 0; arch < 2; ++arch) {
    EncoderSpec spec = arch == 0 ? EncoderSpec::mlp(5, {7, 6})
                                 : EncoderSpec::paper_cnn(1, 8, 8);
    if (arch == 1) spec.fc_width = 9;
    ParameterSet params = init_params(spec, 4, rng);
    for (std::size_t B : {1, 3, 17}) {
      const Tensor batch =
          arch == 0 ? randn_batch(rng, {B, 5}) : randn_batch(rng, {B, 1, 8, 8});
      const auto ctx = forward(params, spec, batch, false);
      CHECK(ctx.representations.cols() == std::size_t(spec.representation_dim()));
      for (std::size_t i = 0; i < B; ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 4; ++c) sum += ctx.probabilities.at(i, c);
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("softmax shift invariance") {
  Rng rng(13);
  EncoderSpec spec = EncoderSpec::mlp(4, {5});
  ParameterSet params = init_params(spec, 6, rng);
  const Tensor batch = randn_batch(rng, {4, 4});
  const auto base = forward(params, spec, batch, false);
  ParameterSet shifted = params;
  for (double& v : shifted.classifier_b.data) v += 17.3;
  const auto moved = forward(shifted, spec, batch, false);
  for (std::size_t i = 0; i < base.probabilities.numel(); ++i)
    CHECK(std::abs(base.probabilities[i] - moved.probabilities[i]) < 1e-9);
}

TEST_CASE("forward is deterministic given the dropout seed") {
  Rng rng(14);
  EncoderSpec spec = EncoderSpec::paper_cnn(1, 8, 8);
  spec.fc_width = 10;
  ParameterSet params = init_params(spec, 3, rng);
  const Tensor batch = randn_batch(rng, {5, 1, 8, 8});
  Rng d1 = Rng::stream(99, 1), d2 = Rng::stream(99, 1);
  const auto a = forward(params, spec, batch, true, &d1);
  const auto b = forward(params, spec, batch, true, &d2);
  CHECK(a.probabilities == b.probabilities);
  // And a different stream changes the dropout mask.
  Rng d3 = Rng::stream(99, 2);
  const auto c = forward(params, spec, batch, true, &d3);
  CHECK(a.dropout_mask.data != c.dropout_mask.data);
}

TEST_CASE("cross entropy closed forms") {
  Tensor perfect = Tensor::row_matrix(1, 3, {0.0, 1.0, 0.0});
  CHECK(cross_entropy(perfect, {1}) == doctest::Approx(0.0).epsilon(1e-10));

  Tensor uniform = Tensor::row_matrix(2, 4, {0.25, 0.25, 0.25, 0.25,
                                             0.25, 0.25, 0.25, 0.25});
  CHECK(cross_entropy(uniform, {0, 3}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor half = Tensor::row_matrix(1, 2, {0.5, 0.5});
  CHECK(cross_entropy(half, {0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  Tensor probs = Tensor::row_matrix(1, 3, {0.2, 0.3, 0.5});
  CHECK_THROWS_AS(cross_entropy(probs, {3}), UsageError);
  CHECK_THROWS_AS(cross_entropy(probs, {-1}), UsageError);
}

TEST_CASE("forward rejects mismatched batch shapes") {
  Rng rng(15);
  EncoderSpec spec = EncoderSpec::mlp(4, {5});
  ParameterSet params = init_params(spec, 3, rng);
  const Tensor bad = randn_batch(rng, {2, 7});
  CHECK_THROWS_AS(forward(params, spec, bad, false), ConfigError);
}

TEST_CASE("non-finite activations name the layer") {
  Rng rng(16);
  EncoderSpec spec = EncoderSpec::mlp(3, {4});
  ParameterSet params = init_params(spec, 2, rng);
  params.encoder[0][0] = 1e308;
  Tensor batch({1, 3});
  batch[0] = 1e308;
  try {
    forward(params, spec, batch, false);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("dense") != std::string::npos);
  }
}

TEST_CASE("backward without a forward context is a usage error") {
  Rng rng(17);
  EncoderSpec spec = EncoderSpec::mlp(3, {4});
  ParameterSet params = init_params(spec, 2, rng);
  ForwardContext empty;
  CHECK_THROWS_AS(backward(params, spec, empty, {0}), UsageError);
}

TEST_CASE("duplicated sample keeps the mean-reduced gradient") {
  Rng rng(18);
  EncoderSpec spec = EncoderSpec::mlp(4, {6, 5});
  ParameterSet params = init_params(spec, 3, rng);
  const Tensor one = randn_batch(rng, {1, 4});
  Tensor two({2, 4});
  for (int rep = 0; rep < 2; ++rep)
    for (int j = 0; j < 4; ++j) two.at(rep, j) = one.at(0, j);

  const auto g1 = backward(params, spec, forward(params, spec, one, false), {2});
  const auto g2 =
      backward(params, spec, forward(params, spec, two, false), {2, 2});
  auto t1 = g1.all_tensors();
  auto t2 = g2.all_tensors();
  for (std::size_t t = 0; t < t1.size(); ++t)
    for (std::size_t i = 0; i < t1[t]->numel(); ++i)
      CHECK((*t1[t])[i] == doctest::Approx((*t2[t])[i]).epsilon(1e-12));
}

TEST_CASE("gradient vanishes at a confident correct prediction") {
  Rng rng(19);
  EncoderSpec spec = EncoderSpec::mlp(3, {4});
  ParameterSet params = init_params(spec, 2, rng);
  // Saturate the correct class: bias dominates any representation.
  params.classifier_b[0] = 200.0;
  params.classifier_b[1] = -200.0;
  const Tensor batch = randn_batch(rng, {1, 3});
  const auto grads =
      backward(params, spec, forward(params, spec, batch, false), {0});
  double norm = 0.0;
  for (const Tensor* t : grads.all_tensors())
    for (double v : t->data) norm += v * v;
  CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("finite-difference gradient checks") {
  const auto mlp = gradcheck_mlp();
  CHECK(mlp.value < 1e-4);
  const auto cnn = gradcheck_cnn();
  CHECK(cnn.value < 1e-4);
  const auto head = gradcheck_classifier_only();
  CHECK(head.value < 1e-6);
}
