#include <cmath>

#include "doctest.h"

#include "mergelab/autodiff.hpp"
#include "mergelab/models.hpp"
#include "mergelab/rng.hpp"

using namespace mergelab;
using namespace mergelab::nn;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, Pcg32& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (float& v : t.data) v = rng.uniform_float(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("cross entropy at uniform logits equals ln(classes)") {
  Tape tape;
  Value logits = tape.constant(Tensor::zeros({1, 100}));
  std::vector<std::int32_t> labels = {17};
  Value loss = tape.cross_entropy(logits, labels);
  CHECK(std::abs(loss.val().data[0] - std::log(100.0)) < 1e-6);
}

TEST_CASE("cross entropy of a saturated correct prediction is ~0") {
  Tensor t = Tensor::zeros({1, 10});
  t.data[3] = 1000.0f;
  Tape tape;
  Value loss = tape.cross_entropy(tape.constant(t), std::vector<std::int32_t>{3});
  CHECK(loss.val().data[0] >= 0.0f);
  CHECK(loss.val().data[0] < 1e-6f);
}

TEST_CASE("cross entropy hand-evaluated two-class case") {
  // softmax([0, ln 3]) = [1/4, 3/4]; -log(1/4) = ln 4
  Tensor t({1, 2}, {0.0f, std::log(3.0f)});
  Tape tape;
  Value loss = tape.cross_entropy(tape.constant(t), std::vector<std::int32_t>{0});
  CHECK(loss.val().data[0] == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("cross entropy is non-negative on random logits") {
  Pcg32 rng(5, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor t = random_tensor({8, 13}, rng, -5.0f, 5.0f);
    std::vector<std::int32_t> labels(8);
    for (auto& l : labels) l = static_cast<std::int32_t>(rng.uniform_int(13));
    Tape tape;
    Value loss = tape.cross_entropy(tape.constant(t), labels);
    CHECK(loss.val().data[0] >= 0.0f);
  }
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  Tape tape;
  Value logits = tape.constant(Tensor::zeros({1, 4}));
  CHECK_THROWS_AS(tape.cross_entropy(logits, std::vector<std::int32_t>{4}), Error);
  Tape tape2;
  Value logits2 = tape2.constant(Tensor::zeros({1, 4}));
  CHECK_THROWS_AS(tape2.cross_entropy(logits2, std::vector<std::int32_t>{-1}), Error);
}

TEST_CASE("group norm zeroes a constant input") {
  Tape tape;
  Value x = tape.constant(Tensor::full({2, 3, 4, 4}, 2.5f));
  Value gamma = tape.constant(Tensor::full({3}, 1.0f));
  Value beta = tape.constant(Tensor::zeros({3}));
  Value y = tape.group_norm(x, gamma, beta, 1, 1e-5f);
  for (float v : y.val().data) CHECK(std::abs(v) < 1e-4f);
}

TEST_CASE("group norm normalizes per sample to mean 0 / var 1") {
  Pcg32 rng(21, 4);
  Tensor x = random_tensor({3, 6, 5, 5}, rng, -2.0f, 3.0f);
  Tape tape;
  Value y = tape.group_norm(tape.constant(x), tape.constant(Tensor::full({6}, 1.0f)),
                            tape.constant(Tensor::zeros({6})), 1, 1e-5f);
  const std::int64_t m = 6 * 5 * 5;
  for (int n = 0; n < 3; ++n) {
    double sum = 0, sum_sq = 0;
    for (std::int64_t i = 0; i < m; ++i) {
      const double v = y.val().data[n * m + i];
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / m;
    const double var = sum_sq / m - mean * mean;
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("group norm is invariant to affine input transforms") {
  Pcg32 rng(22, 4);
  Tensor x = random_tensor({2, 4, 3, 3}, rng);
  Tensor scaled = x;
  for (float& v : scaled.data) v = 3.0f * v + 7.0f;

  auto normalize = [](const Tensor& input) {
    Tape tape;
    Value y = tape.group_norm(tape.constant(input), tape.constant(Tensor::full({4}, 1.0f)),
                              tape.constant(Tensor::zeros({4})), 1, 1e-5f);
    return y.val();
  };
  const Tensor a = normalize(x);
  const Tensor b = normalize(scaled);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    CHECK(std::abs(a.data[i] - b.data[i]) < 1e-4f);
  }
}

TEST_CASE("group norm rejects indivisible channel counts") {
  Tape tape;
  Value x = tape.constant(Tensor::zeros({1, 5, 2, 2}));
  Value gamma = tape.constant(Tensor::full({5}, 1.0f));
  Value beta = tape.constant(Tensor::zeros({5}));
  CHECK_THROWS_AS(tape.group_norm(x, gamma, beta, 2, 1e-5f), Error);
}

TEST_CASE("forward pass is bit-deterministic") {
  Pcg32 rng(33, 2);
  models::ArchConfig cfg{models::ArchName::tiny_convnet, 10, 8};
  models::Model model = models::build_model(cfg, 7);
  Tensor batch = random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f);

  Tape t1, t2;
  const Tensor& a = model.forward(t1, batch).val();
  const Tensor& b = model.forward(t2, batch).val();
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("finite inputs produce finite activations and gradients") {
  Pcg32 rng(34, 2);
  models::ArchConfig cfg{models::ArchName::tiny_convnet, 10, 8};
  models::Model model = models::build_model(cfg, 7);
  Tensor batch = random_tensor({4, 3, 32, 32}, rng, 0.0f, 1.0f);
  std::vector<std::int32_t> labels = {0, 3, 7, 9};

  Tape tape;
  models::ForwardBinding fb = models::bind_forward(tape, cfg, model.params, batch, true);
  CHECK(fb.logits.val().all_finite());
  Value loss = tape.cross_entropy(fb.logits, labels);
  tape.backward(loss);
  for (Value pv : fb.param_values) {
    CHECK(tape.grad(pv).all_finite());
  }
}

TEST_CASE("graph-level gradient agrees with finite differences through the whole model") {
  // The double-precision oracle pins each kernel; this checks the chain-rule
  // wiring through convolutions, norms, residuals and the head in float.
  Pcg32 rng(35, 2);
  models::ArchConfig cfg{models::ArchName::tiny_convnet, 4, 4};
  models::Model model = models::build_model(cfg, 3);
  Tensor batch = random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f);
  std::vector<std::int32_t> labels = {1, 2};

  auto loss_at = [&](const ParamSet& params) {
    Tape t;
    models::ForwardBinding fb = models::bind_forward(t, cfg, params, batch, false);
    Value loss = t.cross_entropy(fb.logits, labels);
    return static_cast<double>(loss.val().data[0]);
  };

  Tape tape;
  models::ForwardBinding fb = models::bind_forward(tape, cfg, model.params, batch, true);
  Value loss = tape.cross_entropy(fb.logits, labels);
  tape.backward(loss);

  // Probe a few parameters spread across the network.
  const float h = 0.02f;
  int checked = 0;
  for (std::size_t entry : {std::size_t{0}, model.params.size() / 2, model.params.size() - 2}) {
    ParamSet perturbed = model.params;
    const std::int64_t j = perturbed[entry].tensor.size() / 2;
    const float saved = perturbed[entry].tensor.data[j];
    perturbed[entry].tensor.data[j] = saved + h;
    const double up = loss_at(perturbed);
    perturbed[entry].tensor.data[j] = saved - h;
    const double down = loss_at(perturbed);
    const double fd = (up - down) / (2.0 * h);
    const double analytic = tape.grad(fb.param_values[entry]).data[j];
    if (std::abs(fd) > 5e-3 || std::abs(analytic) > 5e-3) {
      CHECK(std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd)}) < 0.05);
      ++checked;
    }
  }
  CHECK(checked >= 1);
}
