#include <cmath>

#include "doctest.h"

#include "mergelab/optim.hpp"

using namespace mergelab;
using namespace mergelab::nn;

namespace {

ScheduleConfig paper_scale_schedule() {
  ScheduleConfig cfg;  // defaults: 0.004 -> 0.1, cosine to 1e-5, 5% warmup
  cfg.total_steps = 19550;
  return cfg;
}

}  // namespace

TEST_CASE("lr schedule endpoints") {
  const ScheduleConfig cfg = paper_scale_schedule();
  CHECK(lr_at(cfg, 0) == doctest::Approx(0.004).epsilon(1e-12));
  const std::int64_t warmup = cfg.warmup_steps();
  CHECK(warmup == 977);
  CHECK(lr_at(cfg, warmup - 1) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(std::abs(lr_at(cfg, cfg.total_steps - 1) - 1e-5) < 1e-7);
}

TEST_CASE("lr schedule continuity at the warmup/cosine boundary") {
  const ScheduleConfig cfg = paper_scale_schedule();
  const std::int64_t warmup = cfg.warmup_steps();
  CHECK(std::abs(lr_at(cfg, warmup) - lr_at(cfg, warmup - 1)) < 1e-9);
}

TEST_CASE("lr schedule shape and bounds") {
  const ScheduleConfig cfg = paper_scale_schedule();
  const std::int64_t warmup = cfg.warmup_steps();
  double prev = lr_at(cfg, 0);
  for (std::int64_t s = 1; s < warmup; ++s) {
    const double lr = lr_at(cfg, s);
    CHECK(lr >= prev);
    prev = lr;
  }
  for (std::int64_t s = warmup; s < cfg.total_steps; s += 97) {
    const double lr = lr_at(cfg, s);
    CHECK(lr <= prev + 1e-15);
    CHECK(lr >= std::min(cfg.lr_warmup_start, cfg.lr_min));
    CHECK(lr <= cfg.lr_peak);
    prev = lr;
  }
}

TEST_CASE("lr schedule range errors") {
  const ScheduleConfig cfg = paper_scale_schedule();
  CHECK_THROWS_WITH_AS(lr_at(cfg, cfg.total_steps), doctest::Contains("outside"), Error);
  CHECK_THROWS_AS(lr_at(cfg, -1), Error);
}

TEST_CASE("sgd plain gradient step") {
  ParamSet params;
  params.add("w", Tensor({1}, {1.0f}));
  OptimState st = OptimState::like(params);
  sgd_step(params, {Tensor({1}, {2.0f})}, st, 0.1, 0.0, 0.0);
  CHECK(params[0].tensor.data[0] == doctest::Approx(0.8f).epsilon(1e-7));
  CHECK(st.step_counter == 1);
}

TEST_CASE("sgd two-step momentum recurrence") {
  // v1 = 1, theta1 = -0.1; v2 = 0.9 + 1 = 1.9, theta2 = -0.1 - 0.19 = -0.29
  ParamSet params;
  params.add("w", Tensor({1}, {0.0f}));
  OptimState st = OptimState::like(params);
  const Tensor g({1}, {1.0f});
  sgd_step(params, {g}, st, 0.1, 0.9, 0.0);
  sgd_step(params, {g}, st, 0.1, 0.9, 0.0);
  CHECK(params[0].tensor.data[0] == doctest::Approx(-0.29f).epsilon(1e-6));
  CHECK(st.step_counter == 2);
}

TEST_CASE("sgd coupled weight decay with zero gradient") {
  ParamSet params;
  params.add("w", Tensor({1}, {1.0f}));
  OptimState st = OptimState::like(params);
  sgd_step(params, {Tensor({1}, {0.0f})}, st, 0.1, 0.0, 5e-4);
  CHECK(params[0].tensor.data[0] == doctest::Approx(0.99995f).epsilon(1e-7));
}

TEST_CASE("sgd with momentum=0 wd=0 equals vanilla gradient descent exactly") {
  Pcg32 rng(31, 9);
  ParamSet params;
  Tensor t = Tensor::zeros({37});
  for (float& v : t.data) v = rng.uniform_float(-1.0f, 1.0f);
  params.add("w", t);
  std::vector<float> manual = params[0].tensor.data;
  OptimState st = OptimState::like(params);
  for (int step = 0; step < 5; ++step) {
    Tensor g = Tensor::zeros({37});
    for (float& v : g.data) v = rng.uniform_float(-1.0f, 1.0f);
    sgd_step(params, {g}, st, 0.05, 0.0, 0.0);
    for (int i = 0; i < 37; ++i) manual[i] -= 0.05f * g.data[i];
  }
  for (int i = 0; i < 37; ++i) {
    CHECK(params[0].tensor.data[i] == manual[i]);  // bit-exact
  }
}

TEST_CASE("sgd shape mismatch is a structural error") {
  ParamSet params;
  params.add("w", Tensor::zeros({2}));
  OptimState st = OptimState::like(params);
  CHECK_THROWS_AS(sgd_step(params, {Tensor::zeros({3})}, st, 0.1, 0.0, 0.0), Error);
  CHECK_THROWS_AS(sgd_step(params, {}, st, 0.1, 0.0, 0.0), Error);
}

TEST_CASE("optim state mirrors the param set") {
  ParamSet params;
  params.add("a", Tensor::zeros({2, 3}));
  params.add("b", Tensor::zeros({5}));
  OptimState st = OptimState::like(params);
  REQUIRE(st.momentum.size() == 2);
  CHECK(st.momentum[0].shape == params[0].tensor.shape);
  CHECK(st.momentum[1].shape == params[1].tensor.shape);
  CHECK(st.step_counter == 0);
}
