// Finite-difference oracle for every layer kernel, instantiated in double.
// The backward implementations must match central differences (h = 1e-3)
// within 1e-3 max relative error on random probes.

#include <numeric>

#include "doctest.h"

#include "mergelab/ops.hpp"
#include "support/test_util.hpp"

using namespace mergelab;
using namespace mergelab::testsupport;
namespace ops = mergelab::nn::ops;

namespace {

constexpr double kTol = 1e-3;

double weighted(std::span<const double> out, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  for (const auto& [stride, pad, kh] : {std::tuple{1, 1, 3}, {2, 1, 3}, {2, 0, 1}}) {
    CAPTURE(stride);
    CAPTURE(pad);
    ops::Conv2dDims d;
    d.n = 2;
    d.c_in = 3;
    d.h_in = 8;
    d.w_in = 8;
    d.c_out = 4;
    d.kh = kh;
    d.kw = kh;
    d.stride = stride;
    d.pad = pad;
    const std::size_t out_n = d.n * d.c_out * d.h_out() * d.w_out();

    Pcg32 rng(mix_seed(91, stride * 10 + pad), 7);
    std::vector<double> x = random_vec(rng, d.n * d.c_in * d.h_in * d.w_in);
    std::vector<double> w = random_vec(rng, d.c_out * d.c_in * d.kh * d.kw);
    std::vector<double> obj_w = random_vec(rng, out_n);

    auto objective = [&] {
      std::vector<double> out(out_n);
      ops::conv2d_forward(x.data(), w.data(), out.data(), d);
      return weighted(out, obj_w);
    };

    std::vector<double> dx(x.size(), 0.0), dw(w.size(), 0.0);
    ops::conv2d_backward(x.data(), w.data(), obj_w.data(), dx.data(), dw.data(), d);

    CHECK(fd_max_rel_err(x, dx, objective, rng) < kTol);
    CHECK(fd_max_rel_err(w, dw, objective, rng) < kTol);
  }
}

TEST_CASE("relu gradient matches finite differences") {
  Pcg32 rng(11, 3);
  std::vector<double> x = random_vec_nonzero(rng, 64);
  std::vector<double> obj_w = random_vec(rng, 64);
  auto objective = [&] {
    std::vector<double> out(64);
    ops::relu_forward(x.data(), out.data(), 64);
    return weighted(out, obj_w);
  };
  std::vector<double> dx(64, 0.0);
  {
    std::vector<double> out(64);
    ops::relu_forward(x.data(), out.data(), 64);
    ops::relu_backward(x.data(), obj_w.data(), dx.data(), 64);
  }
  CHECK(fd_max_rel_err(x, dx, objective, rng) < kTol);
}

TEST_CASE("avg_pool gradient matches finite differences") {
  const std::int64_t n = 2, c = 3, h = 8, w = 8, k = 2;
  Pcg32 rng(12, 3);
  std::vector<double> x = random_vec(rng, n * c * h * w);
  const std::size_t out_n = n * c * (h / k) * (w / k);
  std::vector<double> obj_w = random_vec(rng, out_n);
  auto objective = [&] {
    std::vector<double> out(out_n);
    ops::avgpool_forward(x.data(), out.data(), n, c, h, w, k);
    return weighted(out, obj_w);
  };
  std::vector<double> dx(x.size(), 0.0);
  ops::avgpool_backward(obj_w.data(), dx.data(), n, c, h, w, k);
  CHECK(fd_max_rel_err(x, dx, objective, rng) < kTol);
}

TEST_CASE("linear gradients match finite differences") {
  const std::int64_t n = 4, in = 10, out = 7;
  Pcg32 rng(13, 3);
  std::vector<double> x = random_vec(rng, n * in);
  std::vector<double> w = random_vec(rng, out * in);
  std::vector<double> b = random_vec(rng, out);
  std::vector<double> obj_w = random_vec(rng, n * out);
  auto objective = [&] {
    std::vector<double> y(n * out);
    ops::linear_forward(x.data(), w.data(), b.data(), y.data(), n, in, out);
    return weighted(y, obj_w);
  };
  std::vector<double> dx(x.size(), 0.0), dw(w.size(), 0.0), db(b.size(), 0.0);
  ops::linear_backward(x.data(), w.data(), obj_w.data(), dx.data(), dw.data(), db.data(), n, in, out);
  CHECK(fd_max_rel_err(x, dx, objective, rng) < kTol);
  CHECK(fd_max_rel_err(w, dw, objective, rng) < kTol);
  CHECK(fd_max_rel_err(b, db, objective, rng) < kTol);
}

TEST_CASE("residual add gradients match finite differences") {
  const std::int64_t n = 40;
  Pcg32 rng(14, 3);
  std::vector<double> a = random_vec(rng, n);
  std::vector<double> b = random_vec(rng, n);
  std::vector<double> obj_w = random_vec(rng, n);
  auto objective = [&] {
    std::vector<double> y(n);
    ops::add_forward(a.data(), b.data(), y.data(), n);
    return weighted(y, obj_w);
  };
  // d(add)/da = d(add)/db = upstream
  CHECK(fd_max_rel_err(a, obj_w, objective, rng) < kTol);
  CHECK(fd_max_rel_err(b, obj_w, objective, rng) < kTol);
}

TEST_CASE("group_norm gradients match finite differences") {
  for (const std::int64_t groups : {1, 2}) {
    CAPTURE(groups);
    const std::int64_t n = 2, c = 6, h = 4, w = 4;
    Pcg32 rng(mix_seed(15, groups), 3);
    std::vector<double> x = random_vec(rng, n * c * h * w);
    std::vector<double> gamma = random_vec(rng, c, 0.5, 1.5);
    std::vector<double> beta = random_vec(rng, c);
    std::vector<double> obj_w = random_vec(rng, n * c * h * w);
    auto objective = [&] {
      std::vector<double> y(n * c * h * w), mean(n * groups), istd(n * groups);
      ops::group_norm_forward(x.data(), gamma.data(), beta.data(), y.data(), n, c, h, w, groups,
                              1e-5, mean.data(), istd.data());
      return weighted(y, obj_w);
    };
    std::vector<double> y(n * c * h * w), mean(n * groups), istd(n * groups);
    ops::group_norm_forward(x.data(), gamma.data(), beta.data(), y.data(), n, c, h, w, groups, 1e-5,
                            mean.data(), istd.data());
    std::vector<double> dx(x.size(), 0.0), dgamma(c, 0.0), dbeta(c, 0.0);
    ops::group_norm_backward(x.data(), gamma.data(), mean.data(), istd.data(), obj_w.data(),
                             dx.data(), dgamma.data(), dbeta.data(), n, c, h, w, groups);
    CHECK(fd_max_rel_err(x, dx, objective, rng) < kTol);
    CHECK(fd_max_rel_err(gamma, dgamma, objective, rng) < kTol);
    CHECK(fd_max_rel_err(beta, dbeta, objective, rng) < kTol);
  }
}

TEST_CASE("cross_entropy gradient matches finite differences") {
  const std::int64_t n = 4, classes = 6;
  Pcg32 rng(16, 3);
  std::vector<double> logits = random_vec(rng, n * classes, -2.0, 2.0);
  std::vector<std::int32_t> labels(n);
  for (auto& l : labels) l = static_cast<std::int32_t>(rng.uniform_int(classes));
  auto objective = [&] {
    std::vector<double> probs(n * classes);
    return ops::softmax_xent_forward(logits.data(), labels.data(), n, classes, probs.data());
  };
  std::vector<double> probs(n * classes);
  ops::softmax_xent_forward(logits.data(), labels.data(), n, classes, probs.data());
  std::vector<double> dlogits(n * classes, 0.0);
  ops::softmax_xent_backward(probs.data(), labels.data(), 1.0, dlogits.data(), n, classes);
  CHECK(fd_max_rel_err(logits, dlogits, objective, rng, /*probes=*/8) < kTol);
}
