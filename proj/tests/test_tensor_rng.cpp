#include "doctest.h"

#include "mergelab/rng.hpp"
#include "mergelab/tensor.hpp"

using namespace mergelab;
using nn::ParamSet;
using nn::Tensor;

TEST_CASE("tensor shape/data invariant") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, {1, 2}), Error);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), Error);
  CHECK(Tensor::zeros({4}).all_finite());
}

TEST_CASE("param set uniqueness and counting") {
  ParamSet ps;
  ps.add("a", Tensor::zeros({2, 2}));
  ps.add("b", Tensor::zeros({3}));
  CHECK(ps.total_count() == 7);
  CHECK(ps.find("a") != nullptr);
  CHECK(ps.find("missing") == nullptr);
  CHECK_THROWS_AS(ps.add("a", Tensor::zeros({1})), Error);
}

TEST_CASE("param set layout and value comparison") {
  ParamSet a, b;
  a.add("w", Tensor({2}, {1.0f, 2.0f}));
  b.add("w", Tensor({2}, {1.0f, 2.0f}));
  CHECK(a.same_layout(b));
  CHECK(a.same_values(b));
  b[0].tensor.data[1] = 2.5f;
  CHECK(a.same_layout(b));
  CHECK_FALSE(a.same_values(b));
}

TEST_CASE("pcg32 streams are reproducible and seed-sensitive") {
  Pcg32 a(42, 1), b(42, 1), c(43, 1);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u32() == b.next_u32());
  }
  bool any_diff = false;
  Pcg32 a2(42, 1);
  for (int i = 0; i < 100; ++i) {
    any_diff |= (a2.next_u32() != c.next_u32());
  }
  CHECK(any_diff);
}

TEST_CASE("uniform draws stay in range") {
  Pcg32 rng(7, 2);
  for (int i = 0; i < 1000; ++i) {
    const float f = rng.uniform_float();
    CHECK(f >= 0.0f);
    CHECK(f < 1.0f);
    const double d = rng.uniform_double();
    CHECK(d >= 0.0);
    CHECK(d < 1.0);
    CHECK(rng.uniform_int(7) < 7u);
  }
}

TEST_CASE("shuffle is a permutation") {
  Pcg32 rng(99, 5);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  std::vector<bool> seen(50, false);
  for (int x : v) {
    CHECK(!seen[x]);
    seen[x] = true;
  }
}

TEST_CASE("fnv1a64 detects single byte changes") {
  std::vector<unsigned char> buf(256);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<unsigned char>(i);
  Fnv1a64 h1;
  h1.update(buf.data(), buf.size());
  buf[100] ^= 0x40;
  Fnv1a64 h2;
  h2.update(buf.data(), buf.size());
  CHECK(h1.digest() != h2.digest());
  CHECK(to_hex(h1.digest()).size() == 16);
}
