#include <cmath>

#include "doctest.h"

#include "mergelab/models.hpp"
#include "mergelab/rng.hpp"

using namespace mergelab;
using namespace mergelab::models;

TEST_CASE("slim resnet head covers all classes at the final width") {
  ArchConfig cfg{ArchName::slim_resnet18, 100, 20};
  nn::ParamSet ps = build_params(cfg, 1);
  const nn::Tensor* head = ps.find("head.weight");
  REQUIRE(head != nullptr);
  CHECK(head->shape == std::vector<std::int64_t>{100, 160});
  CHECK(ps.find("head.bias")->shape == std::vector<std::int64_t>{100});
  CHECK(ps.find("stem.conv.weight")->shape == std::vector<std::int64_t>{20, 3, 3, 3});
  // downsample shortcut exists exactly where stride or width changes
  CHECK(ps.find("stage1.block0.down.conv.weight") == nullptr);
  CHECK(ps.find("stage2.block0.down.conv.weight") != nullptr);
  CHECK(ps.find("stage2.block1.down.conv.weight") == nullptr);
}

TEST_CASE("identical config and seed build bit-identical parameters") {
  ArchConfig cfg{ArchName::slim_resnet18, 100, 20};
  nn::ParamSet a = build_params(cfg, 42);
  nn::ParamSet b = build_params(cfg, 42);
  CHECK(a.same_values(b));
  nn::ParamSet c = build_params(cfg, 43);
  CHECK(a.same_layout(c));
  CHECK_FALSE(a.same_values(c));
}

TEST_CASE("parameter name order is architecture-determined") {
  ArchConfig cfg{ArchName::tiny_convnet, 10, 8};
  nn::ParamSet a = build_params(cfg, 1);
  nn::ParamSet b = build_params(cfg, 999);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].tensor.shape == b[i].tensor.shape);
  }
}

TEST_CASE("tiny convnet forward yields the right logit shape") {
  ArchConfig cfg{ArchName::tiny_convnet, 10, 8};
  Model model = build_model(cfg, 5);
  Pcg32 rng(2, 2);
  nn::Tensor batch = nn::Tensor::zeros({4, 3, 32, 32});
  for (float& v : batch.data) v = rng.uniform_float();
  nn::Tape tape;
  const nn::Tensor& logits = model.forward(tape, batch).val();
  CHECK(logits.shape == std::vector<std::int64_t>{4, 10});
  CHECK(logits.all_finite());
}

TEST_CASE("slim resnet forward yields the right logit shape") {
  ArchConfig cfg{ArchName::slim_resnet18, 100, 20};
  Model model = build_model(cfg, 5);
  Pcg32 rng(3, 2);
  nn::Tensor batch = nn::Tensor::zeros({2, 3, 32, 32});
  for (float& v : batch.data) v = rng.uniform_float();
  nn::Tape tape;
  const nn::Tensor& logits = model.forward(tape, batch).val();
  CHECK(logits.shape == std::vector<std::int64_t>{2, 100});
  CHECK(logits.all_finite());
}

TEST_CASE("fresh model sits at chance-level cross entropy") {
  ArchConfig cfg{ArchName::tiny_convnet, 10, 8};
  Model model = build_model(cfg, 11);
  Pcg32 rng(4, 2);
  const std::int64_t n = 200;
  nn::Tensor batch = nn::Tensor::zeros({n, 3, 32, 32});
  for (float& v : batch.data) v = rng.uniform_float();
  std::vector<std::int32_t> labels(n);
  for (std::int64_t i = 0; i < n; ++i) labels[i] = static_cast<std::int32_t>(i % 10);

  nn::Tape tape;
  nn::Value logits = model.forward(tape, batch);
  nn::Value loss = tape.cross_entropy(logits, labels);
  const double ln_c = std::log(10.0);
  CHECK(loss.val().data[0] > 0.95 * ln_c);
  CHECK(loss.val().data[0] < 1.05 * ln_c);
}

TEST_CASE("arch config validation") {
  CHECK_THROWS_AS(arch_name_from_string("resnet50"), Error);
  ArchConfig bad{ArchName::tiny_convnet, 1, 8};
  CHECK_THROWS_AS(bad.validate(), Error);
  ArchConfig narrow{ArchName::tiny_convnet, 10, 2};
  CHECK_THROWS_AS(narrow.validate(), Error);
  CHECK(arch_name_from_string("slim_resnet18") == ArchName::slim_resnet18);
  CHECK(arch_name_to_string(ArchName::tiny_convnet) == "tiny_convnet");
}

TEST_CASE("default widths") {
  ArchConfig r{ArchName::slim_resnet18, 100, 0};
  CHECK(r.effective_base_width() == 20);
  ArchConfig t{ArchName::tiny_convnet, 10, 0};
  CHECK(t.effective_base_width() == 8);
}

TEST_CASE("forward rejects wrong input shapes") {
  ArchConfig cfg{ArchName::tiny_convnet, 10, 8};
  Model model = build_model(cfg, 5);
  nn::Tape tape;
  CHECK_THROWS_AS(model.forward(tape, nn::Tensor::zeros({4, 1, 32, 32})), Error);
  nn::Tape tape2;
  CHECK_THROWS_AS(model.forward(tape2, nn::Tensor::zeros({4, 3, 16, 16})), Error);
}
