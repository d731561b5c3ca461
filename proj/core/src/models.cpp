#include "mergelab/models.hpp"

#include <cmath>

#include "mergelab/rng.hpp"

namespace mergelab::models {

namespace {

constexpr float kGroupNormEps = 1e-5f;

std::int64_t fan_in(const std::vector<std::int64_t>& shape) {
  // conv [out,in,kh,kw] -> in*kh*kw; linear [out,in] -> in
  std::int64_t f = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) f *= shape[i];
  return f;
}

// Parameter creation order defines ParamSet order, which in turn defines the
// flat merge layout; both architectures register parameters stem -> stages ->
// head.
class ParamBuilder {
public:
  explicit ParamBuilder(Pcg32& rng) : rng_(rng) {}

  void weight(nn::ParamSet& ps, const std::string& name, std::vector<std::int64_t> shape) {
    nn::Tensor t = nn::Tensor::zeros(std::move(shape));
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in(t.shape)));
    for (float& v : t.data) v = rng_.uniform_float(-bound, bound);
    ps.add(name, std::move(t));
  }

  void norm(nn::ParamSet& ps, const std::string& prefix, std::int64_t channels) {
    ps.add(prefix + ".gamma", nn::Tensor::full({channels}, 1.0f));
    ps.add(prefix + ".beta", nn::Tensor::zeros({channels}));
  }

  void bias(nn::ParamSet& ps, const std::string& name, std::int64_t n) {
    ps.add(name, nn::Tensor::zeros({n}));
  }

private:
  Pcg32& rng_;
};

struct ResnetShape {
  std::int64_t w;                   // base width
  std::int64_t widths[4];           // per stage
  std::int64_t strides[4] = {1, 2, 2, 2};

  explicit ResnetShape(std::int64_t base) : w(base), widths{base, 2 * base, 4 * base, 8 * base} {}
};

void build_resnet_params(nn::ParamSet& ps, const ArchConfig& cfg, ParamBuilder& b) {
  const ResnetShape rs(cfg.effective_base_width());
  b.weight(ps, "stem.conv.weight", {rs.w, kInputChannels, 3, 3});
  b.norm(ps, "stem.norm", rs.w);
  std::int64_t in_ch = rs.w;
  for (int s = 0; s < 4; ++s) {
    const std::int64_t out_ch = rs.widths[s];
    for (int blk = 0; blk < 2; ++blk) {
      const std::string p = "stage" + std::to_string(s + 1) + ".block" + std::to_string(blk);
      const std::int64_t stride = (blk == 0) ? rs.strides[s] : 1;
      b.weight(ps, p + ".conv1.weight", {out_ch, in_ch, 3, 3});
      b.norm(ps, p + ".norm1", out_ch);
      b.weight(ps, p + ".conv2.weight", {out_ch, out_ch, 3, 3});
      b.norm(ps, p + ".norm2", out_ch);
      if (stride != 1 || in_ch != out_ch) {
        b.weight(ps, p + ".down.conv.weight", {out_ch, in_ch, 1, 1});
        b.norm(ps, p + ".down.norm", out_ch);
      }
      in_ch = out_ch;
    }
  }
  b.weight(ps, "head.weight", {cfg.num_classes, rs.widths[3]});
  b.bias(ps, "head.bias", cfg.num_classes);
}

void build_convnet_params(nn::ParamSet& ps, const ArchConfig& cfg, ParamBuilder& b) {
  const std::int64_t w = cfg.effective_base_width();
  const std::int64_t widths[3] = {w, 2 * w, 4 * w};
  std::int64_t in_ch = kInputChannels;
  for (int s = 0; s < 3; ++s) {
    const std::string p = "stage" + std::to_string(s + 1) + ".block0";
    b.weight(ps, p + ".conv.weight", {widths[s], in_ch, 3, 3});
    b.norm(ps, p + ".norm", widths[s]);
    in_ch = widths[s];
  }
  b.weight(ps, "head.weight", {cfg.num_classes, widths[2]});
  b.bias(ps, "head.bias", cfg.num_classes);
}

// Pulls parameters off the tape in ParamSet order; build_* and forward wiring
// must agree on that order exactly.
class ParamCursor {
public:
  ParamCursor(nn::Tape& tape, const nn::ParamSet& params, bool trainable,
              std::vector<nn::Value>& out)
      : tape_(tape), params_(params), trainable_(trainable), out_(out) {}

  nn::Value next(const std::string& expect) {
    if (index_ >= params_.size()) {
      raise(ErrorKind::structure, "forward wiring expects parameter '" + expect + "' past the end");
    }
    const auto& entry = params_[index_++];
    if (entry.name != expect) {
      raise(ErrorKind::structure,
            "forward wiring expects parameter '" + expect + "', found '" + entry.name + "'");
    }
    nn::Value v = trainable_ ? tape_.leaf(entry.tensor) : tape_.constant(entry.tensor);
    out_.push_back(v);
    return v;
  }

  void finish() const {
    if (index_ != params_.size()) {
      raise(ErrorKind::structure, "forward wiring consumed " + std::to_string(index_) + " of " +
                                      std::to_string(params_.size()) + " parameters");
    }
  }

private:
  nn::Tape& tape_;
  const nn::ParamSet& params_;
  bool trainable_;
  std::vector<nn::Value>& out_;
  std::size_t index_ = 0;
};

nn::Value conv_norm(nn::Tape& t, ParamCursor& c, nn::Value x, const std::string& conv_name,
                    const std::string& norm_name, std::int64_t stride, std::int64_t pad) {
  nn::Value w = c.next(conv_name + ".weight");
  nn::Value y = t.conv2d(x, w, stride, pad);
  nn::Value gamma = c.next(norm_name + ".gamma");
  nn::Value beta = c.next(norm_name + ".beta");
  return t.group_norm(y, gamma, beta, /*num_groups=*/1, kGroupNormEps);
}

nn::Value resnet_forward(nn::Tape& t, const ArchConfig& cfg, ParamCursor& c, nn::Value x) {
  const ResnetShape rs(cfg.effective_base_width());
  nn::Value h = t.relu(conv_norm(t, c, x, "stem.conv", "stem.norm", 1, 1));
  std::int64_t in_ch = rs.w;
  for (int s = 0; s < 4; ++s) {
    const std::int64_t out_ch = rs.widths[s];
    for (int blk = 0; blk < 2; ++blk) {
      const std::string p = "stage" + std::to_string(s + 1) + ".block" + std::to_string(blk);
      const std::int64_t stride = (blk == 0) ? rs.strides[s] : 1;
      nn::Value y = t.relu(conv_norm(t, c, h, p + ".conv1", p + ".norm1", stride, 1));
      y = conv_norm(t, c, y, p + ".conv2", p + ".norm2", 1, 1);
      nn::Value shortcut = h;
      if (stride != 1 || in_ch != out_ch) {
        shortcut = conv_norm(t, c, h, p + ".down.conv", p + ".down.norm", stride, 0);
      }
      h = t.relu(t.add(y, shortcut));
      in_ch = out_ch;
    }
  }
  h = t.global_avg_pool(h);
  return t.linear(h, c.next("head.weight"), c.next("head.bias"));
}

nn::Value convnet_forward(nn::Tape& t, const ArchConfig& cfg, ParamCursor& c, nn::Value x) {
  nn::Value h = x;
  for (int s = 0; s < 3; ++s) {
    const std::string p = "stage" + std::to_string(s + 1) + ".block0";
    h = t.relu(conv_norm(t, c, h, p + ".conv", p + ".norm", 1, 1));
    h = t.avg_pool(h, 2);
  }
  h = t.global_avg_pool(h);
  return t.linear(h, c.next("head.weight"), c.next("head.bias"));
}

}  // namespace

std::string arch_name_to_string(ArchName a) {
  switch (a) {
    case ArchName::slim_resnet18: return "slim_resnet18";
    case ArchName::tiny_convnet: return "tiny_convnet";
  }
  raise(ErrorKind::config, "unknown architecture enum value");
}

ArchName arch_name_from_string(const std::string& s) {
  if (s == "slim_resnet18") return ArchName::slim_resnet18;
  if (s == "tiny_convnet") return ArchName::tiny_convnet;
  raise(ErrorKind::config, "unknown architecture '" + s + "' (expected slim_resnet18 or tiny_convnet)");
}

std::int64_t ArchConfig::effective_base_width() const {
  if (base_width > 0) return base_width;
  return arch == ArchName::slim_resnet18 ? 20 : 8;
}

void ArchConfig::validate() const {
  if (num_classes < 2) raise(ErrorKind::config, "arch: num_classes must be >= 2");
  if (effective_base_width() < 4) raise(ErrorKind::config, "arch: base_width must be >= 4");
}

nn::ParamSet build_params(const ArchConfig& cfg, std::uint64_t init_seed) {
  cfg.validate();
  Pcg32 rng(mix_seed(init_seed, 0x1217ULL), /*stream=*/0x632d);
  ParamBuilder b(rng);
  nn::ParamSet ps;
  if (cfg.arch == ArchName::slim_resnet18) {
    build_resnet_params(ps, cfg, b);
  } else {
    build_convnet_params(ps, cfg, b);
  }
  return ps;
}

ForwardBinding bind_forward(nn::Tape& tape, const ArchConfig& arch, const nn::ParamSet& params,
                            nn::Tensor images, bool trainable) {
  arch.validate();
  if (images.rank() != 4 || images.dim(1) != kInputChannels || images.dim(2) != kInputSize ||
      images.dim(3) != kInputSize) {
    raise(ErrorKind::structure,
          "forward: expected [n,3,32,32] input batch, got " + shape_to_string(images.shape));
  }
  ForwardBinding out;
  out.param_values.reserve(params.size());
  nn::Value x = tape.constant(std::move(images));
  ParamCursor cursor(tape, params, trainable, out.param_values);
  if (arch.arch == ArchName::slim_resnet18) {
    out.logits = resnet_forward(tape, arch, cursor, x);
  } else {
    out.logits = convnet_forward(tape, arch, cursor, x);
  }
  cursor.finish();
  return out;
}

nn::Value Model::forward(nn::Tape& tape, nn::Tensor images, bool trainable) const {
  return bind_forward(tape, cfg, params, std::move(images), trainable).logits;
}

Model build_model(const ArchConfig& cfg, std::uint64_t init_seed) {
  return Model{cfg, build_params(cfg, init_seed)};
}

}  // namespace mergelab::models
