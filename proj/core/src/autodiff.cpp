#include "mergelab/autodiff.hpp"

#include <utility>

#include "mergelab/ops.hpp"

namespace mergelab::nn {

const Tensor& Value::val() const { return tape->value(*this); }
const Tensor& Value::grad() const { return tape->grad(*this); }

Value Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&, Node&)> backprop) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Value{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Value Tape::constant(Tensor t) { return push(std::move(t), false, nullptr); }

Value Tape::leaf(Tensor t) { return push(std::move(t), true, nullptr); }

const Tensor& Tape::grad(Value v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.data.empty()) {
    raise(ErrorKind::structure, "gradient requested for a node backward() never reached");
  }
  return n.grad;
}

Tensor& Tape::ensure_grad(std::int32_t id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) {
    n.grad = Tensor::zeros(n.value.shape);
  }
  return n.grad;
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) raise(ErrorKind::structure, msg);
}

}  // namespace

Value Tape::conv2d(Value x, Value w, std::int64_t stride, std::int64_t pad) {
  const Tensor& xt = value(x);
  const Tensor& wt = value(w);
  require(xt.rank() == 4, "conv2d: input must be [n,c,h,w], got " + shape_to_string(xt.shape));
  require(wt.rank() == 4, "conv2d: weight must be [out,in,kh,kw], got " + shape_to_string(wt.shape));
  require(xt.dim(1) == wt.dim(1), "conv2d: input channels " + std::to_string(xt.dim(1)) +
                                      " != weight channels " + std::to_string(wt.dim(1)));
  ops::Conv2dDims d;
  d.n = xt.dim(0);
  d.c_in = xt.dim(1);
  d.h_in = xt.dim(2);
  d.w_in = xt.dim(3);
  d.c_out = wt.dim(0);
  d.kh = wt.dim(2);
  d.kw = wt.dim(3);
  d.stride = stride;
  d.pad = pad;
  require(d.h_out() >= 1 && d.w_out() >= 1, "conv2d: output would be empty");

  Tensor out = Tensor::zeros({d.n, d.c_out, d.h_out(), d.w_out()});
  ops::conv2d_forward(xt.ptr(), wt.ptr(), out.ptr(), d);

  bool ng = needs_grad(x) || needs_grad(w);
  std::function<void(Tape&, Node&)> bp;
  if (ng) {
    bp = [x, w, d](Tape& tape, Node& self) {
      const Tensor& xt2 = tape.value(x);
      const Tensor& wt2 = tape.value(w);
      float* dx = tape.needs_grad(x) ? tape.ensure_grad(x.id).ptr() : nullptr;
      float* dw = tape.needs_grad(w) ? tape.ensure_grad(w.id).ptr() : nullptr;
      ops::conv2d_backward(xt2.ptr(), wt2.ptr(), self.grad.ptr(), dx, dw, d);
    };
  }
  return push(std::move(out), ng, std::move(bp));
}

Value Tape::group_norm(Value x, Value gamma, Value beta, std::int64_t num_groups, float eps) {
  const Tensor& xt = value(x);
  const Tensor& gt = value(gamma);
  const Tensor& bt = value(beta);
  require(xt.rank() == 4, "group_norm: input must be [n,c,h,w], got " + shape_to_string(xt.shape));
  require(gt.size() == xt.dim(1) && bt.size() == xt.dim(1),
          "group_norm: gamma/beta must have one value per channel");
  const std::int64_t n = xt.dim(0), c = xt.dim(1), h = xt.dim(2), w = xt.dim(3);

  Tensor out = Tensor::zeros(xt.shape);
  Tensor mean = Tensor::zeros({n, num_groups});
  Tensor istd = Tensor::zeros({n, num_groups});
  ops::group_norm_forward(xt.ptr(), gt.ptr(), bt.ptr(), out.ptr(), n, c, h, w, num_groups, eps,
                          mean.ptr(), istd.ptr());

  bool ng = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
  std::function<void(Tape&, Node&)> bp;
  if (ng) {
    bp = [x, gamma, beta, num_groups, n, c, h, w, mean = std::move(mean),
          istd = std::move(istd)](Tape& tape, Node& self) {
      const Tensor& xt2 = tape.value(x);
      const Tensor& gt2 = tape.value(gamma);
      float* dx = tape.needs_grad(x) ? tape.ensure_grad(x.id).ptr() : nullptr;
      float* dg = nullptr;
      float* db = nullptr;
      if (tape.needs_grad(gamma)) dg = tape.ensure_grad(gamma.id).ptr();
      if (tape.needs_grad(beta)) db = tape.ensure_grad(beta.id).ptr();
      ops::group_norm_backward(xt2.ptr(), gt2.ptr(), mean.ptr(), istd.ptr(), self.grad.ptr(), dx,
                               dg, db, n, c, h, w, num_groups);
    };
  }
  return push(std::move(out), ng, std::move(bp));
}

Value Tape::relu(Value x) {
  const Tensor& xt = value(x);
  Tensor out = Tensor::zeros(xt.shape);
  ops::relu_forward(xt.ptr(), out.ptr(), xt.size());
  bool ng = needs_grad(x);
  std::function<void(Tape&, Node&)> bp;
  if (ng) {
    bp = [x](Tape& tape, Node& self) {
      const Tensor& xt2 = tape.value(x);
      ops::relu_backward(xt2.ptr(), self.grad.ptr(), tape.ensure_grad(x.id).ptr(), xt2.size());
    };
  }
  return push(std::move(out), ng, std::move(bp));
}

Value Tape::avg_pool(Value x, std::int64_t k) {
  const Tensor& xt = value(x);
  require(xt.rank() == 4, "avg_pool: input must be [n,c,h,w]");
  const std::int64_t n = xt.dim(0), c = xt.dim(1), h = xt.dim(2), w = xt.dim(3);
  require(h % k == 0 && w % k == 0, "avg_pool: " + std::to_string(h) + "x" + std::to_string(w) +
                                        " not divisible by " + std::to_string(k));
  Tensor out = Tensor::zeros({n, c, h / k, w / k});
  ops::avgpool_forward(xt.ptr(), out.ptr(), n, c, h, w, k);
  bool ng = needs_grad(x);
  std::function<void(Tape&, Node&)> bp;
  if (ng) {
    bp = [x, n, c, h, w, k](Tape& tape, Node& self) {
      ops::avgpool_backward(self.grad.ptr(), tape.ensure_grad(x.id).ptr(), n, c, h, w, k);
    };
  }
  return push(std::move(out), ng, std::move(bp));
}

Value Tape::global_avg_pool(Value x) {
  const Tensor& xt = value(x);
  require(xt.rank() == 4 && xt.dim(2) == xt.dim(3), "global_avg_pool: input must be [n,c,s,s]");
  Value pooled = avg_pool(x, xt.dim(2));
  // Reshape [n,c,1,1] -> [n,c] without copying semantics the tape cares about.
  Node& node = nodes_[pooled.id];
  node.value.shape = {xt.dim(0), xt.dim(1)};
  return pooled;
}

Value Tape::linear(Value x, Value w, Value b) {
  const Tensor& xt = value(x);
  const Tensor& wt = value(w);
  const Tensor& bt = value(b);
  require(xt.rank() == 2, "linear: input must be [n,features], got " + shape_to_string(xt.shape));
  require(wt.rank() == 2 && wt.dim(1) == xt.dim(1),
          "linear: weight " + shape_to_string(wt.shape) + " incompatible with input " +
              shape_to_string(xt.shape));
  require(bt.size() == wt.dim(0), "linear: bias length must match output features");
  const std::int64_t n = xt.dim(0), in = xt.dim(1), out_f = wt.dim(0);
  Tensor out = Tensor::zeros({n, out_f});
  ops::linear_forward(xt.ptr(), wt.ptr(), bt.ptr(), out.ptr(), n, in, out_f);
  bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
  std::function<void(Tape&, Node&)> bp;
  if (ng) {
    bp = [x, w, b, n, in, out_f](Tape& tape, Node& self) {
      const Tensor& xt2 = tape.value(x);
      const Tensor& wt2 = tape.value(w);
      float* dx = tape.needs_grad(x) ? tape.ensure_grad(x.id).ptr() : nullptr;
      float* dw = tape.needs_grad(w) ? tape.ensure_grad(w.id).ptr() : nullptr;
      float* db = tape.needs_grad(b) ? tape.ensure_grad(b.id).ptr() : nullptr;
      ops::linear_backward(xt2.ptr(), wt2.ptr(), self.grad.ptr(), dx, dw, db, n, in, out_f);
    };
  }
  return push(std::move(out), ng, std::move(bp));
}

Value Tape::add(Value a, Value b) {
  const Tensor& at = value(a);
  const Tensor& bt = value(b);
  require(at.shape == bt.shape, "add: shape mismatch " + shape_to_string(at.shape) + " vs " +
                                    shape_to_string(bt.shape));
  Tensor out = Tensor::zeros(at.shape);
  ops::add_forward(at.ptr(), bt.ptr(), out.ptr(), at.size());
  bool ng = needs_grad(a) || needs_grad(b);
  std::function<void(Tape&, Node&)> bp;
  if (ng) {
    bp = [a, b](Tape& tape, Node& self) {
      const std::int64_t n = self.value.size();
      if (tape.needs_grad(a)) {
        float* da = tape.ensure_grad(a.id).ptr();
        for (std::int64_t i = 0; i < n; ++i) da[i] += self.grad.data[i];
      }
      if (tape.needs_grad(b)) {
        float* db = tape.ensure_grad(b.id).ptr();
        for (std::int64_t i = 0; i < n; ++i) db[i] += self.grad.data[i];
      }
    };
  }
  return push(std::move(out), ng, std::move(bp));
}

Value Tape::cross_entropy(Value logits, std::span<const std::int32_t> labels) {
  const Tensor& lt = value(logits);
  require(lt.rank() == 2, "cross_entropy: logits must be [batch, classes]");
  require(static_cast<std::int64_t>(labels.size()) == lt.dim(0),
          "cross_entropy: batch " + std::to_string(lt.dim(0)) + " but " +
              std::to_string(labels.size()) + " labels");
  const std::int64_t n = lt.dim(0), classes = lt.dim(1);
  Tensor probs = Tensor::zeros(lt.shape);
  std::vector<std::int32_t> labels_copy(labels.begin(), labels.end());
  double loss = ops::softmax_xent_forward(lt.ptr(), labels_copy.data(), n, classes, probs.ptr());
  Tensor out({1}, {static_cast<float>(loss)});
  bool ng = needs_grad(logits);
  std::function<void(Tape&, Node&)> bp;
  if (ng) {
    bp = [logits, n, classes, probs = std::move(probs),
          labels_copy = std::move(labels_copy)](Tape& tape, Node& self) {
      ops::softmax_xent_backward(probs.ptr(), labels_copy.data(), self.grad.data[0],
                                 tape.ensure_grad(logits.id).ptr(), n, classes);
    };
  }
  return push(std::move(out), ng, std::move(bp));
}

void Tape::backward(Value root) {
  if (root.tape != this) raise(ErrorKind::structure, "backward: value belongs to another tape");
  Node& r = nodes_[root.id];
  if (r.value.size() != 1) {
    raise(ErrorKind::structure, "backward: root must be scalar, got " + shape_to_string(r.value.shape));
  }
  ensure_grad(root.id).data[0] = 1.0f;
  for (std::int32_t id = root.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.needs_grad || !node.backprop) continue;
    if (node.grad.data.empty()) continue;  // not reachable from root
    node.backprop(*this, node);
  }
}

}  // namespace mergelab::nn
