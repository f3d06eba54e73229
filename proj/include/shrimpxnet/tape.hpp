#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "shrimpxnet/kernels.hpp"
#include "shrimpxnet/tensor.hpp"

namespace sxn {

// Define-by-run reverse-mode tape. Ops compute their value eagerly and
// record a closure that routes the incoming gradient to their parents.
// Node ids are creation-ordered, so a reverse id sweep is a topological
// backward pass. Everything is sequential apart from the kernels' own
// deterministic intra-op parallelism, which makes replays bit-identical.
template <typename T>
class Tape {
 public:
  struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Var leaf(Tensor<T> value, bool requires_grad = false) {
    return add_node(std::move(value), requires_grad, nullptr);
  }

  const Tensor<T>& value(Var v) const { return nodes_[check(v)].value; }

  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

  // Gradient of the last backward()'s loss with respect to v; zeros if v
  // did not participate.
  Tensor<T> grad(Var v) const {
    const std::size_t id = check(v);
    if (id < grads_.size() && !grads_[id].empty()) return grads_[id];
    return Tensor<T>(nodes_[id].value.shape());
  }

  Var conv2d(Var x, Var kernel, Var bias, const Conv2dSpec& sp) {
    Tensor<T> out = conv2d_forward(value(x), value(kernel), value(bias), sp);
    check_finite(out, "conv2d");
    const std::int32_t xi = x.id, ki = kernel.id, bi = bias.id;
    return add_node(std::move(out), any_grad({x, kernel, bias}),
                    [xi, ki, bi, sp](Tape& t, const Tensor<T>& g) {
                      const bool need_dx = t.id_requires_grad(xi);
                      const bool need_dk = t.id_requires_grad(ki);
                      auto grads = conv2d_backward(t.id_value(xi), t.id_value(ki), g, sp,
                                                   need_dx, need_dk);
                      if (need_dx) t.accumulate(xi, std::move(grads.dx));
                      if (need_dk) t.accumulate(ki, std::move(grads.dkernel));
                      if (t.id_requires_grad(bi)) t.accumulate(bi, std::move(grads.dbias));
                    });
  }

  Var relu(Var x) {
    Tensor<T> out = relu_forward(value(x));
    const std::int32_t xi = x.id;
    return add_node(std::move(out), any_grad({x}), [xi](Tape& t, const Tensor<T>& g) {
      if (t.id_requires_grad(xi)) t.accumulate(xi, relu_backward(t.id_value(xi), g));
    });
  }

  Var maxpool(Var x, std::int64_t pool) {
    auto [out, argmax] = maxpool_forward(value(x), pool);
    const std::int32_t xi = x.id;
    const Shape xshape = value(x).shape();
    return add_node(std::move(out), any_grad({x}),
                    [xi, xshape, argmax = std::move(argmax)](Tape& t, const Tensor<T>& g) {
                      if (t.id_requires_grad(xi)) {
                        t.accumulate(xi, maxpool_backward(g, argmax, xshape));
                      }
                    });
  }

  Var global_avg_pool(Var x) {
    const std::int64_t h = value(x).dim(2), w = value(x).dim(3);
    Tensor<T> out = gap_forward(value(x));
    const std::int32_t xi = x.id;
    return add_node(std::move(out), any_grad({x}), [xi, h, w](Tape& t, const Tensor<T>& g) {
      if (t.id_requires_grad(xi)) t.accumulate(xi, gap_backward(g, h, w));
    });
  }

  Var dense(Var x, Var weight, Var bias) {
    Tensor<T> out = dense_forward(value(x), value(weight), value(bias));
    check_finite(out, "dense");
    const std::int32_t xi = x.id, wi = weight.id, bi = bias.id;
    return add_node(std::move(out), any_grad({x, weight, bias}),
                    [xi, wi, bi](Tape& t, const Tensor<T>& g) {
                      const bool need_dx = t.id_requires_grad(xi);
                      const bool need_dw = t.id_requires_grad(wi);
                      auto grads = dense_backward(t.id_value(xi), t.id_value(wi), g,
                                                  need_dx, need_dw);
                      if (need_dx) t.accumulate(xi, std::move(grads.dx));
                      if (need_dw) t.accumulate(wi, std::move(grads.dw));
                      if (t.id_requires_grad(bi)) t.accumulate(bi, std::move(grads.db));
                    });
  }

  // Inference mode and rate 0 are exact identities (the input var itself).
  Var dropout(Var x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) {
      throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return x;
    Tensor<T> mask = dropout_mask<T>(value(x).shape(), rate, rng);
    Tensor<T> out(value(x).shape());
    const Tensor<T>& xv = value(x);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
    const std::int32_t xi = x.id;
    return add_node(std::move(out), any_grad({x}),
                    [xi, mask = std::move(mask)](Tape& t, const Tensor<T>& g) {
                      if (!t.id_requires_grad(xi)) return;
                      Tensor<T> gx(g.shape());
                      for (std::int64_t i = 0; i < g.size(); ++i) gx[i] = g[i] * mask[i];
                      t.accumulate(xi, std::move(gx));
                    });
  }

  Var softmax(Var logits) {
    Tensor<T> out = softmax_forward(value(logits));
    check_finite(out, "softmax");
    const std::int32_t xi = logits.id;
    Var v = add_node(std::move(out), any_grad({logits}), nullptr);
    const std::int32_t oi = v.id;
    nodes_[static_cast<std::size_t>(oi)].backprop = [xi, oi](Tape& t, const Tensor<T>& g) {
      if (t.id_requires_grad(xi)) t.accumulate(xi, softmax_backward(t.id_value(oi), g));
    };
    return v;
  }

  Var cross_entropy(Var probs, Tensor<T> targets) {
    const T loss = cross_entropy_forward(value(probs), targets);
    if (!std::isfinite(static_cast<double>(loss))) {
      throw NumericError("cross_entropy produced a non-finite loss");
    }
    const std::int32_t pi = probs.id;
    return add_node(Tensor<T>::scalar(loss), any_grad({probs}),
                    [pi, targets = std::move(targets)](Tape& t, const Tensor<T>& g) {
                      if (!t.id_requires_grad(pi)) return;
                      Tensor<T> gp = cross_entropy_backward(t.id_value(pi), targets);
                      if (g[0] != T(1)) {
                        for (std::int64_t i = 0; i < gp.size(); ++i) gp[i] *= g[0];
                      }
                      t.accumulate(pi, std::move(gp));
                    });
  }

  Var sum(Var x) {
    const Tensor<T>& xv = value(x);
    T acc(0);
    for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
    const std::int32_t xi = x.id;
    const Shape xshape = xv.shape();
    return add_node(Tensor<T>::scalar(acc), any_grad({x}),
                    [xi, xshape](Tape& t, const Tensor<T>& g) {
                      if (t.id_requires_grad(xi)) t.accumulate(xi, Tensor<T>::full(xshape, g[0]));
                    });
  }

  Var scale(Var x, T factor) {
    Tensor<T> out(value(x).shape());
    const Tensor<T>& xv = value(x);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = factor * xv[i];
    const std::int32_t xi = x.id;
    return add_node(std::move(out), any_grad({x}), [xi, factor](Tape& t, const Tensor<T>& g) {
      if (!t.id_requires_grad(xi)) return;
      Tensor<T> gx(g.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) gx[i] = factor * g[i];
      t.accumulate(xi, std::move(gx));
    });
  }

  // Selects one element of a rank-2 node as a scalar; used to seed a
  // backward pass from a single class logit.
  Var pick(Var x, std::int64_t row, std::int64_t col) {
    const Tensor<T>& xv = value(x);
    if (xv.rank() != 2 || row < 0 || row >= xv.dim(0) || col < 0 || col >= xv.dim(1)) {
      throw ShapeError("pick(" + std::to_string(row) + "," + std::to_string(col) +
                       ") out of range for " + shape_str(xv.shape()));
    }
    const std::int32_t xi = x.id;
    const Shape xshape = xv.shape();
    return add_node(Tensor<T>::scalar(xv.at2(row, col)), any_grad({x}),
                    [xi, xshape, row, col](Tape& t, const Tensor<T>& g) {
                      if (!t.id_requires_grad(xi)) return;
                      Tensor<T> gx(xshape);
                      gx.at2(row, col) = g[0];
                      t.accumulate(xi, std::move(gx));
                    });
  }

  // Reverse-mode sweep from a scalar loss. Gradients from any previous
  // backward() are discarded first.
  void backward(Var loss) {
    const std::size_t id = check(loss);
    if (nodes_[id].value.size() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " +
                       shape_str(nodes_[id].value.shape()));
    }
    grads_.clear();
    grads_.resize(nodes_.size());
    grads_[id] = Tensor<T>::scalar(T(1));
    for (std::int64_t i = static_cast<std::int64_t>(id); i >= 0; --i) {
      const std::size_t u = static_cast<std::size_t>(i);
      if (grads_[u].empty() || !nodes_[u].requires_grad || !nodes_[u].backprop) continue;
      nodes_[u].backprop(*this, grads_[u]);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    std::function<void(Tape&, const Tensor<T>&)> backprop;
  };

  std::size_t check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw Error("invalid tape variable");
    }
    return static_cast<std::size_t>(v.id);
  }

  bool any_grad(std::initializer_list<Var> vars) const {
    for (Var v : vars) {
      if (nodes_[check(v)].requires_grad) return true;
    }
    return false;
  }

  Var add_node(Tensor<T> value, bool requires_grad,
               std::function<void(Tape&, const Tensor<T>&)> backprop) {
    nodes_.push_back(Node{std::move(value), requires_grad, std::move(backprop)});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  const Tensor<T>& id_value(std::int32_t id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
  }

  bool id_requires_grad(std::int32_t id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

  void accumulate(std::int32_t id, Tensor<T>&& g) {
    Tensor<T>& slot = grads_[static_cast<std::size_t>(id)];
    if (slot.empty()) {
      slot = std::move(g);
      return;
    }
    for (std::int64_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
};

}  // namespace sxn
