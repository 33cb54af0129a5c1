#pragma once

// Minimal reverse-mode automatic differentiation over dense double arrays.
// Complex quantities are stored as real tensors with a trailing dimension of
// size 2 (re, im), so real-valued losses of complex intermediates get correct
// gradients from plain real chain rule.
//
// Graph nodes are reference counted child -> parent, so a training step's
// intermediates die with the loss tensor. backward() additionally frees the
// value/grad buffers of interior nodes as soon as they are no longer needed.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace nnvme::ad {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// Live buffer counter, used by tests to assert that training steps do not
// leak graph storage.
inline std::atomic<std::int64_t>& live_nodes() {
  static std::atomic<std::int64_t> n{0};
  return n;
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool is_param = false;

  Node() { live_nodes()++; }
  ~Node() { live_nodes()--; }
  Node(const Node&) = delete;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (numel(shape) != static_cast<std::int64_t>(data.size()))
      throw std::invalid_argument("Tensor::leaf: shape/data mismatch");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->is_param = requires_grad;
    return Tensor(n);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)), 0.0);
    return leaf(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(double v) { return leaf({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const { return numel(node_->shape); }
  std::vector<double>& value() const { return node_->value; }
  std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }

  double item() const {
    if (node_->value.size() != 1) throw std::invalid_argument("Tensor::item: not a scalar");
    return node_->value[0];
  }

  // Reverse pass from a scalar. Frees interior node buffers afterwards.
  void backward() const;

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace detail

inline void Tensor::backward() const {
  Node* root = node_.get();
  if (root->value.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  if (!root->requires_grad) return;
  auto order = detail::topo_order(root);
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backward_fn(*n);
    }
    if (!n->is_param && n != root) {
      n->value.clear();
      n->value.shrink_to_fit();
    }
    if (!n->is_param) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

namespace detail {

inline std::shared_ptr<Node> make_node(Shape shape, std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.resize(static_cast<std::size_t>(numel(n->shape)));
  for (auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---- elementwise ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  auto n = detail::make_node(a.shape(), {a.shared(), b.shared()});
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + bv[i];
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      for (int k = 0; k < 2; ++k) {
        Node* p = self.parents[k].get();
        if (!p->requires_grad) continue;
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  return Tensor(n);
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  auto n = detail::make_node(a.shape(), {a.shared(), b.shared()});
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] - bv[i];
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node* pa = self.parents[0].get();
      Node* pb = self.parents[1].get();
      if (pa->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      if (pb->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    };
  return Tensor(n);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  auto n = detail::make_node(a.shape(), {a.shared(), b.shared()});
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * bv[i];
  if (n->requires_grad) {
    // keep copies of operand values; parents' buffers may be freed first
    auto va = std::make_shared<std::vector<double>>(av);
    auto vb = std::make_shared<std::vector<double>>(bv);
    n->backward_fn = [va, vb](Node& self) {
      Node* pa = self.parents[0].get();
      Node* pb = self.parents[1].get();
      if (pa->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa->grad[i] += self.grad[i] * (*vb)[i];
      if (pb->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb->grad[i] += self.grad[i] * (*va)[i];
    };
  }
  return Tensor(n);
}

inline Tensor scale(const Tensor& a, double c) {
  auto n = detail::make_node(a.shape(), {a.shared()});
  const auto& av = a.value();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * c;
  if (n->requires_grad)
    n->backward_fn = [c](Node& self) {
      Node* p = self.parents[0].get();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * c;
    };
  return Tensor(n);
}

inline Tensor add_const(const Tensor& a, double c) {
  auto n = detail::make_node(a.shape(), {a.shared()});
  const auto& av = a.value();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + c;
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node* p = self.parents[0].get();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
  return Tensor(n);
}

// out = a * s, s a scalar tensor (broadcast).
inline Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw std::invalid_argument("scale_by: scale must be scalar");
  auto n = detail::make_node(a.shape(), {a.shared(), s.shared()});
  const double sv = s.value()[0];
  const auto& av = a.value();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * sv;
  if (n->requires_grad) {
    auto va = std::make_shared<std::vector<double>>(av);
    n->backward_fn = [va, sv](Node& self) {
      Node* pa = self.parents[0].get();
      Node* ps = self.parents[1].get();
      if (pa->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * sv;
      if (ps->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * (*va)[i];
        ps->grad[0] += acc;
      }
    };
  }
  return Tensor(n);
}

inline Tensor relu(const Tensor& a) {
  auto n = detail::make_node(a.shape(), {a.shared()});
  const auto& av = a.value();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] > 0.0 ? av[i] : 0.0;
  if (n->requires_grad) {
    auto mask = std::make_shared<std::vector<char>>(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) (*mask)[i] = av[i] > 0.0;
    n->backward_fn = [mask](Node& self) {
      Node* p = self.parents[0].get();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if ((*mask)[i]) p->grad[i] += self.grad[i];
    };
  }
  return Tensor(n);
}

// PReLU with a single learnable slope.
inline Tensor prelu(const Tensor& a, const Tensor& slope) {
  if (slope.size() != 1) throw std::invalid_argument("prelu: slope must be scalar");
  auto n = detail::make_node(a.shape(), {a.shared(), slope.shared()});
  const double s = slope.value()[0];
  const auto& av = a.value();
  for (std::size_t i = 0; i < n->value.size(); ++i)
    n->value[i] = av[i] > 0.0 ? av[i] : s * av[i];
  if (n->requires_grad) {
    auto va = std::make_shared<std::vector<double>>(av);
    n->backward_fn = [va, s](Node& self) {
      Node* pa = self.parents[0].get();
      Node* ps = self.parents[1].get();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        double x = (*va)[i];
        if (pa->requires_grad) pa->grad[i] += self.grad[i] * (x > 0.0 ? 1.0 : s);
        if (ps->requires_grad && x <= 0.0) ps->grad[0] += self.grad[i] * x;
      }
    };
  }
  return Tensor(n);
}

inline Tensor sum(const Tensor& a) {
  auto n = detail::make_node({1}, {a.shared()});
  double acc = 0.0;
  for (double v : a.value()) acc += v;
  n->value[0] = acc;
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node* p = self.parents[0].get();
      const double g = self.grad[0];
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
    };
  return Tensor(n);
}

inline Tensor log(const Tensor& a) {
  auto n = detail::make_node(a.shape(), {a.shared()});
  const auto& av = a.value();
  for (std::size_t i = 0; i < n->value.size(); ++i) {
    if (av[i] <= 0.0) throw std::domain_error("log: non-positive input");
    n->value[i] = std::log(av[i]);
  }
  if (n->requires_grad) {
    auto va = std::make_shared<std::vector<double>>(av);
    n->backward_fn = [va](Node& self) {
      Node* p = self.parents[0].get();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i] / (*va)[i];
    };
  }
  return Tensor(n);
}

// out = a / b elementwise
inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "div");
  auto n = detail::make_node(a.shape(), {a.shared(), b.shared()});
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] / bv[i];
  if (n->requires_grad) {
    auto va = std::make_shared<std::vector<double>>(av);
    auto vb = std::make_shared<std::vector<double>>(bv);
    n->backward_fn = [va, vb](Node& self) {
      Node* pa = self.parents[0].get();
      Node* pb = self.parents[1].get();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        double inv = 1.0 / (*vb)[i];
        if (pa->requires_grad) pa->grad[i] += self.grad[i] * inv;
        if (pb->requires_grad) pb->grad[i] -= self.grad[i] * (*va)[i] * inv * inv;
      }
    };
  }
  return Tensor(n);
}

// Concatenate along the first dimension; remaining dims must match.
inline Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat0: empty");
  Shape shape = parts[0].shape();
  std::int64_t inner = numel(shape) / shape[0];
  std::int64_t total0 = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (Shape(s.begin() + 1, s.end()) != Shape(shape.begin() + 1, shape.end()))
      throw std::invalid_argument("concat0: inner shape mismatch");
    total0 += s[0];
    parents.push_back(p.shared());
  }
  shape[0] = total0;
  auto n = detail::make_node(shape, std::move(parents));
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.begin(), v.end(), n->value.begin() + off);
    off += v.size();
  }
  if (n->requires_grad) {
    n->backward_fn = [](Node& self) {
      std::size_t off = 0;
      for (auto& pp : self.parents) {
        Node* p = pp.get();
        const std::size_t len = static_cast<std::size_t>(numel(p->shape));
        if (p->requires_grad)
          for (std::size_t i = 0; i < len; ++i) p->grad[i] += self.grad[off + i];
        off += len;
      }
    };
  }
  return Tensor(n);
}

// Same elements under a new shape; gradient passes through unchanged.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != numel(a.shape())) throw std::invalid_argument("reshape: element count mismatch");
  auto n = detail::make_node(std::move(shape), {a.shared()});
  n->value = a.value();
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node* p = self.parents[0].get();
      if (p->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
  return Tensor(n);
}

// Slice along the first dimension: rows [start, start+count).
inline Tensor slice0(const Tensor& a, std::int64_t start, std::int64_t count) {
  Shape shape = a.shape();
  if (start < 0 || start + count > shape[0])
    throw std::invalid_argument("slice0: out of range");
  const std::int64_t inner = numel(shape) / shape[0];
  shape[0] = count;
  auto n = detail::make_node(shape, {a.shared()});
  const auto& av = a.value();
  std::copy(av.begin() + start * inner, av.begin() + (start + count) * inner,
            n->value.begin());
  if (n->requires_grad)
    n->backward_fn = [start, inner](Node& self) {
      Node* p = self.parents[0].get();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[static_cast<std::size_t>(start * inner) + i] += self.grad[i];
    };
  return Tensor(n);
}

}  // namespace nnvme::ad
