#include "chromacodec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "chromacodec/errors.hpp"

namespace chromacodec {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads self.grad and accumulates into the grads of self.inputs that require one.
  std::function<void(Node& self)> backward;
};

}  // namespace detail

using detail::Node;

struct TensorAccess {
  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
};

namespace {

thread_local bool t_grad_enabled = true;

Node& node_of(const Tensor& t) {
  if (!t.defined()) throw ConfigError("operation on an undefined tensor");
  return *TensorAccess::node(t);
}

void require_finite(const std::vector<double>& values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

Tensor make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(shape));
  }
  require_finite(values, "tensor construction");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return TensorAccess::wrap(std::move(node));
}

// Builds an op result. The gradient rule and inputs are only retained when
// recording is enabled and some input requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> inputs, std::function<void(Node&)> backward) {
  require_finite(values, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  node->leaf = false;
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || node_of(in).requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(TensorAccess::node(in));
    node->backward = std::move(backward);
  }
  return TensorAccess::wrap(std::move(node));
}

Tensor make_result_list(const char* op, Shape shape, std::vector<double> values,
                        const std::vector<Tensor>& inputs, std::function<void(Node&)> backward) {
  require_finite(values, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  node->leaf = false;
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || node_of(in).requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(TensorAccess::node(in));
    node->backward = std::move(backward);
  }
  return TensorAccess::wrap(std::move(node));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* name) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + name + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rank() != b.rank()) {
    throw DimensionError(std::string(op) + ": rank mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw DimensionError(std::string(op) + ": axis " + std::to_string(i) + " differs (" +
                           std::to_string(a.dim(i)) + " vs " + std::to_string(b.dim(i)) + ")");
    }
  }
}

// Range of "small grid" indices o with 0 <= o * stride + offset < large_n.
struct TapRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

TapRange tap_range(std::size_t small_n, std::size_t large_n, int stride, int offset) {
  TapRange r;
  const long s = stride;
  const long lo_num = -static_cast<long>(offset);
  r.lo = lo_num <= 0 ? 0 : static_cast<std::size_t>((lo_num + s - 1) / s);
  const long hi_num = static_cast<long>(large_n) - 1 - offset;
  if (hi_num < 0) {
    r.hi = 0;
  } else {
    r.hi = std::min<std::size_t>(small_n, static_cast<std::size_t>(hi_num / s) + 1);
  }
  if (r.hi < r.lo) r.hi = r.lo;
  return r;
}

// Shared kernel of conv2d and conv_transpose2d. The "small" grid is the
// conv2d output; the "large" grid is the conv2d input. For every kernel tap,
// large = small * stride + tap - padding.
struct ConvGeometry {
  std::size_t small_h, small_w, large_h, large_w;
  int k, stride, padding;
};

// small[y][x] += w * large[...]
void gather_tap(const ConvGeometry& g, int kh, int kw, double w, const double* large,
                double* small) {
  const TapRange ry = tap_range(g.small_h, g.large_h, g.stride, kh - g.padding);
  const TapRange rx = tap_range(g.small_w, g.large_w, g.stride, kw - g.padding);
  if (rx.lo >= rx.hi) return;
  for (std::size_t y = ry.lo; y < ry.hi; ++y) {
    const std::size_t ly = y * g.stride + kh - g.padding;
    const double* lrow = large + ly * g.large_w;
    double* srow = small + y * g.small_w;
    if (g.stride == 1) {
      const double* src = lrow + (kw - g.padding);
      for (std::size_t x = rx.lo; x < rx.hi; ++x) srow[x] += w * src[x];
    } else {
      for (std::size_t x = rx.lo; x < rx.hi; ++x) {
        srow[x] += w * lrow[x * g.stride + kw - g.padding];
      }
    }
  }
}

// large[...] += w * small[y][x]
void scatter_tap(const ConvGeometry& g, int kh, int kw, double w, const double* small,
                 double* large) {
  const TapRange ry = tap_range(g.small_h, g.large_h, g.stride, kh - g.padding);
  const TapRange rx = tap_range(g.small_w, g.large_w, g.stride, kw - g.padding);
  if (rx.lo >= rx.hi) return;
  for (std::size_t y = ry.lo; y < ry.hi; ++y) {
    const std::size_t ly = y * g.stride + kh - g.padding;
    double* lrow = large + ly * g.large_w;
    const double* srow = small + y * g.small_w;
    if (g.stride == 1) {
      double* dst = lrow + (kw - g.padding);
      for (std::size_t x = rx.lo; x < rx.hi; ++x) dst[x] += w * srow[x];
    } else {
      for (std::size_t x = rx.lo; x < rx.hi; ++x) {
        lrow[x * g.stride + kw - g.padding] += w * srow[x];
      }
    }
  }
}

// sum over taps of small[y][x] * large[...]
double correlate_tap(const ConvGeometry& g, int kh, int kw, const double* small,
                     const double* large) {
  const TapRange ry = tap_range(g.small_h, g.large_h, g.stride, kh - g.padding);
  const TapRange rx = tap_range(g.small_w, g.large_w, g.stride, kw - g.padding);
  double acc = 0.0;
  if (rx.lo >= rx.hi) return acc;
  for (std::size_t y = ry.lo; y < ry.hi; ++y) {
    const std::size_t ly = y * g.stride + kh - g.padding;
    const double* lrow = large + ly * g.large_w;
    const double* srow = small + y * g.small_w;
    for (std::size_t x = rx.lo; x < rx.hi; ++x) {
      acc += srow[x] * lrow[x * g.stride + kw - g.padding];
    }
  }
  return acc;
}

template <class F>
Tensor unary(const char* op, const Tensor& x, F&& forward,
             std::function<double(double x, double y)> derivative) {
  const auto& xv = node_of(x).value;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [derivative](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * derivative(in.value[i], self.value[i]);
    }
  });
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t max_count,
                                        std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (max_count == 0 || max_count >= n) return idx;
  for (std::size_t i = 0; i < max_count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i));
    std::swap(idx[i], idx[std::min(j, n - 1)]);
  }
  idx.resize(max_count);
  return idx;
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return make_leaf(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values, bool requires_grad) {
  return make_leaf(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return make_leaf({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                       bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = chromacodec::uniform(rng, lo, hi);
  return make_leaf(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node_of(*this).value.size(); }

std::span<const double> Tensor::data() const { return node_of(*this).value; }

std::span<double> Tensor::mutable_data() {
  Node& n = node_of(*this);
  if (!n.leaf) throw ConfigError("mutable_data: only leaf tensors may be written");
  return n.value;
}

double Tensor::item() const {
  const Node& n = node_of(*this);
  if (n.value.size() != 1) {
    throw ConfigError("item: tensor of shape " + shape_string(n.shape) + " is not a scalar");
  }
  return n.value[0];
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }

void Tensor::set_requires_grad(bool value) {
  Node& n = node_of(*this);
  if (!n.leaf) throw ConfigError("set_requires_grad: only leaf tensors");
  n.requires_grad = value;
}

bool Tensor::is_leaf() const { return node_of(*this).leaf; }
bool Tensor::has_grad() const { return !node_of(*this).grad.empty(); }
std::span<const double> Tensor::grad() const { return node_of(*this).grad; }
void Tensor::zero_grad() { node_of(*this).grad.clear(); }

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  const Node& n = node_of(*this);
  return make_leaf(n.shape, n.value, requires_grad);
}

void Tensor::backward() const {
  Node& root = node_of(*this);
  if (root.value.size() != 1) {
    throw ConfigError("backward: loss must be a scalar, got shape " + shape_string(root.shape));
  }
  if (!root.requires_grad) {
    throw ConfigError("backward: loss does not depend on any tensor that requires a gradient");
  }
  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root, 0}};
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad.assign(n->value.size(), 0.0);
  root.grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->leaf) require_finite(n->grad, "backward");
  }
}

// ---- convolution family -----------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
              int padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weights, 4, "conv2d", "weights");
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride must be >= 1, padding >= 0");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weights.dim(0), k = weights.dim(2);
  if (weights.dim(1) != cin) {
    throw DimensionError("conv2d: input axis 1 (channels) is " + std::to_string(cin) +
                         " but weights axis 1 expects " + std::to_string(weights.dim(1)));
  }
  if (weights.dim(3) != k) {
    throw DimensionError("conv2d: weights axes 2 and 3 must be equal (square kernel), got " +
                         shape_string(weights.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv2d: bias axis 0 must equal output channels " + std::to_string(cout) +
                         ", got shape " + shape_string(bias.shape()));
  }
  if (h + 2 * padding < k) {
    throw DimensionError("conv2d: input axis 2 (height) " + std::to_string(h) +
                         " is smaller than the kernel");
  }
  if (w + 2 * padding < k) {
    throw DimensionError("conv2d: input axis 3 (width) " + std::to_string(w) +
                         " is smaller than the kernel");
  }
  const std::size_t ho = (h + 2 * padding - k) / stride + 1;
  const std::size_t wo = (w + 2 * padding - k) / stride + 1;
  const ConvGeometry g{ho, wo, h, w, static_cast<int>(k), stride, padding};

  const auto& x = node_of(input).value;
  const auto& wt = node_of(weights).value;
  std::vector<double> out(n * cout * ho * wo, 0.0);
  const std::size_t in_plane = h * w, out_plane = ho * wo, kk = k * k;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* dst = out.data() + (b * cout + co) * out_plane;
      if (bias.defined()) std::fill(dst, dst + out_plane, node_of(bias).value[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* src = x.data() + (b * cin + ci) * in_plane;
        const double* wk = wt.data() + (co * cin + ci) * kk;
        for (std::size_t kh = 0; kh < k; ++kh) {
          for (std::size_t kw = 0; kw < k; ++kw) {
            gather_tap(g, static_cast<int>(kh), static_cast<int>(kw), wk[kh * k + kw], src, dst);
          }
        }
      }
    }
  }

  const bool has_bias = bias.defined();
  auto backward = [=](Node& self) {
    Node& in = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const double* gout = self.grad.data();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t co = 0; co < cout; ++co) {
        const double* go = gout + (b * cout + co) * out_plane;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* src = in.value.data() + (b * cin + ci) * in_plane;
          const std::size_t wbase = (co * cin + ci) * kk;
          for (std::size_t kh = 0; kh < k; ++kh) {
            for (std::size_t kw = 0; kw < k; ++kw) {
              const int ih = static_cast<int>(kh), iw = static_cast<int>(kw);
              if (in.requires_grad) {
                scatter_tap(g, ih, iw, wn.value[wbase + kh * k + kw], go,
                            in.grad.data() + (b * cin + ci) * in_plane);
              }
              if (wn.requires_grad) {
                wn.grad[wbase + kh * k + kw] += correlate_tap(g, ih, iw, go, src);
              }
            }
          }
        }
        if (has_bias && self.inputs[2]->requires_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < out_plane; ++i) acc += go[i];
          self.inputs[2]->grad[co] += acc;
        }
      }
    }
  };
  if (has_bias) {
    return make_result("conv2d", {n, cout, ho, wo}, std::move(out), {input, weights, bias},
                       backward);
  }
  return make_result("conv2d", {n, cout, ho, wo}, std::move(out), {input, weights}, backward);
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
                        int padding) {
  require_rank(input, 4, "conv_transpose2d", "input");
  require_rank(weights, 4, "conv_transpose2d", "weights");
  if (stride < 1 || padding < 0) {
    throw ConfigError("conv_transpose2d: stride must be >= 1, padding >= 0");
  }
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weights.dim(1), k = weights.dim(2);
  if (weights.dim(0) != cin) {
    throw DimensionError("conv_transpose2d: input axis 1 (channels) is " + std::to_string(cin) +
                         " but weights axis 0 expects " + std::to_string(weights.dim(0)));
  }
  if (weights.dim(3) != k) {
    throw DimensionError("conv_transpose2d: weights axes 2 and 3 must be equal, got " +
                         shape_string(weights.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv_transpose2d: bias axis 0 must equal output channels " +
                         std::to_string(cout));
  }
  if (h == 0 || w == 0 || (h - 1) * stride + k <= 2 * static_cast<std::size_t>(padding)) {
    throw DimensionError("conv_transpose2d: output would be empty for input " +
                         shape_string(input.shape()));
  }
  const std::size_t ho = (h - 1) * stride + k - 2 * padding;
  const std::size_t wo = (w - 1) * stride + k - 2 * padding;
  const ConvGeometry g{h, w, ho, wo, static_cast<int>(k), stride, padding};

  const auto& x = node_of(input).value;
  const auto& wt = node_of(weights).value;
  std::vector<double> out(n * cout * ho * wo, 0.0);
  const std::size_t in_plane = h * w, out_plane = ho * wo, kk = k * k;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* dst = out.data() + (b * cout + co) * out_plane;
      if (bias.defined()) std::fill(dst, dst + out_plane, node_of(bias).value[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* src = x.data() + (b * cin + ci) * in_plane;
        const double* wk = wt.data() + (ci * cout + co) * kk;
        for (std::size_t kh = 0; kh < k; ++kh) {
          for (std::size_t kw = 0; kw < k; ++kw) {
            scatter_tap(g, static_cast<int>(kh), static_cast<int>(kw), wk[kh * k + kw], src, dst);
          }
        }
      }
    }
  }

  const bool has_bias = bias.defined();
  auto backward = [=](Node& self) {
    Node& in = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const double* gout = self.grad.data();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t co = 0; co < cout; ++co) {
        const double* go = gout + (b * cout + co) * out_plane;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* src = in.value.data() + (b * cin + ci) * in_plane;
          const std::size_t wbase = (ci * cout + co) * kk;
          for (std::size_t kh = 0; kh < k; ++kh) {
            for (std::size_t kw = 0; kw < k; ++kw) {
              const int ih = static_cast<int>(kh), iw = static_cast<int>(kw);
              if (in.requires_grad) {
                gather_tap(g, ih, iw, wn.value[wbase + kh * k + kw], go,
                           in.grad.data() + (b * cin + ci) * in_plane);
              }
              if (wn.requires_grad) {
                wn.grad[wbase + kh * k + kw] += correlate_tap(g, ih, iw, src, go);
              }
            }
          }
        }
        if (has_bias && self.inputs[2]->requires_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < out_plane; ++i) acc += go[i];
          self.inputs[2]->grad[co] += acc;
        }
      }
    }
  };
  if (has_bias) {
    return make_result("conv_transpose2d", {n, cout, ho, wo}, std::move(out),
                       {input, weights, bias}, backward);
  }
  return make_result("conv_transpose2d", {n, cout, ho, wo}, std::move(out), {input, weights},
                     backward);
}

Tensor maxpool2(const Tensor& input) {
  require_rank(input, 4, "maxpool2", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < 2) throw DimensionError("maxpool2: input axis 2 (height) must be >= 2");
  if (w < 2) throw DimensionError("maxpool2: input axis 3 (width) must be >= 2");
  const std::size_t ho = h / 2, wo = w / 2;
  const auto& x = node_of(input).value;
  std::vector<double> out(n * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t ibase = p * h * w, obase = p * ho * wo;
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xo = 0; xo < wo; ++xo) {
        std::size_t best = ibase + (2 * y) * w + 2 * xo;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t i : cand) {
          if (x[i] > x[best]) best = i;
        }
        out[obase + y * wo + xo] = x[best];
        argmax[obase + y * wo + xo] = best;
      }
    }
  }
  return make_result("maxpool2", {n, c, ho, wo}, std::move(out), {input},
                     [argmax = std::move(argmax)](Node& self) {
                       Node& in = *self.inputs[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         in.grad[argmax[i]] += self.grad[i];
                       }
                     });
}

// ---- pointwise --------------------------------------------------------------

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary("leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
               [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x,
               [](double v) {
                 if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                 const double e = std::exp(v);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary("abs", x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor log_floor(const Tensor& x, double floor) {
  return unary("log_floor", x, [floor](double v) { return std::log(std::max(v, floor)); },
               [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor affine(const Tensor& x, double scale_factor, double shift) {
  return unary("affine", x, [=](double v) { return scale_factor * v + shift; },
               [=](double, double) { return scale_factor; });
}

Tensor scale(const Tensor& x, double factor) { return affine(x, factor, 0.0); }

namespace {

template <class F, class GA, class GB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F&& f, GA ga, GB gb) {
  require_same_shape(a, b, op);
  const auto& av = node_of(a).value;
  const auto& bv = node_of(b).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  return make_result(op, a.shape(), std::move(out), {a, b}, [ga, gb](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double g = self.grad[i];
      if (na.requires_grad) na.grad[i] += g * ga(na.value[i], nb.value[i]);
      if (nb.requires_grad) nb.grad[i] += g * gb(na.value[i], nb.value[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("mul_scalar: scalar operand has shape " + shape_string(s.shape()));
  }
  const double sv = s.item();
  const auto& xv = node_of(x).value;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = sv * xv[i];
  return make_result("mul_scalar", x.shape(), std::move(out), {x, s}, [](Node& self) {
    Node& nx = *self.inputs[0];
    Node& ns = *self.inputs[1];
    const double sv = ns.value[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (nx.requires_grad) nx.grad[i] += sv * self.grad[i];
      acc += self.grad[i] * nx.value[i];
    }
    if (ns.requires_grad) ns.grad[0] += acc;
  });
}

// ---- structure --------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  return make_result("reshape", std::move(shape), node_of(x).value, {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose: rank must be >= 2");
  Shape shape = x.shape();
  const std::size_t r = shape[shape.size() - 2], c = shape[shape.size() - 1];
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  const std::size_t batch = x.numel() / (r * c);
  const auto& xv = node_of(x).value;
  std::vector<double> out(xv.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = xv[b * r * c + i * c + j];
    }
  }
  return make_result("transpose", std::move(shape), std::move(out), {x}, [=](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          in.grad[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
        }
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat: axis " + std::to_string(i) + " differs (" +
                             std::to_string(s[i]) + " vs " + std::to_string(first[i]) + ")");
      }
    }
    shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> chunks;
  for (const auto& p : parts) chunks.push_back(p.dim(axis) * inner);
  const std::size_t row = shape[axis] * inner;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = node_of(parts[k]).value;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * chunks[k], chunks[k], out.data() + o * row + offset);
    }
    offset += chunks[k];
  }
  return make_result_list("concat", std::move(shape), std::move(out), parts,
                          [=](Node& self) {
                            std::size_t off = 0;
                            for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                              Node& in = *self.inputs[k];
                              if (in.requires_grad) {
                                for (std::size_t o = 0; o < outer; ++o) {
                                  for (std::size_t i = 0; i < chunks[k]; ++i) {
                                    in.grad[o * chunks[k] + i] += self.grad[o * row + off + i];
                                  }
                                }
                              }
                              off += chunks[k];
                            }
                          });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 4, "slice_channels", "input");
  if (begin >= end || end > x.dim(1)) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for axis 1 of size " +
                         std::to_string(x.dim(1)));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const std::size_t cs = end - begin;
  const auto& xv = node_of(x).value;
  std::vector<double> out(n * cs * plane);
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(xv.data() + (b * c + begin) * plane, cs * plane, out.data() + b * cs * plane);
  }
  return make_result("slice_channels", {n, cs, x.dim(2), x.dim(3)}, std::move(out), {x},
                     [=](Node& self) {
                       Node& in = *self.inputs[0];
                       for (std::size_t b = 0; b < n; ++b) {
                         for (std::size_t i = 0; i < cs * plane; ++i) {
                           in.grad[(b * c + begin) * plane + i] += self.grad[b * cs * plane + i];
                         }
                       }
                     });
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const auto& xv = node_of(x).value;
  double acc = 0.0;
  for (double v : xv) acc += v;
  return make_result("sum", {1}, {acc}, {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    for (double& g : in.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto& xv = node_of(x).value;
  if (xv.empty()) throw DimensionError("mean: empty tensor");
  double acc = 0.0;
  for (double v : xv) acc += v;
  const double inv = 1.0 / static_cast<double>(xv.size());
  return make_result("mean", {1}, {acc * inv}, {x}, [inv](Node& self) {
    Node& in = *self.inputs[0];
    for (double& g : in.grad) g += self.grad[0] * inv;
  });
}

Tensor l1_norm(const Tensor& x) {
  const auto& xv = node_of(x).value;
  double acc = 0.0;
  for (double v : xv) acc += std::fabs(v);
  return make_result("l1_norm", {1}, {acc}, {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < in.grad.size(); ++i) {
      const double v = in.value[i];
      in.grad[i] += self.grad[0] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
  });
}

Tensor l2_norm(const Tensor& x) {
  const auto& xv = node_of(x).value;
  double acc = 0.0;
  for (double v : xv) acc += v * v;
  const double norm = std::sqrt(acc);
  return make_result("l2_norm", {1}, {norm}, {x}, [norm](Node& self) {
    if (norm == 0.0) return;
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < in.grad.size(); ++i) {
      in.grad[i] += self.grad[0] * in.value[i] / norm;
    }
  });
}

// ---- linear algebra ---------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  const auto& xv = node_of(x).value;
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  return make_result("softmax", x.shape(), std::move(out), {x}, [=](Node& self) {
    Node& nx = *self.inputs[0];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          dot += self.value[base + j * inner] * self.grad[base + j * inner];
        }
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t i = base + j * inner;
          nx.grad[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool batched = a.rank() == 3;
  if (!(a.rank() == 2 || a.rank() == 3) || b.rank() != a.rank()) {
    throw DimensionError("matmul: operands must both be rank 2 or both rank 3, got " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  const std::size_t batch = batched ? a.dim(0) : 1;
  if (batched && b.dim(0) != batch) {
    throw DimensionError("matmul: axis 0 (batch) differs (" + std::to_string(batch) + " vs " +
                         std::to_string(b.dim(0)) + ")");
  }
  const std::size_t m = a.dim(off), kdim = a.dim(off + 1), nn = b.dim(off + 1);
  if (b.dim(off) != kdim) {
    throw DimensionError("matmul: inner axis mismatch, left axis " + std::to_string(off + 1) +
                         " is " + std::to_string(kdim) + " but right axis " +
                         std::to_string(off) + " is " + std::to_string(b.dim(off)));
  }
  const auto& av = node_of(a).value;
  const auto& bv = node_of(b).value;
  std::vector<double> out(batch * m * nn, 0.0);
  for (std::size_t p = 0; p < batch; ++p) {
    const double* A = av.data() + p * m * kdim;
    const double* B = bv.data() + p * kdim * nn;
    double* C = out.data() + p * m * nn;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < kdim; ++k) {
        const double aik = A[i * kdim + k];
        for (std::size_t j = 0; j < nn; ++j) C[i * nn + j] += aik * B[k * nn + j];
      }
    }
  }
  Shape shape = batched ? Shape{batch, m, nn} : Shape{m, nn};
  return make_result("matmul", std::move(shape), std::move(out), {a, b}, [=](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    for (std::size_t p = 0; p < batch; ++p) {
      const double* A = na.value.data() + p * m * kdim;
      const double* B = nb.value.data() + p * kdim * nn;
      const double* G = self.grad.data() + p * m * nn;
      if (na.requires_grad) {
        double* dA = na.grad.data() + p * m * kdim;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t k = 0; k < kdim; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < nn; ++j) acc += G[i * nn + j] * B[k * nn + j];
            dA[i * kdim + k] += acc;
          }
        }
      }
      if (nb.requires_grad) {
        double* dB = nb.grad.data() + p * kdim * nn;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t k = 0; k < kdim; ++k) {
            const double aik = A[i * kdim + k];
            for (std::size_t j = 0; j < nn; ++j) dB[k * nn + j] += aik * G[i * nn + j];
          }
        }
      }
    }
  });
}

Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value) {
  require_rank(query, 3, "attention", "query");
  require_rank(key, 3, "attention", "key");
  require_rank(value, 3, "attention", "value");
  require_same_shape(query, key, "attention");
  const std::size_t batch = query.dim(0), d = query.dim(1), len = query.dim(2);
  const std::size_t c = value.dim(1);
  if (value.dim(0) != batch) throw DimensionError("attention: value axis 0 (batch) differs");
  if (value.dim(2) != len) throw DimensionError("attention: value axis 2 (positions) differs");

  const auto& qv = node_of(query).value;
  const auto& kv = node_of(key).value;
  const auto& vv = node_of(value).value;
  auto probs = std::make_shared<std::vector<double>>(batch * len * len);
  std::vector<double> out(batch * c * len, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* Q = qv.data() + b * d * len;
    const double* K = kv.data() + b * d * len;
    const double* V = vv.data() + b * c * len;
    double* O = out.data() + b * c * len;
    for (std::size_t i = 0; i < len; ++i) {
      double* row = probs->data() + (b * len + i) * len;
      std::fill(row, row + len, 0.0);
      for (std::size_t t = 0; t < d; ++t) {
        const double qi = Q[t * len + i];
        const double* krow = K + t * len;
        for (std::size_t j = 0; j < len; ++j) row[j] += qi * krow[j];
      }
      double mx = row[0];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, row[j]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        row[j] = std::exp(row[j] - mx);
        total += row[j];
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < len; ++j) row[j] *= inv;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* vrow = V + ch * len;
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += row[j] * vrow[j];
        O[ch * len + i] = acc;
      }
    }
  }
  return make_result("attention", {batch, c, len}, std::move(out), {query, key, value},
                     [=](Node& self) {
                       Node& nq = *self.inputs[0];
                       Node& nk = *self.inputs[1];
                       Node& nv = *self.inputs[2];
                       std::vector<double> dp(len);
                       for (std::size_t b = 0; b < batch; ++b) {
                         const double* Q = nq.value.data() + b * d * len;
                         const double* K = nk.value.data() + b * d * len;
                         const double* V = nv.value.data() + b * c * len;
                         const double* G = self.grad.data() + b * c * len;
                         for (std::size_t i = 0; i < len; ++i) {
                           const double* row = probs->data() + (b * len + i) * len;
                           std::fill(dp.begin(), dp.end(), 0.0);
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             const double gi = G[ch * len + i];
                             if (gi == 0.0) continue;
                             const double* vrow = V + ch * len;
                             for (std::size_t j = 0; j < len; ++j) dp[j] += gi * vrow[j];
                             if (nv.requires_grad) {
                               double* dv = nv.grad.data() + b * c * len + ch * len;
                               for (std::size_t j = 0; j < len; ++j) dv[j] += gi * row[j];
                             }
                           }
                           double dot = 0.0;
                           for (std::size_t j = 0; j < len; ++j) dot += row[j] * dp[j];
                           // dp becomes d(loss)/d(logits) for this row.
                           for (std::size_t j = 0; j < len; ++j) dp[j] = row[j] * (dp[j] - dot);
                           for (std::size_t t = 0; t < d; ++t) {
                             const double* krow = K + t * len;
                             if (nq.requires_grad) {
                               double acc = 0.0;
                               for (std::size_t j = 0; j < len; ++j) acc += dp[j] * krow[j];
                               nq.grad[b * d * len + t * len + i] += acc;
                             }
                             if (nk.requires_grad) {
                               const double qi = Q[t * len + i];
                               double* dk = nk.grad.data() + b * d * len + t * len;
                               for (std::size_t j = 0; j < len; ++j) dk[j] += dp[j] * qi;
                             }
                           }
                         }
                       }
                     });
}

// ---- finite differences -----------------------------------------------------

double grad_check(const TensorOp& op, const std::vector<Shape>& input_shapes, std::uint64_t seed,
                  const GradCheckOptions& options) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> inputs;
  for (const auto& shape : input_shapes) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) {
      x = uniform(rng, -1.0, 1.0);
      if (std::fabs(x) < options.kink_margin) x = x < 0 ? x - options.kink_margin : x + options.kink_margin;
    }
    inputs.push_back(Tensor::from_vector(shape, std::move(v), true));
  }
  Tensor probe;
  {
    NoGradGuard guard;
    probe = op(inputs);
  }
  Tensor projection = Tensor::uniform(probe.shape(), -1.0, 1.0, rng);
  auto loss = [&] { return sum(mul(op(inputs), projection)); };
  return grad_check_leaves(loss, inputs, rng(), options);
}

double grad_check_leaves(const std::function<Tensor()>& loss, const std::vector<Tensor>& leaves,
                         std::uint64_t seed, const GradCheckOptions& options) {
  return grad_check_report(loss, leaves, seed, options).max_rel_error;
}

GradCheckReport grad_check_report(const std::function<Tensor()>& loss,
                                  const std::vector<Tensor>& leaves, std::uint64_t seed,
                                  const GradCheckOptions& options) {
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& leaf : leaves) {
    if (!leaf.has_grad()) throw ConfigError("grad_check: leaf did not receive a gradient");
    analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
  }
  std::mt19937_64 rng(seed);
  NoGradGuard guard;
  const double centre = options.skip_kinks ? loss().item() : 0.0;
  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    auto data = leaf.mutable_data();
    for (std::size_t idx : sample_indices(data.size(), options.max_checks_per_tensor, rng)) {
      const double original = data[idx];
      const double up = original + options.step;
      const double down = original - options.step;
      data[idx] = up;
      const double lp = loss().item();
      data[idx] = down;
      const double lm = loss().item();
      data[idx] = original;
      if (options.skip_kinks) {
        const double right = (lp - centre) / (up - original);
        const double left = (centre - lm) / (original - down);
        const double scale =
            std::max({std::fabs(right), std::fabs(left), options.denominator_floor});
        if (std::fabs(right - left) > options.kink_tolerance * scale) {
          ++report.skipped_kinks;
          continue;
        }
      }
      const double numeric = (lp - lm) / (up - down);
      const double a = analytic[li][idx];
      const double denom =
          std::max({std::fabs(a), std::fabs(numeric), options.denominator_floor});
      report.max_rel_error = std::max(report.max_rel_error, std::fabs(a - numeric) / denom);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace chromacodec
