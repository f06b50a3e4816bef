#pragma once

// Reverse-mode automatic differentiation over dense double-precision tensors.
//
// A Tensor is a cheap handle onto a graph node. Operations build new nodes that
// remember their inputs and a gradient rule whenever any input requires a
// gradient and gradient recording is enabled on the calling thread. Calling
// backward() on a scalar result visits the reachable nodes in reverse
// topological order exactly once and leaves dLoss/dNode in every node that
// requires a gradient.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace chromacodec {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Uniform double in [0, 1) built from the top 53 bits of the engine output, so
// seeded streams are identical across standard library implementations.
double uniform01(std::mt19937_64& rng);
double uniform(std::mt19937_64& rng, double lo, double hi);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable access is limited to leaves (parameters, inputs); graph results are immutable.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // New leaf holding a copy of the values; no graph history.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  // Fills grad() of every reachable node that requires a gradient with
  // dThis/dNode. Previous gradients of those nodes are overwritten.
  void backward() const;

  // Identity of the underlying node (two handles may share one).
  const void* id() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct TensorAccess;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- convolution family (NCHW) ----

// weights: (Cout, Cin, k, k); bias: (Cout) or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride = 1,
              int padding = 0);
// weights: (Cin, Cout, k, k); output spatial size (H - 1) * stride + k - 2 * padding.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                        int stride = 1, int padding = 0);
// 2x2 window, stride 2. Gradient goes to the first maximum in row-major order.
Tensor maxpool2(const Tensor& input);

// ---- pointwise ----

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
// log(max(x, floor)); the gradient is zero where the floor is active.
Tensor log_floor(const Tensor& x, double floor);
Tensor affine(const Tensor& x, double scale, double shift);
Tensor scale(const Tensor& x, double factor);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// s must hold exactly one element; differentiable in both arguments.
Tensor mul_scalar(const Tensor& x, const Tensor& s);

// ---- structure ----

Tensor reshape(const Tensor& x, Shape shape);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Channel slice [begin, end) of an NCHW tensor.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

// ---- reductions (all return a 1-element tensor of shape {1}) ----

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l1_norm(const Tensor& x);
Tensor l2_norm(const Tensor& x);

// ---- linear algebra ----

Tensor softmax(const Tensor& x, std::size_t axis);
// (M,K)x(K,N) or batched (B,M,K)x(B,K,N).
Tensor matmul(const Tensor& a, const Tensor& b);
// Fused dot-product attention over flattened positions.
// query, key: (B, d, L); value: (B, C, L). With P = softmax_rows(query^T key),
// returns out[b][c][i] = sum_j P[i][j] value[b][c][j]. Memory holds one L x L map.
Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value);

// ---- finite-difference oracle ----

struct GradCheckOptions {
  double step = 1e-5;
  double denominator_floor = 1e-8;
  // 0 checks every element; otherwise a seeded sample of this many per tensor.
  std::size_t max_checks_per_tensor = 0;
  // Inputs drawn from U(-1, 1) are pushed out of (-margin, margin); keeps relu kinks away.
  double kink_margin = 0.0;
  // Skip coordinates whose one-sided slopes disagree by more than
  // kink_tolerance (relative): the step straddles a relu/maxpool kink there
  // and the central difference is not a derivative estimate.
  bool skip_kinks = false;
  double kink_tolerance = 1e-3;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

using TensorOp = std::function<Tensor(const std::vector<Tensor>&)>;

// Builds seeded random inputs of the given shapes, reduces op(inputs) to a
// scalar through a fixed random projection and returns the maximum relative
// error between analytic and central-difference gradients over all inputs.
double grad_check(const TensorOp& op, const std::vector<Shape>& input_shapes, std::uint64_t seed,
                  const GradCheckOptions& options = {});

// Same comparison for an arbitrary scalar loss over existing leaves, which are
// perturbed in place and restored.
double grad_check_leaves(const std::function<Tensor()>& loss, const std::vector<Tensor>& leaves,
                         std::uint64_t seed, const GradCheckOptions& options = {});
GradCheckReport grad_check_report(const std::function<Tensor()>& loss,
                                  const std::vector<Tensor>& leaves, std::uint64_t seed,
                                  const GradCheckOptions& options = {});

}  // namespace chromacodec
