#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "monomt/util.hpp"

namespace monomt {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

/// Handle to a dense row-major array of doubles with an optional gradient.
/// Copies share the underlying storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v) { return from({1, 1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->rows(); }
  std::size_t cols() const { return node_->cols(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const;

  /// Empty span if no gradient has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  /// Deep copy of the values as a new leaf.
  Tensor clone(bool requires_grad) const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Records primitive operations in creation order so gradients can be
/// propagated back in reverse. A tape in inference mode records nothing.
///
/// Tensors are matrices: rank-2 shapes [rows, cols]; rank-1 shapes are treated
/// as a single row.
class Tape {
 public:
  enum class Mode { Train, Inference };
  explicit Tape(Mode mode = Mode::Train) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::Train; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in
  /// reverse order. Gradients accumulate into leaves; callers zero them.
  void backward(const Tensor& loss);

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  /// a[m,n] + bias[1,n] on every row.
  Tensor add_bias(const Tensor& a, const Tensor& bias);
  Tensor scale(const Tensor& a, double c);
  /// Each row r of a[m,n] multiplied by s[r] with s of shape [m,1].
  Tensor scale_rows(const Tensor& a, const Tensor& s);
  Tensor tanh(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  Tensor log(const Tensor& a);
  /// Elementwise clamp; the gradient is zero where clamping was active.
  Tensor clamp(const Tensor& a, double lo, double hi);
  Tensor one_minus(const Tensor& a);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
  Tensor reshape(const Tensor& a, Shape shape);
  Tensor softmax_rows(const Tensor& a);
  /// Rows of `table` selected by `ids`; also used as a general row gather.
  Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  /// Σ_r weight[r] · (−log softmax(logits[r])[target[r]]). Rows with weight 0
  /// (padding) contribute nothing.
  Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                       std::span<const double> weights);
  Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets);
  /// steps[j] has shape [B,D]; the result is [B*S,D] with row b*S+j = steps[j][b].
  Tensor stack_steps(const std::vector<Tensor>& steps);
  /// x[B*S,D] plus y[B,D] broadcast over each group of S consecutive rows.
  Tensor add_grouped(const Tensor& x, const Tensor& y);
  /// out[b] = Σ_j alpha[b,j] · h[b*S+j] for alpha [B,S], h [B*S,D].
  Tensor weighted_sum(const Tensor& alpha, const Tensor& h);

 private:
  Tensor make(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
              std::function<void(detail::Node&)> backward);

  Mode mode_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// A named parameter that belongs to exactly one group.
struct Parameter {
  std::string name;
  std::string group;
  Tensor tensor;
};

/// Ordered collection of named parameters.
class ParameterSet {
 public:
  /// New parameter initialized uniform(-range, range). Throws on duplicate names.
  Tensor& add(const std::string& name, const std::string& group, Shape shape, Rng& rng,
              double range = 0.08);
  Tensor& add(const std::string& name, const std::string& group, Tensor value);
  void replace(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Parameter>& all() { return params_; }
  std::vector<std::string> groups() const;
  std::vector<Tensor> tensors(const std::vector<std::string>& groups = {}) const;
  std::vector<Tensor> tensors_except(const std::vector<std::string>& excluded_groups) const;
  std::size_t parameter_count() const;

  void zero_grad();
  /// FNV-1a over the raw values of every parameter in `group` (all if empty).
  std::uint64_t checksum(const std::string& group = {}) const;
  /// Deep copy of all values (gradient state is not copied).
  ParameterSet deep_copy() const;
  /// Copies values from `other`, which must have identical names and shapes.
  void assign_values(const ParameterSet& other);

  /// Binary format: magic "MMTP", u32 version, u32 count, then per parameter:
  /// u32 name length, name, u32 group length, group, u32 rank, u64 dims,
  /// little-endian f64 values.
  std::string serialize() const;
  static ParameterSet deserialize(std::string_view bytes);
  void save(const std::string& path) const;
  static ParameterSet load(const std::string& path);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clipping threshold; <= 0 disables.
  double clip_norm = 0.0;
};

/// Adam with bias correction. Holds first/second moments per parameter.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  /// Updates only rows >= first_row of `param` (earlier rows stay bit-identical).
  void restrict_rows(const Tensor& param, std::size_t first_row);

  /// One update from the gradients currently stored on the parameters.
  /// Parameters with no accumulated gradient are treated as having zero gradient.
  void step();
  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::span<const double> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::size_t> first_row_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig config_;
  std::uint64_t t_ = 0;
};

/// Global L2 norm of the gradients of `params`.
double grad_norm(const std::vector<Tensor>& params);

/// Finite-difference gradient check. `loss_fn` builds the loss on the given
/// tape. Compares backprop gradients against central differences for up to
/// `max_per_tensor` sampled entries of each parameter.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "name[index]"
};
GradCheckResult gradient_check(const std::vector<Parameter>& params,
                               const std::function<Tensor(Tape&)>& loss_fn,
                               double eps = 1e-5, std::size_t max_per_tensor = 40,
                               std::uint64_t seed = 1);

}  // namespace monomt
