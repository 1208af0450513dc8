#include "monomt/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include <cblas.h>

namespace monomt {

static_assert(std::endian::native == std::endian::little,
              "parameter serialization assumes a little-endian host");

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

using detail::Node;

[[noreturn]] void shape_fail(const char* op, const std::string& expected, const Shape& actual) {
  throw ShapeError(std::string(op) + ": expected " + expected + ", got " + shape_str(actual));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.size() != b.size() || a.rows() != b.rows()) shape_fail(op, shape_str(a.shape()), b.shape());
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(m), int(n), int(k), 1.0, a, int(k), b,
              int(n), 1.0, c, int(n));
}

// dA[m,k] += dC[m,n] * B[k,n]^T
void gemm_nt(const double* dc, const double* b, double* da, std::size_t m, std::size_t k, std::size_t n) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(m), int(k), int(n), 1.0, dc, int(n), b,
              int(n), 1.0, da, int(k));
}

// dB[k,n] += A[m,k]^T * dC[m,n]
void gemm_tn(const double* a, const double* dc, double* db, std::size_t m, std::size_t k, std::size_t n) {
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(k), int(n), int(m), 1.0, a, int(k), dc,
              int(n), 1.0, db, int(n));
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_size(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  return from(shape(), node_->value, requires_grad);
}

// --- Tape -------------------------------------------------------------------

Tensor Tape::make(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                  std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (recording()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node_ptr());
      n->backward = std::move(backward);
      nodes_.push_back(n);
    }
  }
  return Tensor(std::move(n));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.grad.empty() && n.backward) n.backward(n);
  }
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) gemm_nt(self.grad.data(), pb.value.data(), pa.ensure_grad().data(), m, k, n);
    if (pb.requires_grad) gemm_tn(pa.value.data(), self.grad.data(), pb.ensure_grad().data(), m, k, n);
  });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor Tape::add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.size() != n) shape_fail("add_bias", "[1," + std::to_string(n) + "]", bias.shape());
  std::vector<double> out(a.size());
  auto av = a.values();
  auto bv = bias.values();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = av[r * n + c] + bv[c];
  return make(a.shape(), std::move(out), {a, bias}, [m, n](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c];
    }
  });
}

Tensor Tape::scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
  return make(a.shape(), std::move(out), {a}, [c](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
  });
}

Tensor Tape::scale_rows(const Tensor& a, const Tensor& s) {
  const std::size_t m = a.rows(), n = a.cols();
  if (s.size() != m) shape_fail("scale_rows", "[" + std::to_string(m) + ",1]", s.shape());
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = a[r * n + c] * s[r];
  return make(a.shape(), std::move(out), {a, s}, [m, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& ps = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[r * n + c] * ps.value[r];
    }
    if (ps.requires_grad) {
      auto& g = ps.ensure_grad();
      for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += self.grad[r * n + c] * pa.value[r * n + c];
        g[r] += acc;
      }
    }
  });
}

Tensor Tape::tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
  return make(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor Tape::sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
  return make(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor Tape::log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a[i]);
  return make(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / p.value[i];
  });
}

Tensor Tape::clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a[i], lo, hi);
  return make(a.shape(), std::move(out), {a}, [lo, hi](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.value[i] > lo && p.value[i] < hi) g[i] += self.grad[i];
    }
  });
}

Tensor Tape::one_minus(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - a[i];
  return make(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) shape_fail("concat_cols", std::to_string(m) + " rows", p.shape());
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(v.data() + r * w, w, out.data() + r * total + off);
    off += w;
  }
  return make({m, total}, std::move(out), parts, [m, total, widths](Node& self) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = *self.parents[k];
      const std::size_t w = widths[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * total + o + c];
      }
      o += w;
    }
  });
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin + count > n) {
    shape_fail("slice_cols", "at least " + std::to_string(begin + count) + " columns", a.shape());
  }
  std::vector<double> out(m * count);
  auto v = a.values();
  for (std::size_t r = 0; r < m; ++r) std::copy_n(v.data() + r * n + begin, count, out.data() + r * count);
  return make({m, count}, std::move(out), {a}, [m, n, begin, count](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < count; ++c) g[r * n + begin + c] += self.grad[r * count + c];
  });
}

Tensor Tape::reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    shape_fail("reshape", std::to_string(shape_size(shape)) + " elements", a.shape());
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor Tape::softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  auto v = a.values();
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = v.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < n; ++c) y[c] /= z;
  }
  return make(a.shape(), std::move(out), {a}, [m, n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < m; ++r) {
      const double* y = self.value.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (dy[c] - dot);
    }
  });
}

Tensor Tape::embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids) {
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  auto v = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ShapeError("embedding_lookup: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(vocab) + " rows");
    }
    std::copy_n(v.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return make({ids.size(), d}, std::move(out), {table}, [d, idv = std::move(idv)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      double* gr = g.data() + static_cast<std::size_t>(idv[i]) * d;
      const double* src = self.grad.data() + i * d;
      for (std::size_t c = 0; c < d; ++c) gr[c] += src[c];
    }
  });
}

Tensor Tape::sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make({1, 1}, {s}, {a}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& x : g) x += self.grad[0];
  });
}

Tensor Tape::mean(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  const double n = static_cast<double>(a.size());
  return make({1, 1}, {s / n}, {a}, [n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& x : g) x += self.grad[0] / n;
  });
}

Tensor Tape::cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets) {
  std::vector<double> w(targets.size(), 1.0);
  return cross_entropy(logits, targets, w);
}

Tensor Tape::cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                           std::span<const double> weights) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m || weights.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(m) + " rows but " +
                     std::to_string(targets.size()) + " targets / " +
                     std::to_string(weights.size()) + " weights");
  }
  std::vector<double> probs(m * n);
  double loss = 0.0;
  auto v = logits.values();
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= n) {
      throw ShapeError("cross_entropy: target id " + std::to_string(targets[r]) +
                       " outside [0," + std::to_string(n) + ")");
    }
    const double* x = v.data() + r * n;
    double* p = probs.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (p[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < n; ++c) p[c] /= z;
    if (weights[r] != 0.0) {
      const double logp = x[targets[r]] - mx - std::log(z);
      loss -= weights[r] * logp;
    }
  }
  std::vector<std::int32_t> tv(targets.begin(), targets.end());
  std::vector<double> wv(weights.begin(), weights.end());
  return make({1, 1}, {loss}, {logits},
              [m, n, probs = std::move(probs), tv = std::move(tv), wv = std::move(wv)](Node& self) {
                auto& g = self.parents[0]->ensure_grad();
                const double up = self.grad[0];
                for (std::size_t r = 0; r < m; ++r) {
                  if (wv[r] == 0.0) continue;
                  const double s = up * wv[r];
                  for (std::size_t c = 0; c < n; ++c) g[r * n + c] += s * probs[r * n + c];
                  g[r * n + static_cast<std::size_t>(tv[r])] -= s;
                }
              });
}

Tensor Tape::stack_steps(const std::vector<Tensor>& steps) {
  if (steps.empty()) throw ShapeError("stack_steps: no inputs");
  const std::size_t S = steps.size(), B = steps[0].rows(), D = steps[0].cols();
  for (const auto& s : steps) {
    if (s.rows() != B || s.cols() != D) shape_fail("stack_steps", shape_str({B, D}), s.shape());
  }
  std::vector<double> out(B * S * D);
  for (std::size_t j = 0; j < S; ++j) {
    auto v = steps[j].values();
    for (std::size_t b = 0; b < B; ++b) std::copy_n(v.data() + b * D, D, out.data() + (b * S + j) * D);
  }
  return make({B * S, D}, std::move(out), steps, [S, B, D](Node& self) {
    for (std::size_t j = 0; j < S; ++j) {
      Node& p = *self.parents[j];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < D; ++c) g[b * D + c] += self.grad[(b * S + j) * D + c];
    }
  });
}

Tensor Tape::add_grouped(const Tensor& x, const Tensor& y) {
  const std::size_t B = y.rows(), D = y.cols();
  if (x.cols() != D || B == 0 || x.rows() % B != 0) {
    shape_fail("add_grouped", "[k*" + std::to_string(B) + "," + std::to_string(D) + "]", x.shape());
  }
  const std::size_t S = x.rows() / B;
  std::vector<double> out(x.size());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < S; ++j)
      for (std::size_t c = 0; c < D; ++c)
        out[(b * S + j) * D + c] = xv[(b * S + j) * D + c] + yv[b * D + c];
  return make(x.shape(), std::move(out), {x, y}, [S, B, D](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < S; ++j)
          for (std::size_t c = 0; c < D; ++c) g[b * D + c] += self.grad[(b * S + j) * D + c];
    }
  });
}

Tensor Tape::weighted_sum(const Tensor& alpha, const Tensor& h) {
  const std::size_t B = alpha.rows(), S = alpha.cols(), D = h.cols();
  if (h.rows() != B * S) shape_fail("weighted_sum", "[" + std::to_string(B * S) + ",D]", h.shape());
  std::vector<double> out(B * D, 0.0);
  auto av = alpha.values();
  auto hv = h.values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < S; ++j) {
      const double w = av[b * S + j];
      if (w == 0.0) continue;
      const double* hr = hv.data() + (b * S + j) * D;
      double* o = out.data() + b * D;
      for (std::size_t c = 0; c < D; ++c) o[c] += w * hr[c];
    }
  return make({B, D}, std::move(out), {alpha, h}, [B, S, D](Node& self) {
    Node& pa = *self.parents[0];
    Node& ph = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < S; ++j) {
          const double* hr = ph.value.data() + (b * S + j) * D;
          const double* dy = self.grad.data() + b * D;
          double acc = 0.0;
          for (std::size_t c = 0; c < D; ++c) acc += hr[c] * dy[c];
          g[b * S + j] += acc;
        }
    }
    if (ph.requires_grad) {
      auto& g = ph.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < S; ++j) {
          const double w = pa.value[b * S + j];
          const double* dy = self.grad.data() + b * D;
          double* gr = g.data() + (b * S + j) * D;
          for (std::size_t c = 0; c < D; ++c) gr[c] += w * dy[c];
        }
    }
  });
}

// --- ParameterSet -----------------------------------------------------------

Tensor& ParameterSet::add(const std::string& name, const std::string& group, Shape shape, Rng& rng,
                          double range) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-range, range);
  return add(name, group, Tensor::from(std::move(shape), std::move(v), true));
}

Tensor& ParameterSet::add(const std::string& name, const std::string& group, Tensor value) {
  if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
  index_[name] = params_.size();
  params_.push_back({name, group, std::move(value)});
  return params_.back().tensor;
}

void ParameterSet::replace(const std::string& name, Tensor value) { get(name) = std::move(value); }

Tensor& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return params_[it->second].tensor;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return params_[it->second].tensor;
}

std::vector<std::string> ParameterSet::groups() const {
  std::vector<std::string> out;
  for (const auto& p : params_) {
    if (std::find(out.begin(), out.end(), p.group) == out.end()) out.push_back(p.group);
  }
  return out;
}

std::vector<Tensor> ParameterSet::tensors(const std::vector<std::string>& groups) const {
  std::vector<Tensor> out;
  for (const auto& p : params_) {
    if (groups.empty() || std::find(groups.begin(), groups.end(), p.group) != groups.end()) {
      out.push_back(p.tensor);
    }
  }
  return out;
}

std::vector<Tensor> ParameterSet::tensors_except(const std::vector<std::string>& excluded) const {
  std::vector<Tensor> out;
  for (const auto& p : params_) {
    if (std::find(excluded.begin(), excluded.end(), p.group) == excluded.end()) out.push_back(p.tensor);
  }
  return out;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::uint64_t ParameterSet::checksum(const std::string& group) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    if (!group.empty() && p.group != group) continue;
    h = fnv1a(p.name, h);
    h = fnv1a(p.tensor.values(), h);
  }
  return h;
}

ParameterSet ParameterSet::deep_copy() const {
  ParameterSet out;
  for (const auto& p : params_) out.add(p.name, p.group, p.tensor.clone(true));
  return out;
}

void ParameterSet::assign_values(const ParameterSet& other) {
  if (other.params_.size() != params_.size()) throw Error("assign_values: parameter count differs");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& dst = params_[i];
    const auto& src = other.params_[i];
    if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
      throw Error("assign_values: mismatch at '" + dst.name + "'");
    }
    auto d = dst.tensor.mutable_values();
    auto s = src.tensor.values();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

namespace {

constexpr char kMagic[4] = {'M', 'M', 'T', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;
  template <typename T>
  T get() {
    if (pos + sizeof(T) > bytes.size()) throw DataError("parameter file truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string str() {
    auto n = get<std::uint32_t>();
    if (pos + n > bytes.size()) throw DataError("parameter file truncated");
    std::string s(bytes.substr(pos, n));
    pos += n;
    return s;
  }
};

}  // namespace

std::string ParameterSet::serialize() const {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.group.size()));
    out += p.group;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.shape().size()));
    for (auto d : p.tensor.shape()) put<std::uint64_t>(out, d);
    auto v = p.tensor.values();
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  return out;
}

ParameterSet ParameterSet::deserialize(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("not a parameter file (bad magic)");
  }
  Reader r{bytes, 4};
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw DataError("unsupported parameter format version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  ParameterSet ps;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.str();
    auto group = r.str();
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = r.get<double>();
    ps.add(name, group, Tensor::from(std::move(shape), std::move(v), true));
  }
  if (r.pos != bytes.size()) throw DataError("trailing bytes in parameter file");
  return ps;
}

void ParameterSet::save(const std::string& path) const { write_file(path, serialize()); }

ParameterSet ParameterSet::load(const std::string& path) { return deserialize(read_file(path)); }

// --- Adam -------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), first_row_(params_.size(), 0), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::restrict_rows(const Tensor& param, std::size_t first_row) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].node() == param.node()) {
      first_row_[i] = first_row;
      return;
    }
  }
  throw Error("restrict_rows: tensor is not managed by this optimizer");
}

double grad_norm(const std::vector<Tensor>& params) {
  double s = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) s += g * g;
  return std::sqrt(s);
}

void Adam::step() {
  ++t_;
  double factor = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = grad_norm(params_);
    if (norm > config_.clip_norm) factor = config_.clip_norm / norm;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto g = p.grad();
    if (!g.empty() && g.size() != p.size()) {
      throw ShapeError("adam: gradient size " + std::to_string(g.size()) + " vs parameter size " +
                       std::to_string(p.size()));
    }
    auto val = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    if (m.size() != p.size()) {
      throw ShapeError("adam: parameter " + std::to_string(i) + " changed shape to " +
                       shape_str(p.shape()));
    }
    const std::size_t begin = first_row_[i] * p.cols();
    for (std::size_t k = begin; k < val.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k] * factor;
      m[k] = b1 * m[k] + (1.0 - b1) * gk;
      v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      val[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

// --- gradient check ---------------------------------------------------------

GradCheckResult gradient_check(const std::vector<Parameter>& params,
                               const std::function<Tensor(Tape&)>& loss_fn, double eps,
                               std::size_t max_per_tensor, std::uint64_t seed) {
  for (auto p : params) p.tensor.zero_grad();
  {
    Tape tape;
    auto loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape(Tape::Mode::Inference);
    return loss_fn(tape).item();
  };
  Rng rng(seed);
  GradCheckResult res;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    std::vector<double> analytic(t.size(), 0.0);
    if (!t.grad().empty()) analytic.assign(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> idx(t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_per_tensor) {
      rng.shuffle(idx);
      idx.resize(max_per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    auto vals = t.mutable_values();
    for (auto i : idx) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double up = eval();
      vals[i] = orig - eps;
      const double down = eval();
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-5});
      const double rel = std::abs(numeric - analytic[i]) / denom;
      ++res.checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  for (auto p : params) p.tensor.zero_grad();
  return res;
}

}  // namespace monomt
