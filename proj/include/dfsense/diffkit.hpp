#pragma once
// Dense layers with hand-written reverse-mode gradients.
//
// Every layer is a pair of free functions: a forward pass that returns the
// output (optionally filling a cache) and a backward pass that maps an
// upstream gradient to parameter and input gradients. Rows index samples
// (cells), columns index features.

#include "dfsense/core.hpp"

#include <cmath>
#include <concepts>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dfsense {

struct LayerGrad {
  std::map<std::string, Matrix> params;
  Matrix input;
};

// ----------------------------------------------------------------------------
// Named parameter views

struct NamedTensor {
  std::string name;
  Matrix* value;
};

struct ConstNamedTensor {
  std::string name;
  const Matrix* value;
};

template <typename P>
concept ParameterSet = requires(P& p, const P& cp) {
  { p.tensors() } -> std::same_as<std::vector<NamedTensor>>;
  { cp.tensors() } -> std::same_as<std::vector<ConstNamedTensor>>;
};

template <ParameterSet P>
P zeros_like(const P& p) {
  P out = p;
  for (auto& t : out.tensors()) t.value->setZero();
  return out;
}

/// out += scale * g, tensor by tensor.
template <ParameterSet P>
void axpy(P& out, const P& g, double scale = 1.0) {
  auto dst = out.tensors();
  auto src = g.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].value += scale * *src[i].value;
}

template <ParameterSet P>
void check_finite_params(const P& p, std::string_view what) {
  for (const auto& t : p.tensors()) check_finite(*t.value, std::string(what) + "." + t.name);
}

template <ParameterSet P>
std::size_t parameter_count(const P& p) {
  std::size_t n = 0;
  for (const auto& t : p.tensors()) n += static_cast<std::size_t>(t.value->size());
  return n;
}

// ----------------------------------------------------------------------------
// Linear

/// x W + b with b broadcast over rows.
Matrix linear_forward(const Matrix& x, const Matrix& W, const RowVector& b);
LayerGrad linear_backward(const Matrix& x, const Matrix& W, const Matrix& dy);

// ----------------------------------------------------------------------------
// Elementwise activations

enum class Activation { relu, sigmoid, tanh };

Matrix activation(const Matrix& x, Activation kind);
/// dL/dx given the pre-activation x, post-activation y and dL/dy.
Matrix activation_backward(const Matrix& x, const Matrix& y, const Matrix& dy, Activation kind);

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// ----------------------------------------------------------------------------
// Softmax / log-sum-exp

template <typename Derived>
typename Derived::PlainObject softmax(const Eigen::MatrixBase<Derived>& v) {
  check_finite(v, "softmax input");
  const double m = v.maxCoeff();
  typename Derived::PlainObject e = (v.array() - m).exp().matrix();
  return e / e.sum();
}

/// dL/ds for p = softmax(s).
template <typename D1, typename D2>
typename D1::PlainObject softmax_backward(const Eigen::MatrixBase<D1>& p,
                                          const Eigen::MatrixBase<D2>& dp) {
  const double inner = p.cwiseProduct(dp).sum();
  return (p.array() * (dp.array() - inner)).matrix();
}

template <typename Derived>
double logsumexp(const Eigen::MatrixBase<Derived>& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

// ----------------------------------------------------------------------------
// GRU
//
//   zg = sigmoid([x, h] W_z + b_z)
//   r  = sigmoid([x, h] W_r + b_r)
//   hc = tanh([x, r*h] W_h + b_h)
//   h' = (1 - zg) * h + zg * hc

struct GruParams {
  Matrix W_z, W_r, W_h;  // (in + hidden) x hidden
  Matrix b_z, b_r, b_h;  // 1 x hidden

  GruParams() = default;
  GruParams(Index input_dim, Index hidden_dim);

  Index input_dim() const { return W_z.rows() - W_z.cols(); }
  Index hidden_dim() const { return W_z.cols(); }

  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

struct GruCache {
  Matrix xh;   // [x, h_prev]
  Matrix xrh;  // [x, r * h_prev]
  Matrix h_prev, zg, r, hc;
};

/// Batched cell: each row of x / h_prev is an independent sequence element.
Matrix gru_forward(const Matrix& x, const Matrix& h_prev, const GruParams& p,
                   GruCache* cache = nullptr);

struct GruInputGrads {
  Matrix dx;
  Matrix dh_prev;
};

/// Accumulates parameter gradients into `grads`.
GruInputGrads gru_backward(const GruCache& cache, const Matrix& dh, const GruParams& p,
                           GruParams& grads);

/// Single-sequence convenience form of gru_forward.
Vector gru_cell(const Vector& x, const Vector& h_prev, const GruParams& p);

// ----------------------------------------------------------------------------
// Finite differences (test oracle)

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double eps = 1e-5);

/// max |a - b| / max(|a|, |b|, floor), elementwise.
double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6);

// ----------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <ParameterSet P>
class Adam {
 public:
  Adam(const P& like, AdamConfig cfg) : cfg_(cfg), m_(zeros_like(like)), v_(zeros_like(like)) {}

  void step(P& params, const P& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
      Matrix& mi = *m[i].value;
      Matrix& vi = *v[i].value;
      const Matrix& gi = *g[i].value;
      mi = cfg_.beta1 * mi + (1.0 - cfg_.beta1) * gi;
      vi = cfg_.beta2 * vi + (1.0 - cfg_.beta2) * gi.cwiseAbs2();
      p[i].value->array() -=
          cfg_.lr * (mi.array() / c1) / ((vi.array() / c2).sqrt() + cfg_.eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  P m_;
  P v_;
  long t_ = 0;
};

}  // namespace dfsense
