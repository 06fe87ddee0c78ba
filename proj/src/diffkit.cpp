#include "dfsense/diffkit.hpp"

#include <algorithm>
#include <cmath>

namespace dfsense {

Matrix linear_forward(const Matrix& x, const Matrix& W, const RowVector& b) {
  require_dims(x.cols() == W.rows(), "linear_forward: cols(x) != rows(W)");
  require_dims(b.size() == W.cols(), "linear_forward: bias length != cols(W)");
  Matrix y = x * W;
  y.rowwise() += b;
  return y;
}

LayerGrad linear_backward(const Matrix& x, const Matrix& W, const Matrix& dy) {
  require_dims(dy.rows() == x.rows() && dy.cols() == W.cols(), "linear_backward");
  LayerGrad g;
  g.params["W"] = x.transpose() * dy;
  g.params["b"] = dy.colwise().sum();
  g.input = dy * W.transpose();
  return g;
}

Matrix activation(const Matrix& x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return x.cwiseMax(0.0);
    case Activation::sigmoid:
      return x.unaryExpr([](double v) { return sigmoid(v); });
    case Activation::tanh:
      return x.array().tanh().matrix();
  }
  return x;
}

Matrix activation_backward(const Matrix& x, const Matrix& y, const Matrix& dy, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return (x.array() > 0.0).select(dy, 0.0);
    case Activation::sigmoid:
      return (dy.array() * y.array() * (1.0 - y.array())).matrix();
    case Activation::tanh:
      return (dy.array() * (1.0 - y.array().square())).matrix();
  }
  return dy;
}

// ----------------------------------------------------------------------------

GruParams::GruParams(Index input_dim, Index hidden_dim)
    : W_z(Matrix::Zero(input_dim + hidden_dim, hidden_dim)),
      W_r(Matrix::Zero(input_dim + hidden_dim, hidden_dim)),
      W_h(Matrix::Zero(input_dim + hidden_dim, hidden_dim)),
      b_z(Matrix::Zero(1, hidden_dim)),
      b_r(Matrix::Zero(1, hidden_dim)),
      b_h(Matrix::Zero(1, hidden_dim)) {}

std::vector<NamedTensor> GruParams::tensors() {
  return {{"W_z", &W_z}, {"b_z", &b_z}, {"W_r", &W_r},
          {"b_r", &b_r}, {"W_h", &W_h}, {"b_h", &b_h}};
}

std::vector<ConstNamedTensor> GruParams::tensors() const {
  return {{"W_z", &W_z}, {"b_z", &b_z}, {"W_r", &W_r},
          {"b_r", &b_r}, {"W_h", &W_h}, {"b_h", &b_h}};
}

namespace {

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

Matrix affine(const Matrix& x, const Matrix& W, const Matrix& b) {
  Matrix y = x * W;
  y.rowwise() += b.row(0);
  return y;
}

}  // namespace

Matrix gru_forward(const Matrix& x, const Matrix& h_prev, const GruParams& p, GruCache* cache) {
  const Index hid = p.hidden_dim();
  require_dims(x.cols() == p.input_dim(), "gru: input width");
  require_dims(h_prev.cols() == hid && h_prev.rows() == x.rows(), "gru: hidden state shape");

  Matrix xh = hcat(x, h_prev);
  Matrix zg = activation(affine(xh, p.W_z, p.b_z), Activation::sigmoid);
  Matrix r = activation(affine(xh, p.W_r, p.b_r), Activation::sigmoid);
  Matrix xrh = hcat(x, r.cwiseProduct(h_prev));
  Matrix hc = affine(xrh, p.W_h, p.b_h).array().tanh().matrix();
  Matrix h = ((1.0 - zg.array()) * h_prev.array() + zg.array() * hc.array()).matrix();
  if (cache) {
    cache->xh = std::move(xh);
    cache->xrh = std::move(xrh);
    cache->h_prev = h_prev;
    cache->zg = std::move(zg);
    cache->r = std::move(r);
    cache->hc = std::move(hc);
  }
  return h;
}

GruInputGrads gru_backward(const GruCache& c, const Matrix& dh, const GruParams& p,
                           GruParams& grads) {
  const Index in = p.input_dim();
  const Index hid = p.hidden_dim();

  Matrix dzg = (dh.array() * (c.hc.array() - c.h_prev.array())).matrix();
  Matrix dhc = dh.cwiseProduct(c.zg);
  Matrix dh_prev = (dh.array() * (1.0 - c.zg.array())).matrix();

  Matrix da_h = (dhc.array() * (1.0 - c.hc.array().square())).matrix();
  grads.W_h.noalias() += c.xrh.transpose() * da_h;
  grads.b_h += da_h.colwise().sum();
  Matrix dxrh = da_h * p.W_h.transpose();
  Matrix dx = dxrh.leftCols(in);
  Matrix drh = dxrh.rightCols(hid);
  Matrix dr = drh.cwiseProduct(c.h_prev);
  dh_prev += drh.cwiseProduct(c.r);

  Matrix da_r = (dr.array() * c.r.array() * (1.0 - c.r.array())).matrix();
  Matrix da_z = (dzg.array() * c.zg.array() * (1.0 - c.zg.array())).matrix();
  grads.W_r.noalias() += c.xh.transpose() * da_r;
  grads.b_r += da_r.colwise().sum();
  grads.W_z.noalias() += c.xh.transpose() * da_z;
  grads.b_z += da_z.colwise().sum();
  Matrix dxh = da_r * p.W_r.transpose() + da_z * p.W_z.transpose();
  dx += dxh.leftCols(in);
  dh_prev += dxh.rightCols(hid);
  return {std::move(dx), std::move(dh_prev)};
}

Vector gru_cell(const Vector& x, const Vector& h_prev, const GruParams& p) {
  Matrix h = gru_forward(x.transpose(), h_prev.transpose(), p);
  return h.row(0).transpose();
}

// ----------------------------------------------------------------------------

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double eps) {
  Matrix g(x.rows(), x.cols());
  Matrix xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = xp.data()[i];
    xp.data()[i] = orig + eps;
    const double fp = f(xp);
    xp.data()[i] = orig - eps;
    const double fm = f(xp);
    xp.data()[i] = orig;
    g.data()[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

double max_relative_error(const Matrix& a, const Matrix& b, double floor) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "max_relative_error");
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    const double y = b.data()[i];
    const double scale = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / scale);
  }
  return worst;
}

}  // namespace dfsense
