#include "protoncast/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "protoncast/error.hpp"

namespace protoncast::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

ConstMap map(MatrixRef m) { return ConstMap(m.data, static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)); }
MutMap map(MutMatrixRef m) { return MutMap(m.data, static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)); }
ConstVecMap map(CVec v) { return ConstVecMap(v.data(), static_cast<Eigen::Index>(v.size())); }
VecMap map(Vec v) { return VecMap(v.data(), static_cast<Eigen::Index>(v.size())); }

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

void require_same(std::size_t a, std::size_t b, const char* what) { require(a == b, what); }

}  // namespace

void matmul(MatrixRef a, MatrixRef b, MutMatrixRef c, bool accumulate) {
  require(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "matmul: incompatible shapes");
  auto out = map(c);
  if (accumulate)
    out.noalias() += map(a) * map(b);
  else
    out.noalias() = map(a) * map(b);
}

void matmul_backward(MatrixRef a, MatrixRef b, MatrixRef c_bar, MutMatrixRef a_bar, MutMatrixRef b_bar) {
  require(a.cols == b.rows && c_bar.rows == a.rows && c_bar.cols == b.cols, "matmul_backward: incompatible shapes");
  if (a_bar.data) {
    require(a_bar.rows == a.rows && a_bar.cols == a.cols, "matmul_backward: a_bar shape");
    map(a_bar).noalias() += map(c_bar) * map(b).transpose();
  }
  if (b_bar.data) {
    require(b_bar.rows == b.rows && b_bar.cols == b.cols, "matmul_backward: b_bar shape");
    map(b_bar).noalias() += map(a).transpose() * map(c_bar);
  }
}

void matvec(MatrixRef a, CVec x, Vec y) {
  require(a.cols == x.size() && a.rows == y.size(), "matvec: incompatible shapes");
  map(y).noalias() = map(a) * map(x);
}

void matvec_backward(MatrixRef a, CVec x, CVec y_bar, MutMatrixRef a_bar, Vec x_bar) {
  require(a.cols == x.size() && a.rows == y_bar.size(), "matvec_backward: incompatible shapes");
  if (a_bar.data) {
    require(a_bar.rows == a.rows && a_bar.cols == a.cols, "matvec_backward: a_bar shape");
    map(a_bar).noalias() += map(y_bar) * map(x).transpose();
  }
  if (!x_bar.empty()) {
    require_same(x_bar.size(), x.size(), "matvec_backward: x_bar shape");
    map(x_bar).noalias() += map(a).transpose() * map(y_bar);
  }
}

void add(CVec a, CVec b, Vec out) {
  require(a.size() == b.size() && a.size() == out.size(), "add: length mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
}

void add_backward(CVec out_bar, Vec a_bar, Vec b_bar) {
  require(out_bar.size() == a_bar.size() && out_bar.size() == b_bar.size(), "add_backward: length mismatch");
  for (std::size_t i = 0; i < out_bar.size(); ++i) {
    a_bar[i] += out_bar[i];
    b_bar[i] += out_bar[i];
  }
}

void mul(CVec a, CVec b, Vec out) {
  require(a.size() == b.size() && a.size() == out.size(), "mul: length mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
}

void mul_backward(CVec a, CVec b, CVec out_bar, Vec a_bar, Vec b_bar) {
  require(a.size() == b.size() && a.size() == out_bar.size() && a_bar.size() == a.size() &&
              b_bar.size() == b.size(),
          "mul_backward: length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    a_bar[i] += out_bar[i] * b[i];
    b_bar[i] += out_bar[i] * a[i];
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void sigmoid(CVec x, Vec y) {
  require_same(x.size(), y.size(), "sigmoid: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
}

void sigmoid_backward(CVec y, CVec y_bar, Vec x_bar) {
  require(y.size() == y_bar.size() && y.size() == x_bar.size(), "sigmoid_backward: length mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) x_bar[i] += y_bar[i] * y[i] * (1.0 - y[i]);
}

void tanh(CVec x, Vec y) {
  require_same(x.size(), y.size(), "tanh: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
}

void tanh_backward(CVec y, CVec y_bar, Vec x_bar) {
  require(y.size() == y_bar.size() && y.size() == x_bar.size(), "tanh_backward: length mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) x_bar[i] += y_bar[i] * (1.0 - y[i] * y[i]);
}

void softmax(CVec x, Vec y) {
  require(x.size() == y.size() && !x.empty(), "softmax: length mismatch");
  const double hi = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - hi);
    total += y[i];
  }
  for (double& v : y) v /= total;
}

void softmax_backward(CVec y, CVec y_bar, Vec x_bar) {
  require(y.size() == y_bar.size() && y.size() == x_bar.size(), "softmax_backward: length mismatch");
  const double s = dot(y, y_bar);
  for (std::size_t i = 0; i < y.size(); ++i) x_bar[i] += y[i] * (y_bar[i] - s);
}

void concat(std::initializer_list<CVec> parts, Vec out) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  require_same(total, out.size(), "concat: length mismatch");
  auto it = out.begin();
  for (const auto& p : parts) it = std::copy(p.begin(), p.end(), it);
}

void concat_backward(CVec out_bar, std::initializer_list<Vec> part_bars) {
  std::size_t total = 0;
  for (const auto& p : part_bars) total += p.size();
  require_same(total, out_bar.size(), "concat_backward: length mismatch");
  std::size_t offset = 0;
  for (const auto& p : part_bars) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += out_bar[offset + i];
    offset += p.size();
  }
}

void slice(CVec x, std::size_t offset, Vec out) {
  require(offset + out.size() <= x.size(), "slice: out of range");
  std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(offset), out.size(), out.begin());
}

void slice_backward(CVec out_bar, std::size_t offset, Vec x_bar) {
  require(offset + out_bar.size() <= x_bar.size(), "slice_backward: out of range");
  for (std::size_t i = 0; i < out_bar.size(); ++i) x_bar[offset + i] += out_bar[i];
}

double mean_square(CVec x) {
  require(!x.empty(), "mean_square: empty input");
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

void mean_square_backward(CVec x, double out_bar, Vec x_bar) {
  require(!x.empty() && x.size() == x_bar.size(), "mean_square_backward: length mismatch");
  const double scale = 2.0 * out_bar / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x_bar[i] += scale * x[i];
}

double mse_loss(CVec pred, CVec obs) {
  require(!pred.empty() && pred.size() == obs.size(), "mse_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - obs[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

void mse_loss_backward(CVec pred, CVec obs, double out_bar, Vec pred_bar) {
  require(!pred.empty() && pred.size() == obs.size() && pred.size() == pred_bar.size(),
          "mse_loss_backward: length mismatch");
  const double scale = 2.0 * out_bar / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred_bar[i] += scale * (pred[i] - obs[i]);
}

double dot(CVec a, CVec b) {
  require_same(a.size(), b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace protoncast::ops
