#include "bilinear/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bilinear/error.hpp"
#include "bilinear/rng.hpp"

namespace bilinear {

namespace {

void require_positive(std::size_t n, const char* what) {
  if (n == 0) throw DimensionError(std::string(what) + " must be positive");
}

void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) throw DomainError(std::string(what) + " contains non-finite entries");
}

std::string shape_str(std::size_t a, std::size_t b) {
  return std::to_string(a) + "x" + std::to_string(b);
}

}  // namespace

Vec64::Vec64(std::size_t len, double fill) : data_(len, fill) {
  require_positive(len, "vector length");
  require_finite(data_, "vector");
}

Vec64::Vec64(std::vector<double> data) : data_(std::move(data)) {
  require_positive(data_.size(), "vector length");
  require_finite(data_, "vector");
}

Vec64::Vec64(std::initializer_list<double> values) : data_(values) {
  require_positive(data_.size(), "vector length");
  require_finite(data_, "vector");
}

Mat64::Mat64(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  require_positive(rows, "matrix rows");
  require_positive(cols, "matrix cols");
  require_finite(data_, "matrix");
}

Mat64::Mat64(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_positive(rows, "matrix rows");
  require_positive(cols, "matrix cols");
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix payload has " + std::to_string(data_.size()) +
                         " entries, expected " + shape_str(rows, cols));
  }
  require_finite(data_, "matrix");
}

Mat64 Mat64::identity(std::size_t n) {
  Mat64 m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Tensor3::Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double fill)
    : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, fill) {
  require_positive(d0, "tensor d0");
  require_positive(d1, "tensor d1");
  require_positive(d2, "tensor d2");
  require_finite(data_, "tensor");
}

Tensor3::Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, std::vector<double> data)
    : d0_(d0), d1_(d1), d2_(d2), data_(std::move(data)) {
  require_positive(d0, "tensor d0");
  require_positive(d1, "tensor d1");
  require_positive(d2, "tensor d2");
  if (data_.size() != d0 * d1 * d2) {
    throw DimensionError("tensor payload has " + std::to_string(data_.size()) +
                         " entries, expected " + std::to_string(d0 * d1 * d2));
  }
  require_finite(data_, "tensor");
}

Mat64 Tensor3::frontal_slice(std::size_t k) const {
  if (k >= d2_) throw DimensionError("frontal slice index out of range");
  Mat64 out(d0_, d1_);
  for (std::size_t i = 0; i < d0_; ++i)
    for (std::size_t j = 0; j < d1_; ++j) out(i, j) = (*this)(i, j, k);
  return out;
}

void Tensor3::set_frontal_slice(std::size_t k, const Mat64& slice) {
  if (k >= d2_) throw DimensionError("frontal slice index out of range");
  if (slice.rows() != d0_ || slice.cols() != d1_) {
    throw DimensionError("slice is " + shape_str(slice.rows(), slice.cols()) + ", tensor needs " +
                         shape_str(d0_, d1_));
  }
  for (std::size_t i = 0; i < d0_; ++i)
    for (std::size_t j = 0; j < d1_; ++j) (*this)(i, j, k) = slice(i, j);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Vec64 matvec(const Mat64& a, std::span<const double> x) {
  if (x.size() != a.cols()) {
    throw DimensionError("matvec: matrix is " + shape_str(a.rows(), a.cols()) +
                         ", vector has length " + std::to_string(x.size()));
  }
  Vec64 out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = dot(a.row(r), x);
  return out;
}

Vec64 matvec_transposed(const Mat64& a, std::span<const double> x) {
  if (x.size() != a.rows()) {
    throw DimensionError("matvec_transposed: matrix is " + shape_str(a.rows(), a.cols()) +
                         ", vector has length " + std::to_string(x.size()));
  }
  Vec64 out(a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += row[c] * x[r];
  }
  return out;
}

Mat64 matmul(const Mat64& a, const Mat64& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a.rows(), a.cols()) + " times " +
                         shape_str(b.rows(), b.cols()));
  }
  Mat64 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Mat64 transpose(const Mat64& a) {
  Mat64 out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Mat64 subtract(const Mat64& a, const Mat64& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("subtract: shape mismatch");
  Mat64 out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

Mat64 contract_tensor(const Tensor3& w, std::span<const double> x) {
  if (x.size() != w.d2()) {
    throw DimensionError("contract_tensor: tensor input dimension is " + std::to_string(w.d2()) +
                         ", input has length " + std::to_string(x.size()));
  }
  Mat64 out(w.d0(), w.d1());
  const auto wv = w.values();
  auto ov = out.values();
  const std::size_t d2 = w.d2();
  for (std::size_t ij = 0; ij < ov.size(); ++ij) {
    const double* slice = wv.data() + ij * d2;
    double s = 0.0;
    for (std::size_t k = 0; k < d2; ++k) s += slice[k] * x[k];
    ov[ij] = s;
  }
  return out;
}

Vec64 cp_transition(const Mat64& wh1, const Mat64& wh2, const Mat64& wx,
                    std::span<const double> x, std::span<const double> h) {
  const std::size_t rank = wh1.cols();
  if (wh2.cols() != rank || wx.cols() != rank) throw DimensionError("cp_transition: rank mismatch");
  if (wh1.rows() != wh2.rows()) throw DimensionError("cp_transition: hidden size mismatch");
  if (x.size() != wx.rows()) throw DimensionError("cp_transition: input length mismatch");
  if (h.size() != wh2.rows()) throw DimensionError("cp_transition: hidden length mismatch");
  Vec64 u = matvec_transposed(wx, x);
  Vec64 z = matvec_transposed(wh2, h);
  for (std::size_t r = 0; r < rank; ++r) u[r] *= z[r];
  return matvec(wh1, u.values());
}

Tensor3 cp_assemble(const Mat64& wh1, const Mat64& wh2, const Mat64& wx) {
  const std::size_t rank = wh1.cols();
  if (wh2.cols() != rank || wx.cols() != rank) throw DimensionError("cp_assemble: rank mismatch");
  Tensor3 w(wh1.rows(), wh2.rows(), wx.rows());
  for (std::size_t i = 0; i < w.d0(); ++i)
    for (std::size_t j = 0; j < w.d1(); ++j)
      for (std::size_t k = 0; k < w.d2(); ++k) {
        double s = 0.0;
        for (std::size_t r = 0; r < rank; ++r) s += wh1(i, r) * wh2(j, r) * wx(k, r);
        w(i, j, k) = s;
      }
  return w;
}

Mat64 rotation2(double theta) {
  if (!std::isfinite(theta)) throw DomainError("rotation2: angle must be finite");
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return Mat64(2, 2, {c, -s, s, c});
}

Vec64 l2_normalize(std::span<const double> v) {
  Vec64 out(std::vector<double>(v.begin(), v.end()));
  l2_normalize_inplace(out.values());
  return out;
}

void l2_normalize_inplace(std::span<double> v) {
  const double n = norm2(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("degenerate hidden state");
  for (double& x : v) x /= n;
}

void fill_uniform(std::span<double> out, double half_width, Rng& rng) {
  if (!(half_width > 0.0)) throw DomainError("uniform init: half width must be positive");
  for (double& v : out) v = half_width * (2.0 * rng.uniform() - 1.0);
}

Vec64 uniform_vec(std::size_t len, double half_width, Rng& rng) {
  Vec64 v(len);
  fill_uniform(v.values(), half_width, rng);
  return v;
}

Mat64 uniform_mat(std::size_t rows, std::size_t cols, double half_width, Rng& rng) {
  Mat64 m(rows, cols);
  fill_uniform(m.values(), half_width, rng);
  return m;
}

Tensor3 uniform_tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double half_width,
                        Rng& rng) {
  Tensor3 t(d0, d1, d2);
  fill_uniform(t.values(), half_width, rng);
  return t;
}

}  // namespace bilinear
