#pragma once

// Dense 64-bit vectors, row-major matrices and three-way tensors, plus the
// handful of contractions the recurrent models need.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace bilinear {

class Rng;

class Vec64 {
 public:
  Vec64() = default;
  explicit Vec64(std::size_t len, double fill = 0.0);
  explicit Vec64(std::vector<double> data);
  Vec64(std::initializer_list<double> values);

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool operator==(const Vec64&) const = default;

 private:
  std::vector<double> data_;
};

class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0);
  Mat64(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Mat64 identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Mat64&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Three-way tensor with element (i, j, k) stored at ((i * d1) + j) * d2 + k.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double fill = 0.0);
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, std::vector<double> data);

  std::size_t d0() const { return d0_; }
  std::size_t d1() const { return d1_; }
  std::size_t d2() const { return d2_; }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * d1_ + j) * d2_ + k;
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[index(i, j, k)]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[index(i, j, k)];
  }

  /// W[:, :, k] as a d0 x d1 matrix.
  Mat64 frontal_slice(std::size_t k) const;
  void set_frontal_slice(std::size_t k, const Mat64& slice);

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t d0_ = 0;
  std::size_t d1_ = 0;
  std::size_t d2_ = 0;
  std::vector<double> data_;
};

bool all_finite(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
/// Largest absolute entry; 0 for an empty span.
double max_abs(std::span<const double> v);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

Vec64 matvec(const Mat64& a, std::span<const double> x);
/// a^T x without forming the transpose.
Vec64 matvec_transposed(const Mat64& a, std::span<const double> x);
Mat64 matmul(const Mat64& a, const Mat64& b);
Mat64 transpose(const Mat64& a);
Mat64 subtract(const Mat64& a, const Mat64& b);

/// (A_x)_{ij} = sum_k W_{ijk} x_k.
Mat64 contract_tensor(const Tensor3& w, std::span<const double> x);

/// h' = Wh1 ((Wx^T x) * (Wh2^T h)) for a CP-factored tensor, in O(R (2H + D)).
Vec64 cp_transition(const Mat64& wh1, const Mat64& wh2, const Mat64& wx,
                    std::span<const double> x, std::span<const double> h);

/// Explicit sum_r wh1[:, r] (x) wh2[:, r] (x) wx[:, r].
Tensor3 cp_assemble(const Mat64& wh1, const Mat64& wh2, const Mat64& wx);

/// 2x2 counter-clockwise rotation by theta radians.
Mat64 rotation2(double theta);

/// v / ||v||_2. Throws DomainError("degenerate hidden state") on a zero vector.
Vec64 l2_normalize(std::span<const double> v);
void l2_normalize_inplace(std::span<double> v);

/// Entries i.i.d. in [-half_width, half_width).
void fill_uniform(std::span<double> out, double half_width, Rng& rng);
Vec64 uniform_vec(std::size_t len, double half_width, Rng& rng);
Mat64 uniform_mat(std::size_t rows, std::size_t cols, double half_width, Rng& rng);
Tensor3 uniform_tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double half_width,
                        Rng& rng);

}  // namespace bilinear
