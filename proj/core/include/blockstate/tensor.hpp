#ifndef BLOCKSTATE_TENSOR_HPP
#define BLOCKSTATE_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace blockstate {

// Dense multi-dimensional array of doubles in row-major order. All tensors in
// this project (PEPS/MPS site tensors, Gram matrices, change-of-basis and
// Schmidt matrices) fit in memory as dense data; no sparsity, no GPU.
class DenseTensor {
 public:
  DenseTensor() = default;

  // Zero-initialized tensor of the given shape. Every axis length must be >= 1.
  explicit DenseTensor(std::vector<std::size_t> shape);
  DenseTensor(std::vector<std::size_t> shape, std::vector<double> data);

  static DenseTensor identity(std::size_t n);

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  // Multi-index access, row-major.
  double& at(std::initializer_list<std::size_t> idx);
  double at(std::initializer_list<std::size_t> idx) const;

  // Reinterprets the data with a new shape of identical total size.
  DenseTensor reshaped(std::vector<std::size_t> shape) const;

  double max_abs() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Pairwise tensor contraction. axes_a[i] of `a` is summed against axes_b[i]
// of `b`; the result carries the unpaired axes of `a` followed by the
// unpaired axes of `b`, in their original order. Throws dimension_error on
// mismatched axis lengths (naming the offending pair) or invalid axis lists.
DenseTensor contract(const DenseTensor& a, std::span<const std::size_t> axes_a,
                     const DenseTensor& b, std::span<const std::size_t> axes_b);

DenseTensor contract(const DenseTensor& a, std::initializer_list<std::size_t> axes_a,
                     const DenseTensor& b, std::initializer_list<std::size_t> axes_b);

struct SVDResult {
  DenseTensor u;           // m x k, orthonormal columns
  std::vector<double> s;   // k singular values, descending, >= 0
  DenseTensor vt;          // k x n, orthonormal rows
};

// Thin SVD of a rank-2 tensor, k = min(rows, cols). Non-convergence of the
// underlying solver is surfaced as numerical_error.
SVDResult svd(const DenseTensor& m);

struct EighResult {
  std::vector<double> eigvals;  // retained eigenvalues, descending, all > cut
  DenseTensor eigvecs;          // n x m isometry, column i pairs with eigvals[i]
};

// Eigendecomposition of a symmetric positive semi-definite matrix, truncated:
// only eigenvalues above tol * max(largest eigenvalue, 1) are kept, together
// with their eigenvectors. Throws input_error if the matrix is asymmetric
// beyond 1e-10 or has an eigenvalue below the negative of the cut.
EighResult eigh_truncated(const DenseTensor& x, double tol = 1e-12);

}  // namespace blockstate

#endif
