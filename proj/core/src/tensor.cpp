#include "blockstate/tensor.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "blockstate/errors.hpp"

namespace blockstate {

namespace {

std::size_t checked_total(const std::vector<std::size_t>& shape) {
  std::size_t total = 1;
  for (std::size_t d : shape) {
    if (d < 1) throw dimension_error("axis length must be >= 1");
    total *= d;
  }
  return total;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_total(shape_), 0.0) {}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_total(shape_) != data_.size()) {
    throw dimension_error("data length " + std::to_string(data_.size()) +
                          " does not match shape product");
  }
}

DenseTensor DenseTensor::identity(std::size_t n) {
  DenseTensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

namespace {

std::size_t flat_index(const std::vector<std::size_t>& shape,
                       std::initializer_list<std::size_t> idx) {
  if (idx.size() != shape.size()) throw dimension_error("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    if (i >= shape[axis]) {
      throw dimension_error("index out of range on axis " + std::to_string(axis));
    }
    flat = flat * shape[axis] + i;
    ++axis;
  }
  return flat;
}

}  // namespace

double& DenseTensor::at(std::initializer_list<std::size_t> idx) {
  return data_[flat_index(shape_, idx)];
}

double DenseTensor::at(std::initializer_list<std::size_t> idx) const {
  return data_[flat_index(shape_, idx)];
}

DenseTensor DenseTensor::reshaped(std::vector<std::size_t> shape) const {
  return DenseTensor(std::move(shape), data_);
}

double DenseTensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

namespace {

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMatrix>;
using EConstMap = Eigen::Map<const EMatrix>;

// Gathers `t` into a (rows x cols) matrix whose rows enumerate `row_axes`
// (in order) and whose columns enumerate `col_axes`.
std::vector<double> permute_to_matrix(const DenseTensor& t,
                                      const std::vector<std::size_t>& row_axes,
                                      const std::vector<std::size_t>& col_axes,
                                      std::size_t rows, std::size_t cols) {
  const auto& shape = t.shape();
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }

  std::vector<std::size_t> order;
  order.reserve(shape.size());
  order.insert(order.end(), row_axes.begin(), row_axes.end());
  order.insert(order.end(), col_axes.begin(), col_axes.end());

  std::vector<double> out(rows * cols);
  std::vector<std::size_t> counter(order.size(), 0);
  std::size_t src = 0;
  for (std::size_t dst = 0; dst < out.size(); ++dst) {
    out[dst] = t[src];
    // odometer increment over the permuted axes, last axis fastest
    for (std::size_t i = order.size(); i-- > 0;) {
      const std::size_t ax = order[i];
      if (++counter[i] < shape[ax]) {
        src += strides[ax];
        break;
      }
      src -= strides[ax] * (shape[ax] - 1);
      counter[i] = 0;
    }
  }
  return out;
}

}  // namespace

DenseTensor contract(const DenseTensor& a, std::span<const std::size_t> axes_a,
                     const DenseTensor& b, std::span<const std::size_t> axes_b) {
  if (axes_a.size() != axes_b.size()) {
    throw dimension_error("contract: axis lists have different lengths (" +
                          std::to_string(axes_a.size()) + " vs " +
                          std::to_string(axes_b.size()) + ")");
  }
  auto check_axes = [](const DenseTensor& t, std::span<const std::size_t> axes,
                       const char* side) {
    std::vector<bool> seen(t.rank(), false);
    for (std::size_t ax : axes) {
      if (ax >= t.rank()) {
        throw dimension_error(std::string("contract: axis ") + std::to_string(ax) +
                              " out of range for " + side + " operand of rank " +
                              std::to_string(t.rank()));
      }
      if (seen[ax]) {
        throw dimension_error(std::string("contract: duplicate axis ") +
                              std::to_string(ax) + " on " + side + " operand");
      }
      seen[ax] = true;
    }
  };
  check_axes(a, axes_a, "left");
  check_axes(b, axes_b, "right");
  for (std::size_t i = 0; i < axes_a.size(); ++i) {
    if (a.shape()[axes_a[i]] != b.shape()[axes_b[i]]) {
      throw dimension_error(
          "contract: axis pair (" + std::to_string(axes_a[i]) + ", " +
          std::to_string(axes_b[i]) + ") has mismatched lengths " +
          std::to_string(a.shape()[axes_a[i]]) + " vs " +
          std::to_string(b.shape()[axes_b[i]]));
    }
  }

  std::vector<bool> paired_a(a.rank(), false), paired_b(b.rank(), false);
  for (std::size_t ax : axes_a) paired_a[ax] = true;
  for (std::size_t ax : axes_b) paired_b[ax] = true;

  std::vector<std::size_t> free_a, free_b, out_shape;
  std::size_t fa = 1, fb = 1, k = 1;
  for (std::size_t ax = 0; ax < a.rank(); ++ax) {
    if (!paired_a[ax]) {
      free_a.push_back(ax);
      fa *= a.shape()[ax];
      out_shape.push_back(a.shape()[ax]);
    }
  }
  for (std::size_t ax = 0; ax < b.rank(); ++ax) {
    if (!paired_b[ax]) {
      free_b.push_back(ax);
      fb *= b.shape()[ax];
      out_shape.push_back(b.shape()[ax]);
    }
  }
  for (std::size_t ax : axes_a) k *= a.shape()[ax];

  const std::vector<std::size_t> con_a(axes_a.begin(), axes_a.end());
  const std::vector<std::size_t> con_b(axes_b.begin(), axes_b.end());
  std::vector<double> am = permute_to_matrix(a, free_a, con_a, fa, k);
  std::vector<double> bm = permute_to_matrix(b, con_b, free_b, k, fb);

  if (out_shape.empty()) {
    // full contraction to a scalar, represented as shape {1}
    double acc = std::inner_product(am.begin(), am.end(), bm.begin(), 0.0);
    return DenseTensor({1}, {acc});
  }

  std::vector<double> out(fa * fb);
  EMap(out.data(), fa, fb) = EConstMap(am.data(), fa, k) * EConstMap(bm.data(), k, fb);
  return DenseTensor(std::move(out_shape), std::move(out));
}

DenseTensor contract(const DenseTensor& a, std::initializer_list<std::size_t> axes_a,
                     const DenseTensor& b, std::initializer_list<std::size_t> axes_b) {
  return contract(a, std::span<const std::size_t>(axes_a.begin(), axes_a.size()),
                  b, std::span<const std::size_t>(axes_b.begin(), axes_b.size()));
}

SVDResult svd(const DenseTensor& m) {
  if (m.rank() != 2) throw dimension_error("svd: input must be rank-2");
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  for (double v : m.values()) {
    if (!std::isfinite(v)) throw input_error("svd: input has non-finite entries");
  }
  EConstMap mapped(m.data(), rows, cols);
  Eigen::BDCSVD<EMatrix> solver(mapped, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) {
    throw numerical_error("svd: decomposition did not converge");
  }
  const std::size_t k = std::min(rows, cols);

  SVDResult out;
  out.s.assign(solver.singularValues().data(), solver.singularValues().data() + k);
  std::vector<double> u(rows * k), vt(k * cols);
  EMap(u.data(), rows, k) = solver.matrixU();
  EMap(vt.data(), k, cols) = solver.matrixV().transpose();
  out.u = DenseTensor({rows, k}, std::move(u));
  out.vt = DenseTensor({k, cols}, std::move(vt));
  return out;
}

EighResult eigh_truncated(const DenseTensor& x, double tol) {
  if (x.rank() != 2 || x.shape()[0] != x.shape()[1]) {
    throw dimension_error("eigh_truncated: input must be square rank-2");
  }
  const std::size_t n = x.shape()[0];
  const double scale = std::max(1.0, x.max_abs());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(x[i * n + j] - x[j * n + i]) > 1e-10 * scale) {
        throw input_error("eigh_truncated: matrix asymmetric at (" +
                          std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }

  EConstMap mapped(x.data(), n, n);
  Eigen::SelfAdjointEigenSolver<EMatrix> solver(mapped);
  if (solver.info() != Eigen::Success) {
    throw numerical_error("eigh_truncated: eigensolver did not converge");
  }
  const auto& vals = solver.eigenvalues();  // ascending
  const double lambda_max = vals(static_cast<Eigen::Index>(n) - 1);
  const double cut = tol * std::max(lambda_max, 1.0);
  if (vals(0) < -cut) {
    throw input_error("eigh_truncated: matrix is not positive semi-definite (min eigenvalue " +
                      std::to_string(vals(0)) + ")");
  }

  std::size_t kept = 0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    if (vals(i) > cut) ++kept;
  }

  EighResult out;
  out.eigvals.resize(kept);
  DenseTensor vecs({n, std::max<std::size_t>(kept, 1)});
  for (std::size_t c = 0; c < kept; ++c) {
    const Eigen::Index src = static_cast<Eigen::Index>(n - 1 - c);  // descending
    out.eigvals[c] = vals(src);
    for (std::size_t r = 0; r < n; ++r) {
      vecs[r * std::max<std::size_t>(kept, 1) + c] = solver.eigenvectors()(static_cast<Eigen::Index>(r), src);
    }
  }
  if (kept == 0) vecs = DenseTensor({n, 1});
  out.eigvecs = std::move(vecs);
  return out;
}

}  // namespace blockstate
