#ifndef BLOCKSTATE_ENTANGLEMENT_HPP
#define BLOCKSTATE_ENTANGLEMENT_HPP

#include <span>
#include <utility>
#include <vector>

#include "blockstate/dataset.hpp"
#include "blockstate/embedding.hpp"
#include "blockstate/tensor.hpp"

namespace blockstate {

// Gram matrices of region-restricted overlaps for a set of product states:
// (X_R)_{ij} = prod_{k in R} <phi_k^(i)|phi_k^(j)>. Both are symmetric PSD
// with unit diagonal, entries in [0, 1].
struct GramPair {
  DenseTensor x_a;  // N_sigma x N_sigma
  DenseTensor x_b;
};

GramPair gram_matrices(std::span<const ProductState> states, const Partition& partition,
                       int workers = 1);

// Schmidt data of the normalized sum of the product states across one
// bipartition. Entropy uses the natural logarithm.
struct SchmidtResult {
  std::vector<double> lambdas;     // normalized, descending, sum of squares = 1
  int rank = 0;                    // retained Schmidt rank
  double entropy = 0.0;
  std::pair<int, int> ranks_ab{0, 0};  // retained Gram ranks (m, m')
  double tol = 0.0;                // truncation tolerance used
};

// Gram-matrix route to the Schmidt spectrum: truncated eigendecompositions
// X_A = U_A D_A U_A^T and X_B = U_B D_B U_B^T, then the singular values of
// M = D_A^{1/2} U_A^T U_B D_B^{1/2}, normalized so the squares sum to one.
// Cost O(N_sigma^3) regardless of the number of qubits.
SchmidtResult schmidt_from_grams(const GramPair& grams, double tol = 1e-12);

// Coefficient matrices (N_sigma x rank) expressing the Schmidt vectors of
// each region in the spanning set of region-restricted input states:
// |phi_alpha^A> = sum_i coeff_a(i, alpha) |x_A^(i)>. Columns are orthonormal
// under the Gram metric: coeff^T X coeff = identity.
struct SchmidtBases {
  DenseTensor coeff_a;
  DenseTensor coeff_b;
};

SchmidtBases schmidt_vectors(const GramPair& grams, const SchmidtResult& result);

// -sum lambda^2 log lambda^2 with 0 log 0 = 0. Throws input_error unless the
// squares sum to 1 within 1e-8.
double entropy(std::span<const double> lambdas);

// Brute-force check: materializes the sum state as a dense 2^N vector,
// reshapes across the partition and runs a dense SVD. Refuses N > 20 sites.
SchmidtResult dense_oracle(std::span<const ProductState> states, const Partition& partition,
                           double tol = 1e-12);

// Schmidt spectra of the sum of the first N_sigma images of one class,
// top/bottom-half partition, one row per retained Schmidt value.
struct SpectrumRow {
  int n_sigma = 0;
  int alpha = 0;        // 1-based index into the descending spectrum
  double lambda_sq = 0.0;
};

std::vector<SpectrumRow> half_partition_scan(std::span<const Image> class_images,
                                             std::span<const int> sizes, double tol = 1e-12,
                                             int workers = 1);

// Mean/stddev of the entanglement entropy over all L x L squares in the
// centered window, for each requested L. std_s is the population deviation.
struct EntropyRow {
  int L = 0;
  double mean_s = 0.0;
  double std_s = 0.0;
  int n_partitions = 0;
};

std::vector<EntropyRow> window_entropy_scan(std::span<const Image> class_images, int n_sigma,
                                            std::span<const int> l_values, int window = 10,
                                            double tol = 1e-12, int workers = 1);

}  // namespace blockstate

#endif
