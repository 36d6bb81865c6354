#include "blockstate/entanglement.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "blockstate/errors.hpp"
#include "blockstate/util.hpp"

namespace blockstate {

namespace {

// Region-restricted log overlap sum_{k in region} log <phi_k^(i)|phi_k^(j)>.
// Returns -inf if any site pair is exactly orthogonal.
double region_log_overlap(const ProductState& a, const ProductState& b,
                          std::span<const int> region) {
  double acc = 0.0;
  for (int site : region) {
    const auto& u = a.site_vectors[site];
    const auto& v = b.site_vectors[site];
    const double dot = u[0] * v[0] + u[1] * v[1];
    if (dot <= 0.0) return -std::numeric_limits<double>::infinity();
    acc += std::log(dot);
  }
  return acc;
}

DenseTensor region_gram(std::span<const ProductState> states, std::span<const int> region,
                        int workers) {
  const std::size_t n = states.size();
  DenseTensor g({n, n});
  parallel_chunks(n, workers, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t i = begin; i < end; ++i) {
      g[i * n + i] = 1.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double lg = region_log_overlap(states[i], states[j], region);
        const double v = std::isinf(lg) ? 0.0 : std::exp(lg);
        g[i * n + j] = v;
        g[j * n + i] = v;
      }
    }
  });
  return g;
}

// Retention rule for Schmidt values: keep lambda_alpha with
// lambda_alpha^2 > tol * lambda_max^2.
std::size_t retained_count(std::span<const double> s, double tol) {
  if (s.empty() || s[0] <= 0.0) return 0;
  const double cut = tol * s[0] * s[0];
  std::size_t k = 0;
  while (k < s.size() && s[k] * s[k] > cut) ++k;
  return k;
}

SchmidtResult finalize_spectrum(std::vector<double> raw, double tol) {
  std::sort(raw.begin(), raw.end(), std::greater<>());
  const std::size_t kept = retained_count(raw, tol);
  if (kept == 0) {
    throw numerical_error("Schmidt spectrum is identically zero (degenerate input)");
  }
  raw.resize(kept);
  double sq = 0.0;
  for (double v : raw) sq += v * v;
  const double norm = std::sqrt(sq);
  for (double& v : raw) v /= norm;

  SchmidtResult out;
  out.rank = static_cast<int>(kept);
  out.tol = tol;
  out.lambdas = std::move(raw);
  out.entropy = entropy(out.lambdas);
  return out;
}

}  // namespace

GramPair gram_matrices(std::span<const ProductState> states, const Partition& partition,
                       int workers) {
  if (states.empty()) throw config_error("gram_matrices: empty state list");
  const std::size_t n_sites = states.front().size();
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].size() != n_sites) {
      throw dimension_error("gram_matrices: state " + std::to_string(i) + " has " +
                            std::to_string(states[i].size()) + " sites, expected " +
                            std::to_string(n_sites));
    }
  }
  if (static_cast<std::size_t>(partition.total_sites) != n_sites) {
    throw dimension_error("gram_matrices: partition covers " +
                          std::to_string(partition.total_sites) + " sites, states have " +
                          std::to_string(n_sites));
  }
  GramPair g;
  g.x_a = region_gram(states, partition.region_a, workers);
  g.x_b = region_gram(states, partition.region_b, workers);
  return g;
}

SchmidtResult schmidt_from_grams(const GramPair& grams, double tol) {
  const EighResult ea = eigh_truncated(grams.x_a, tol);
  const EighResult eb = eigh_truncated(grams.x_b, tol);
  const std::size_t m = ea.eigvals.size();
  const std::size_t mp = eb.eigvals.size();
  if (m == 0 || mp == 0) {
    throw numerical_error("schmidt_from_grams: a Gram matrix is numerically zero");
  }

  // M = D_A^{1/2} U_A^T U_B D_B^{1/2}, real case.
  DenseTensor overlap = contract(ea.eigvecs, {0}, eb.eigvecs, {0});  // m x m'
  for (std::size_t r = 0; r < m; ++r) {
    const double sr = std::sqrt(ea.eigvals[r]);
    for (std::size_t c = 0; c < mp; ++c) {
      overlap[r * mp + c] *= sr * std::sqrt(eb.eigvals[c]);
    }
  }

  SVDResult decomp = svd(overlap);
  SchmidtResult out = finalize_spectrum(std::move(decomp.s), tol);
  out.ranks_ab = {static_cast<int>(m), static_cast<int>(mp)};
  return out;
}

SchmidtBases schmidt_vectors(const GramPair& grams, const SchmidtResult& result) {
  const double tol = result.tol;
  const EighResult ea = eigh_truncated(grams.x_a, tol);
  const EighResult eb = eigh_truncated(grams.x_b, tol);
  const std::size_t m = ea.eigvals.size();
  const std::size_t mp = eb.eigvals.size();
  const std::size_t n = grams.x_a.shape()[0];
  const std::size_t rank = static_cast<std::size_t>(result.rank);
  if (rank > std::min(m, mp)) {
    throw input_error("schmidt_vectors: result rank exceeds Gram ranks");
  }

  DenseTensor overlap = contract(ea.eigvecs, {0}, eb.eigvecs, {0});
  for (std::size_t r = 0; r < m; ++r) {
    const double sr = std::sqrt(ea.eigvals[r]);
    for (std::size_t c = 0; c < mp; ++c) {
      overlap[r * mp + c] *= sr * std::sqrt(eb.eigvals[c]);
    }
  }
  SVDResult decomp = svd(overlap);  // overlap = V_A S V_B^T

  // coeff_A = U_A D_A^{-1/2} V_A[:, :rank], coeff_B = U_B D_B^{-1/2} V_B[:, :rank].
  // The 1/sqrt(<Sigma|Sigma>) normalization of the sum state does not enter:
  // Schmidt vectors of |Sigma> and of its normalized version coincide.
  const std::size_t k = std::min(m, mp);  // column count of V_A, row count of V_B^T
  SchmidtBases out;
  out.coeff_a = DenseTensor({n, rank});
  out.coeff_b = DenseTensor({n, rank});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t al = 0; al < rank; ++al) {
      double acc_a = 0.0;
      for (std::size_t g = 0; g < m; ++g) {
        acc_a += ea.eigvecs[i * m + g] / std::sqrt(ea.eigvals[g]) * decomp.u[g * k + al];
      }
      out.coeff_a[i * rank + al] = acc_a;
      double acc_b = 0.0;
      for (std::size_t g = 0; g < mp; ++g) {
        // V_B columns are rows of vt.
        acc_b += eb.eigvecs[i * mp + g] / std::sqrt(eb.eigvals[g]) * decomp.vt[al * mp + g];
      }
      out.coeff_b[i * rank + al] = acc_b;
    }
  }
  return out;
}

double entropy(std::span<const double> lambdas) {
  double sq = 0.0;
  for (double l : lambdas) sq += l * l;
  if (std::abs(sq - 1.0) > 1e-8) {
    throw input_error("entropy: squared Schmidt values sum to " + std::to_string(sq) +
                      ", expected 1");
  }
  double s = 0.0;
  for (double l : lambdas) {
    const double p = l * l;
    if (p > 0.0) s -= p * std::log(p);
  }
  return s;
}

SchmidtResult dense_oracle(std::span<const ProductState> states, const Partition& partition,
                           double tol) {
  if (states.empty()) throw config_error("dense_oracle: empty state list");
  const std::size_t n_sites = states.front().size();
  if (n_sites > 20) {
    throw config_error("dense_oracle: refusing " + std::to_string(n_sites) +
                       " sites (limit 20)");
  }
  if (static_cast<std::size_t>(partition.total_sites) != n_sites) {
    throw dimension_error("dense_oracle: partition site count mismatch");
  }
  const std::size_t dim_a = std::size_t(1) << partition.region_a.size();
  const std::size_t dim_b = std::size_t(1) << partition.region_b.size();

  auto region_vector = [](const ProductState& st, std::span<const int> region) {
    std::size_t dim = std::size_t(1) << region.size();
    std::vector<double> v(dim, 1.0);
    std::size_t filled = 1;
    for (int site : region) {
      const auto& q = st.site_vectors[site];
      // extend the Kronecker product by one site
      for (std::size_t i = filled; i-- > 0;) {
        const double base = v[i];
        v[2 * i] = base * q[0];
        v[2 * i + 1] = base * q[1];
      }
      filled *= 2;
    }
    return v;
  };

  DenseTensor mat({dim_a, dim_b});
  for (const ProductState& st : states) {
    if (st.size() != n_sites) throw dimension_error("dense_oracle: ragged state list");
    const std::vector<double> va = region_vector(st, partition.region_a);
    const std::vector<double> vb = region_vector(st, partition.region_b);
    for (std::size_t i = 0; i < dim_a; ++i) {
      for (std::size_t j = 0; j < dim_b; ++j) {
        mat[i * dim_b + j] += va[i] * vb[j];
      }
    }
  }

  SVDResult decomp = svd(mat);
  SchmidtResult out = finalize_spectrum(std::move(decomp.s), tol);
  out.ranks_ab = {out.rank, out.rank};
  return out;
}

std::vector<SpectrumRow> half_partition_scan(std::span<const Image> class_images,
                                             std::span<const int> sizes, double tol,
                                             int workers) {
  if (class_images.empty()) throw config_error("half_partition_scan: no images");
  const int h = class_images.front().height;
  const int w = class_images.front().width;
  const Partition part = top_half_partition(h, w);

  std::vector<SpectrumRow> rows;
  for (int n_sigma : sizes) {
    if (n_sigma < 1 || static_cast<std::size_t>(n_sigma) > class_images.size()) {
      throw config_error("half_partition_scan: requested " + std::to_string(n_sigma) +
                         " images, have " + std::to_string(class_images.size()));
    }
    std::vector<ProductState> states;
    states.reserve(n_sigma);
    for (int i = 0; i < n_sigma; ++i) states.push_back(embed_image(class_images[i]));
    const GramPair grams = gram_matrices(states, part, workers);
    const SchmidtResult res = schmidt_from_grams(grams, tol);
    for (int a = 0; a < res.rank; ++a) {
      rows.push_back({n_sigma, a + 1, res.lambdas[a] * res.lambdas[a]});
    }
  }
  return rows;
}

std::vector<EntropyRow> window_entropy_scan(std::span<const Image> class_images, int n_sigma,
                                            std::span<const int> l_values, int window,
                                            double tol, int workers) {
  if (class_images.empty()) throw config_error("window_entropy_scan: no images");
  if (n_sigma < 1 || static_cast<std::size_t>(n_sigma) > class_images.size()) {
    throw config_error("window_entropy_scan: requested " + std::to_string(n_sigma) +
                       " images, have " + std::to_string(class_images.size()));
  }
  const int h = class_images.front().height;
  const int w = class_images.front().width;

  std::vector<ProductState> states;
  states.reserve(n_sigma);
  for (int i = 0; i < n_sigma; ++i) states.push_back(embed_image(class_images[i]));

  std::vector<EntropyRow> rows;
  for (int L : l_values) {
    const std::vector<Partition> squares = central_window_squares(h, w, window, L);
    std::vector<double> entropies(squares.size());
    parallel_chunks(squares.size(), workers, [&](std::size_t begin, std::size_t end, int) {
      for (std::size_t i = begin; i < end; ++i) {
        const GramPair grams = gram_matrices(states, squares[i], 1);
        entropies[i] = schmidt_from_grams(grams, tol).entropy;
      }
    });
    double mean = 0.0;
    for (double s : entropies) mean += s;
    mean /= static_cast<double>(entropies.size());
    double var = 0.0;
    for (double s : entropies) var += (s - mean) * (s - mean);
    var /= static_cast<double>(entropies.size());
    rows.push_back({L, mean, std::sqrt(var), static_cast<int>(entropies.size())});
  }
  return rows;
}

}  // namespace blockstate
