#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "blockstate/errors.hpp"
#include "blockstate/models.hpp"
#include "blockstate/rng.hpp"

// PEPS block contraction. A block is contracted exactly, site by site in
// row-major order, carrying a boundary ("zipper") tensor whose legs are the
// emitted down-bonds of the current row, the horizontal bond entering the
// next site, and the not-yet-consumed down-bonds of the previous row:
//
//   frontier = [d_{r,0..c-1}, h, u_{r,c..n-1}]
//
// The same kernel runs the single layer (site tensors contracted with the
// input product state) and the double layer (norms), where bond dimensions
// are squared. Scales are accumulated in log space to avoid under/overflow.

namespace blockstate {

namespace {

struct Scaled {
  double value = 0.0;     // mantissa-like factor
  double log_scale = 0.0; // total = value * exp(log_scale)

  double log_abs() const { return std::log(std::abs(value)) + log_scale; }
};

// One absorption step: frontier [P, dl, du, S] with site tensor A [du, dd, dl, dr]
// -> frontier [P*dd, dr, S].
void absorb_forward(const std::vector<double>& in, std::vector<double>& out,
                    std::size_t P, std::size_t dl, std::size_t du, std::size_t S,
                    const double* A, std::size_t dd, std::size_t dr) {
  out.assign(P * dd * dr * S, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t l = 0; l < dl; ++l) {
      for (std::size_t u = 0; u < du; ++u) {
        const double* in_row = in.data() + ((p * dl + l) * du + u) * S;
        const double* a_row = A + (u * dd * dl + l) * dr;  // A[u, d, l, r] with d stride dl*dr
        for (std::size_t d = 0; d < dd; ++d) {
          for (std::size_t r = 0; r < dr; ++r) {
            const double a = a_row[d * dl * dr + r];
            if (a == 0.0) continue;
            double* out_row = out.data() + ((p * dd + d) * dr + r) * S;
            for (std::size_t s = 0; s < S; ++s) out_row[s] += a * in_row[s];
          }
        }
      }
    }
  }
}

// Backward step: suffix [P*dd, dr, S] with A [du, dd, dl, dr] -> suffix [P, dl, du, S].
void absorb_backward(const std::vector<double>& in, std::vector<double>& out,
                     std::size_t P, std::size_t dl, std::size_t du, std::size_t S,
                     const double* A, std::size_t dd, std::size_t dr) {
  out.assign(P * dl * du * S, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t d = 0; d < dd; ++d) {
      for (std::size_t r = 0; r < dr; ++r) {
        const double* in_row = in.data() + ((p * dd + d) * dr + r) * S;
        for (std::size_t u = 0; u < du; ++u) {
          for (std::size_t l = 0; l < dl; ++l) {
            const double a = A[((u * dd + d) * dl + l) * dr + r];
            if (a == 0.0) continue;
            double* out_row = out.data() + ((p * dl + l) * du + u) * S;
            for (std::size_t s = 0; s < S; ++s) out_row[s] += a * in_row[s];
          }
        }
      }
    }
  }
}

// Environment of a site: contract prefix [P, dl, du, S] with suffix
// [P*dd, dr, S] over P and S, leaving env [du, dd, dl, dr].
void site_environment(const std::vector<double>& pre, const std::vector<double>& suf,
                      std::size_t P, std::size_t dl, std::size_t du, std::size_t S,
                      std::size_t dd, std::size_t dr, std::vector<double>& env) {
  env.assign(du * dd * dl * dr, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t l = 0; l < dl; ++l) {
      for (std::size_t u = 0; u < du; ++u) {
        const double* pre_row = pre.data() + ((p * dl + l) * du + u) * S;
        for (std::size_t d = 0; d < dd; ++d) {
          for (std::size_t r = 0; r < dr; ++r) {
            const double* suf_row = suf.data() + ((p * dd + d) * dr + r) * S;
            double acc = 0.0;
            for (std::size_t s = 0; s < S; ++s) acc += pre_row[s] * suf_row[s];
            env[((u * dd + d) * dl + l) * dr + r] += acc;
          }
        }
      }
    }
  }
}

double rescale(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  if (m == 0.0 || (m > 1e-64 && m < 1e64)) return 0.0;
  const double inv = 1.0 / m;
  for (double& x : v) x *= inv;
  return std::log(m);
}

// Per-thread scratch for block contractions.
struct Workspace {
  std::vector<double> site_a;                  // phys-contracted site tensors, packed
  std::vector<std::size_t> site_a_off;
  std::vector<double> frontier, next;
  std::vector<std::vector<double>> prefixes;   // forward zipper states
  std::vector<double> prefix_logs;
  std::vector<std::vector<double>> suffixes;
  std::vector<double> suffix_logs;
  std::vector<double> env;
  std::vector<double> dbl;                     // double-layer site tensors, packed
  std::vector<std::size_t> dbl_off;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

struct LayerDims {
  // bond dims of site (r, c) in the active layer (single or squared)
  std::size_t up, down, left, right;
};

LayerDims layer_dims(const SiteShape& s, bool doubled) {
  auto sq = [doubled](int d) {
    return doubled ? std::size_t(d) * std::size_t(d) : std::size_t(d);
  };
  return {sq(s.up), sq(s.down), sq(s.left), sq(s.right)};
}

// Frontier fold sizes for the site at block-grid position (r, c).
struct FrontierDims {
  std::size_t P, S;
};

FrontierDims frontier_dims(int n, int c, const LayerDims& d) {
  FrontierDims f;
  f.P = 1;
  for (int j = 0; j < c; ++j) f.P *= d.down;   // row-r down legs already emitted
  f.S = 1;
  for (int j = c + 1; j < n; ++j) f.S *= d.up; // row-(r-1) down legs still pending
  return f;
}

// Contracts one block in the single layer: site tensors dotted with the
// product-state vectors first. Returns the scalar with its log scale.
// If `ws_keep_prefixes`, forward zipper states are stored for the gradient.
Scaled block_value(const NNBPSModel& model, const double* params,
                   const ProductState& x, int block, bool keep_prefixes) {
  Workspace& ws = workspace();
  const int n = model.layout().n;
  const auto& shapes = model.site_shapes();
  const auto& sites = model.layout().blocks[block];
  const int n_sites = n * n;

  // physical contraction
  std::size_t total = 0;
  ws.site_a_off.resize(n_sites);
  for (int s = 0; s < n_sites; ++s) {
    ws.site_a_off[s] = total;
    total += shapes[s].size() / 2;
  }
  ws.site_a.resize(total);
  for (int s = 0; s < n_sites; ++s) {
    const SiteShape& sh = shapes[s];
    const double* t = params + sh.offset;
    const std::size_t half = sh.size() / 2;
    const auto& q = x.site_vectors[sites[s]];
    double* a = ws.site_a.data() + ws.site_a_off[s];
    for (std::size_t i = 0; i < half; ++i) a[i] = q[0] * t[i] + q[1] * t[half + i];
  }

  if (keep_prefixes) {
    ws.prefixes.assign(n_sites + 1, {});
    ws.prefix_logs.assign(n_sites + 1, 0.0);
  }

  ws.frontier.assign(1, 1.0);
  double log_scale = 0.0;
  for (int s = 0; s < n_sites; ++s) {
    if (keep_prefixes) {
      ws.prefixes[s] = ws.frontier;
      ws.prefix_logs[s] = log_scale;
    }
    const int c = s % n;
    const LayerDims d = layer_dims(shapes[s], false);
    const FrontierDims f = frontier_dims(n, c, d);
    absorb_forward(ws.frontier, ws.next, f.P, d.left, d.up, f.S,
                   ws.site_a.data() + ws.site_a_off[s], d.down, d.right);
    ws.frontier.swap(ws.next);
    log_scale += rescale(ws.frontier);
  }
  if (keep_prefixes) {
    ws.prefixes[n_sites] = ws.frontier;
    ws.prefix_logs[n_sites] = log_scale;
  }
  return {ws.frontier[0], log_scale};
}

double floored_log_sq(const Scaled& v, int* floor_events) {
  if (v.value == 0.0 || v.log_abs() < std::log(kOverlapFloor)) {
    if (floor_events) ++(*floor_events);
    return kFlooredLogSq;
  }
  return 2.0 * v.log_abs();
}

// Builds the double-layer site tensors E[(u,u'),(d,d'),(l,l'),(r,r')] for one
// block/class slab.
void build_double_layer(const NNBPSModel& model, const double* params) {
  Workspace& ws = workspace();
  const auto& shapes = model.site_shapes();
  const int n_sites = model.layout().n * model.layout().n;
  std::size_t total = 0;
  ws.dbl_off.resize(n_sites);
  for (int s = 0; s < n_sites; ++s) {
    ws.dbl_off[s] = total;
    const SiteShape& sh = shapes[s];
    total += std::size_t(sh.up) * sh.up * sh.down * sh.down * sh.left * sh.left *
             sh.right * sh.right;
  }
  ws.dbl.assign(total, 0.0);
  for (int s = 0; s < n_sites; ++s) {
    const SiteShape& sh = shapes[s];
    const double* t = params + sh.offset;
    double* e = ws.dbl.data() + ws.dbl_off[s];
    const std::size_t U = sh.up, D = sh.down, L = sh.left, R = sh.right;
    for (std::size_t u = 0; u < U; ++u)
      for (std::size_t u2 = 0; u2 < U; ++u2)
        for (std::size_t d = 0; d < D; ++d)
          for (std::size_t d2 = 0; d2 < D; ++d2)
            for (std::size_t l = 0; l < L; ++l)
              for (std::size_t l2 = 0; l2 < L; ++l2)
                for (std::size_t r = 0; r < R; ++r)
                  for (std::size_t r2 = 0; r2 < R; ++r2) {
                    double acc = 0.0;
                    for (std::size_t p = 0; p < 2; ++p) {
                      acc += t[(((p * U + u) * D + d) * L + l) * R + r] *
                             t[(((p * U + u2) * D + d2) * L + l2) * R + r2];
                    }
                    e[((((u * U + u2) * D * D + d * D + d2) * L * L + l * L + l2) *
                           R * R +
                       r * R + r2)] = acc;
                  }
  }
}

Scaled block_norm_value(const NNBPSModel& model, int block, int cls, bool keep_prefixes) {
  Workspace& ws = workspace();
  const int n = model.layout().n;
  const auto& shapes = model.site_shapes();
  const int n_sites = n * n;
  build_double_layer(model, model.params().data() + model.param_base(block, cls));

  if (keep_prefixes) {
    ws.prefixes.assign(n_sites + 1, {});
    ws.prefix_logs.assign(n_sites + 1, 0.0);
  }
  ws.frontier.assign(1, 1.0);
  double log_scale = 0.0;
  for (int s = 0; s < n_sites; ++s) {
    if (keep_prefixes) {
      ws.prefixes[s] = ws.frontier;
      ws.prefix_logs[s] = log_scale;
    }
    const int c = s % n;
    const LayerDims d = layer_dims(shapes[s], true);
    const FrontierDims f = frontier_dims(n, c, d);
    absorb_forward(ws.frontier, ws.next, f.P, d.left, d.up, f.S,
                   ws.dbl.data() + ws.dbl_off[s], d.down, d.right);
    ws.frontier.swap(ws.next);
    log_scale += rescale(ws.frontier);
  }
  if (keep_prefixes) {
    ws.prefixes[n_sites] = ws.frontier;
    ws.prefix_logs[n_sites] = log_scale;
  }
  return {ws.frontier[0], log_scale};
}

// Backward zipper states for the current layer. `packed`/`offsets` select the
// single- or double-layer site tensors already built in the workspace.
void build_suffixes(const NNBPSModel& model, const std::vector<double>& packed,
                    const std::vector<std::size_t>& offsets, bool doubled) {
  Workspace& ws = workspace();
  const int n = model.layout().n;
  const int n_sites = n * n;
  ws.suffixes.assign(n_sites + 1, {});
  ws.suffix_logs.assign(n_sites + 1, 0.0);
  ws.suffixes[n_sites] = {1.0};
  double log_scale = 0.0;
  std::vector<double> cur = {1.0};
  for (int s = n_sites - 1; s >= 0; --s) {
    const int c = s % n;
    const LayerDims d = layer_dims(model.site_shapes()[s], doubled);
    const FrontierDims f = frontier_dims(n, c, d);
    absorb_backward(cur, ws.next, f.P, d.left, d.up, f.S,
                    packed.data() + offsets[s], d.down, d.right);
    cur.swap(ws.next);
    log_scale += rescale(cur);
    ws.suffixes[s] = cur;
    ws.suffix_logs[s] = log_scale;
  }
}

}  // namespace

NNBPSModel::NNBPSModel(BlockLayout layout, int chi) : layout_(std::move(layout)), chi_(chi) {
  if (chi_ < 1) throw config_error("bond dimension chi must be >= 1");
  const int n = layout_.n;
  // exact norm contraction carries a (chi^2)^(n+1) frontier; keep it in memory
  double frontier = std::pow(double(chi_) * chi_, n + 1);
  if (frontier > double(1 << 22)) {
    throw config_error("chi = " + std::to_string(chi_) +
                       " too large for exact contraction of " + std::to_string(n) +
                       "x" + std::to_string(n) + " blocks");
  }
  site_shapes_.resize(std::size_t(n) * n);
  std::size_t off = 0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      SiteShape s;
      s.up = r == 0 ? 1 : chi_;
      s.down = r == n - 1 ? 1 : chi_;
      s.left = c == 0 ? 1 : chi_;
      s.right = c == n - 1 ? 1 : chi_;
      s.offset = off;
      off += s.size();
      site_shapes_[std::size_t(r) * n + c] = s;
    }
  }
  block_stride_ = off;
  params_.assign(layout_.blocks.size() * kNumClasses * block_stride_, 0.0);
}

double nnbps_log_overlap(const NNBPSModel& model, const ProductState& x, int cls) {
  const std::size_t expected =
      std::size_t(model.layout().grid_height) * model.layout().grid_width;
  if (x.size() != expected) {
    throw dimension_error("nnbps_log_overlap: state has " + std::to_string(x.size()) +
                          " sites, model expects " + std::to_string(expected));
  }
  double total = 0.0;
  for (int b = 0; b < model.block_count(); ++b) {
    const Scaled v = block_value(model, model.params().data() + model.param_base(b, cls),
                                 x, b, false);
    total += floored_log_sq(v, nullptr);
  }
  return total;
}

double nnbps_block_log_sq(const NNBPSModel& model, const ProductState& x, int cls,
                          int block) {
  const Scaled v = block_value(
      model, model.params().data() + model.param_base(block, cls), x, block, false);
  return floored_log_sq(v, nullptr);
}

LogScore score(const NNBPSModel& model, const ProductState& x) {
  const std::size_t expected =
      std::size_t(model.layout().grid_height) * model.layout().grid_width;
  if (x.size() != expected) {
    throw dimension_error("score: state site count mismatch");
  }
  LogScore out;
  for (int b = 0; b < model.block_count(); ++b) {
    for (int cls = 0; cls < kNumClasses; ++cls) {
      const Scaled v = block_value(
          model, model.params().data() + model.param_base(b, cls), x, b, false);
      out.log_sq[cls] += floored_log_sq(v, &out.floor_events);
    }
  }
  return out;
}

double log_norm(const NNBPSModel& model, int cls) {
  double total = 0.0;
  for (int b = 0; b < model.block_count(); ++b) {
    const Scaled z = block_norm_value(model, b, cls, false);
    if (z.value <= 0.0) {
      throw numerical_error("log_norm: block " + std::to_string(b) + " of class " +
                            std::to_string(cls) + " has zero norm (degenerate model)");
    }
    total += z.log_abs();
  }
  return total;
}

void accumulate_overlap_gradient(const NNBPSModel& model, const ProductState& x,
                                 const std::array<double, kNumClasses>& weights,
                                 std::span<double> grad) {
  Workspace& ws = workspace();
  const int n = model.layout().n;
  const int n_sites = n * n;
  const auto& shapes = model.site_shapes();

  for (int b = 0; b < model.block_count(); ++b) {
    const auto& sites = model.layout().blocks[b];
    for (int cls = 0; cls < kNumClasses; ++cls) {
      if (weights[cls] == 0.0) continue;
      const double* params = model.params().data() + model.param_base(b, cls);
      const Scaled v = block_value(model, params, x, b, true);
      if (v.value == 0.0 || v.log_abs() < std::log(kOverlapFloor)) continue;  // floored: flat
      build_suffixes(model, ws.site_a, ws.site_a_off, false);

      // d log|v|^2 / dA_s = 2 * env_s / v
      for (int s = 0; s < n_sites; ++s) {
        const int c = s % n;
        const LayerDims d = layer_dims(shapes[s], false);
        const FrontierDims f = frontier_dims(n, c, d);
        site_environment(ws.prefixes[s], ws.suffixes[s + 1], f.P, d.left, d.up, f.S,
                         d.down, d.right, ws.env);
        const double ratio =
            std::exp(ws.prefix_logs[s] + ws.suffix_logs[s + 1] - v.log_scale) / v.value;
        const double scale = weights[cls] * 2.0 * ratio;
        const SiteShape& sh = shapes[s];
        const std::size_t half = sh.size() / 2;
        double* g = grad.data() + model.param_base(b, cls) + sh.offset;
        const auto& q = x.site_vectors[sites[s]];
        for (std::size_t i = 0; i < half; ++i) {
          const double e = scale * ws.env[i];
          g[i] += q[0] * e;
          g[half + i] += q[1] * e;
        }
      }
    }
  }
}

void accumulate_norm_gradient(const NNBPSModel& model,
                              const std::array<double, kNumClasses>& weights,
                              std::span<double> grad) {
  Workspace& ws = workspace();
  const int n = model.layout().n;
  const int n_sites = n * n;
  const auto& shapes = model.site_shapes();

  for (int b = 0; b < model.block_count(); ++b) {
    for (int cls = 0; cls < kNumClasses; ++cls) {
      if (weights[cls] == 0.0) continue;
      const Scaled z = block_norm_value(model, b, cls, true);
      if (z.value <= 0.0) {
        throw numerical_error("norm gradient: zero-norm block (degenerate model)");
      }
      build_suffixes(model, ws.dbl, ws.dbl_off, true);

      const double* params = model.params().data() + model.param_base(b, cls);
      for (int s = 0; s < n_sites; ++s) {
        const int c = s % n;
        const LayerDims d = layer_dims(shapes[s], true);
        const FrontierDims f = frontier_dims(n, c, d);
        site_environment(ws.prefixes[s], ws.suffixes[s + 1], f.P, d.left, d.up, f.S,
                         d.down, d.right, ws.env);
        const double ratio =
            std::exp(ws.prefix_logs[s] + ws.suffix_logs[s + 1] - z.log_scale) / z.value;
        // dz/dT[p,u,d,l,r] = 2 sum_{u',d',l',r'} env[(u,u'),(d,d'),(l,l'),(r,r')] T[p,u',d',l',r']
        const SiteShape& sh = shapes[s];
        const std::size_t U = sh.up, D = sh.down, L = sh.left, R = sh.right;
        const double* t = params + sh.offset;
        double* g = grad.data() + model.param_base(b, cls) + sh.offset;
        const double scale = weights[cls] * 2.0 * ratio;
        for (std::size_t p = 0; p < 2; ++p) {
          for (std::size_t u = 0; u < U; ++u)
            for (std::size_t dd = 0; dd < D; ++dd)
              for (std::size_t l = 0; l < L; ++l)
                for (std::size_t r = 0; r < R; ++r) {
                  double acc = 0.0;
                  for (std::size_t u2 = 0; u2 < U; ++u2)
                    for (std::size_t d2 = 0; d2 < D; ++d2)
                      for (std::size_t l2 = 0; l2 < L; ++l2)
                        for (std::size_t r2 = 0; r2 < R; ++r2) {
                          acc += ws.env[((((u * U + u2) * D * D + dd * D + d2) * L * L +
                                          l * L + l2) *
                                             R * R +
                                         r * R + r2)] *
                                 t[(((p * U + u2) * D + d2) * L + l2) * R + r2];
                        }
                  g[(((p * U + u) * D + dd) * L + l) * R + r] += scale * acc;
                }
        }
      }
    }
  }
}

NNBPSModel init_nnbps(const BlockLayout& layout, int chi, std::uint64_t seed) {
  NNBPSModel model(layout, chi);
  Rng rng = Rng::stream(seed, 0x6e6e627073ULL);  // model-init stream
  auto params = model.params();
  for (double& p : params) p = rng.uniform(-1.0, 1.0);

  // Normalize every block state to unit norm: each of the n^2 site tensors
  // absorbs an equal share of exp(-log z / (2 n^2)).
  const int n_sites = layout.n * layout.n;
  for (int b = 0; b < model.block_count(); ++b) {
    for (int cls = 0; cls < kNumClasses; ++cls) {
      const Scaled z = block_norm_value(model, b, cls, false);
      if (z.value <= 0.0) {
        throw numerical_error("init_nnbps: degenerate random block norm");
      }
      const double shift = -z.log_abs() / (2.0 * n_sites);
      const double factor = std::exp(shift);
      double* base = params.data() + model.param_base(b, cls);
      for (std::size_t i = 0; i < model.block_stride(); ++i) base[i] *= factor;
    }
  }
  return model;
}

}  // namespace blockstate
