#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "blockstate/errors.hpp"
#include "blockstate/models.hpp"
#include "blockstate/rng.hpp"

// Snake-MPS block contraction. Each block carries an open-boundary chain of
// n^2 site tensors visited in snake order plus one label tensor spliced into
// the chain; the dangling end bonds (dim 1 by default, the boundary_dim knob
// makes them redundant sums) are capped with all-ones vectors. Left-to-right
// vector-matrix products with log-space rescaling keep everything in range.

namespace blockstate {

namespace {

struct Scaled {
  double value = 0.0;
  double log_scale = 0.0;
  double log_abs() const { return std::log(std::abs(value)) + log_scale; }
};

double rescale(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  if (m == 0.0 || (m > 1e-64 && m < 1e64)) return 0.0;
  const double inv = 1.0 / m;
  for (double& x : v) x *= inv;
  return std::log(m);
}

struct Workspace {
  std::vector<double> mats;                 // phys-contracted site matrices, packed
  std::vector<std::size_t> mat_off;
  std::vector<double> vec, tmp;
  std::vector<std::vector<double>> pre, suf;  // per chain-tensor boundary vectors
  std::vector<double> pre_logs, suf_logs;
  std::vector<double> dbl;                  // double-layer transfer matrices, packed
  std::vector<std::size_t> dbl_off;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

// chain tensor t for t in 0..m (m = n^2): the label sits at label_pos.
// chain_tensor_site(t) maps to the chain-site index or -1 for the label.
int chain_tensor_site(const SBPSModel& model, int t) {
  if (t == model.label_pos()) return -1;
  return t < model.label_pos() ? t : t - 1;
}

// Dimensions of chain tensor t's bonds in the single layer.
void chain_dims(const SBPSModel& model, int t, std::size_t& left, std::size_t& right) {
  if (t == model.label_pos()) {
    left = model.label_left();
    right = model.label_right();
  } else {
    const auto& sh = model.chain_shapes()[chain_tensor_site(model, t)];
    left = sh.left;
    right = sh.right;
  }
}

// Physical contraction: M_i = x0 T_i[0] + x1 T_i[1] for every chain site.
void build_site_matrices(const SBPSModel& model, const double* block_params,
                         const ProductState& x, int block) {
  Workspace& ws = workspace();
  const auto& shapes = model.chain_shapes();
  const auto& sites = model.layout().blocks[block];
  const int m = model.chain_sites();
  std::size_t total = 0;
  ws.mat_off.resize(m);
  for (int i = 0; i < m; ++i) {
    ws.mat_off[i] = total;
    total += shapes[i].size() / 2;
  }
  ws.mats.resize(total);
  for (int i = 0; i < m; ++i) {
    const auto& sh = shapes[i];
    const double* t = block_params + sh.offset;
    const std::size_t half = sh.size() / 2;
    const auto& q = x.site_vectors[sites[model.snake_order()[i]]];
    double* out = ws.mats.data() + ws.mat_off[i];
    for (std::size_t k = 0; k < half; ++k) out[k] = q[0] * t[k] + q[1] * t[half + k];
  }
}

// vec (1 x L) times mat (L x R) -> out (1 x R)
void vec_mat(const std::vector<double>& vec, const double* mat, std::size_t L,
             std::size_t R, std::vector<double>& out) {
  out.assign(R, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const double v = vec[l];
    if (v == 0.0) continue;
    const double* row = mat + l * R;
    for (std::size_t r = 0; r < R; ++r) out[r] += v * row[r];
  }
}

// mat (L x R) times vec (R x 1) -> out (L x 1)
void mat_vec(const double* mat, const std::vector<double>& vec, std::size_t L,
             std::size_t R, std::vector<double>& out) {
  out.assign(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const double* row = mat + l * R;
    double acc = 0.0;
    for (std::size_t r = 0; r < R; ++r) acc += row[r] * vec[r];
    out[l] = acc;
  }
}

// Walks the chain for one class. `keep` stores per-tensor prefix vectors.
Scaled chain_value(const SBPSModel& model, const double* block_params, int cls,
                   bool keep) {
  Workspace& ws = workspace();
  const int total = model.chain_sites() + 1;
  const double* label = block_params + model.label_offset();
  const std::size_t ll = model.label_left(), lr = model.label_right();

  if (keep) {
    ws.pre.assign(total + 1, {});
    ws.pre_logs.assign(total + 1, 0.0);
  }
  ws.vec.assign(model.boundary_dim(), 1.0);  // all-ones cap
  double log_scale = 0.0;
  for (int t = 0; t < total; ++t) {
    if (keep) {
      ws.pre[t] = ws.vec;
      ws.pre_logs[t] = log_scale;
    }
    std::size_t L, R;
    chain_dims(model, t, L, R);
    if (t == model.label_pos()) {
      // label slice for this class: entry (l, r) at label[(l * lr + r) * 10 + cls]
      ws.tmp.assign(R, 0.0);
      for (std::size_t l = 0; l < ll; ++l) {
        const double v = ws.vec[l];
        if (v == 0.0) continue;
        for (std::size_t r = 0; r < lr; ++r) {
          ws.tmp[r] += v * label[(l * lr + r) * kNumClasses + cls];
        }
      }
      ws.vec.swap(ws.tmp);
    } else {
      const int i = chain_tensor_site(model, t);
      vec_mat(ws.vec, ws.mats.data() + ws.mat_off[i], L, R, ws.tmp);
      ws.vec.swap(ws.tmp);
    }
    log_scale += rescale(ws.vec);
  }
  double acc = 0.0;
  for (double v : ws.vec) acc += v;  // right all-ones cap
  if (keep) {
    ws.pre[total] = ws.vec;
    ws.pre_logs[total] = log_scale;
  }
  return {acc, log_scale};
}

// Suffix vectors sigma_t = C_t ... C_m ones for the same class.
void chain_suffixes(const SBPSModel& model, const double* block_params, int cls) {
  Workspace& ws = workspace();
  const int total = model.chain_sites() + 1;
  const double* label = block_params + model.label_offset();
  const std::size_t lr = model.label_right();

  ws.suf.assign(total + 1, {});
  ws.suf_logs.assign(total + 1, 0.0);
  std::vector<double> cur(model.boundary_dim(), 1.0);
  ws.suf[total] = cur;
  double log_scale = 0.0;
  for (int t = total - 1; t >= 0; --t) {
    std::size_t L, R;
    chain_dims(model, t, L, R);
    if (t == model.label_pos()) {
      ws.tmp.assign(L, 0.0);
      for (std::size_t l = 0; l < L; ++l) {
        double acc = 0.0;
        for (std::size_t r = 0; r < lr; ++r) {
          acc += label[(l * lr + r) * kNumClasses + cls] * cur[r];
        }
        ws.tmp[l] = acc;
      }
      cur.swap(ws.tmp);
    } else {
      const int i = chain_tensor_site(model, t);
      mat_vec(ws.mats.data() + ws.mat_off[i], cur, L, R, ws.tmp);
      cur.swap(ws.tmp);
    }
    log_scale += rescale(cur);
    ws.suf[t] = cur;
    ws.suf_logs[t] = log_scale;
  }
}

double floored_log_sq(const Scaled& v, int* floor_events) {
  if (v.value == 0.0 || v.log_abs() < std::log(kOverlapFloor)) {
    if (floor_events) ++(*floor_events);
    return kFlooredLogSq;
  }
  return 2.0 * v.log_abs();
}

// Double-layer transfer matrices G_i[(l,l'),(r,r')] = sum_s T_i[s] (x) T_i[s].
void build_transfer(const SBPSModel& model, const double* block_params) {
  Workspace& ws = workspace();
  const auto& shapes = model.chain_shapes();
  const int m = model.chain_sites();
  std::size_t total = 0;
  ws.dbl_off.resize(m);
  for (int i = 0; i < m; ++i) {
    ws.dbl_off[i] = total;
    total += std::size_t(shapes[i].left) * shapes[i].left * shapes[i].right *
             shapes[i].right;
  }
  ws.dbl.assign(total, 0.0);
  for (int i = 0; i < m; ++i) {
    const auto& sh = shapes[i];
    const double* t = block_params + sh.offset;
    const std::size_t L = sh.left, R = sh.right;
    double* g = ws.dbl.data() + ws.dbl_off[i];
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t l2 = 0; l2 < L; ++l2)
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t r2 = 0; r2 < R; ++r2) {
            double acc = 0.0;
            for (std::size_t s = 0; s < 2; ++s) {
              acc += t[(s * L + l) * R + r] * t[(s * L + l2) * R + r2];
            }
            g[(l * L + l2) * R * R + r * R + r2] = acc;
          }
  }
}

// Walks the double-layer chain for one class; optionally keeps prefixes.
Scaled chain_norm_value(const SBPSModel& model, const double* block_params, int cls,
                        bool keep) {
  Workspace& ws = workspace();
  const int total = model.chain_sites() + 1;
  const double* label = block_params + model.label_offset();
  const std::size_t ll = model.label_left(), lr = model.label_right();
  const std::size_t cap = std::size_t(model.boundary_dim()) * model.boundary_dim();

  if (keep) {
    ws.pre.assign(total + 1, {});
    ws.pre_logs.assign(total + 1, 0.0);
  }
  ws.vec.assign(cap, 1.0);
  double log_scale = 0.0;
  for (int t = 0; t < total; ++t) {
    if (keep) {
      ws.pre[t] = ws.vec;
      ws.pre_logs[t] = log_scale;
    }
    std::size_t L, R;
    chain_dims(model, t, L, R);
    if (t == model.label_pos()) {
      ws.tmp.assign(lr * lr, 0.0);
      for (std::size_t l = 0; l < ll; ++l)
        for (std::size_t l2 = 0; l2 < ll; ++l2) {
          const double v = ws.vec[l * ll + l2];
          if (v == 0.0) continue;
          for (std::size_t r = 0; r < lr; ++r)
            for (std::size_t r2 = 0; r2 < lr; ++r2) {
              ws.tmp[r * lr + r2] += v * label[(l * lr + r) * kNumClasses + cls] *
                                     label[(l2 * lr + r2) * kNumClasses + cls];
            }
        }
      ws.vec.swap(ws.tmp);
    } else {
      const int i = chain_tensor_site(model, t);
      vec_mat(ws.vec, ws.dbl.data() + ws.dbl_off[i], L * L, R * R, ws.tmp);
      ws.vec.swap(ws.tmp);
    }
    log_scale += rescale(ws.vec);
  }
  double acc = 0.0;
  for (double v : ws.vec) acc += v;
  if (keep) {
    ws.pre[total] = ws.vec;
    ws.pre_logs[total] = log_scale;
  }
  return {acc, log_scale};
}

void chain_norm_suffixes(const SBPSModel& model, const double* block_params, int cls) {
  Workspace& ws = workspace();
  const int total = model.chain_sites() + 1;
  const double* label = block_params + model.label_offset();
  const std::size_t lr = model.label_right();
  const std::size_t cap = std::size_t(model.boundary_dim()) * model.boundary_dim();

  ws.suf.assign(total + 1, {});
  ws.suf_logs.assign(total + 1, 0.0);
  std::vector<double> cur(cap, 1.0);
  ws.suf[total] = cur;
  double log_scale = 0.0;
  for (int t = total - 1; t >= 0; --t) {
    std::size_t L, R;
    chain_dims(model, t, L, R);
    if (t == model.label_pos()) {
      ws.tmp.assign(L * L, 0.0);
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t l2 = 0; l2 < L; ++l2) {
          double acc = 0.0;
          for (std::size_t r = 0; r < lr; ++r)
            for (std::size_t r2 = 0; r2 < lr; ++r2) {
              acc += label[(l * lr + r) * kNumClasses + cls] *
                     label[(l2 * lr + r2) * kNumClasses + cls] * cur[r * lr + r2];
            }
          ws.tmp[l * L + l2] = acc;
        }
      cur.swap(ws.tmp);
    } else {
      const int i = chain_tensor_site(model, t);
      // transfer matrix acts on the right: G sigma
      ws.tmp.assign(L * L, 0.0);
      const double* g = ws.dbl.data() + ws.dbl_off[i];
      for (std::size_t row = 0; row < L * L; ++row) {
        double acc = 0.0;
        const double* grow = g + row * R * R;
        for (std::size_t col = 0; col < R * R; ++col) acc += grow[col] * cur[col];
        ws.tmp[row] = acc;
      }
      cur.swap(ws.tmp);
    }
    log_scale += rescale(cur);
    ws.suf[t] = cur;
    ws.suf_logs[t] = log_scale;
  }
}

}  // namespace

SBPSModel::SBPSModel(BlockLayout layout, int chi, int label_pos, int boundary_dim)
    : layout_(std::move(layout)), chi_(chi), boundary_dim_(boundary_dim) {
  if (chi_ < 1) throw config_error("bond dimension chi must be >= 1");
  if (boundary_dim_ < 1) throw config_error("boundary bond dimension must be >= 1");
  const int n = layout_.n;
  if (n < 2) {
    throw config_error("snake block product state requires block size n >= 2 "
                       "(n = 1 is the product-state / 1x1 case)");
  }
  const int m = n * n;
  label_pos_ = label_pos < 0 ? m / 2 : label_pos;
  if (label_pos_ < 0 || label_pos_ > m) {
    throw config_error("label position out of range 0.." + std::to_string(m));
  }

  snake_order_.reserve(m);
  for (int r = 0; r < n; ++r) {
    if (r % 2 == 0) {
      for (int c = 0; c < n; ++c) snake_order_.push_back(r * n + c);
    } else {
      for (int c = n - 1; c >= 0; --c) snake_order_.push_back(r * n + c);
    }
  }

  // chain of m + 1 tensors; bond dims: boundary at the two open ends, chi inside
  auto left_dim = [&](int t) { return t == 0 ? boundary_dim_ : chi_; };
  auto right_dim = [&](int t) { return t == m ? boundary_dim_ : chi_; };

  chain_shapes_.resize(m);
  std::size_t off = 0;
  for (int t = 0; t <= m; ++t) {
    if (t == label_pos_) {
      label_left_ = left_dim(t);
      label_right_ = right_dim(t);
      continue;
    }
    const int i = t < label_pos_ ? t : t - 1;
    ChainShape sh;
    sh.left = left_dim(t);
    sh.right = right_dim(t);
    sh.offset = off;
    off += sh.size();
    chain_shapes_[i] = sh;
  }
  label_offset_ = off;
  off += std::size_t(label_left_) * label_right_ * kNumClasses;
  block_stride_ = off;
  params_.assign(layout_.blocks.size() * block_stride_, 0.0);
}

double sbps_log_overlap(const SBPSModel& model, const ProductState& x, int cls) {
  const std::size_t expected =
      std::size_t(model.layout().grid_height) * model.layout().grid_width;
  if (x.size() != expected) {
    throw dimension_error("sbps_log_overlap: state has " + std::to_string(x.size()) +
                          " sites, model expects " + std::to_string(expected));
  }
  double totals = 0.0;
  for (int b = 0; b < model.block_count(); ++b) {
    const double* bp = model.params().data() + model.param_base(b);
    build_site_matrices(model, bp, x, b);
    const Scaled v = chain_value(model, bp, cls, false);
    totals += floored_log_sq(v, nullptr);
  }
  return totals;
}

double sbps_block_log_sq(const SBPSModel& model, const ProductState& x, int cls,
                         int block) {
  const double* bp = model.params().data() + model.param_base(block);
  build_site_matrices(model, bp, x, block);
  const Scaled v = chain_value(model, bp, cls, false);
  return floored_log_sq(v, nullptr);
}

LogScore score(const SBPSModel& model, const ProductState& x) {
  const std::size_t expected =
      std::size_t(model.layout().grid_height) * model.layout().grid_width;
  if (x.size() != expected) {
    throw dimension_error("score: state site count mismatch");
  }
  LogScore out;
  for (int b = 0; b < model.block_count(); ++b) {
    const double* bp = model.params().data() + model.param_base(b);
    build_site_matrices(model, bp, x, b);
    for (int cls = 0; cls < kNumClasses; ++cls) {
      const Scaled v = chain_value(model, bp, cls, false);
      out.log_sq[cls] += floored_log_sq(v, &out.floor_events);
    }
  }
  return out;
}

double log_norm(const SBPSModel& model, int cls) {
  double total = 0.0;
  for (int b = 0; b < model.block_count(); ++b) {
    const double* bp = model.params().data() + model.param_base(b);
    build_transfer(model, bp);
    const Scaled z = chain_norm_value(model, bp, cls, false);
    if (z.value <= 0.0) {
      throw numerical_error("log_norm: block " + std::to_string(b) + " of class " +
                            std::to_string(cls) + " has zero norm (degenerate model)");
    }
    total += z.log_abs();
  }
  return total;
}

void accumulate_overlap_gradient(const SBPSModel& model, const ProductState& x,
                                 const std::array<double, kNumClasses>& weights,
                                 std::span<double> grad) {
  Workspace& ws = workspace();
  const int total = model.chain_sites() + 1;
  const std::size_t ll = model.label_left(), lr = model.label_right();

  for (int b = 0; b < model.block_count(); ++b) {
    const double* bp = model.params().data() + model.param_base(b);
    double* gb = grad.data() + model.param_base(b);
    build_site_matrices(model, bp, x, b);
    const auto& sites = model.layout().blocks[b];

    for (int cls = 0; cls < kNumClasses; ++cls) {
      if (weights[cls] == 0.0) continue;
      const Scaled v = chain_value(model, bp, cls, true);
      if (v.value == 0.0 || v.log_abs() < std::log(kOverlapFloor)) continue;
      chain_suffixes(model, bp, cls);

      for (int t = 0; t < total; ++t) {
        std::size_t L, R;
        chain_dims(model, t, L, R);
        const double ratio =
            std::exp(ws.pre_logs[t] + ws.suf_logs[t + 1] - v.log_scale) / v.value;
        const double scale = weights[cls] * 2.0 * ratio;
        const auto& rho = ws.pre[t];
        const auto& sigma = ws.suf[t + 1];
        if (t == model.label_pos()) {
          double* gl = gb + model.label_offset();
          for (std::size_t l = 0; l < ll; ++l)
            for (std::size_t r = 0; r < lr; ++r) {
              gl[(l * lr + r) * kNumClasses + cls] += scale * rho[l] * sigma[r];
            }
        } else {
          const int i = chain_tensor_site(model, t);
          const auto& sh = model.chain_shapes()[i];
          const auto& q = x.site_vectors[sites[model.snake_order()[i]]];
          double* gt = gb + sh.offset;
          const std::size_t half = sh.size() / 2;
          for (std::size_t l = 0; l < L; ++l)
            for (std::size_t r = 0; r < R; ++r) {
              const double e = scale * rho[l] * sigma[r];
              gt[l * R + r] += q[0] * e;
              gt[half + l * R + r] += q[1] * e;
            }
        }
      }
    }
  }
}

void accumulate_norm_gradient(const SBPSModel& model,
                              const std::array<double, kNumClasses>& weights,
                              std::span<double> grad) {
  Workspace& ws = workspace();
  const int total = model.chain_sites() + 1;
  const std::size_t ll = model.label_left(), lr = model.label_right();

  for (int b = 0; b < model.block_count(); ++b) {
    const double* bp = model.params().data() + model.param_base(b);
    double* gb = grad.data() + model.param_base(b);
    build_transfer(model, bp);

    for (int cls = 0; cls < kNumClasses; ++cls) {
      if (weights[cls] == 0.0) continue;
      const Scaled z = chain_norm_value(model, bp, cls, true);
      if (z.value <= 0.0) {
        throw numerical_error("norm gradient: zero-norm block (degenerate model)");
      }
      chain_norm_suffixes(model, bp, cls);

      for (int t = 0; t < total; ++t) {
        std::size_t L, R;
        chain_dims(model, t, L, R);
        const double ratio =
            std::exp(ws.pre_logs[t] + ws.suf_logs[t + 1] - z.log_scale) / z.value;
        const double scale = weights[cls] * 2.0 * ratio;
        const auto& rho = ws.pre[t];    // dim L*L
        const auto& sigma = ws.suf[t + 1];  // dim R*R
        if (t == model.label_pos()) {
          const double* lt = bp + model.label_offset();
          double* gl = gb + model.label_offset();
          for (std::size_t l = 0; l < ll; ++l)
            for (std::size_t r = 0; r < lr; ++r) {
              double acc = 0.0;
              for (std::size_t l2 = 0; l2 < ll; ++l2)
                for (std::size_t r2 = 0; r2 < lr; ++r2) {
                  acc += rho[l * ll + l2] * sigma[r * lr + r2] *
                         lt[(l2 * lr + r2) * kNumClasses + cls];
                }
              gl[(l * lr + r) * kNumClasses + cls] += scale * acc;
            }
        } else {
          const int i = chain_tensor_site(model, t);
          const auto& sh = model.chain_shapes()[i];
          const double* st = bp + sh.offset;
          double* gt = gb + sh.offset;
          for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t l = 0; l < L; ++l)
              for (std::size_t r = 0; r < R; ++r) {
                double acc = 0.0;
                for (std::size_t l2 = 0; l2 < L; ++l2)
                  for (std::size_t r2 = 0; r2 < R; ++r2) {
                    acc += rho[l * L + l2] * sigma[r * R + r2] * st[(s * L + l2) * R + r2];
                  }
                gt[(s * L + l) * R + r] += scale * acc;
              }
        }
      }
    }
  }
}

SBPSModel init_sbps(const BlockLayout& layout, int chi, std::uint64_t seed, int label_pos,
                    int boundary_dim) {
  SBPSModel model(layout, chi, label_pos, boundary_dim);
  Rng rng = Rng::stream(seed, 0x73627073ULL);  // model-init stream
  auto params = model.params();
  for (double& p : params) p = rng.uniform(-1.0, 1.0);

  // Site tensors to unit Frobenius norm, then each label slice absorbs the
  // remaining factor so every block state starts at unit norm.
  for (int b = 0; b < model.block_count(); ++b) {
    double* bp = params.data() + model.param_base(b);
    for (const auto& sh : model.chain_shapes()) {
      double sq = 0.0;
      for (std::size_t i = 0; i < sh.size(); ++i) sq += bp[sh.offset + i] * bp[sh.offset + i];
      const double inv = 1.0 / std::sqrt(sq);
      for (std::size_t i = 0; i < sh.size(); ++i) bp[sh.offset + i] *= inv;
    }
    build_transfer(model, bp);
    for (int cls = 0; cls < kNumClasses; ++cls) {
      const Scaled z = chain_norm_value(model, bp, cls, false);
      if (z.value <= 0.0) throw numerical_error("init_sbps: degenerate random block norm");
      const double factor = std::exp(-0.5 * z.log_abs());
      double* lt = bp + model.label_offset();
      for (std::size_t l = 0; l < std::size_t(model.label_left()); ++l)
        for (std::size_t r = 0; r < std::size_t(model.label_right()); ++r) {
          lt[(l * model.label_right() + r) * kNumClasses + cls] *= factor;
        }
    }
  }
  return model;
}

}  // namespace blockstate
