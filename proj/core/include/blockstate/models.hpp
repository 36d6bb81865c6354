#ifndef BLOCKSTATE_MODELS_HPP
#define BLOCKSTATE_MODELS_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "blockstate/dataset.hpp"
#include "blockstate/embedding.hpp"

namespace blockstate {

inline constexpr int kNumClasses = 10;

// Any block overlap smaller than this in magnitude contributes the clamped
// log below instead of -inf, so training can step through dead configurations.
inline constexpr double kOverlapFloor = 1e-300;
inline constexpr double kFlooredLogSq = -1382.0;  // log(1e-600), clamped

// Per-class log squared overlaps log |<T_l|x>|^2 (natural log). floor_events
// counts block overlaps that hit the underflow floor while scoring.
struct LogScore {
  std::array<double, kNumClasses> log_sq{};
  int floor_events = 0;
};

// Geometry of one site tensor inside a block; axis order is
// [physical(2), up, down, left, right] with bond length 1 at block edges.
struct SiteShape {
  int up = 1, down = 1, left = 1, right = 1;
  std::size_t offset = 0;  // into the per-(block, class) parameter slab
  std::size_t size() const { return std::size_t(2) * up * down * left * right; }
};

// Block product state with one chi-bond PEPS of n x n site tensors per block
// and per class; blocks are mutually unentangled. n = 1 reduces to the
// per-class product-state baseline.
class NNBPSModel {
 public:
  NNBPSModel(BlockLayout layout, int chi);

  const BlockLayout& layout() const { return layout_; }
  int chi() const { return chi_; }
  int block_count() const { return static_cast<int>(layout_.blocks.size()); }
  const std::vector<SiteShape>& site_shapes() const { return site_shapes_; }
  std::size_t block_stride() const { return block_stride_; }

  // Contiguous parameters: blocks x classes x sites, row-major.
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_base(int block, int cls) const {
    return (std::size_t(block) * kNumClasses + cls) * block_stride_;
  }

 private:
  BlockLayout layout_;
  int chi_;
  std::vector<SiteShape> site_shapes_;  // indexed by site position within a block
  std::size_t block_stride_ = 0;
  std::vector<double> params_;
};

// Block product state with one open-boundary MPS per block running through
// the block sites in snake order. Site tensors are shared across classes;
// the class label enters through a single chi x chi x 10 tensor spliced into
// the chain after `label_pos` site tensors.
class SBPSModel {
 public:
  SBPSModel(BlockLayout layout, int chi, int label_pos = -1, int boundary_dim = 1);

  const BlockLayout& layout() const { return layout_; }
  int chi() const { return chi_; }
  int label_pos() const { return label_pos_; }
  int boundary_dim() const { return boundary_dim_; }
  int block_count() const { return static_cast<int>(layout_.blocks.size()); }
  int chain_sites() const { return static_cast<int>(snake_order_.size()); }

  // Lattice sites of one block in snake traversal order.
  std::span<const int> snake_order() const { return snake_order_; }

  struct ChainShape {
    int left = 1, right = 1;
    std::size_t offset = 0;  // into the per-block parameter slab
    std::size_t size() const { return std::size_t(2) * left * right; }
  };
  const std::vector<ChainShape>& chain_shapes() const { return chain_shapes_; }
  std::size_t label_offset() const { return label_offset_; }  // within a block slab
  int label_left() const { return label_left_; }
  int label_right() const { return label_right_; }
  std::size_t block_stride() const { return block_stride_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_base(int block) const { return std::size_t(block) * block_stride_; }

 private:
  BlockLayout layout_;
  int chi_;
  int label_pos_;
  int boundary_dim_;
  std::vector<int> snake_order_;        // site index within block grid, chain order
  std::vector<ChainShape> chain_shapes_;
  std::size_t label_offset_ = 0;
  int label_left_ = 1, label_right_ = 1;
  std::size_t block_stride_ = 0;
  std::vector<double> params_;
};

// Unnormalized superposition of the embedded training images of each class.
// No trainable parameters; classification walks the stored states directly.
class SumStateModel {
 public:
  explicit SumStateModel(std::span<const Image> training_images);

  int site_count() const { return site_count_; }
  const std::vector<ProductState>& class_states(int cls) const { return per_class_[cls]; }
  const std::vector<Image>& class_images(int cls) const { return images_[cls]; }

 private:
  int site_count_ = 0;
  std::array<std::vector<ProductState>, kNumClasses> per_class_;
  std::array<std::vector<Image>, kNumClasses> images_;  // retained for checkpointing
};

using Model = std::variant<NNBPSModel, SBPSModel, SumStateModel>;

enum class ModelKind { nnbps, sbps, sum_state };

ModelKind model_kind(const Model& m);
std::string model_kind_name(ModelKind k);

// --- scoring ---------------------------------------------------------------

// log |<psi_l^b ... |x>|^2 summed over blocks, for one class.
double nnbps_log_overlap(const NNBPSModel& model, const ProductState& x, int cls);
double sbps_log_overlap(const SBPSModel& model, const ProductState& x, int cls);
double sum_state_log_overlap(const SumStateModel& model, const ProductState& x, int cls);

// Single block's additive term log |<psi_l^b|x_b>|^2 (floored like the sum).
double nnbps_block_log_sq(const NNBPSModel& model, const ProductState& x, int cls,
                          int block);
double sbps_block_log_sq(const SBPSModel& model, const ProductState& x, int cls,
                         int block);

// All ten classes at once (shares per-block work where possible).
LogScore score(const Model& model, const ProductState& x);
LogScore score(const NNBPSModel& model, const ProductState& x);
LogScore score(const SBPSModel& model, const ProductState& x);
LogScore score(const SumStateModel& model, const ProductState& x);

// log Z_l = log <T_l|T_l>. Throws numerical_error for an exactly zero norm.
double log_norm(const Model& model, int cls);
double log_norm(const NNBPSModel& model, int cls);
double log_norm(const SBPSModel& model, int cls);
double log_norm(const SumStateModel& model, int cls);

// argmax over classes; ties resolve to the smallest label.
int classify(const LogScore& scores);

// --- gradients (used by the training module) --------------------------------

// Adds sum_l weights[l] * d log|<T_l|x>|^2 / d theta to grad.
void accumulate_overlap_gradient(const NNBPSModel& model, const ProductState& x,
                                 const std::array<double, kNumClasses>& weights,
                                 std::span<double> grad);
void accumulate_overlap_gradient(const SBPSModel& model, const ProductState& x,
                                 const std::array<double, kNumClasses>& weights,
                                 std::span<double> grad);

// Adds sum_l weights[l] * d log Z_l / d theta to grad.
void accumulate_norm_gradient(const NNBPSModel& model,
                              const std::array<double, kNumClasses>& weights,
                              std::span<double> grad);
void accumulate_norm_gradient(const SBPSModel& model,
                              const std::array<double, kNumClasses>& weights,
                              std::span<double> grad);

// --- construction -----------------------------------------------------------

// Reproducible random initialization; every block state is normalized to
// unit norm afterwards, so each class starts with log Z_l = 0 up to rounding.
NNBPSModel init_nnbps(const BlockLayout& layout, int chi, std::uint64_t seed);
SBPSModel init_sbps(const BlockLayout& layout, int chi, std::uint64_t seed,
                    int label_pos = -1, int boundary_dim = 1);

Model init_model(ModelKind kind, const BlockLayout& layout, int chi, std::uint64_t seed);

// Embeds an image for a model grid, cropping trailing rows/columns if the
// layout was cropped (n = 3).
ProductState embed_for_grid(const Image& img, int grid_height, int grid_width);

// --- checkpoint io ----------------------------------------------------------

// Versioned binary container; header records kind/geometry/seed, parameters
// are raw little-endian doubles. Round-trips bit-exactly. The layout is
// documented in docs/checkpoint-format.md.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     std::uint64_t seed,
                     const std::map<std::string, std::string>& metadata = {});

struct Checkpoint {
  Model model;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> metadata;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace blockstate

#endif
