#ifndef BLOCKSTATE_TRAINING_HPP
#define BLOCKSTATE_TRAINING_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "blockstate/models.hpp"

namespace blockstate {

enum class LossKind { nll, quadratic };

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 100;
  int epochs = 10;
  double alpha = 1.0;  // weight of the |log Z_l| regularizer (nll loss only)
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::nll;
  int workers = 0;            // 0 = hardware concurrency
  bool deterministic = false; // single-threaded, fixed reduction order

  void validate() const;
};

// Embedded dataset matched to a model grid.
struct EmbeddedSet {
  std::vector<ProductState> states;
  std::vector<int> labels;

  std::size_t size() const { return states.size(); }
};

EmbeddedSet embed_dataset(std::span<const Image> images, int grid_height, int grid_width);

// Born-rule class probabilities: softmax of the log squared overlaps,
// computed stably by subtracting the maximum.
std::array<double, kNumClasses> born_probabilities(const LogScore& scores);

// Negative log-likelihood over the batch plus alpha * sum_l |log Z_l|
// (regularizer applied once per batch). Finite even when scores are floored.
double nll_loss(const Model& model, const EmbeddedSet& batch, double alpha,
                int workers = 1);

// Quadratic loss (1/2) sum_i sum_l (|<T_l|x^(i)>| - delta_{l,y_i})^2.
// Overlap underflow to zero is acceptable here; no regularizer.
double quadratic_loss(const Model& model, const EmbeddedSet& batch, int workers = 1);

// Gradient of the configured batch loss with respect to every model
// parameter. Only NNBPS/SBPS models have parameters.
std::vector<double> gradient(const Model& model, const EmbeddedSet& batch,
                             const TrainConfig& config);

struct AdamState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  long step = 0;
};

// Standard Adam update with bias correction; resizes state on first use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& config);

struct EvalReport {
  double accuracy = 0.0;
  double loss = 0.0;  // mean per-sample NLL, no regularizer
  std::array<double, kNumClasses> per_class_accuracy{};
  std::array<int, kNumClasses> per_class_counts{};
  int sample_count = 0;
};

EvalReport evaluate(const Model& model, const EmbeddedSet& data, int workers = 1);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean minibatch objective over the epoch
  double train_acc = 0.0;
  double test_acc = 0.0;    // NaN when no test set was supplied
};

struct TrainResult {
  std::vector<EpochRecord> history;
  bool aborted = false;
  std::string abort_reason;
};

// Shuffled minibatch Adam on the configured loss. Emits one record per epoch
// (evaluated on the training set, and on `test` when given). On divergence
// (non-finite loss) restores the last end-of-epoch parameters and stops.
// Deterministic given the seed when config.deterministic is set.
TrainResult train(Model& model, const EmbeddedSet& train_set, const TrainConfig& config,
                  const EmbeddedSet* test_set = nullptr,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace blockstate

#endif
