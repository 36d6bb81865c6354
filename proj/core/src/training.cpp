#include "blockstate/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "blockstate/errors.hpp"
#include "blockstate/rng.hpp"
#include "blockstate/util.hpp"

namespace blockstate {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566666cULL;

std::span<double> model_params(Model& model) {
  if (auto* m = std::get_if<NNBPSModel>(&model)) return m->params();
  if (auto* m = std::get_if<SBPSModel>(&model)) return m->params();
  throw config_error("model has no trainable parameters");
}

std::span<const double> model_params(const Model& model) {
  if (const auto* m = std::get_if<NNBPSModel>(&model)) return m->params();
  if (const auto* m = std::get_if<SBPSModel>(&model)) return m->params();
  throw config_error("model has no trainable parameters");
}

// -log p(y = label), computed from raw scores so it stays finite for tiny p.
double sample_nll(const Model& model, const ProductState& x, int label) {
  const LogScore s = score(model, x);
  double m = s.log_sq[0];
  for (double v : s.log_sq) m = std::max(m, v);
  double lse = 0.0;
  for (double v : s.log_sq) lse += std::exp(v - m);
  return -(s.log_sq[label] - (m + std::log(lse)));
}

struct BatchView {
  const EmbeddedSet& data;
  std::span<const std::size_t> indices;  // empty means "all in order"

  std::size_t size() const { return indices.empty() ? data.size() : indices.size(); }
  std::size_t at(std::size_t i) const { return indices.empty() ? i : indices[i]; }
};

double nll_sum(const Model& model, const BatchView& batch, int workers) {
  const std::size_t n = batch.size();
  std::vector<double> partial(std::max<std::size_t>(1, std::min<std::size_t>(workers, n)), 0.0);
  parallel_chunks(n, workers, [&](std::size_t begin, std::size_t end, int w) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t k = batch.at(i);
      acc += sample_nll(model, batch.data.states[k], batch.data.labels[k]);
    }
    partial[w] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;  // fixed worker order
  return total;
}

double regularizer(const Model& model, double alpha) {
  if (alpha == 0.0) return 0.0;
  double acc = 0.0;
  for (int cls = 0; cls < kNumClasses; ++cls) acc += std::abs(log_norm(model, cls));
  return alpha * acc;
}

double quadratic_sum(const Model& model, const BatchView& batch, int workers) {
  const std::size_t n = batch.size();
  std::vector<double> partial(std::max<std::size_t>(1, std::min<std::size_t>(workers, n)), 0.0);
  parallel_chunks(n, workers, [&](std::size_t begin, std::size_t end, int w) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t k = batch.at(i);
      const LogScore s = score(model, batch.data.states[k]);
      for (int cls = 0; cls < kNumClasses; ++cls) {
        const double overlap = std::exp(0.5 * s.log_sq[cls]);
        const double target = cls == batch.data.labels[k] ? 1.0 : 0.0;
        acc += 0.5 * (overlap - target) * (overlap - target);
      }
    }
    partial[w] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

// Per-sample weights dL/d(log|<T_l|x>|^2) for the two losses.
std::array<double, kNumClasses> nll_weights(const LogScore& s, int label) {
  auto w = born_probabilities(s);
  w[label] -= 1.0;
  return w;
}

std::array<double, kNumClasses> quadratic_weights(const LogScore& s, int label) {
  std::array<double, kNumClasses> w{};
  for (int cls = 0; cls < kNumClasses; ++cls) {
    const double overlap = std::exp(0.5 * s.log_sq[cls]);
    const double target = cls == label ? 1.0 : 0.0;
    // d/dt [ (e^{t/2} - target)^2 / 2 ] = (e^{t/2} - target) e^{t/2} / 2
    w[cls] = 0.5 * (overlap - target) * overlap;
  }
  return w;
}

void accumulate_sample_gradient(const Model& model, const ProductState& x,
                                const std::array<double, kNumClasses>& w,
                                std::span<double> grad) {
  if (const auto* m = std::get_if<NNBPSModel>(&model)) {
    accumulate_overlap_gradient(*m, x, w, grad);
  } else if (const auto* m = std::get_if<SBPSModel>(&model)) {
    accumulate_overlap_gradient(*m, x, w, grad);
  } else {
    throw config_error("gradient: model has no trainable parameters");
  }
}

std::vector<double> batch_gradient(const Model& model, const BatchView& batch,
                                   const TrainConfig& config) {
  const std::size_t psize = model_params(model).size();
  const std::size_t n = batch.size();
  const int workers = worker_count(config.workers, config.deterministic);
  const std::size_t nbuf = std::max<std::size_t>(1, std::min<std::size_t>(workers, n));
  std::vector<std::vector<double>> partial(nbuf);

  parallel_chunks(n, workers, [&](std::size_t begin, std::size_t end, int wi) {
    partial[wi].assign(psize, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t k = batch.at(i);
      const ProductState& x = batch.data.states[k];
      const LogScore s = score(model, x);
      const auto w = config.loss_kind == LossKind::nll
                         ? nll_weights(s, batch.data.labels[k])
                         : quadratic_weights(s, batch.data.labels[k]);
      accumulate_sample_gradient(model, x, w, partial[wi]);
    }
  });

  std::vector<double> grad(psize, 0.0);
  for (const auto& p : partial) {
    if (p.empty()) continue;
    for (std::size_t i = 0; i < psize; ++i) grad[i] += p[i];
  }

  if (config.loss_kind == LossKind::nll && config.alpha != 0.0) {
    std::array<double, kNumClasses> w{};
    for (int cls = 0; cls < kNumClasses; ++cls) {
      const double lz = log_norm(model, cls);
      w[cls] = config.alpha * (lz > 0.0 ? 1.0 : (lz < 0.0 ? -1.0 : 0.0));
    }
    if (const auto* m = std::get_if<NNBPSModel>(&model)) {
      accumulate_norm_gradient(*m, w, grad);
    } else if (const auto* m = std::get_if<SBPSModel>(&model)) {
      accumulate_norm_gradient(*m, w, grad);
    }
  }

  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw numerical_error("non-finite gradient at parameter " + std::to_string(i));
    }
  }
  return grad;
}

}  // namespace

void TrainConfig::validate() const {
  // learning_rate 0 is permitted as an explicit no-op (useful for baselines)
  if (!(learning_rate >= 0.0)) throw config_error("learning_rate must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0) throw config_error("beta1 must be in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw config_error("beta2 must be in [0, 1)");
  if (epsilon <= 0.0) throw config_error("epsilon must be > 0");
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  if (epochs < 0) throw config_error("epochs must be >= 0");
  if (alpha < 0.0) throw config_error("alpha must be >= 0");
}

EmbeddedSet embed_dataset(std::span<const Image> images, int grid_height, int grid_width) {
  EmbeddedSet out;
  out.states.reserve(images.size());
  out.labels.reserve(images.size());
  for (const Image& img : images) {
    out.states.push_back(embed_for_grid(img, grid_height, grid_width));
    out.labels.push_back(img.label);
  }
  return out;
}

std::array<double, kNumClasses> born_probabilities(const LogScore& scores) {
  for (double v : scores.log_sq) {
    if (!std::isfinite(v)) throw input_error("born_probabilities: non-finite score");
  }
  double m = scores.log_sq[0];
  for (double v : scores.log_sq) m = std::max(m, v);
  std::array<double, kNumClasses> p{};
  double z = 0.0;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    p[cls] = std::exp(scores.log_sq[cls] - m);
    z += p[cls];
  }
  for (double& v : p) v /= z;
  return p;
}

double nll_loss(const Model& model, const EmbeddedSet& batch, double alpha, int workers) {
  if (batch.size() == 0) throw config_error("nll_loss: empty batch");
  return nll_sum(model, BatchView{batch, {}}, workers) + regularizer(model, alpha);
}

double quadratic_loss(const Model& model, const EmbeddedSet& batch, int workers) {
  if (batch.size() == 0) throw config_error("quadratic_loss: empty batch");
  return quadratic_sum(model, BatchView{batch, {}}, workers);
}

std::vector<double> gradient(const Model& model, const EmbeddedSet& batch,
                             const TrainConfig& config) {
  if (batch.size() == 0) throw config_error("gradient: empty batch");
  config.validate();
  return batch_gradient(model, BatchView{batch, {}}, config);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& config) {
  if (params.size() != grads.size()) {
    throw dimension_error("adam_step: parameter/gradient size mismatch");
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(state.step));
  const double bc2 = 1.0 - std::pow(b2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
  }
}

EvalReport evaluate(const Model& model, const EmbeddedSet& data, int workers) {
  EvalReport report;
  report.sample_count = static_cast<int>(data.size());
  if (data.size() == 0) return report;

  struct Counts {
    std::array<int, kNumClasses> total{};
    std::array<int, kNumClasses> correct{};
    double loss = 0.0;
  };
  const std::size_t nbuf =
      std::max<std::size_t>(1, std::min<std::size_t>(std::max(workers, 1), data.size()));
  std::vector<Counts> partial(nbuf);

  parallel_chunks(data.size(), workers, [&](std::size_t begin, std::size_t end, int w) {
    for (std::size_t i = begin; i < end; ++i) {
      const LogScore s = score(model, data.states[i]);
      const int label = data.labels[i];
      const int predicted = classify(s);
      ++partial[w].total[label];
      if (predicted == label) ++partial[w].correct[label];
      partial[w].loss += sample_nll(model, data.states[i], label);
    }
  });

  int correct_total = 0;
  double loss_total = 0.0;
  for (const Counts& c : partial) {
    loss_total += c.loss;
    for (int cls = 0; cls < kNumClasses; ++cls) {
      report.per_class_counts[cls] += c.total[cls];
      correct_total += c.correct[cls];
      report.per_class_accuracy[cls] += c.correct[cls];
    }
  }
  for (int cls = 0; cls < kNumClasses; ++cls) {
    if (report.per_class_counts[cls] > 0) {
      report.per_class_accuracy[cls] /= report.per_class_counts[cls];
    }
  }
  report.accuracy = double(correct_total) / double(data.size());
  report.loss = loss_total / double(data.size());
  return report;
}

TrainResult train(Model& model, const EmbeddedSet& train_set, const TrainConfig& config,
                  const EmbeddedSet* test_set,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.size() == 0) throw config_error("train: empty training set");
  const int workers = worker_count(config.workers, config.deterministic);

  TrainResult result;
  auto params = model_params(model);
  AdamState adam;
  Rng shuffle_rng = Rng::stream(config.seed, kShuffleStream);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> last_good(params.begin(), params.end());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    bool diverged = false;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const BatchView batch{train_set,
                            std::span<const std::size_t>(order.data() + start, end - start)};
      double loss;
      try {
        if (config.loss_kind == LossKind::nll) {
          loss = nll_sum(model, batch, workers) + regularizer(model, config.alpha);
        } else {
          loss = quadratic_sum(model, batch, workers);
        }
        if (!std::isfinite(loss)) throw numerical_error("non-finite batch loss");
        const std::vector<double> grad = batch_gradient(model, batch, config);
        adam_step(params, grad, adam, config);
      } catch (const numerical_error& e) {
        result.aborted = true;
        result.abort_reason = e.what();
        std::copy(last_good.begin(), last_good.end(), params.begin());
        diverged = true;
        break;
      }
      loss_sum += loss / double(end - start);
      ++batches;
    }
    if (diverged) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches > 0 ? loss_sum / double(batches) : 0.0;
    rec.train_acc = evaluate(model, train_set, workers).accuracy;
    rec.test_acc = test_set ? evaluate(model, *test_set, workers).accuracy
                            : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    last_good.assign(params.begin(), params.end());
  }
  return result;
}

}  // namespace blockstate
