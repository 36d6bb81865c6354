#include "blockstate/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "blockstate/errors.hpp"

namespace blockstate {

namespace {

// log <x^(i)|x> accumulated over all sites; -inf if orthogonal anywhere.
double product_log_overlap(const ProductState& a, const ProductState& b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double dot = a.site_vectors[j][0] * b.site_vectors[j][0] +
                       a.site_vectors[j][1] * b.site_vectors[j][1];
    if (dot <= 0.0) return -std::numeric_limits<double>::infinity();
    acc += std::log(dot);
  }
  return acc;
}

double log_sum_exp(std::span<const double> terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (std::isinf(m)) return m;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

}  // namespace

SumStateModel::SumStateModel(std::span<const Image> training_images) {
  if (training_images.empty()) {
    throw config_error("sum state model needs a nonempty training set");
  }
  site_count_ = training_images.front().height * training_images.front().width;
  for (const Image& img : training_images) {
    if (img.height * img.width != site_count_) {
      throw dimension_error("sum state model: inconsistent image dimensions");
    }
    if (img.label < 0 || img.label >= kNumClasses) {
      throw input_error("sum state model: label out of range: " + std::to_string(img.label));
    }
    per_class_[img.label].push_back(embed_image(img));
    images_[img.label].push_back(img);
  }
}

double sum_state_log_overlap(const SumStateModel& model, const ProductState& x, int cls) {
  const auto& states = model.class_states(cls);
  if (states.empty()) {
    throw config_error("sum state class " + std::to_string(cls) + " has no images");
  }
  if (x.size() != static_cast<std::size_t>(model.site_count())) {
    throw dimension_error("sum_state_log_overlap: site count mismatch");
  }
  std::vector<double> terms(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    terms[i] = product_log_overlap(states[i], x);
  }
  const double lse = log_sum_exp(terms);
  if (std::isinf(lse)) return kFlooredLogSq;
  return 2.0 * lse;
}

LogScore score(const SumStateModel& model, const ProductState& x) {
  LogScore out;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    out.log_sq[cls] = sum_state_log_overlap(model, x, cls);
    if (out.log_sq[cls] == kFlooredLogSq) ++out.floor_events;
  }
  return out;
}

double log_norm(const SumStateModel& model, int cls) {
  const auto& states = model.class_states(cls);
  if (states.empty()) {
    throw config_error("sum state class " + std::to_string(cls) + " has no images");
  }
  // <Sigma|Sigma> = sum_ij <x^(i)|x^(j)>, all terms non-negative
  std::vector<double> terms;
  terms.reserve(states.size() * states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    terms.push_back(0.0);  // diagonal, unit norm
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      const double t = product_log_overlap(states[i], states[j]);
      if (!std::isinf(t)) {
        terms.push_back(t + std::numbers::ln2);  // both (i,j) and (j,i)
      }
    }
  }
  return log_sum_exp(terms);
}

LogScore score(const Model& model, const ProductState& x) {
  return std::visit([&](const auto& m) { return score(m, x); }, model);
}

double log_norm(const Model& model, int cls) {
  return std::visit([&](const auto& m) { return log_norm(m, cls); }, model);
}

int classify(const LogScore& scores) {
  for (double s : scores.log_sq) {
    if (!std::isfinite(s)) throw input_error("classify: non-finite score");
  }
  int best = 0;
  for (int cls = 1; cls < kNumClasses; ++cls) {
    if (scores.log_sq[cls] > scores.log_sq[best]) best = cls;
  }
  return best;
}

ModelKind model_kind(const Model& m) {
  if (std::holds_alternative<NNBPSModel>(m)) return ModelKind::nnbps;
  if (std::holds_alternative<SBPSModel>(m)) return ModelKind::sbps;
  return ModelKind::sum_state;
}

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::nnbps: return "nnbps";
    case ModelKind::sbps: return "sbps";
    case ModelKind::sum_state: return "sumstate";
  }
  return "?";
}

Model init_model(ModelKind kind, const BlockLayout& layout, int chi, std::uint64_t seed) {
  switch (kind) {
    case ModelKind::nnbps: return init_nnbps(layout, chi, seed);
    case ModelKind::sbps: return init_sbps(layout, chi, seed);
    case ModelKind::sum_state:
      throw config_error("sum state models are built from data, not initialized randomly");
  }
  throw config_error("unknown model kind");
}

ProductState embed_for_grid(const Image& img, int grid_height, int grid_width) {
  if (img.height == grid_height && img.width == grid_width) return embed_image(img);
  return embed_image(crop(img, grid_height, grid_width));
}

}  // namespace blockstate
