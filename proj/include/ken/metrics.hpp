#pragma once

#include <array>
#include <vector>

#include "ken/errors.hpp"
#include "ken/tensor.hpp"

namespace ken {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Binary classification metrics. confusion[t][p] counts samples with true
// label t predicted as p; per_class[c] treats c as the positive class.
struct EvalMetrics {
  int samples = 0;
  int correct = 0;
  double accuracy = 0.0;
  std::array<std::array<int, 2>, 2> confusion = {{{0, 0}, {0, 0}}};
  std::array<ClassMetrics, 2> per_class;
};

// Ties resolve to the lowest class index.
inline int argmax_class(const Tensor& probs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.size()); ++i) {
    if (probs.at(i) > probs.at(best)) best = i;
  }
  return best;
}

inline ClassMetrics class_metrics(int tp, int fp, int fn) {
  ClassMetrics m;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

inline EvalMetrics compute_metrics(const std::vector<int>& y_true,
                                   const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw ConfigError("compute_metrics: label/prediction count mismatch");
  }
  if (y_true.empty()) throw ConfigError("compute_metrics: no samples");
  EvalMetrics m;
  m.samples = static_cast<int>(y_true.size());
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t > 1 || p < 0 || p > 1) {
      throw ConfigError("compute_metrics: labels must be 0 or 1");
    }
    m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] += 1;
    if (t == p) m.correct += 1;
  }
  m.accuracy = static_cast<double>(m.correct) / m.samples;
  for (int c = 0; c < 2; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    const auto oc = static_cast<std::size_t>(1 - c);
    const int tp = m.confusion[uc][uc];
    const int fp = m.confusion[oc][uc];
    const int fn = m.confusion[uc][oc];
    m.per_class[uc] = class_metrics(tp, fp, fn);
  }
  return m;
}

}  // namespace ken
