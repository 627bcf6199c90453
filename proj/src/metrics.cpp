// SPDX-License-Identifier: Apache-2.0
#include "saml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "saml/errors.hpp"

namespace saml {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels, const char* who,
                  std::size_t& positives) {
  if (scores.size() != labels.size()) {
    throw DegenerateLabelsError(std::string(who) + ": " + std::to_string(scores.size()) + " scores vs " +
                                std::to_string(labels.size()) + " labels");
  }
  positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DegenerateLabelsError(std::string(who) + ": labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0 || positives == labels.size()) {
    throw DegenerateLabelsError(std::string(who) + ": both classes must be present");
  }
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t n_pos = 0;
  check_inputs(scores, labels, "roc_auc", n_pos);
  const std::size_t n = scores.size();
  const std::size_t n_neg = n - n_pos;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Rank-sum of positives with mid-ranks for ties.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double balanced_accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  std::size_t n_pos = 0;
  check_inputs(scores, labels, "balanced_accuracy", n_pos);
  std::size_t tp = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = 1.0 / (1.0 + std::exp(-scores[i])) >= threshold;
    if (labels[i] == 1 && predicted) ++tp;
    if (labels[i] == 0 && !predicted) ++tn;
  }
  const double recall_pos = static_cast<double>(tp) / static_cast<double>(n_pos);
  const double recall_neg = static_cast<double>(tn) / static_cast<double>(scores.size() - n_pos);
  return 0.5 * (recall_pos + recall_neg);
}

}  // namespace saml
