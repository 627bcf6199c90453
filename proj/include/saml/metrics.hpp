// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

namespace saml {

// Mann-Whitney form of the ROC-AUC: probability that a random positive
// outscores a random negative, ties counted as one half. Labels are 0/1.
// Throws DegenerateLabelsError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Mean per-class recall with the prediction positive when sigmoid(score) is
// at least `threshold`. `scores` are logits.
double balanced_accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

}  // namespace saml
