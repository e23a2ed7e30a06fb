#pragma once

#include <cstddef>
#include <vector>

#include "husformer/errors.hpp"

namespace hus {

// confusion[true_class][predicted_class] = count
using Confusion = std::vector<std::vector<std::size_t>>;

Confusion make_confusion(const std::vector<std::size_t>& labels,
                         const std::vector<std::size_t>& predictions, std::size_t num_classes);

std::size_t confusion_total(const Confusion& confusion);

// Mean over classes of the one-vs-rest binary accuracy (TP_i + TN_i) / N.
double multiclass_avg_accuracy(const Confusion& confusion);

// Mean over classes of the one-vs-rest binary F1; a class with
// precision + recall == 0 contributes 0 (the class-count denominator stays
// fixed).
double multiclass_avg_f1(const Confusion& confusion);

}  // namespace hus
