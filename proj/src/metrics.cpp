#include "husformer/metrics.hpp"

#include <string>

namespace hus {

namespace {

struct BinaryCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

BinaryCounts one_vs_rest(const Confusion& confusion, std::size_t cls, std::size_t total) {
    BinaryCounts b;
    b.tp = confusion[cls][cls];
    for (std::size_t j = 0; j < confusion.size(); ++j) {
        if (j == cls) continue;
        b.fn += confusion[cls][j];
        b.fp += confusion[j][cls];
    }
    b.tn = total - b.tp - b.fp - b.fn;
    return b;
}

void require_nonempty(const Confusion& confusion) {
    if (confusion.empty()) throw DataError("empty confusion matrix");
    for (const auto& row : confusion) {
        if (row.size() != confusion.size()) {
            throw DataError("confusion matrix is not square");
        }
    }
    if (confusion_total(confusion) == 0) throw DataError("confusion matrix has no samples");
}

}  // namespace

Confusion make_confusion(const std::vector<std::size_t>& labels,
                         const std::vector<std::size_t>& predictions, std::size_t num_classes) {
    if (labels.size() != predictions.size()) {
        throw DataError("label/prediction length mismatch: " + std::to_string(labels.size()) + " vs " +
                        std::to_string(predictions.size()));
    }
    Confusion confusion(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes || predictions[i] >= num_classes) {
            throw DataError("class index out of range at position " + std::to_string(i));
        }
        ++confusion[labels[i]][predictions[i]];
    }
    return confusion;
}

std::size_t confusion_total(const Confusion& confusion) {
    std::size_t total = 0;
    for (const auto& row : confusion)
        for (std::size_t v : row) total += v;
    return total;
}

double multiclass_avg_accuracy(const Confusion& confusion) {
    require_nonempty(confusion);
    const std::size_t total = confusion_total(confusion);
    double sum = 0.0;
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        const BinaryCounts b = one_vs_rest(confusion, i, total);
        sum += static_cast<double>(b.tp + b.tn) / static_cast<double>(total);
    }
    return sum / static_cast<double>(confusion.size());
}

double multiclass_avg_f1(const Confusion& confusion) {
    require_nonempty(confusion);
    const std::size_t total = confusion_total(confusion);
    double sum = 0.0;
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        const BinaryCounts b = one_vs_rest(confusion, i, total);
        const double precision =
            (b.tp + b.fp) > 0 ? static_cast<double>(b.tp) / static_cast<double>(b.tp + b.fp) : 0.0;
        const double recall =
            (b.tp + b.fn) > 0 ? static_cast<double>(b.tp) / static_cast<double>(b.tp + b.fn) : 0.0;
        if (precision + recall > 0.0) sum += 2.0 * precision * recall / (precision + recall);
    }
    return sum / static_cast<double>(confusion.size());
}

}  // namespace hus
