#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "feddice/model.hpp"
#include "feddice/netflow.hpp"

namespace feddice {

/// Binary confusion counts. Ransomware is the positive class: a false
/// negative is an attack window waved through as clean.
struct ConfusionMatrix {
    std::size_t tp = 0;  // ransomware predicted ransomware
    std::size_t fp = 0;  // clean predicted ransomware
    std::size_t tn = 0;  // clean predicted clean
    std::size_t fn = 0;  // ransomware predicted clean

    std::size_t total() const { return tp + fp + tn + fn; }
    ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> predicted);

/// Precision, recall and F1 are macro averages over the two classes. A
/// zero-denominator class metric contributes 0 and sets `degenerate`, so a
/// report built from a one-sided evaluation is visibly marked rather than
/// silently flattering.
struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double fnr = 0.0;
    std::size_t misclassified = 0;
    bool degenerate = false;
    ConfusionMatrix cm;

    static std::string csv_header();
    std::string csv_row() const;
};

/// Throws EmptyMatrixError if the matrix holds no observations.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

MetricsReport evaluate(const Model& model, const Dataset& data);

using TrainerFn = std::function<Model(const Dataset& train)>;

struct KFoldResult {
    std::vector<MetricsReport> folds;
    MetricsReport pooled;  // metrics over the summed confusion matrix
};

/// Seeded k-fold cross validation. Throws TooFewSamplesError when the data
/// cannot fill k non-empty folds (or k < 2).
KFoldResult kfold(const Dataset& data, std::size_t k, std::uint64_t seed, const TrainerFn& trainer);
KFoldResult kfold(const Dataset& data, std::size_t k, std::uint64_t seed, ModelKind kind,
                  const TrainConfig& config);

}  // namespace feddice
