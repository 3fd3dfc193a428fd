#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "feddice/metrics.hpp"
#include "feddice/model.hpp"
#include "feddice/netflow.hpp"

namespace feddice {

struct FLConfig {
    std::size_t rounds = 10;
    std::size_t local_epochs = 1;
    double learning_rate = 0.01;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    bool parallel = true;      // train clients on worker threads
    bool eval_rounds = false;  // evaluate the global model on val each round
};

struct RoundLog {
    std::size_t round = 0;
    std::vector<std::size_t> client_samples;
    std::vector<double> client_loss;  // mean local loss of the final local epoch
    double val_accuracy = std::numeric_limits<double>::quiet_NaN();
    double val_fnr = std::numeric_limits<double>::quiet_NaN();
};

/// Sample-count weighted parameter average: sum_i (n_i / n) * params_i, with
/// clients summed in ascending index order so the result does not depend on
/// scheduling. Throws EmptyInputError with no clients, LengthMismatchError if
/// the weight list disagrees, ArchError/ShapeError on mismatched parameter
/// vectors, and Error when every weight is zero.
ParamVector fedavg(std::span<const ParamVector> client_params,
                   std::span<const std::size_t> sample_counts);

struct CentralizedResult {
    Model model;
    std::vector<double> epoch_loss;
    MetricsReport test_report;
};

/// Baseline: one model over the pooled training data, evaluated on the test
/// split. Throws MetricsUnavailableError when the test split is empty.
CentralizedResult run_centralized(ModelKind kind, const DatasetTriple& data,
                                  const TrainConfig& config);

struct FederatedResult {
    Model global;
    std::vector<RoundLog> rounds;
    MetricsReport test_report;
};

/// FedAvg over the client partitions. Every round each client copies the
/// global model, trains local_epochs locally (first_epoch advances round by
/// round, so one single client reproduces a centralized run exactly) and the
/// server averages the received parameters by sample count.
FederatedResult run_federated(ModelKind kind, std::span<const Dataset> clients,
                              const Dataset& val, const Dataset& test, const FLConfig& config);

/// Isolation baseline: trains one model per client on its local data only and
/// evaluates every model on every client. result[i][j] is the model of client
/// i scored on the data of client j.
std::vector<std::vector<MetricsReport>> cross_evaluate(ModelKind kind,
                                                       std::span<const Dataset> clients,
                                                       const TrainConfig& config);

void write_rounds_csv(const std::filesystem::path& path, std::span<const RoundLog> rounds);

}  // namespace feddice
