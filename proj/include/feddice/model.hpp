#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "feddice/netflow.hpp"

namespace feddice {

enum class ModelKind : std::uint8_t { kLogReg = 0, kSvm = 1, kFnn = 2 };

const char* model_kind_name(ModelKind k);
std::optional<ModelKind> model_kind_from_string(const std::string& s);

/// Input transform applied inside the model to every feature vector. Raw
/// window aggregates span several orders of magnitude (packet sums vs. byte
/// sums), which stalls plain SGD at a fixed learning rate; log1p squashes
/// them onto comparable scales. The transform is part of the architecture
/// identity so checkpoints and federated peers cannot silently disagree.
enum class Transform : std::uint8_t { kNone = 0, kLog1p = 1 };

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t epochs = 5;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    // Index of the first epoch in a longer schedule. Federated rounds pass
    // round * local_epochs here so a single-client federation walks exactly
    // the same shuffle sequence as one centralized run.
    std::size_t first_epoch = 0;
};

struct LogRegModel {
    std::vector<double> w;
    double b = 0.0;
    Transform transform = Transform::kNone;
};

/// Linear SVM trained on the primal objective
///   lambda/2 ||w||^2 + mean_i max(0, 1 - y_i (w.x_i + b))
/// with y = +1 for clean and y = -1 for ransomware traffic.
struct LinearSvmModel {
    std::vector<double> w;
    double b = 0.0;
    double lambda = 1e-4;
    Transform transform = Transform::kNone;
};

/// One hidden block: Linear -> BatchNorm -> ReLU. Weights are row-major
/// [out][in]. Running statistics follow the usual exponential-average
/// convention (momentum 0.1, unbiased variance).
struct FnnBlock {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weight;        // out * in
    std::vector<double> bias;          // out
    std::vector<double> gamma;         // out
    std::vector<double> beta;          // out
    std::vector<double> running_mean;  // out
    std::vector<double> running_var;   // out
};

struct FnnModel {
    std::vector<std::size_t> layer_sizes;  // input, hidden..., 2
    std::vector<FnnBlock> blocks;          // layer_sizes.size() - 2 hidden blocks
    std::vector<double> out_weight;        // 2 * last_hidden
    std::vector<double> out_bias;          // 2
    Transform transform = Transform::kNone;
};

using Model = std::variant<LogRegModel, LinearSvmModel, FnnModel>;

inline constexpr std::size_t kFnnDefaultHidden[] = {1024, 512, 128, 64, 32};
inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.1;

/// Builds a freshly initialized model over log1p-transformed inputs. Linear
/// model weights start at zero; FNN linear layers use He-uniform weights
/// (seeded), zero biases, identity batch norm.
Model make_model(ModelKind kind, std::size_t input_dim, std::uint64_t seed = 0);

/// FNN with explicit layer sizes {input, hidden..., 2}; small configurations
/// keep finite-difference checks tractable.
FnnModel make_fnn(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
                  Transform transform);

ModelKind kind_of(const Model& model);
std::size_t input_dim(const Model& model);

/// Architecture identity string, e.g. "fnn:520-1024-512-128-64-32-2:log1p".
/// Parameter exchange and checkpoints require an exact match.
std::string arch_id(const Model& model);

/// Flat parameter snapshot. For the FNN this includes the batch norm running
/// statistics so federated averaging keeps inference-time normalization in
/// sync across peers.
struct ParamVector {
    std::string arch;
    std::vector<double> values;
};

ParamVector to_params(const Model& model);

/// Writes params back into the model. Throws ArchError on an architecture
/// mismatch and ShapeError if the value count disagrees.
void from_params(Model& model, const ParamVector& params);

/// Probability that the sample is clean traffic. Throws ShapeError if the
/// vector width disagrees with the model input dimension.
double predict_proba(const Model& model, std::span<const double> x);

inline Label classify_proba(double p_clean) {
    return p_clean >= 0.5 ? Label::kClean : Label::kRansomware;
}

Label classify(const Model& model, std::span<const double> x);

/// Batched prediction over a dataset (batch norm in inference mode).
std::vector<Label> predict_labels(const Model& model, const Dataset& data);

/// Mean loss and gradient over one batch, aligned with to_params layout.
/// Batch norm runs in training mode but running statistics are not touched;
/// their gradient entries are zero. Intended for optimizer steps and
/// finite-difference verification.
std::pair<double, std::vector<double>> loss_and_grad(const Model& model,
                                                     std::span<const FeatureVector> batch);

/// Minibatch SGD over the dataset. Returns the mean training loss per epoch.
/// Deterministic: the epoch shuffle depends only on (seed, first_epoch + e)
/// and all reductions run in a fixed order. Throws InsufficientDataError on
/// an empty dataset.
std::vector<double> train(Model& model, const Dataset& data, const TrainConfig& config);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace feddice
