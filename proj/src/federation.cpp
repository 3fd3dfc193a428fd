#include "feddice/federation.hpp"

#include <cmath>
#include <fstream>
#include <future>

#include "feddice/errors.hpp"
#include "feddice/rng.hpp"
#include "feddice/textio.hpp"

namespace feddice {

ParamVector fedavg(std::span<const ParamVector> client_params,
                   std::span<const std::size_t> sample_counts) {
    if (client_params.empty()) throw EmptyInputError("fedavg: no client parameters");
    if (client_params.size() != sample_counts.size())
        throw LengthMismatchError("fedavg: " + std::to_string(client_params.size()) +
                                  " parameter vectors vs " + std::to_string(sample_counts.size()) +
                                  " sample counts");

    const ParamVector& first = client_params.front();
    std::size_t total = 0;
    for (std::size_t i = 0; i < client_params.size(); ++i) {
        if (client_params[i].arch != first.arch)
            throw ArchError("fedavg: client " + std::to_string(i) + " has architecture " +
                            client_params[i].arch + ", expected " + first.arch);
        if (client_params[i].values.size() != first.values.size())
            throw ShapeError("fedavg: client " + std::to_string(i) +
                             " parameter count mismatch");
        total += sample_counts[i];
    }
    if (total == 0) throw Error("fedavg: all clients report zero samples");

    ParamVector out;
    out.arch = first.arch;
    out.values.assign(first.values.size(), 0.0);
    for (std::size_t i = 0; i < client_params.size(); ++i) {
        const double weight =
            static_cast<double>(sample_counts[i]) / static_cast<double>(total);
        const auto& v = client_params[i].values;
        for (std::size_t j = 0; j < v.size(); ++j) out.values[j] += weight * v[j];
    }
    return out;
}

CentralizedResult run_centralized(ModelKind kind, const DatasetTriple& data,
                                  const TrainConfig& config) {
    if (data.test.empty())
        throw MetricsUnavailableError("run_centralized: test split is empty");
    if (data.train.empty()) throw InsufficientDataError("run_centralized: training set is empty");

    CentralizedResult result{make_model(kind, data.train.samples.front().values.size(),
                                        config.seed),
                             {}, {}};
    result.epoch_loss = train(result.model, data.train, config);
    result.test_report = evaluate(result.model, data.test);
    return result;
}

FederatedResult run_federated(ModelKind kind, std::span<const Dataset> clients,
                              const Dataset& val, const Dataset& test, const FLConfig& config) {
    if (clients.empty()) throw EmptyInputError("run_federated: no clients");
    for (std::size_t i = 0; i < clients.size(); ++i)
        if (clients[i].empty())
            throw EmptyInputError("run_federated: client " + std::to_string(i) + " has no data");
    if (test.empty()) throw MetricsUnavailableError("run_federated: test split is empty");

    const std::size_t dim = clients.front().samples.front().values.size();
    FederatedResult result{make_model(kind, dim, config.seed), {}, {}};

    std::vector<std::size_t> counts;
    counts.reserve(clients.size());
    for (const auto& c : clients) counts.push_back(c.size());

    for (std::size_t r = 0; r < config.rounds; ++r) {
        TrainConfig local;
        local.learning_rate = config.learning_rate;
        local.epochs = config.local_epochs;
        local.batch_size = config.batch_size;
        local.seed = config.seed;
        local.first_epoch = r * config.local_epochs;

        auto train_client = [&](std::size_t i) {
            Model m = result.global;
            const std::vector<double> losses = train(m, clients[i], local);
            return std::pair{to_params(m), losses.empty() ? 0.0 : losses.back()};
        };

        std::vector<ParamVector> params(clients.size());
        RoundLog log;
        log.round = r;
        log.client_samples = counts;
        log.client_loss.resize(clients.size());
        if (config.parallel && clients.size() > 1) {
            std::vector<std::future<std::pair<ParamVector, double>>> jobs;
            jobs.reserve(clients.size());
            for (std::size_t i = 0; i < clients.size(); ++i)
                jobs.push_back(std::async(std::launch::async, train_client, i));
            for (std::size_t i = 0; i < clients.size(); ++i) {
                auto [p, loss] = jobs[i].get();
                params[i] = std::move(p);
                log.client_loss[i] = loss;
            }
        } else {
            for (std::size_t i = 0; i < clients.size(); ++i) {
                auto [p, loss] = train_client(i);
                params[i] = std::move(p);
                log.client_loss[i] = loss;
            }
        }

        from_params(result.global, fedavg(params, counts));
        if (config.eval_rounds && !val.empty()) {
            const MetricsReport rep = evaluate(result.global, val);
            log.val_accuracy = rep.accuracy;
            log.val_fnr = rep.fnr;
        }
        result.rounds.push_back(std::move(log));
    }

    result.test_report = evaluate(result.global, test);
    return result;
}

std::vector<std::vector<MetricsReport>> cross_evaluate(ModelKind kind,
                                                       std::span<const Dataset> clients,
                                                       const TrainConfig& config) {
    if (clients.empty()) throw EmptyInputError("cross_evaluate: no clients");
    for (std::size_t i = 0; i < clients.size(); ++i)
        if (clients[i].empty())
            throw EmptyInputError("cross_evaluate: client " + std::to_string(i) + " has no data");

    const std::size_t dim = clients.front().samples.front().values.size();
    std::vector<Model> models;
    models.reserve(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
        TrainConfig local = config;
        local.seed = Rng::mix(config.seed, 0xC0 + i);
        Model m = make_model(kind, dim, local.seed);
        train(m, clients[i], local);
        models.push_back(std::move(m));
    }

    std::vector<std::vector<MetricsReport>> table(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
        table[i].reserve(clients.size());
        for (std::size_t j = 0; j < clients.size(); ++j)
            table[i].push_back(evaluate(models[i], clients[j]));
    }
    return table;
}

void write_rounds_csv(const std::filesystem::path& path, std::span<const RoundLog> rounds) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "round,client,samples,loss,val_accuracy,val_fnr\n";
    for (const auto& r : rounds) {
        for (std::size_t i = 0; i < r.client_loss.size(); ++i) {
            out << r.round << ',' << i << ',' << r.client_samples[i] << ','
                << fmt_fixed(r.client_loss[i], 6) << ',';
            if (!std::isnan(r.val_accuracy))
                out << fmt_fixed(r.val_accuracy, 5) << ',' << fmt_fixed(r.val_fnr, 5);
            else
                out << ',';
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace feddice
