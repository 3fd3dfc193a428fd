#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "feddice/errors.hpp"
#include "feddice/federation.hpp"
#include "feddice/rng.hpp"
#include "support.hpp"

using namespace feddice;

namespace {

ParamVector params_of(const std::string& arch, std::vector<double> values) {
    return ParamVector{arch, std::move(values)};
}

// Straight-line weighted mean, written independently of fedavg.
ParamVector naive_mean(const std::vector<ParamVector>& ps, const std::vector<std::size_t>& ns) {
    double total = 0.0;
    for (const std::size_t n : ns) total += static_cast<double>(n);
    ParamVector out{ps.front().arch, std::vector<double>(ps.front().values.size(), 0.0)};
    for (std::size_t j = 0; j < out.values.size(); ++j)
        for (std::size_t i = 0; i < ps.size(); ++i)
            out.values[j] += static_cast<double>(ns[i]) / total * ps[i].values[j];
    return out;
}

DatasetTriple synthetic_triple(std::uint64_t seed) {
    const auto flows = synthesize(seed, {12, 6, 0, 0, 0}, WindowConfig{});
    return build_dataset(flows, WindowConfig{}, SplitRatios{}, seed);
}

}  // namespace

TEST_CASE("fedavg is the sample-weighted parameter mean") {
    const std::vector<ParamVector> ps = {params_of("lr:d1:none", {2.0}),
                                         params_of("lr:d1:none", {6.0})};
    const std::vector<std::size_t> ns = {1, 3};
    const ParamVector avg = fedavg(ps, ns);
    CHECK(avg.arch == "lr:d1:none");
    REQUIRE(avg.values.size() == 1);
    CHECK(avg.values[0] == 5.0);

    Rng rng(313);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n_clients = 1 + rng.next_below(8);
        const std::size_t dim = 1 + rng.next_below(64);
        std::vector<ParamVector> params;
        std::vector<std::size_t> counts;
        for (std::size_t c = 0; c < n_clients; ++c) {
            ParamVector p{"lr:d" + std::to_string(dim - 1) + ":none",
                          std::vector<double>(dim, 0.0)};
            for (double& v : p.values) v = rng.normal(0.0, 2.0);
            params.push_back(std::move(p));
            counts.push_back(1 + rng.next_below(1000));
        }
        const ParamVector got = fedavg(params, counts);
        const ParamVector want = naive_mean(params, counts);
        for (std::size_t j = 0; j < dim; ++j) CHECK(std::abs(got.values[j] - want.values[j]) <= 1e-12);
    }
}

TEST_CASE("fedavg with a single client is the identity") {
    ParamVector p{"svm:d2:none", {1.0 / 3.0, -7.123456789, 0.1}};
    const std::vector<ParamVector> ps = {p};
    const std::vector<std::size_t> ns = {17};
    CHECK(fedavg(ps, ns).values == p.values);
}

TEST_CASE("fedavg rejects malformed input") {
    const std::vector<ParamVector> none;
    const std::vector<std::size_t> empty;
    CHECK_THROWS_AS(fedavg(none, empty), EmptyInputError);

    const std::vector<ParamVector> two = {params_of("lr:d1:none", {1.0}),
                                          params_of("lr:d1:none", {2.0})};
    const std::vector<std::size_t> one = {5};
    CHECK_THROWS_AS(fedavg(two, one), LengthMismatchError);

    const std::vector<ParamVector> mixed = {params_of("lr:d1:none", {1.0}),
                                            params_of("svm:d1:none", {2.0})};
    const std::vector<std::size_t> ns2 = {1, 1};
    CHECK_THROWS_AS(fedavg(mixed, ns2), ArchError);

    const std::vector<ParamVector> ragged = {params_of("lr:d1:none", {1.0}),
                                             params_of("lr:d1:none", {2.0, 3.0})};
    CHECK_THROWS_AS(fedavg(ragged, ns2), ShapeError);

    const std::vector<std::size_t> zeros = {0, 0};
    CHECK_THROWS_AS(fedavg(two, zeros), Error);
}

TEST_CASE("a one-client federation reproduces centralized training bitwise") {
    const DatasetTriple data = synthetic_triple(21);

    FLConfig fl;
    fl.rounds = 4;
    fl.local_epochs = 2;
    fl.learning_rate = 0.05;
    fl.batch_size = 16;
    fl.seed = 5;

    TrainConfig tc;
    tc.epochs = fl.rounds * fl.local_epochs;
    tc.learning_rate = fl.learning_rate;
    tc.batch_size = fl.batch_size;
    tc.seed = fl.seed;

    for (const ModelKind kind : {ModelKind::kLogReg, ModelKind::kSvm}) {
        const std::vector<Dataset> clients = {data.train};
        const FederatedResult fed = run_federated(kind, clients, data.val, data.test, fl);
        const CentralizedResult cent = run_centralized(kind, data, tc);
        CHECK(to_params(fed.global).values == to_params(cent.model).values);
        CHECK(fed.test_report.cm.total() == cent.test_report.cm.total());
        CHECK(fed.test_report.accuracy == cent.test_report.accuracy);
    }
}

TEST_CASE("parallel and serial federated runs agree bitwise") {
    const DatasetTriple data = synthetic_triple(33);
    const auto clients = partition(data.train, Scenario::kIid3, 2);

    FLConfig fl;
    fl.rounds = 3;
    fl.local_epochs = 1;
    fl.seed = 8;
    fl.parallel = true;
    const FederatedResult a = run_federated(ModelKind::kLogReg, clients, data.val, data.test, fl);
    fl.parallel = false;
    const FederatedResult b = run_federated(ModelKind::kLogReg, clients, data.val, data.test, fl);

    CHECK(to_params(a.global).values == to_params(b.global).values);
    REQUIRE(a.rounds.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) CHECK(a.rounds[r].client_loss == b.rounds[r].client_loss);
}

TEST_CASE("round logs carry schedules and optional validation metrics") {
    const DatasetTriple data = synthetic_triple(44);
    const auto clients = partition(data.train, Scenario::kIid3, 1);

    FLConfig fl;
    fl.rounds = 2;
    fl.eval_rounds = true;
    const FederatedResult r = run_federated(ModelKind::kLogReg, clients, data.val, data.test, fl);
    REQUIRE(r.rounds.size() == 2);
    for (const auto& log : r.rounds) {
        CHECK(log.client_samples.size() == clients.size());
        CHECK(log.client_loss.size() == clients.size());
        for (const double l : log.client_loss) CHECK(std::isfinite(l));
        if (!data.val.empty()) CHECK(!std::isnan(log.val_accuracy));
    }
    CHECK(r.rounds[0].round == 0);
    CHECK(r.rounds[1].round == 1);
}

TEST_CASE("federated runs validate their inputs") {
    const DatasetTriple data = synthetic_triple(55);
    const std::vector<Dataset> none;
    CHECK_THROWS_AS(run_federated(ModelKind::kLogReg, none, data.val, data.test, FLConfig{}),
                    EmptyInputError);

    const std::vector<Dataset> with_empty = {data.train, Dataset{}};
    CHECK_THROWS_AS(run_federated(ModelKind::kLogReg, with_empty, data.val, data.test, FLConfig{}),
                    EmptyInputError);

    const std::vector<Dataset> ok = {data.train};
    CHECK_THROWS_AS(run_federated(ModelKind::kLogReg, ok, data.val, Dataset{}, FLConfig{}),
                    MetricsUnavailableError);

    DatasetTriple no_test = data;
    no_test.test.samples.clear();
    CHECK_THROWS_AS(run_centralized(ModelKind::kLogReg, no_test, TrainConfig{}),
                    MetricsUnavailableError);

    DatasetTriple no_train = data;
    no_train.train.samples.clear();
    CHECK_THROWS_AS(run_centralized(ModelKind::kLogReg, no_train, TrainConfig{}),
                    InsufficientDataError);
}

TEST_CASE("cross evaluation scores every model on every client") {
    Rng rng(66);
    std::vector<Dataset> clients = {testsupport::separable_dataset(rng, 60, 5, 3.0),
                                    testsupport::separable_dataset(rng, 40, 5, 3.0)};
    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.epochs = 15;
    cfg.batch_size = 16;

    const auto table = cross_evaluate(ModelKind::kLogReg, clients, cfg);
    REQUIRE(table.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        REQUIRE(table[i].size() == 2);
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(table[i][j].cm.total() == clients[j].size());
            CHECK(table[i][j].accuracy > 0.9);  // same distribution everywhere
        }
    }

    const std::vector<Dataset> none;
    CHECK_THROWS_AS(cross_evaluate(ModelKind::kLogReg, none, cfg), EmptyInputError);
}

TEST_CASE("round csv lists one line per client per round") {
    RoundLog r0;
    r0.round = 0;
    r0.client_samples = {10, 20};
    r0.client_loss = {0.5, 0.25};
    RoundLog r1 = r0;
    r1.round = 1;
    r1.val_accuracy = 0.75;
    r1.val_fnr = 0.125;

    const auto path = std::filesystem::temp_directory_path() / "feddice_test_rounds.csv";
    const std::vector<RoundLog> rounds = {r0, r1};
    write_rounds_csv(path, rounds);

    std::ifstream in(path);
    std::stringstream got;
    got << in.rdbuf();
    CHECK(got.str() ==
          "round,client,samples,loss,val_accuracy,val_fnr\n"
          "0,0,10,0.500000,,\n"
          "0,1,20,0.250000,,\n"
          "1,0,10,0.500000,0.75000,0.12500\n"
          "1,1,20,0.250000,0.75000,0.12500\n");
    std::filesystem::remove(path);
}
