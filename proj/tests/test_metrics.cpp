#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "feddice/errors.hpp"
#include "feddice/metrics.hpp"
#include "feddice/rng.hpp"
#include "support.hpp"

using namespace feddice;

namespace {

struct Expected {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double fnr = 0.0;
    std::size_t misclassified = 0;
    bool degenerate = false;
};

// Independent per-sample recomputation of every reported quantity. Works from
// the raw label lists, not from a confusion matrix.
Expected brute_force(const std::vector<Label>& truth, const std::vector<Label>& pred) {
    Expected e;
    double correct = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == pred[i]) correct += 1.0;
        else e.misclassified += 1;
    }
    e.accuracy = correct / static_cast<double>(truth.size());

    auto count = [&](Label t, Label p) {
        std::size_t n = 0;
        for (std::size_t i = 0; i < truth.size(); ++i)
            if (truth[i] == t && pred[i] == p) ++n;
        return static_cast<double>(n);
    };
    double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
    for (const Label cls : {Label::kRansomware, Label::kClean}) {
        const Label other = cls == Label::kClean ? Label::kRansomware : Label::kClean;
        const double tp = count(cls, cls);
        const double fp = count(other, cls);
        const double fn = count(cls, other);
        double prec = 0.0, rec = 0.0, f1 = 0.0;
        if (tp + fp > 0) prec = tp / (tp + fp); else e.degenerate = true;
        if (tp + fn > 0) rec = tp / (tp + fn); else e.degenerate = true;
        if (prec + rec > 0) f1 = 2.0 * prec * rec / (prec + rec); else e.degenerate = true;
        precision_sum += prec;
        recall_sum += rec;
        f1_sum += f1;
    }
    e.precision = precision_sum / 2.0;
    e.recall = recall_sum / 2.0;
    e.f1 = f1_sum / 2.0;

    const double tp = count(Label::kRansomware, Label::kRansomware);
    const double fn = count(Label::kRansomware, Label::kClean);
    if (tp + fn > 0) e.fnr = fn / (tp + fn); else e.degenerate = true;
    return e;
}

}  // namespace

TEST_CASE("compute_metrics matches brute-force counting") {
    Rng rng(1234);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 1 + rng.next_below(40);
        std::vector<Label> truth(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = rng.next_below(2) == 0 ? Label::kRansomware : Label::kClean;
            pred[i] = rng.next_below(2) == 0 ? Label::kRansomware : Label::kClean;
        }
        const Expected want = brute_force(truth, pred);
        const MetricsReport got = compute_metrics(confusion(truth, pred));
        CHECK(std::abs(got.accuracy - want.accuracy) <= 1e-12);
        CHECK(std::abs(got.precision - want.precision) <= 1e-12);
        CHECK(std::abs(got.recall - want.recall) <= 1e-12);
        CHECK(std::abs(got.f1 - want.f1) <= 1e-12);
        CHECK(std::abs(got.fnr - want.fnr) <= 1e-12);
        CHECK(got.misclassified == want.misclassified);
        CHECK(got.degenerate == want.degenerate);
    }
}

TEST_CASE("a missed outbreak yields the reference miss rate") {
    ConfusionMatrix cm;
    cm.tp = 103;
    cm.fn = 19897;
    cm.tn = 50;
    const MetricsReport r = compute_metrics(cm);
    CHECK(r.fnr == doctest::Approx(0.99485).epsilon(1e-12));
}

TEST_CASE("confusion counts the four cells") {
    const std::vector<Label> truth = {Label::kRansomware, Label::kRansomware, Label::kClean,
                                      Label::kClean, Label::kRansomware};
    const std::vector<Label> pred = {Label::kRansomware, Label::kClean, Label::kClean,
                                     Label::kRansomware, Label::kRansomware};
    const ConfusionMatrix cm = confusion(truth, pred);
    CHECK(cm.tp == 2);
    CHECK(cm.fn == 1);
    CHECK(cm.tn == 1);
    CHECK(cm.fp == 1);
    CHECK(cm.total() == 5);
}

TEST_CASE("confusion rejects mismatched lengths") {
    const std::vector<Label> truth(3, Label::kClean);
    const std::vector<Label> pred(2, Label::kClean);
    CHECK_THROWS_AS(confusion(truth, pred), LengthMismatchError);
}

TEST_CASE("confusion matrices accumulate") {
    ConfusionMatrix a{1, 2, 3, 4};
    const ConfusionMatrix b{10, 20, 30, 40};
    a += b;
    CHECK(a.tp == 11);
    CHECK(a.fp == 22);
    CHECK(a.tn == 33);
    CHECK(a.fn == 44);
}

TEST_CASE("one-sided evaluations are flagged degenerate") {
    ConfusionMatrix cm;
    cm.tn = 5;
    cm.fn = 5;  // everything predicted clean
    const MetricsReport r = compute_metrics(cm);
    CHECK(r.degenerate);
    CHECK(r.fnr == 1.0);
    CHECK(r.accuracy == 0.5);
}

TEST_CASE("empty matrices are rejected") {
    CHECK_THROWS_AS(compute_metrics(ConfusionMatrix{}), EmptyMatrixError);
}

TEST_CASE("csv rows follow the reporting layout") {
    CHECK(MetricsReport::csv_header() == "Accuracy,Precision,Recall,F1-score,FNR,Misclassified");
    const MetricsReport r = compute_metrics(ConfusionMatrix{1, 1, 1, 1});
    CHECK(r.csv_row() == "0.50000,0.50000,0.50000,0.50000,0.50000,2");
}

TEST_CASE("kfold partitions every sample exactly once") {
    Rng rng(77);
    const Dataset data = testsupport::separable_dataset(rng, 10, 3);
    const TrainerFn constant = [](const Dataset&) { return make_model(ModelKind::kLogReg, 3); };

    const KFoldResult r = kfold(data, 3, 5, constant);
    REQUIRE(r.folds.size() == 3);
    CHECK(r.folds[0].cm.total() == 4);
    CHECK(r.folds[1].cm.total() == 3);
    CHECK(r.folds[2].cm.total() == 3);
    CHECK(r.pooled.cm.total() == 10);

    // Zero weights predict clean everywhere, so pooled accuracy is the clean share.
    CHECK(r.pooled.accuracy == doctest::Approx(0.5).epsilon(1e-12));

    const KFoldResult again = kfold(data, 3, 5, constant);
    for (std::size_t f = 0; f < 3; ++f)
        CHECK(again.folds[f].cm.total() == r.folds[f].cm.total());
}

TEST_CASE("kfold rejects undersized requests") {
    Rng rng(78);
    const Dataset data = testsupport::separable_dataset(rng, 6, 3);
    const TrainerFn constant = [](const Dataset&) { return make_model(ModelKind::kLogReg, 3); };
    CHECK_THROWS_AS(kfold(data, 1, 0, constant), TooFewSamplesError);
    CHECK_THROWS_AS(kfold(data, 7, 0, constant), TooFewSamplesError);
    CHECK_THROWS_AS(kfold(Dataset{}, 3, 0, constant), TooFewSamplesError);
}

TEST_CASE("kfold trains real models per fold") {
    Rng rng(79);
    const Dataset data = testsupport::separable_dataset(rng, 90, 6, 3.0);
    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.epochs = 15;
    cfg.batch_size = 16;
    const KFoldResult r = kfold(data, 3, 11, ModelKind::kLogReg, cfg);
    REQUIRE(r.folds.size() == 3);
    CHECK(r.pooled.accuracy > 0.9);
}
