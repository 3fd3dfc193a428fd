#include "feddice/metrics.hpp"

#include <numeric>

#include "feddice/errors.hpp"
#include "feddice/rng.hpp"
#include "feddice/textio.hpp"

namespace feddice {

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> predicted) {
    if (truth.size() != predicted.size())
        throw LengthMismatchError("confusion: " + std::to_string(truth.size()) + " labels vs " +
                                  std::to_string(predicted.size()) + " predictions");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool pos = truth[i] == Label::kRansomware;
        const bool flagged = predicted[i] == Label::kRansomware;
        if (pos && flagged)
            cm.tp++;
        else if (pos && !flagged)
            cm.fn++;
        else if (!pos && flagged)
            cm.fp++;
        else
            cm.tn++;
    }
    return cm;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw EmptyMatrixError("compute_metrics: empty confusion matrix");

    MetricsReport r;
    r.cm = cm;
    const double total = static_cast<double>(cm.total());
    r.accuracy = static_cast<double>(cm.tp + cm.tn) / total;
    r.misclassified = cm.fp + cm.fn;

    auto ratio = [&r](std::size_t num, std::size_t den) {
        if (den == 0) {
            r.degenerate = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };

    // Per-class values; the ransomware class first, then clean.
    const double prec_r = ratio(cm.tp, cm.tp + cm.fp);
    const double prec_c = ratio(cm.tn, cm.tn + cm.fn);
    const double rec_r = ratio(cm.tp, cm.tp + cm.fn);
    const double rec_c = ratio(cm.tn, cm.tn + cm.fp);
    auto f1_of = [&r](double p, double rec) {
        if (p + rec == 0.0) {
            r.degenerate = true;
            return 0.0;
        }
        return 2.0 * p * rec / (p + rec);
    };
    const double f1_r = f1_of(prec_r, rec_r);
    const double f1_c = f1_of(prec_c, rec_c);

    r.precision = 0.5 * (prec_r + prec_c);
    r.recall = 0.5 * (rec_r + rec_c);
    r.f1 = 0.5 * (f1_r + f1_c);
    r.fnr = ratio(cm.fn, cm.fn + cm.tp);
    return r;
}

std::string MetricsReport::csv_header() {
    return "Accuracy,Precision,Recall,F1-score,FNR,Misclassified";
}

std::string MetricsReport::csv_row() const {
    return fmt_fixed(accuracy, 5) + ',' + fmt_fixed(precision, 5) + ',' + fmt_fixed(recall, 5) +
           ',' + fmt_fixed(f1, 5) + ',' + fmt_fixed(fnr, 5) + ',' + std::to_string(misclassified);
}

MetricsReport evaluate(const Model& model, const Dataset& data) {
    std::vector<Label> truth;
    truth.reserve(data.size());
    for (const auto& s : data.samples) truth.push_back(s.label);
    const std::vector<Label> predicted = predict_labels(model, data);
    return compute_metrics(confusion(truth, predicted));
}

KFoldResult kfold(const Dataset& data, std::size_t k, std::uint64_t seed,
                  const TrainerFn& trainer) {
    if (k < 2 || data.size() < k)
        throw TooFewSamplesError("kfold: " + std::to_string(data.size()) + " samples across " +
                                 std::to_string(k) + " folds");

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::mix(seed, 0xF01D));
    rng.shuffle(order);

    KFoldResult result;
    ConfusionMatrix pooled;
    const std::size_t base = data.size() / k, extra = data.size() % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t fold_size = base + (f < extra ? 1 : 0);
        Dataset train_part, test_part;
        train_part.split = Split::kTrain;
        test_part.split = Split::kTest;
        train_part.provenance = test_part.provenance = data.provenance;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const bool held_out = i >= pos && i < pos + fold_size;
            (held_out ? test_part : train_part).samples.push_back(data.samples[order[i]]);
        }
        pos += fold_size;

        const Model model = trainer(train_part);
        MetricsReport rep = evaluate(model, test_part);
        pooled += rep.cm;
        result.folds.push_back(std::move(rep));
    }
    result.pooled = compute_metrics(pooled);
    return result;
}

KFoldResult kfold(const Dataset& data, std::size_t k, std::uint64_t seed, ModelKind kind,
                  const TrainConfig& config) {
    if (data.empty()) throw TooFewSamplesError("kfold: empty dataset");
    const std::size_t dim = data.samples.front().values.size();
    return kfold(data, k, seed, [&](const Dataset& train_part) {
        Model model = make_model(kind, dim, config.seed);
        train(model, train_part, config);
        return model;
    });
}

}  // namespace feddice
