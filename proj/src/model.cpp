#include "feddice/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "feddice/errors.hpp"
#include "feddice/rng.hpp"

namespace feddice {

namespace {

// Dot product with eight independent accumulator lanes. The lane split keeps
// the reduction order fixed while still letting the compiler vectorize it,
// so results are identical between any two call sites in this binary.
double dot(const double* a, const double* b, std::size_t n) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    double s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double transform_value(Transform t, double x) {
    if (t == Transform::kNone) return x;
    // Window aggregates are non-negative by construction; clamp defensively
    // so stray negatives cannot reach log1p's pole.
    return std::log1p(std::max(x, 0.0));
}

void transform_row(Transform t, std::span<const double> x, double* out) {
    if (t == Transform::kNone) {
        std::copy(x.begin(), x.end(), out);
        return;
    }
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = transform_value(t, x[i]);
}

const char* transform_name(Transform t) { return t == Transform::kLog1p ? "log1p" : "none"; }

std::optional<Transform> transform_from_string(const std::string& s) {
    if (s == "log1p") return Transform::kLog1p;
    if (s == "none") return Transform::kNone;
    return std::nullopt;
}

double svm_target(Label l) { return l == Label::kClean ? 1.0 : -1.0; }

}  // namespace

const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::kLogReg: return "lr";
        case ModelKind::kSvm: return "svm";
        default: return "fnn";
    }
}

std::optional<ModelKind> model_kind_from_string(const std::string& s) {
    if (s == "lr") return ModelKind::kLogReg;
    if (s == "svm") return ModelKind::kSvm;
    if (s == "fnn") return ModelKind::kFnn;
    return std::nullopt;
}

FnnModel make_fnn(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
                  Transform transform) {
    if (layer_sizes.size() < 2) throw ShapeError("fnn needs at least input and output layers");
    if (layer_sizes.back() != 2) throw ShapeError("fnn output layer must have width 2");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw ShapeError("fnn layer sizes must be positive");

    FnnModel m;
    m.layer_sizes = layer_sizes;
    m.transform = transform;
    for (std::size_t l = 0; l + 2 < layer_sizes.size(); ++l) {
        FnnBlock blk;
        blk.in = layer_sizes[l];
        blk.out = layer_sizes[l + 1];
        blk.weight.resize(blk.out * blk.in);
        blk.bias.assign(blk.out, 0.0);
        blk.gamma.assign(blk.out, 1.0);
        blk.beta.assign(blk.out, 0.0);
        blk.running_mean.assign(blk.out, 0.0);
        blk.running_var.assign(blk.out, 1.0);
        Rng rng(Rng::mix(seed, 0xF00 + l));
        const double limit = std::sqrt(6.0 / static_cast<double>(blk.in));
        for (double& w : blk.weight) w = rng.uniform(-limit, limit);
        m.blocks.push_back(std::move(blk));
    }
    const std::size_t last = layer_sizes[layer_sizes.size() - 2];
    m.out_weight.resize(2 * last);
    m.out_bias.assign(2, 0.0);
    Rng rng(Rng::mix(seed, 0xF00 + m.blocks.size()));
    const double limit = std::sqrt(6.0 / static_cast<double>(last));
    for (double& w : m.out_weight) w = rng.uniform(-limit, limit);
    return m;
}

Model make_model(ModelKind kind, std::size_t input_dim, std::uint64_t seed) {
    if (input_dim == 0) throw ShapeError("input_dim must be positive");
    switch (kind) {
        case ModelKind::kLogReg:
            return LogRegModel{std::vector<double>(input_dim, 0.0), 0.0, Transform::kLog1p};
        case ModelKind::kSvm: {
            LinearSvmModel svm;
            svm.w.assign(input_dim, 0.0);
            svm.transform = Transform::kLog1p;
            return svm;
        }
        default: {
            std::vector<std::size_t> sizes{input_dim};
            sizes.insert(sizes.end(), std::begin(kFnnDefaultHidden), std::end(kFnnDefaultHidden));
            sizes.push_back(2);
            return make_fnn(sizes, seed, Transform::kLog1p);
        }
    }
}

ModelKind kind_of(const Model& model) {
    return static_cast<ModelKind>(model.index());
}

std::size_t input_dim(const Model& model) {
    return std::visit(
        [](const auto& m) -> std::size_t {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, FnnModel>)
                return m.layer_sizes.front();
            else
                return m.w.size();
        },
        model);
}

std::string arch_id(const Model& model) {
    std::ostringstream os;
    os << model_kind_name(kind_of(model)) << ':';
    if (const auto* fnn = std::get_if<FnnModel>(&model)) {
        for (std::size_t i = 0; i < fnn->layer_sizes.size(); ++i) {
            if (i > 0) os << '-';
            os << fnn->layer_sizes[i];
        }
        os << ':' << transform_name(fnn->transform);
    } else {
        const Transform t = std::holds_alternative<LogRegModel>(model)
                                ? std::get<LogRegModel>(model).transform
                                : std::get<LinearSvmModel>(model).transform;
        os << 'd' << input_dim(model) << ':' << transform_name(t);
    }
    return os.str();
}

namespace {

// Flat parameter order for the FNN: per block weight, bias, gamma, beta,
// running_mean, running_var; then the output weight and bias.
template <typename ModelT, typename Fn>
void visit_fnn_arrays(ModelT& m, Fn&& fn) {
    for (auto& blk : m.blocks) {
        fn(blk.weight);
        fn(blk.bias);
        fn(blk.gamma);
        fn(blk.beta);
        fn(blk.running_mean);
        fn(blk.running_var);
    }
    fn(m.out_weight);
    fn(m.out_bias);
}

std::size_t fnn_param_count(const FnnModel& m) {
    std::size_t n = 0;
    visit_fnn_arrays(m, [&](const std::vector<double>& v) { n += v.size(); });
    return n;
}

}  // namespace

ParamVector to_params(const Model& model) {
    ParamVector p;
    p.arch = arch_id(model);
    if (const auto* fnn = std::get_if<FnnModel>(&model)) {
        p.values.reserve(fnn_param_count(*fnn));
        visit_fnn_arrays(*fnn, [&](const std::vector<double>& v) {
            p.values.insert(p.values.end(), v.begin(), v.end());
        });
    } else if (const auto* lr = std::get_if<LogRegModel>(&model)) {
        p.values = lr->w;
        p.values.push_back(lr->b);
    } else {
        const auto& svm = std::get<LinearSvmModel>(model);
        p.values = svm.w;
        p.values.push_back(svm.b);
    }
    return p;
}

void from_params(Model& model, const ParamVector& params) {
    if (params.arch != arch_id(model))
        throw ArchError("parameter vector for " + params.arch + " applied to " + arch_id(model));
    if (auto* fnn = std::get_if<FnnModel>(&model)) {
        if (params.values.size() != fnn_param_count(*fnn))
            throw ShapeError("parameter count mismatch for " + params.arch);
        std::size_t off = 0;
        visit_fnn_arrays(*fnn, [&](std::vector<double>& v) {
            std::copy_n(params.values.begin() + static_cast<std::ptrdiff_t>(off), v.size(),
                        v.begin());
            off += v.size();
        });
    } else {
        const std::size_t dim = input_dim(model);
        if (params.values.size() != dim + 1)
            throw ShapeError("parameter count mismatch for " + params.arch);
        auto assign = [&](std::vector<double>& w, double& b) {
            w.assign(params.values.begin(), params.values.end() - 1);
            b = params.values.back();
        };
        if (auto* lr = std::get_if<LogRegModel>(&model))
            assign(lr->w, lr->b);
        else {
            auto& svm = std::get<LinearSvmModel>(model);
            assign(svm.w, svm.b);
        }
    }
}

namespace {

// Scratch state of one FNN forward pass over a batch.
struct FnnPass {
    std::size_t batch = 0;
    std::vector<std::vector<double>> act;   // act[0] is the transformed input
    std::vector<std::vector<double>> xhat;  // per block, batch * out
    std::vector<std::vector<double>> mean;  // per block (training mode)
    std::vector<std::vector<double>> var;
    std::vector<double> logits;  // batch * 2
    std::vector<double> probs;   // batch * 2
};

void fnn_forward(const FnnModel& m, const double* X, std::size_t B, bool training, FnnPass& pass) {
    pass.batch = B;
    pass.act.assign(m.blocks.size() + 1, {});
    pass.xhat.assign(m.blocks.size(), {});
    pass.mean.assign(m.blocks.size(), {});
    pass.var.assign(m.blocks.size(), {});
    pass.act[0].assign(X, X + B * m.layer_sizes.front());

    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        const FnnBlock& blk = m.blocks[l];
        const std::size_t I = blk.in, O = blk.out;
        const double* in = pass.act[l].data();
        std::vector<double> z(B * O);
        for (std::size_t o = 0; o < O; ++o) {
            const double* w = blk.weight.data() + o * I;
            for (std::size_t b = 0; b < B; ++b)
                z[b * O + o] = dot(in + b * I, w, I) + blk.bias[o];
        }

        auto& xhat = pass.xhat[l];
        auto& act = pass.act[l + 1];
        xhat.resize(B * O);
        act.resize(B * O);
        auto& mean = pass.mean[l];
        auto& var = pass.var[l];
        mean.assign(O, 0.0);
        var.assign(O, 0.0);
        const double invB = 1.0 / static_cast<double>(B);
        for (std::size_t o = 0; o < O; ++o) {
            double mu, v;
            if (training) {
                double s = 0.0;
                for (std::size_t b = 0; b < B; ++b) s += z[b * O + o];
                mu = s * invB;
                double sq = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    const double d = z[b * O + o] - mu;
                    sq += d * d;
                }
                v = sq * invB;
            } else {
                mu = blk.running_mean[o];
                v = blk.running_var[o];
            }
            mean[o] = mu;
            var[o] = v;
            const double inv_std = 1.0 / std::sqrt(v + kBnEpsilon);
            for (std::size_t b = 0; b < B; ++b) {
                const double xh = (z[b * O + o] - mu) * inv_std;
                xhat[b * O + o] = xh;
                act[b * O + o] = std::max(blk.gamma[o] * xh + blk.beta[o], 0.0);
            }
        }
    }

    const std::size_t H = m.layer_sizes[m.layer_sizes.size() - 2];
    const double* in = pass.act.back().data();
    pass.logits.resize(B * 2);
    pass.probs.resize(B * 2);
    for (std::size_t c = 0; c < 2; ++c) {
        const double* w = m.out_weight.data() + c * H;
        for (std::size_t b = 0; b < B; ++b)
            pass.logits[b * 2 + c] = dot(in + b * H, w, H) + m.out_bias[c];
    }
    for (std::size_t b = 0; b < B; ++b) {
        const double z0 = pass.logits[b * 2], z1 = pass.logits[b * 2 + 1];
        const double zmax = std::max(z0, z1);
        const double e0 = std::exp(z0 - zmax), e1 = std::exp(z1 - zmax);
        const double sum = e0 + e1;
        pass.probs[b * 2] = e0 / sum;
        pass.probs[b * 2 + 1] = e1 / sum;
    }
}

void fnn_update_running(FnnModel& m, const FnnPass& pass) {
    const double B = static_cast<double>(pass.batch);
    const double unbias = pass.batch > 1 ? B / (B - 1.0) : 1.0;
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        FnnBlock& blk = m.blocks[l];
        for (std::size_t o = 0; o < blk.out; ++o) {
            blk.running_mean[o] = (1.0 - kBnMomentum) * blk.running_mean[o] +
                                  kBnMomentum * pass.mean[l][o];
            blk.running_var[o] = (1.0 - kBnMomentum) * blk.running_var[o] +
                                 kBnMomentum * pass.var[l][o] * unbias;
        }
    }
}

struct FnnLayout {
    struct BlockOffsets {
        std::size_t w, b, gamma, beta;
    };
    std::vector<BlockOffsets> blocks;
    std::size_t out_w = 0, out_b = 0, total = 0;
};

FnnLayout fnn_layout(const FnnModel& m) {
    FnnLayout L;
    std::size_t off = 0;
    for (const auto& blk : m.blocks) {
        FnnLayout::BlockOffsets bo;
        bo.w = off;
        off += blk.weight.size();
        bo.b = off;
        off += blk.bias.size();
        bo.gamma = off;
        off += blk.gamma.size();
        bo.beta = off;
        off += blk.beta.size();
        off += 2 * blk.out;  // running stats carry zero gradient
        L.blocks.push_back(bo);
    }
    L.out_w = off;
    off += m.out_weight.size();
    L.out_b = off;
    off += m.out_bias.size();
    L.total = off;
    return L;
}

// Cross-entropy loss and full backward pass; grad must be layout-sized and
// zeroed. Returns mean loss over the batch.
double fnn_backward(const FnnModel& m, const FnnPass& pass, const Label* y,
                    const FnnLayout& L, double* grad) {
    const std::size_t B = pass.batch;
    const double invB = 1.0 / static_cast<double>(B);

    double loss = 0.0;
    std::vector<double> dlogits(B * 2);
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t cls = static_cast<std::size_t>(y[b]);
        loss -= std::log(std::max(pass.probs[b * 2 + cls], 1e-300));
        dlogits[b * 2] = (pass.probs[b * 2] - (cls == 0 ? 1.0 : 0.0)) * invB;
        dlogits[b * 2 + 1] = (pass.probs[b * 2 + 1] - (cls == 1 ? 1.0 : 0.0)) * invB;
    }
    loss *= invB;

    const std::size_t H = m.layer_sizes[m.layer_sizes.size() - 2];
    std::vector<double> dact(B * H, 0.0);
    {
        const double* in = pass.act.back().data();
        double* gw = grad + L.out_w;
        double* gb = grad + L.out_b;
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < 2; ++c) {
                const double g = dlogits[b * 2 + c];
                gb[c] += g;
                if (g != 0.0) {
                    axpy(g, m.out_weight.data() + c * H, dact.data() + b * H, H);
                    axpy(g, in + b * H, gw + c * H, H);
                }
            }
        }
    }

    for (std::size_t l = m.blocks.size(); l-- > 0;) {
        const FnnBlock& blk = m.blocks[l];
        const std::size_t I = blk.in, O = blk.out;
        const auto& xhat = pass.xhat[l];
        const auto& act = pass.act[l + 1];
        const auto& bo = L.blocks[l];

        // ReLU mask, then batch norm backward in the compact form
        //   dz = inv_std/B * (B*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat)).
        std::vector<double> dz(B * O);
        for (std::size_t o = 0; o < O; ++o) {
            const double inv_std = 1.0 / std::sqrt(pass.var[l][o] + kBnEpsilon);
            double s1 = 0.0, s2 = 0.0, dgamma = 0.0, dbeta = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t i = b * O + o;
                const double dy = act[i] > 0.0 ? dact[i] : 0.0;
                dgamma += dy * xhat[i];
                dbeta += dy;
                const double dxh = dy * blk.gamma[o];
                dz[i] = dxh;  // stash; finalized below
                s1 += dxh;
                s2 += dxh * xhat[i];
            }
            grad[bo.gamma + o] += dgamma;
            grad[bo.beta + o] += dbeta;
            const double invB_o = 1.0 / static_cast<double>(B);
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t i = b * O + o;
                dz[i] = inv_std * (dz[i] - invB_o * s1 - invB_o * xhat[i] * s2);
            }
        }

        const double* in = pass.act[l].data();
        std::vector<double> din;
        if (l > 0) din.assign(B * I, 0.0);
        double* gw = grad + bo.w;
        double* gb = grad + bo.b;
        for (std::size_t b = 0; b < B; ++b) {
            const double* dzb = dz.data() + b * O;
            for (std::size_t o = 0; o < O; ++o) {
                const double g = dzb[o];
                gb[o] += g;
                if (g != 0.0) {
                    if (l > 0) axpy(g, blk.weight.data() + o * I, din.data() + b * I, I);
                    axpy(g, in + b * I, gw + o * I, I);
                }
            }
        }
        dact = std::move(din);
    }
    return loss;
}

void check_dim(const Model& model, std::size_t got) {
    const std::size_t want = input_dim(model);
    if (got != want)
        throw ShapeError("feature vector has " + std::to_string(got) + " values, model expects " +
                         std::to_string(want));
}

Transform transform_of(const Model& model) {
    return std::visit([](const auto& m) { return m.transform; }, model);
}

// Gathers transformed rows of the dataset into a contiguous batch matrix.
void gather_rows(const Dataset& data, std::span<const std::size_t> idx, Transform t,
                 std::size_t dim, std::vector<double>& X, std::vector<Label>& y) {
    X.resize(idx.size() * dim);
    y.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& s = data.samples[idx[r]];
        if (s.values.size() != dim)
            throw ShapeError("sample width " + std::to_string(s.values.size()) +
                             " does not match model input " + std::to_string(dim));
        transform_row(t, s.values, X.data() + r * dim);
        y[r] = s.label;
    }
}

double linear_decision(const std::vector<double>& w, double b, Transform t,
                       std::span<const double> x) {
    std::vector<double> tx(x.size());
    transform_row(t, x, tx.data());
    return dot(tx.data(), w.data(), w.size()) + b;
}

}  // namespace

double predict_proba(const Model& model, std::span<const double> x) {
    check_dim(model, x.size());
    if (const auto* lr = std::get_if<LogRegModel>(&model))
        return sigmoid(linear_decision(lr->w, lr->b, lr->transform, x));
    if (const auto* svm = std::get_if<LinearSvmModel>(&model))
        return sigmoid(linear_decision(svm->w, svm->b, svm->transform, x));
    const auto& fnn = std::get<FnnModel>(model);
    std::vector<double> tx(x.size());
    transform_row(fnn.transform, x, tx.data());
    FnnPass pass;
    fnn_forward(fnn, tx.data(), 1, false, pass);
    return pass.probs[1];
}

Label classify(const Model& model, std::span<const double> x) {
    return classify_proba(predict_proba(model, x));
}

std::vector<Label> predict_labels(const Model& model, const Dataset& data) {
    std::vector<Label> out;
    out.reserve(data.size());
    if (const auto* fnn = std::get_if<FnnModel>(&model)) {
        const std::size_t dim = fnn->layer_sizes.front();
        constexpr std::size_t kChunk = 256;
        std::vector<double> X;
        std::vector<Label> y;
        std::vector<std::size_t> idx;
        FnnPass pass;
        for (std::size_t base = 0; base < data.size(); base += kChunk) {
            const std::size_t n = std::min(kChunk, data.size() - base);
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), base);
            gather_rows(data, idx, fnn->transform, dim, X, y);
            fnn_forward(*fnn, X.data(), n, false, pass);
            for (std::size_t b = 0; b < n; ++b)
                out.push_back(classify_proba(pass.probs[b * 2 + 1]));
        }
        return out;
    }
    for (const auto& s : data.samples) out.push_back(classify(model, s.values));
    return out;
}

namespace {

double linear_batch_grad(const Model& model, const double* X, const Label* y, std::size_t B,
                         std::size_t dim, double* grad) {
    const double invB = 1.0 / static_cast<double>(B);
    double loss = 0.0;
    if (const auto* lr = std::get_if<LogRegModel>(&model)) {
        for (std::size_t b = 0; b < B; ++b) {
            const double* x = X + b * dim;
            const double z = dot(x, lr->w.data(), dim) + lr->b;
            const double target = y[b] == Label::kClean ? 1.0 : 0.0;
            loss += softplus(z) - target * z;
            const double dz = (sigmoid(z) - target) * invB;
            axpy(dz, x, grad, dim);
            grad[dim] += dz;
        }
        return loss * invB;
    }
    const auto& svm = std::get<LinearSvmModel>(model);
    for (std::size_t b = 0; b < B; ++b) {
        const double* x = X + b * dim;
        const double z = dot(x, svm.w.data(), dim) + svm.b;
        const double t = svm_target(y[b]);
        const double margin = t * z;
        if (margin < 1.0) {
            loss += 1.0 - margin;
            axpy(-t * invB, x, grad, dim);
            grad[dim] -= t * invB;
        }
    }
    loss *= invB;
    loss += 0.5 * svm.lambda * dot(svm.w.data(), svm.w.data(), dim);
    axpy(svm.lambda, svm.w.data(), grad, dim);
    return loss;
}

}  // namespace

std::pair<double, std::vector<double>> loss_and_grad(const Model& model,
                                                     std::span<const FeatureVector> batch) {
    if (batch.empty()) throw InsufficientDataError("loss_and_grad: empty batch");
    const std::size_t dim = input_dim(model);
    const Transform t = transform_of(model);

    std::vector<double> X(batch.size() * dim);
    std::vector<Label> y(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].values.size() != dim)
            throw ShapeError("sample width " + std::to_string(batch[b].values.size()) +
                             " does not match model input " + std::to_string(dim));
        transform_row(t, batch[b].values, X.data() + b * dim);
        y[b] = batch[b].label;
    }

    if (const auto* fnn = std::get_if<FnnModel>(&model)) {
        const FnnLayout L = fnn_layout(*fnn);
        std::vector<double> grad(L.total, 0.0);
        FnnPass pass;
        fnn_forward(*fnn, X.data(), batch.size(), true, pass);
        const double loss = fnn_backward(*fnn, pass, y.data(), L, grad.data());
        return {loss, std::move(grad)};
    }
    std::vector<double> grad(dim + 1, 0.0);
    const double loss = linear_batch_grad(model, X.data(), y.data(), batch.size(), dim,
                                          grad.data());
    return {loss, std::move(grad)};
}

std::vector<double> train(Model& model, const Dataset& data, const TrainConfig& config) {
    if (data.empty()) throw InsufficientDataError("train: dataset is empty");
    if (config.batch_size == 0) throw Error("train: batch_size must be positive");
    if (config.learning_rate <= 0) throw Error("train: learning_rate must be positive");

    const std::size_t dim = input_dim(model);
    const Transform t = transform_of(model);
    const std::size_t n = data.size();

    // Transform the whole set once; batches then just gather rows.
    std::vector<double> XT(n * dim);
    std::vector<Label> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (data.samples[i].values.size() != dim)
            throw ShapeError("sample width " + std::to_string(data.samples[i].values.size()) +
                             " does not match model input " + std::to_string(dim));
        transform_row(t, data.samples[i].values, XT.data() + i * dim);
        labels[i] = data.samples[i].label;
    }

    auto* fnn = std::get_if<FnnModel>(&model);
    const FnnLayout L = fnn ? fnn_layout(*fnn) : FnnLayout{};
    std::vector<double> grad(fnn ? L.total : dim + 1);
    std::vector<double> X(config.batch_size * dim);
    std::vector<Label> y(config.batch_size);
    std::vector<std::size_t> order(n);
    FnnPass pass;

    // Hinge subgradients keep a constant magnitude until the margin is met,
    // so a fixed step oscillates on features with large dynamic range. The
    // SVM therefore anneals with 1/sqrt(step). The step count continues
    // across rounds via first_epoch, which keeps a resumed schedule equal to
    // an uninterrupted one.
    const bool is_svm = std::holds_alternative<LinearSvmModel>(model);
    const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    std::size_t global_step = config.first_epoch * steps_per_epoch;

    std::vector<double> epoch_losses;
    for (std::size_t e = 0; e < config.epochs; ++e) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(Rng::mix(config.seed, 0xE70C0000u + config.first_epoch + e));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t base = 0; base < n; base += config.batch_size) {
            const std::size_t B = std::min(config.batch_size, n - base);
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t src = order[base + b];
                std::copy_n(XT.data() + src * dim, dim, X.data() + b * dim);
                y[b] = labels[src];
            }

            double loss;
            if (fnn) {
                std::fill(grad.begin(), grad.end(), 0.0);
                fnn_forward(*fnn, X.data(), B, true, pass);
                fnn_update_running(*fnn, pass);
                loss = fnn_backward(*fnn, pass, y.data(), L, grad.data());
                const double lr = config.learning_rate;
                for (std::size_t l = 0; l < fnn->blocks.size(); ++l) {
                    FnnBlock& blk = fnn->blocks[l];
                    const auto& bo = L.blocks[l];
                    axpy(-lr, grad.data() + bo.w, blk.weight.data(), blk.weight.size());
                    axpy(-lr, grad.data() + bo.b, blk.bias.data(), blk.bias.size());
                    axpy(-lr, grad.data() + bo.gamma, blk.gamma.data(), blk.gamma.size());
                    axpy(-lr, grad.data() + bo.beta, blk.beta.data(), blk.beta.size());
                }
                axpy(-lr, grad.data() + L.out_w, fnn->out_weight.data(), fnn->out_weight.size());
                axpy(-lr, grad.data() + L.out_b, fnn->out_bias.data(), fnn->out_bias.size());
            } else {
                std::fill(grad.begin(), grad.end(), 0.0);
                loss = linear_batch_grad(model, X.data(), y.data(), B, dim, grad.data());
                const double eta =
                    is_svm ? config.learning_rate / std::sqrt(1.0 + static_cast<double>(global_step))
                           : config.learning_rate;
                auto apply = [&](std::vector<double>& w, double& bias) {
                    axpy(-eta, grad.data(), w.data(), dim);
                    bias -= eta * grad[dim];
                };
                if (auto* lr_model = std::get_if<LogRegModel>(&model))
                    apply(lr_model->w, lr_model->b);
                else {
                    auto& svm = std::get<LinearSvmModel>(model);
                    apply(svm.w, svm.b);
                }
            }
            ++global_step;
            loss_sum += loss * static_cast<double>(B);
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(n));
    }
    return epoch_losses;
}

namespace {

constexpr char kCheckpointMagic[8] = {'F', 'D', 'C', 'K', 'P', 'T', '0', '1'};

Model model_from_arch(const std::string& arch) {
    std::vector<std::string> parts;
    std::stringstream ss(arch);
    std::string tok;
    while (std::getline(ss, tok, ':')) parts.push_back(tok);
    if (parts.size() != 3) throw ArchError("bad architecture id: " + arch);

    const auto kind = model_kind_from_string(parts[0]);
    const auto transform = transform_from_string(parts[2]);
    if (!kind || !transform) throw ArchError("bad architecture id: " + arch);

    if (*kind == ModelKind::kFnn) {
        std::vector<std::size_t> sizes;
        std::stringstream ds(parts[1]);
        while (std::getline(ds, tok, '-')) {
            std::size_t v = 0;
            try {
                v = std::stoul(tok);
            } catch (const std::exception&) {
                throw ArchError("bad architecture id: " + arch);
            }
            sizes.push_back(v);
        }
        return make_fnn(sizes, 0, *transform);
    }
    if (parts[1].size() < 2 || parts[1][0] != 'd') throw ArchError("bad architecture id: " + arch);
    std::size_t dim = 0;
    try {
        dim = std::stoul(parts[1].substr(1));
    } catch (const std::exception&) {
        throw ArchError("bad architecture id: " + arch);
    }
    if (dim == 0) throw ArchError("bad architecture id: " + arch);
    if (*kind == ModelKind::kLogReg)
        return LogRegModel{std::vector<double>(dim, 0.0), 0.0, *transform};
    return LinearSvmModel{std::vector<double>(dim, 0.0), 0.0, 1.0, *transform};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const ParamVector p = to_params(model);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t arch_len = p.arch.size();
    out.write(reinterpret_cast<const char*>(&arch_len), sizeof(arch_len));
    out.write(p.arch.data(), static_cast<std::streamsize>(arch_len));
    const std::uint64_t count = p.values.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(p.values.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw IoError("write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw SchemaError(path.string() + ": not a model checkpoint");
    std::uint64_t arch_len = 0;
    in.read(reinterpret_cast<char*>(&arch_len), sizeof(arch_len));
    if (!in || arch_len > 4096) throw SchemaError(path.string() + ": corrupt checkpoint header");
    std::string arch(arch_len, '\0');
    in.read(arch.data(), static_cast<std::streamsize>(arch_len));
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in) throw SchemaError(path.string() + ": corrupt checkpoint header");

    Model model = model_from_arch(arch);
    ParamVector p;
    p.arch = arch;
    p.values.resize(count);
    in.read(reinterpret_cast<char*>(p.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw SchemaError(path.string() + ": truncated checkpoint payload");
    from_params(model, p);
    return model;
}

}  // namespace feddice
