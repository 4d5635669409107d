#include "imbk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>

#include "imbk/errors.hpp"
#include "imbk/eval.hpp"
#include "imbk/rng.hpp"
#include "imbk/sampling.hpp"

namespace imbk {

Model init_model(int num_classes, int feature_dim, int hidden_dim, std::uint64_t seed,
                 bool has_background) {
    if (num_classes < 1 || feature_dim < 1 || hidden_dim < 0) {
        throw ConfigError("init_model: bad dimensions");
    }
    Model m;
    m.num_classes = num_classes;
    m.feature_dim = feature_dim;
    m.hidden_dim = hidden_dim;
    m.has_background = has_background;
    Rng rng(seed);
    const int outputs = m.num_outputs();
    const int fan2 = hidden_dim > 0 ? hidden_dim : feature_dim;
    if (hidden_dim > 0) {
        const double scale1 = std::sqrt(2.0 / feature_dim);
        m.w1.resize(static_cast<std::size_t>(hidden_dim) * feature_dim);
        for (double& v : m.w1) v = scale1 * rng.normal();
        m.b1.assign(static_cast<std::size_t>(hidden_dim), 0.0);
    }
    // The output layer starts at zero so every class begins with identical
    // logits. Rare classes then rank by whatever their few updates taught
    // them instead of by frozen random noise.
    m.w2.assign(static_cast<std::size_t>(outputs) * fan2, 0.0);
    m.b2.assign(static_cast<std::size_t>(outputs), 0.0);
    return m;
}

std::vector<double> forward(const Model& m, const float* x) {
    const int outputs = m.num_outputs();
    const int fan2 = m.hidden_dim > 0 ? m.hidden_dim : m.feature_dim;
    std::vector<double> input;
    if (m.hidden_dim > 0) {
        input.resize(static_cast<std::size_t>(m.hidden_dim));
        for (int k = 0; k < m.hidden_dim; ++k) {
            double a = m.b1[static_cast<std::size_t>(k)];
            const double* wrow = m.w1.data() + static_cast<std::size_t>(k) * m.feature_dim;
            for (int d = 0; d < m.feature_dim; ++d) a += wrow[d] * x[d];
            input[static_cast<std::size_t>(k)] = a > 0.0 ? a : 0.0;
        }
    } else {
        input.assign(x, x + m.feature_dim);
    }
    std::vector<double> z(static_cast<std::size_t>(outputs));
    for (int c = 0; c < outputs; ++c) {
        double a = m.b2[static_cast<std::size_t>(c)];
        const double* wrow = m.w2.data() + static_cast<std::size_t>(c) * fan2;
        for (int d = 0; d < fan2; ++d) a += wrow[d] * input[static_cast<std::size_t>(d)];
        z[static_cast<std::size_t>(c)] = a;
    }
    return z;
}

namespace {

struct ParamGrads {
    std::vector<double> w1, b1, w2, b2;

    explicit ParamGrads(const Model& m)
        : w1(m.w1.size(), 0.0), b1(m.b1.size(), 0.0), w2(m.w2.size(), 0.0), b2(m.b2.size(), 0.0) {}

    void reset() {
        std::fill(w1.begin(), w1.end(), 0.0);
        std::fill(b1.begin(), b1.end(), 0.0);
        std::fill(w2.begin(), w2.end(), 0.0);
        std::fill(b2.begin(), b2.end(), 0.0);
    }
};

// Accumulates dL/dparams for one instance given dL/dz.
void backward(const Model& m, const float* x, const std::vector<double>& dz, ParamGrads& g) {
    const int outputs = m.num_outputs();
    if (m.hidden_dim > 0) {
        // Recompute the hidden activations; cheaper than caching for these sizes.
        std::vector<double> pre(static_cast<std::size_t>(m.hidden_dim));
        std::vector<double> act(static_cast<std::size_t>(m.hidden_dim));
        for (int k = 0; k < m.hidden_dim; ++k) {
            double a = m.b1[static_cast<std::size_t>(k)];
            const double* wrow = m.w1.data() + static_cast<std::size_t>(k) * m.feature_dim;
            for (int d = 0; d < m.feature_dim; ++d) a += wrow[d] * x[d];
            pre[static_cast<std::size_t>(k)] = a;
            act[static_cast<std::size_t>(k)] = a > 0.0 ? a : 0.0;
        }
        std::vector<double> dh(static_cast<std::size_t>(m.hidden_dim), 0.0);
        for (int c = 0; c < outputs; ++c) {
            const double dzc = dz[static_cast<std::size_t>(c)];
            double* grow = g.w2.data() + static_cast<std::size_t>(c) * m.hidden_dim;
            const double* wrow = m.w2.data() + static_cast<std::size_t>(c) * m.hidden_dim;
            for (int k = 0; k < m.hidden_dim; ++k) {
                grow[k] += dzc * act[static_cast<std::size_t>(k)];
                dh[static_cast<std::size_t>(k)] += dzc * wrow[k];
            }
            g.b2[static_cast<std::size_t>(c)] += dzc;
        }
        for (int k = 0; k < m.hidden_dim; ++k) {
            if (pre[static_cast<std::size_t>(k)] <= 0.0) continue;
            const double dak = dh[static_cast<std::size_t>(k)];
            double* grow = g.w1.data() + static_cast<std::size_t>(k) * m.feature_dim;
            for (int d = 0; d < m.feature_dim; ++d) grow[d] += dak * x[d];
            g.b1[static_cast<std::size_t>(k)] += dak;
        }
    } else {
        for (int c = 0; c < outputs; ++c) {
            const double dzc = dz[static_cast<std::size_t>(c)];
            double* grow = g.w2.data() + static_cast<std::size_t>(c) * m.feature_dim;
            for (int d = 0; d < m.feature_dim; ++d) grow[d] += dzc * x[d];
            g.b2[static_cast<std::size_t>(c)] += dzc;
        }
    }
}

void sgd_step(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& v,
              double count, double lr, double momentum, double weight_decay) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double grad = g[i] / count + weight_decay * p[i];
        v[i] = momentum * v[i] + grad;
        p[i] -= lr * v[i];
    }
}

LossResult instance_loss(const LossSpec& spec, const std::vector<double>& z,
                         const LabelVector& y, const RateMatrix& rates,
                         const std::vector<double>& class_weights) {
    switch (spec.kind) {
        case LossKind::Softmax:
            return softmax_ce(z, y);
        case LossKind::Concurrent:
            return concurrent_softmax_ce(z, y, rates, spec.grad_mode);
        case LossKind::Bce:
            return bce_loss(z, y);
        case LossKind::Focal:
            return focal_loss(z, y, spec.focal_gamma, spec.focal_alpha);
        case LossKind::WeightedSoftmax:
            return weighted_softmax_ce(z, y, class_weights);
    }
    throw ConfigError("instance_loss: unknown loss kind");
}

RateMatrix pad_rates(const RateMatrix& rates, int outputs) {
    if (rates.size() == outputs) return rates;
    RateMatrix padded(outputs);
    for (ClassId i = 0; i < rates.size(); ++i) {
        for (ClassId j = 0; j < rates.size(); ++j) {
            if (rates(i, j) != 0.0) padded.set(i, j, rates(i, j));
        }
    }
    return padded;
}

}  // namespace

TrainResult train(const SynthDataset& ds, const TrainPlan& plan, const LossSpec& loss,
                  const RateMatrix& rates, std::uint64_t seed, const TrainOptions& opts) {
    const std::size_t N = ds.observed.instances.size();
    if (N == 0) throw DataError("train: empty dataset");
    if (ds.features.rows != static_cast<std::int64_t>(N)) {
        throw DataError("train: feature/annotation row mismatch");
    }
    if (opts.val_fraction < 0.0 || opts.val_fraction >= 1.0) {
        throw ConfigError("train: val_fraction must be in [0,1)");
    }
    if (plan.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    const int C = ds.observed.num_classes;
    if (rates.size() != 0 && rates.size() != C) {
        throw DataError("train: rate matrix size mismatch");
    }

    // Held-out split, seeded independently of everything else.
    std::vector<std::size_t> perm(N);
    for (std::size_t i = 0; i < N; ++i) perm[i] = i;
    Rng split_rng(Rng::derive_seed(seed, 1));
    split_rng.shuffle(perm);
    const std::size_t val_count = static_cast<std::size_t>(opts.val_fraction * N);
    std::vector<std::size_t> train_idx(perm.begin(), perm.end() - val_count);
    std::vector<std::size_t> val_idx(perm.end() - val_count, perm.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    TrainResult result;
    result.val_indices = val_idx;
    result.model =
        init_model(C, ds.features.dim, opts.hidden_dim, Rng::derive_seed(seed, 2),
                   opts.add_background_class);
    Model& model = result.model;
    const int outputs = model.num_outputs();

    const RateMatrix padded_rates =
        pad_rates(rates.size() == 0 ? RateMatrix(C) : rates, outputs);

    // Per-class weights for the effective-number loss, from the training
    // split's observed image counts.
    const AnnotationSet train_set = subset(ds.observed, train_idx);
    std::vector<double> class_weights;
    if (loss.kind == LossKind::WeightedSoftmax) {
        std::vector<std::int64_t> counts = train_set.image_counts;
        counts.resize(static_cast<std::size_t>(outputs), 0);
        class_weights = effective_number_weights(counts, loss.effective_beta);
    }

    // Image id -> instance indices within the training split, for balanced
    // phases that sample images.
    std::unordered_map<std::string, std::vector<std::size_t>> by_image;
    for (std::size_t idx : train_idx) {
        by_image[ds.observed.instances[idx].image_id].push_back(idx);
    }

    // Pre-built label vectors (padded with the background slot when enabled).
    std::vector<LabelVector> labels(N);
    for (std::size_t i = 0; i < N; ++i) {
        labels[i] = LabelVector::from_classes(outputs, ds.observed.instances[i].labels);
    }

    // Validation fixtures.
    FeatureMatrix val_features;
    AnnotationSet val_truth;
    if (!val_idx.empty()) {
        val_features.rows = static_cast<std::int64_t>(val_idx.size());
        val_features.dim = ds.features.dim;
        val_features.data.reserve(val_idx.size() * static_cast<std::size_t>(ds.features.dim));
        for (std::size_t idx : val_idx) {
            const float* row = ds.features.row(static_cast<std::int64_t>(idx));
            val_features.data.insert(val_features.data.end(), row, row + ds.features.dim);
        }
        val_truth = subset(ds.truth, val_idx);
    }

    ParamGrads grads(model);
    ParamGrads velocity(model);  // same shapes; reused as momentum buffers

    std::unordered_map<int, SamplingPlan> balance_plans;  // keyed by phase index

    const std::size_t n_train = train_idx.size();
    if (n_train == 0) throw DataError("train: empty training split");
    const std::size_t batches_per_epoch =
        (n_train + static_cast<std::size_t>(plan.batch_size) - 1) /
        static_cast<std::size_t>(plan.batch_size);

    auto run_batch = [&](const std::vector<std::size_t>& batch, double lr, int epoch,
                         std::size_t batch_no) -> double {
        grads.reset();
        double loss_sum = 0.0;
        for (std::size_t idx : batch) {
            const float* x = ds.features.row(static_cast<std::int64_t>(idx));
            const std::vector<double> z = forward(model, x);
            for (double v : z) {
                if (!std::isfinite(v)) {
                    throw NumericalError("train: model diverged (non-finite logit) at epoch " +
                                         std::to_string(epoch) + " batch " +
                                         std::to_string(batch_no));
                }
            }
            const LossResult r = instance_loss(loss, z, labels[idx], padded_rates, class_weights);
            if (!std::isfinite(r.value)) {
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                     " batch " + std::to_string(batch_no));
            }
            loss_sum += r.value;
            backward(model, x, r.gradient, grads);
        }
        const double count = static_cast<double>(batch.size());
        sgd_step(model.w1, grads.w1, velocity.w1, count, lr, plan.momentum, plan.weight_decay);
        sgd_step(model.b1, grads.b1, velocity.b1, count, lr, plan.momentum, plan.weight_decay);
        sgd_step(model.w2, grads.w2, velocity.w2, count, lr, plan.momentum, plan.weight_decay);
        sgd_step(model.b2, grads.b2, velocity.b2, count, lr, plan.momentum, plan.weight_decay);
        return loss_sum;
    };

    const int total_epochs = plan.total_epochs();
    for (int epoch = 0; epoch < total_epochs; ++epoch) {
        const EpochInfo info = next_epoch(plan, epoch);
        double epoch_loss_sum = 0.0;
        std::size_t epoch_instances = 0;

        if (info.kind == PhaseKind::Sequential) {
            const std::vector<std::size_t> order = sequential_order(
                n_train, Rng::derive_seed(seed, 100 + static_cast<std::uint64_t>(epoch)));
            std::vector<std::size_t> batch;
            for (std::size_t pos = 0; pos < order.size();) {
                batch.clear();
                for (int b = 0; b < plan.batch_size && pos < order.size(); ++b, ++pos) {
                    batch.push_back(train_idx[order[pos]]);
                }
                epoch_loss_sum += run_batch(batch, info.lr, epoch, pos / plan.batch_size);
                epoch_instances += batch.size();
            }
        } else {
            auto found = balance_plans.find(info.phase_index);
            if (found == balance_plans.end()) {
                found = balance_plans
                            .emplace(info.phase_index, build_plan(train_set, *info.lambda))
                            .first;
            }
            const SamplingPlan& sampling = found->second;
            std::vector<std::size_t> batch;
            for (std::size_t b = 0; b < batches_per_epoch; ++b) {
                const std::vector<std::string> ids = sample_batch(
                    sampling, plan.batch_size,
                    Rng::derive_seed(seed, 1000000 + static_cast<std::uint64_t>(epoch) * 65536 +
                                               static_cast<std::uint64_t>(b)));
                batch.clear();
                for (const std::string& id : ids) {
                    const auto& indices = by_image.at(id);
                    batch.insert(batch.end(), indices.begin(), indices.end());
                }
                epoch_loss_sum += run_batch(batch, info.lr, epoch, b);
                epoch_instances += batch.size();
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.kind = info.kind;
        em.lr = info.lr;
        em.train_loss = epoch_loss_sum / static_cast<double>(epoch_instances);
        if (!val_idx.empty()) {
            const auto scores = predict(model, val_features, nullptr);
            em.val_map = evaluate(scores, val_truth).map;
        }
        result.metrics.push_back(em);
    }
    return result;
}

std::vector<std::vector<double>> predict(const Model& m, const FeatureMatrix& features,
                                         const RateMatrix* rates) {
    if (features.dim != m.feature_dim) throw DataError("predict: feature dimension mismatch");
    RateMatrix padded;
    if (rates != nullptr) {
        if (rates->size() != m.num_classes) {
            throw DataError("predict: rate matrix size mismatch");
        }
        padded = pad_rates(*rates, m.num_outputs());
    }
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(features.rows));
    for (std::int64_t r = 0; r < features.rows; ++r) {
        const std::vector<double> z = forward(m, features.row(r));
        std::vector<double> scores =
            rates != nullptr ? concurrent_softmax_infer(z, padded) : softmax_probs(z);
        scores.resize(static_cast<std::size_t>(m.num_classes));
        out.push_back(std::move(scores));
    }
    return out;
}

namespace {

void put_u32f(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32f(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_params(std::ofstream& out, const std::vector<double>& p) {
    for (double v : p) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32f(out, bits);
    }
}

void read_params(std::ifstream& in, std::vector<double>& p, std::size_t count) {
    p.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32f(in);
        float f;
        std::memcpy(&f, &bits, 4);
        p[i] = f;
    }
}

}  // namespace

void save_model(const Model& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_model: cannot open " + path);
    out.write("IMDL", 4);
    put_u32f(out, static_cast<std::uint32_t>(m.num_classes));
    put_u32f(out, static_cast<std::uint32_t>(m.feature_dim));
    put_u32f(out, static_cast<std::uint32_t>(m.hidden_dim));
    put_u32f(out, m.has_background ? 1 : 0);
    write_params(out, m.w1);
    write_params(out, m.b1);
    write_params(out, m.w2);
    write_params(out, m.b2);
    if (!out) throw DataError("save_model: write failed for " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_model: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "IMDL") throw DataError("load_model: bad magic in " + path);
    Model m;
    m.num_classes = static_cast<int>(get_u32f(in));
    m.feature_dim = static_cast<int>(get_u32f(in));
    m.hidden_dim = static_cast<int>(get_u32f(in));
    m.has_background = get_u32f(in) != 0;
    if (!in || m.num_classes < 1 || m.feature_dim < 1 || m.hidden_dim < 0) {
        throw DataError("load_model: corrupt header in " + path);
    }
    const std::size_t fan2 =
        static_cast<std::size_t>(m.hidden_dim > 0 ? m.hidden_dim : m.feature_dim);
    const std::size_t outputs = static_cast<std::size_t>(m.num_outputs());
    if (m.hidden_dim > 0) {
        read_params(in, m.w1, static_cast<std::size_t>(m.hidden_dim) * m.feature_dim);
        read_params(in, m.b1, static_cast<std::size_t>(m.hidden_dim));
    }
    read_params(in, m.w2, outputs * fan2);
    read_params(in, m.b2, outputs);
    if (!in) throw DataError("load_model: truncated file " + path);
    in.peek();
    if (!in.eof()) throw DataError("load_model: trailing bytes in " + path);
    return m;
}

void save_metrics(const std::vector<EpochMetrics>& metrics, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_metrics: cannot open " + path);
    out << "epoch\tphase\tlr\ttrain_loss\tval_mAP\n";
    char buf[128];
    for (const EpochMetrics& em : metrics) {
        std::snprintf(buf, sizeof(buf), "%d\t%s\t%.10g\t%.10g\t%.6f\n", em.epoch,
                      em.kind == PhaseKind::Sequential ? "sequential" : "balanced", em.lr,
                      em.train_loss, em.val_map);
        out << buf;
    }
    if (!out) throw DataError("save_metrics: write failed for " + path);
}

}  // namespace imbk
