#include "imbk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "imbk/errors.hpp"
#include "imbk/rng.hpp"

namespace imbk {

namespace {

void validate(const SynthConfig& cfg) {
    if (cfg.num_leaf < 1) throw ConfigError("synth: num_leaf must be >= 1");
    if (cfg.num_parents < 0) throw ConfigError("synth: num_parents must be >= 0");
    if (cfg.num_leaf + cfg.num_parents > 500) throw ConfigError("synth: at most 500 classes");
    if (cfg.depth < 1 || cfg.depth > kMaxDepth) throw ConfigError("synth: depth must be in [1,5]");
    if (cfg.num_parents > 0 && cfg.depth < 2) {
        throw ConfigError("synth: parent classes need depth >= 2");
    }
    if (cfg.imbalance_magnitude < 1.0 || !std::isfinite(cfg.imbalance_magnitude)) {
        throw ConfigError("synth: imbalance_magnitude must be >= 1");
    }
    if (cfg.feature_dim < 1) throw ConfigError("synth: feature_dim must be >= 1");
    if (cfg.noise_sigma < 0.0) throw ConfigError("synth: noise_sigma must be >= 0");
    if (cfg.parent_only_prob < 0.0 || cfg.parent_only_prob > 1.0) {
        throw ConfigError("synth: parent_only_prob must be in [0,1]");
    }
    if (cfg.multi_leaf_prob < 0.0 || cfg.multi_leaf_prob > 1.0) {
        throw ConfigError("synth: multi_leaf_prob must be in [0,1]");
    }
    if (cfg.images < 1) throw ConfigError("synth: images must be >= 1");
    if (cfg.images < cfg.num_leaf) {
        throw ConfigError("synth: images must be >= num_leaf so every leaf appears");
    }

    std::set<std::pair<ClassId, ClassId>> seen;
    std::vector<double> src_total(static_cast<std::size_t>(cfg.num_leaf), 0.0);
    for (const ConfusionPair& p : cfg.confusion_pairs) {
        if (p.src < 0 || p.src >= cfg.num_leaf || p.dst < 0 || p.dst >= cfg.num_leaf) {
            throw ConfigError("synth: confusion pairs must reference leaf classes");
        }
        if (p.src == p.dst) throw ConfigError("synth: confusion pair cannot be self-directed");
        if (p.rate < 0.0 || p.rate > 1.0) throw ConfigError("synth: flip rate must be in [0,1]");
        if (!seen.insert({p.src, p.dst}).second) {
            throw ConfigError("synth: duplicate confusion pair");
        }
        src_total[static_cast<std::size_t>(p.src)] += p.rate;
        if (src_total[static_cast<std::size_t>(p.src)] > 1.0 + 1e-12) {
            throw ConfigError("synth: flip rates from one source class exceed 1");
        }
    }
}

Taxonomy build_taxonomy(const SynthConfig& cfg) {
    const int total = cfg.num_leaf + cfg.num_parents;
    std::vector<std::string> names(static_cast<std::size_t>(total));
    std::vector<ClassId> parents(static_cast<std::size_t>(total), kNoParent);
    char buf[32];
    for (int l = 0; l < cfg.num_leaf; ++l) {
        std::snprintf(buf, sizeof(buf), "leaf_%03d", l);
        names[static_cast<std::size_t>(l)] = buf;
    }
    for (int p = 0; p < cfg.num_parents; ++p) {
        std::snprintf(buf, sizeof(buf), "node_%03d", p);
        names[static_cast<std::size_t>(cfg.num_leaf + p)] = buf;
    }
    if (cfg.num_parents > 0) {
        // Parents form chains of at most depth-1 nodes; a leaf under a full
        // chain sits exactly at the configured depth.
        const int chain_len = cfg.depth - 1;
        const int num_chains = (cfg.num_parents + chain_len - 1) / chain_len;
        for (int p = 0; p < cfg.num_parents; ++p) {
            if (p % chain_len != 0) {
                parents[static_cast<std::size_t>(cfg.num_leaf + p)] =
                    static_cast<ClassId>(cfg.num_leaf + p - 1);
            }
        }
        // Bottom node of each chain; leaves attach round-robin across chains.
        std::vector<ClassId> bottoms;
        for (int c = 0; c < num_chains; ++c) {
            const int last = std::min((c + 1) * chain_len, cfg.num_parents) - 1;
            bottoms.push_back(static_cast<ClassId>(cfg.num_leaf + last));
        }
        for (int l = 0; l < cfg.num_leaf; ++l) {
            parents[static_cast<std::size_t>(l)] =
                bottoms[static_cast<std::size_t>(l % num_chains)];
        }
    }
    return Taxonomy(std::move(names), std::move(parents));
}

// Power-law leaf weights whose first/last ratio equals imbalance_magnitude.
std::vector<double> leaf_weights(const SynthConfig& cfg) {
    std::vector<double> w(static_cast<std::size_t>(cfg.num_leaf), 1.0);
    if (cfg.num_leaf > 1 && cfg.imbalance_magnitude > 1.0) {
        const double s = std::log(cfg.imbalance_magnitude) / std::log(double(cfg.num_leaf));
        for (int k = 0; k < cfg.num_leaf; ++k) {
            w[static_cast<std::size_t>(k)] = std::pow(double(k + 1), -s);
        }
    }
    return w;
}

// Largest-remainder apportionment of `images` across the weights, with every
// class kept at >= 1 so the configured ratio is realized in actual counts.
std::vector<std::int64_t> leaf_quotas(const SynthConfig& cfg, const std::vector<double>& w) {
    const double total_w = std::accumulate(w.begin(), w.end(), 0.0);
    const std::size_t C = w.size();
    std::vector<std::int64_t> n(C, 0);
    std::vector<std::pair<double, std::size_t>> remainders(C);
    std::int64_t assigned = 0;
    for (std::size_t k = 0; k < C; ++k) {
        const double ideal = static_cast<double>(cfg.images) * w[k] / total_w;
        n[k] = static_cast<std::int64_t>(ideal);
        assigned += n[k];
        remainders[k] = {ideal - static_cast<double>(n[k]), k};
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::int64_t left = cfg.images - assigned; left > 0; --left) {
        ++n[remainders[static_cast<std::size_t>(left - 1) % C].second];
    }
    for (std::size_t k = 0; k < C; ++k) {
        while (n[k] == 0) {
            auto it = std::max_element(n.begin(), n.end());
            if (*it <= 1) throw DataError("synth: cannot give every leaf an image");
            --*it;
            ++n[k];
        }
    }
    return n;
}

std::vector<ClassId> closure(const Taxonomy& t, const std::set<ClassId>& leaves) {
    std::set<ClassId> all(leaves.begin(), leaves.end());
    for (ClassId c : leaves) {
        for (ClassId a : ancestors(t, c)) all.insert(a);
    }
    return {all.begin(), all.end()};
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
    validate(cfg);

    SynthDataset ds;
    ds.taxonomy = build_taxonomy(cfg);
    ds.configured_pairs = cfg.confusion_pairs;
    const int C = ds.taxonomy.num_classes();

    ds.true_rates = RateMatrix(C);
    for (const ConfusionPair& p : cfg.confusion_pairs) {
        ds.true_rates.set(p.src, p.dst, p.rate);
    }

    const std::vector<double> weights = leaf_weights(cfg);
    const std::vector<std::int64_t> quotas = leaf_quotas(cfg, weights);

    // Fixed per-image leaf assignment realizing the quotas, order shuffled so
    // sequential training epochs see the classes interleaved.
    std::vector<ClassId> assignment;
    assignment.reserve(static_cast<std::size_t>(cfg.images));
    for (int k = 0; k < cfg.num_leaf; ++k) {
        assignment.insert(assignment.end(), static_cast<std::size_t>(quotas[static_cast<std::size_t>(k)]),
                          static_cast<ClassId>(k));
    }
    Rng order_rng(Rng::derive_seed(cfg.seed, 0));
    order_rng.shuffle(assignment);

    // Unit-sphere prototypes, leaves only; parent labels are a labeling
    // phenomenon, not an appearance one.
    Rng proto_rng(Rng::derive_seed(cfg.seed, 1));
    std::vector<std::vector<double>> protos(static_cast<std::size_t>(cfg.num_leaf));
    for (auto& proto : protos) {
        proto.resize(static_cast<std::size_t>(cfg.feature_dim));
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (double& v : proto) {
                v = proto_rng.normal();
                norm2 += v * v;
            }
        } while (norm2 == 0.0);
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& v : proto) v *= inv;
    }

    // Flip CDF per source leaf, walked with a single uniform draw so each
    // pair's marginal frequency is exactly its configured rate.
    std::vector<std::vector<ConfusionPair>> flips(static_cast<std::size_t>(cfg.num_leaf));
    for (const ConfusionPair& p : cfg.confusion_pairs) {
        flips[static_cast<std::size_t>(p.src)].push_back(p);
    }

    const double total_w = std::accumulate(weights.begin(), weights.end(), 0.0);

    ds.features.rows = cfg.images;
    ds.features.dim = cfg.feature_dim;
    ds.features.data.resize(static_cast<std::size_t>(cfg.images) *
                            static_cast<std::size_t>(cfg.feature_dim));
    ds.truth.num_classes = C;
    ds.observed.num_classes = C;
    ds.truth.instances.reserve(static_cast<std::size_t>(cfg.images));
    ds.observed.instances.reserve(static_cast<std::size_t>(cfg.images));

    Rng rng(Rng::derive_seed(cfg.seed, 2));
    char idbuf[32];
    for (std::int64_t i = 0; i < cfg.images; ++i) {
        const ClassId leaf = assignment[static_cast<std::size_t>(i)];
        std::snprintf(idbuf, sizeof(idbuf), "img%08lld", static_cast<long long>(i));

        float* row = ds.features.data.data() +
                     static_cast<std::size_t>(i) * static_cast<std::size_t>(cfg.feature_dim);
        const std::vector<double>& proto = protos[static_cast<std::size_t>(leaf)];
        for (int d = 0; d < cfg.feature_dim; ++d) {
            row[d] = static_cast<float>(proto[static_cast<std::size_t>(d)] +
                                        cfg.noise_sigma * rng.normal());
        }

        std::set<ClassId> true_leaves = {leaf};
        const double u_multi = rng.uniform01();
        if (u_multi < cfg.multi_leaf_prob && cfg.num_leaf > 1) {
            // Second co-labeled leaf, frequency-weighted among the others.
            const double mass =
                total_w - weights[static_cast<std::size_t>(leaf)];
            double pick = rng.uniform01() * mass;
            ClassId second = leaf == 0 ? 1 : 0;
            for (int k = 0; k < cfg.num_leaf; ++k) {
                if (k == leaf) continue;
                second = static_cast<ClassId>(k);
                pick -= weights[static_cast<std::size_t>(k)];
                if (pick < 0.0) break;
            }
            true_leaves.insert(second);
        }

        std::set<ClassId> obs_leaves = true_leaves;
        ClassId primary_obs = leaf;
        const double u_flip = rng.uniform01();
        double acc = 0.0;
        for (const ConfusionPair& p : flips[static_cast<std::size_t>(leaf)]) {
            acc += p.rate;
            if (u_flip < acc) {
                if (!cfg.colabel_flips) {
                    obs_leaves.erase(leaf);
                    primary_obs = p.dst;
                }
                obs_leaves.insert(p.dst);
                break;
            }
        }

        std::vector<ClassId> obs_labels = closure(ds.taxonomy, obs_leaves);
        const double u_drop = rng.uniform01();
        if (u_drop < cfg.parent_only_prob) {
            std::vector<ClassId> kept;
            for (ClassId c : obs_labels) {
                if (c != primary_obs) kept.push_back(c);
            }
            if (!kept.empty()) obs_labels = std::move(kept);
        }

        Instance truth_inst;
        truth_inst.image_id = idbuf;
        truth_inst.labels = closure(ds.taxonomy, true_leaves);
        ds.truth.instances.push_back(std::move(truth_inst));

        Instance obs_inst;
        obs_inst.image_id = idbuf;
        obs_inst.labels = std::move(obs_labels);
        ds.observed.instances.push_back(std::move(obs_inst));
    }

    ds.truth.recount();
    ds.observed.recount();
    return ds;
}

AnnotationSet joined_annotations(const SynthDataset& ds) {
    AnnotationSet joined;
    joined.num_classes = ds.truth.num_classes;
    joined.instances.reserve(ds.truth.instances.size());
    for (std::size_t i = 0; i < ds.truth.instances.size(); ++i) {
        Instance inst;
        inst.image_id = ds.truth.instances[i].image_id;
        std::set<ClassId> all(ds.truth.instances[i].labels.begin(),
                              ds.truth.instances[i].labels.end());
        all.insert(ds.observed.instances[i].labels.begin(), ds.observed.instances[i].labels.end());
        inst.labels.assign(all.begin(), all.end());
        joined.instances.push_back(std::move(inst));
    }
    joined.recount();
    return joined;
}

double rate_recovery_check(const SynthDataset& ds) {
    if (ds.configured_pairs.empty()) return 0.0;
    const AnnotationSet joined = joined_annotations(ds);
    const RateMatrix est = estimate_rates(joined, ds.taxonomy, 0.0,
                                          HierarchyMode::RemoveSuppression,
                                          RateEstimator::InstanceCoLabel);
    double worst = 0.0;
    for (const ConfusionPair& p : ds.configured_pairs) {
        worst = std::max(worst, std::abs(est(p.src, p.dst) - p.rate));
    }
    return worst;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_features(const FeatureMatrix& f, const std::string& path) {
    if (f.rows < 0 || f.rows > 0xffffffffLL || f.dim < 0) {
        throw DataError("save_features: dimensions out of range");
    }
    if (f.data.size() != static_cast<std::size_t>(f.rows) * static_cast<std::size_t>(f.dim)) {
        throw DataError("save_features: data size does not match rows*dim");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_features: cannot open " + path);
    out.write("IMBK", 4);
    put_u32(out, static_cast<std::uint32_t>(f.rows));
    put_u32(out, static_cast<std::uint32_t>(f.dim));
    put_u32(out, 0);
    for (float v : f.data) {
        std::uint32_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
    }
    if (!out) throw DataError("save_features: write failed for " + path);
}

void save_dataset(const SynthDataset& ds, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("save_dataset: cannot create directory " + dir);
    save_taxonomy(ds.taxonomy, dir + "/classes.tsv");
    save_annotations(ds.observed, dir + "/annotations.jsonl");
    save_annotations(ds.truth, dir + "/annotations.truth.jsonl");
    save_features(ds.features, dir + "/features.bin");
    save_rates(ds.true_rates, dir + "/rates.true.tsv");
}

SynthDataset load_dataset(const std::string& dir) {
    SynthDataset ds;
    ds.taxonomy = load_taxonomy(dir + "/classes.tsv");
    const int C = ds.taxonomy.num_classes();
    ds.observed = load_annotations(dir + "/annotations.jsonl", C);
    ds.truth = load_annotations(dir + "/annotations.truth.jsonl", C);
    ds.features = load_features(dir + "/features.bin");
    if (std::ifstream(dir + "/rates.true.tsv").good()) {
        ds.true_rates = load_rates(dir + "/rates.true.tsv", C);
    } else {
        ds.true_rates = RateMatrix(C);
    }
    if (ds.truth.instances.size() != ds.observed.instances.size() ||
        ds.features.rows != static_cast<std::int64_t>(ds.observed.instances.size())) {
        throw DataError("load_dataset: misaligned files in " + dir);
    }
    for (std::size_t i = 0; i < ds.truth.instances.size(); ++i) {
        if (ds.truth.instances[i].image_id != ds.observed.instances[i].image_id) {
            throw DataError("load_dataset: truth/observed image ids diverge in " + dir);
        }
    }
    return ds;
}

FeatureMatrix load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_features: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "IMBK") {
        throw DataError("load_features: bad magic in " + path);
    }
    FeatureMatrix f;
    f.rows = get_u32(in);
    f.dim = static_cast<int>(get_u32(in));
    const std::uint32_t reserved = get_u32(in);
    if (!in || reserved != 0) throw DataError("load_features: corrupt header in " + path);
    f.data.resize(static_cast<std::size_t>(f.rows) * static_cast<std::size_t>(f.dim));
    for (float& v : f.data) {
        const std::uint32_t bits = get_u32(in);
        std::memcpy(&v, &bits, 4);
    }
    if (!in) throw DataError("load_features: truncated file " + path);
    in.peek();
    if (!in.eof()) throw DataError("load_features: trailing bytes in " + path);
    return f;
}

}  // namespace imbk
