#include "imbk/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "imbk/errors.hpp"

namespace imbk {

SamplingPlan build_plan(const AnnotationSet& a, double lambda) {
    if (lambda < 0.0 || !std::isfinite(lambda)) {
        throw ConfigError("build_plan: lambda must be a finite value >= 0");
    }
    if (a.num_classes <= 0) throw DataError("build_plan: annotation set has no classes");

    SamplingPlan plan;
    plan.lambda = lambda;
    plan.counts.assign(static_cast<std::size_t>(a.num_classes), 0);
    plan.class_images.resize(static_cast<std::size_t>(a.num_classes));

    // Distinct images per class, in a fixed (sorted) order so uniform draws
    // are reproducible across identical annotation sets.
    std::vector<std::set<std::string>> images(static_cast<std::size_t>(a.num_classes));
    for (const Instance& inst : a.instances) {
        for (ClassId c : inst.labels) {
            images[static_cast<std::size_t>(c)].insert(inst.image_id);
        }
    }
    for (std::size_t c = 0; c < images.size(); ++c) {
        plan.class_images[c].assign(images[c].begin(), images[c].end());
        plan.counts[c] = static_cast<std::int64_t>(plan.class_images[c].size());
        plan.total_count += plan.counts[c];
        if (plan.counts[c] > 0) ++plan.num_present;
    }
    if (plan.num_present == 0) throw DataError("build_plan: every class has zero images");

    const std::size_t C = static_cast<std::size_t>(a.num_classes);
    plan.p_n.assign(C, 0.0);
    plan.p_a.assign(C, 0.0);
    plan.p_s_norm.assign(C, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        if (plan.counts[c] == 0) continue;
        plan.p_n[c] = static_cast<double>(plan.counts[c]) / static_cast<double>(plan.total_count);
        plan.p_a[c] = 1.0 / plan.num_present;
        plan.p_s_norm[c] = std::pow(plan.p_a[c], lambda) * std::pow(plan.p_n[c], 1.0 - lambda);
        total += plan.p_s_norm[c];
    }
    for (double& v : plan.p_s_norm) v /= total;
    return plan;
}

ClassId draw_class(const SamplingPlan& plan, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    ClassId last = -1;
    for (std::size_t c = 0; c < plan.p_s_norm.size(); ++c) {
        if (plan.p_s_norm[c] <= 0.0) continue;
        last = static_cast<ClassId>(c);
        acc += plan.p_s_norm[c];
        if (u < acc) return last;
    }
    // Rounding can leave acc a hair under 1; fall back to the last live class.
    if (last < 0) throw DataError("draw_class: plan has no sampleable class");
    return last;
}

std::vector<std::string> sample_batch(const SamplingPlan& plan, int batch_size,
                                      std::uint64_t seed) {
    if (batch_size < 1) throw ConfigError("sample_batch: batch_size must be >= 1");
    Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (int s = 0; s < batch_size; ++s) {
        const ClassId c = draw_class(plan, rng);
        const auto& ids = plan.class_images[static_cast<std::size_t>(c)];
        out.push_back(ids[rng.uniform_index(ids.size())]);
    }
    return out;
}

ClassCursorSampler::ClassCursorSampler(const SamplingPlan& plan, std::uint64_t seed)
    : plan_(plan), rng_(seed) {
    order_.resize(plan.class_images.size());
    cursor_.assign(plan.class_images.size(), 0);
    for (std::size_t c = 0; c < plan.class_images.size(); ++c) {
        order_[c].resize(plan.class_images[c].size());
        for (std::size_t k = 0; k < order_[c].size(); ++k) order_[c][k] = k;
        rng_.shuffle(order_[c]);
    }
}

std::vector<std::string> ClassCursorSampler::next_batch(int batch_size) {
    if (batch_size < 1) throw ConfigError("next_batch: batch_size must be >= 1");
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (int s = 0; s < batch_size; ++s) {
        const std::size_t c = static_cast<std::size_t>(draw_class(plan_, rng_));
        if (cursor_[c] >= order_[c].size()) {
            rng_.shuffle(order_[c]);
            cursor_[c] = 0;
        }
        out.push_back(plan_.class_images[c][order_[c][cursor_[c]++]]);
    }
    return out;
}

std::vector<ExposureRow> exposure_report(const SamplingPlan& plan, double epochs_equiv) {
    std::vector<ExposureRow> rows(plan.p_s_norm.size());
    for (std::size_t c = 0; c < rows.size(); ++c) {
        ExposureRow& row = rows[c];
        row.c = static_cast<ClassId>(c);
        row.n = plan.counts[c];
        if (plan.counts[c] > 0) {
            row.expected_visits = epochs_equiv * plan.p_s_norm[c] *
                                  static_cast<double>(plan.total_count) /
                                  static_cast<double>(plan.counts[c]);
        }
        row.neglect_linear = std::max(0.0, 1.0 - row.expected_visits);
        row.neglect_poisson = std::exp(-row.expected_visits);
    }
    return rows;
}

double plan_entropy(const SamplingPlan& plan) {
    double h = 0.0;
    for (double p : plan.p_s_norm) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

void save_plan_report(const SamplingPlan& plan, const Taxonomy& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_plan_report: cannot open " + path);
    const auto rows = exposure_report(plan, 1.0);
    out << "class\tname\tn\tp_n\tp_s\texpected_visits\tneglect_poisson\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };
    for (const ExposureRow& row : rows) {
        out << row.c << '\t' << t.name(row.c) << '\t' << row.n << '\t'
            << fmt(plan.p_n[static_cast<std::size_t>(row.c)]) << '\t'
            << fmt(plan.p_s_norm[static_cast<std::size_t>(row.c)]) << '\t'
            << fmt(row.expected_visits) << '\t' << fmt(row.neglect_poisson) << '\n';
    }
    if (!out) throw DataError("save_plan_report: write failed for " + path);
}

}  // namespace imbk
