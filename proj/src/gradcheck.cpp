#include "imbk/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "imbk/rng.hpp"

namespace imbk {

double gradient_rel_error(const std::function<LossResult(const std::vector<double>&)>& loss,
                          const std::vector<double>& z, double step) {
    const LossResult analytic = loss(z);
    std::vector<double> numeric(z.size());
    std::vector<double> probe = z;
    for (std::size_t i = 0; i < z.size(); ++i) {
        probe[i] = z[i] + step;
        const double up = loss(probe).value;
        probe[i] = z[i] - step;
        const double down = loss(probe).value;
        probe[i] = z[i];
        numeric[i] = (up - down) / (2.0 * step);
    }
    double diff2 = 0.0, num2 = 0.0, ana2 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = numeric[i] - analytic.gradient[i];
        diff2 += d * d;
        num2 += numeric[i] * numeric[i];
        ana2 += analytic.gradient[i] * analytic.gradient[i];
    }
    const double scale = std::sqrt(std::max(num2, ana2));
    if (scale == 0.0) return std::sqrt(diff2);
    return std::sqrt(diff2) / scale;
}

namespace {

LabelVector random_labels(int C, Rng& rng, int max_positives) {
    LabelVector y;
    y.y.assign(static_cast<std::size_t>(C), 0);
    const int m = 1 + static_cast<int>(rng.uniform_index(
                          static_cast<std::size_t>(std::min(max_positives, C))));
    // Mark m distinct classes.
    std::vector<ClassId> all(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) all[static_cast<std::size_t>(c)] = static_cast<ClassId>(c);
    rng.shuffle(all);
    for (int k = 0; k < m; ++k) y.y[static_cast<std::size_t>(all[static_cast<std::size_t>(k)])] = 1;
    return y;
}

RateMatrix random_rates(int C, Rng& rng) {
    RateMatrix r(C);
    for (ClassId i = 0; i < C; ++i) {
        for (ClassId j = 0; j < C; ++j) {
            if (i == j) continue;
            if (rng.uniform01() < 0.5) r.set(i, j, 0.9 * rng.uniform01());
        }
    }
    return r;
}

}  // namespace

GradCheckReport run_gradcheck(int max_classes, int trials, std::uint64_t seed, double tolerance,
                              double step) {
    GradCheckReport report;
    report.rows = {
        {"softmax_ce", trials, 0.0, false},
        {"concurrent_softmax_ce", trials, 0.0, false},
        {"bce", trials, 0.0, false},
        {"focal", trials, 0.0, false},
    };
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        const int C = 2 + static_cast<int>(rng.uniform_index(
                              static_cast<std::size_t>(std::max(1, max_classes - 1))));
        std::vector<double> z(static_cast<std::size_t>(C));
        for (double& v : z) v = 10.0 * rng.uniform01() - 5.0;
        const LabelVector y = random_labels(C, rng, C);
        const LabelVector y_partial = random_labels(C, rng, C - 1);
        const RateMatrix r = random_rates(C, rng);
        const double gamma = 3.0 * rng.uniform01();
        const double alpha = rng.uniform01();

        const double e_softmax = gradient_rel_error(
            [&y](const std::vector<double>& v) { return softmax_ce(v, y); }, z, step);
        const double e_concurrent = gradient_rel_error(
            [&y_partial, &r](const std::vector<double>& v) {
                return concurrent_softmax_ce(v, y_partial, r, ConcurrentGradMode::Exact);
            },
            z, step);
        const double e_bce = gradient_rel_error(
            [&y](const std::vector<double>& v) { return bce_loss(v, y); }, z, step);
        const double e_focal = gradient_rel_error(
            [&y, gamma, alpha](const std::vector<double>& v) {
                return focal_loss(v, y, gamma, alpha);
            },
            z, step);

        report.rows[0].worst_rel_err = std::max(report.rows[0].worst_rel_err, e_softmax);
        report.rows[1].worst_rel_err = std::max(report.rows[1].worst_rel_err, e_concurrent);
        report.rows[2].worst_rel_err = std::max(report.rows[2].worst_rel_err, e_bce);
        report.rows[3].worst_rel_err = std::max(report.rows[3].worst_rel_err, e_focal);
    }
    report.all_pass = true;
    for (GradCheckRow& row : report.rows) {
        row.pass = row.worst_rel_err <= tolerance;
        if (!row.pass) report.all_pass = false;
    }
    return report;
}

}  // namespace imbk
