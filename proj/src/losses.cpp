#include "imbk/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "imbk/errors.hpp"

namespace imbk {

namespace {

// log(1 + e^x) without overflow.
double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_finite(const std::vector<double>& z) {
    for (double v : z) {
        if (!std::isfinite(v)) throw std::invalid_argument("logits must be finite");
    }
}

void check_sizes(const std::vector<double>& z, const LabelVector& y) {
    if (static_cast<int>(z.size()) != y.size()) {
        throw std::invalid_argument("logit/label length mismatch");
    }
}

}  // namespace

LabelVector LabelVector::from_classes(int num_classes, const std::vector<ClassId>& classes) {
    LabelVector out;
    out.y.assign(static_cast<std::size_t>(num_classes), 0);
    for (ClassId c : classes) {
        out.y.at(static_cast<std::size_t>(c)) = 1;
    }
    return out;
}

std::vector<ClassId> LabelVector::positives() const {
    std::vector<ClassId> out;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i]) out.push_back(static_cast<ClassId>(i));
    }
    return out;
}

int LabelVector::count() const {
    int m = 0;
    for (std::uint8_t v : y) m += v;
    return m;
}

std::vector<double> softmax_probs(const std::vector<double>& z) {
    check_finite(z);
    const double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> out(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - zmax);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

LossResult softmax_ce(const std::vector<double>& z, const LabelVector& y) {
    check_sizes(z, y);
    const int m = y.count();
    if (m < 1) throw std::invalid_argument("softmax_ce: needs at least one positive label");

    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - zmax);
    const double log_total = std::log(total);

    LossResult res;
    res.gradient.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double log_p = (z[i] - zmax) - log_total;
        if (y.y[i]) res.value -= log_p;
        const double p = std::exp(log_p);
        res.gradient[i] = m * p - (y.y[i] ? 1.0 : 0.0);
    }
    return res;
}

LossResult concurrent_softmax_ce(const std::vector<double>& z, const LabelVector& y,
                                 const RateMatrix& r, ConcurrentGradMode mode) {
    check_sizes(z, y);
    check_finite(z);
    if (r.size() != static_cast<int>(z.size())) {
        throw std::invalid_argument("concurrent_softmax_ce: rate matrix size mismatch");
    }
    const int c = static_cast<int>(z.size());
    const int m = y.count();
    if (m < 1) throw std::invalid_argument("concurrent_softmax_ce: needs at least one positive label");

    // Masked denominator D_i = sum_{j != i} (1-y_j)(1-r_ij) e^{z_j} + e^{z_i},
    // evaluated with a per-row max shift over the terms that actually appear.
    auto denominator = [&](ClassId i, double shift) {
        double d = std::exp(z[static_cast<std::size_t>(i)] - shift);
        for (ClassId j = 0; j < c; ++j) {
            if (j == i || y.y[static_cast<std::size_t>(j)]) continue;
            const double w = 1.0 - r(i, j);
            if (w == 0.0) continue;
            d += w * std::exp(z[static_cast<std::size_t>(j)] - shift);
        }
        return d;
    };
    auto row_shift = [&](ClassId i) {
        double s = z[static_cast<std::size_t>(i)];
        for (ClassId j = 0; j < c; ++j) {
            if (j == i || y.y[static_cast<std::size_t>(j)]) continue;
            if (1.0 - r(i, j) == 0.0) continue;
            s = std::max(s, z[static_cast<std::size_t>(j)]);
        }
        return s;
    };

    LossResult res;
    res.gradient.assign(z.size(), 0.0);

    // sigma*_k and D_k for ground-truth rows; both gradient branches need them.
    std::vector<double> shift_k(z.size(), 0.0);
    std::vector<double> denom_k(z.size(), 0.0);
    for (ClassId k = 0; k < c; ++k) {
        if (!y.y[static_cast<std::size_t>(k)]) continue;
        const double s = row_shift(k);
        const double d = denominator(k, s);
        if (d <= 0.0 || !std::isfinite(d)) {
            throw NumericalError("concurrent_softmax_ce: denominator underflow");
        }
        shift_k[static_cast<std::size_t>(k)] = s;
        denom_k[static_cast<std::size_t>(k)] = d;
        const double log_p = (z[static_cast<std::size_t>(k)] - s) - std::log(d);
        res.value -= log_p;
        res.gradient[static_cast<std::size_t>(k)] = std::exp(log_p) - 1.0;
    }

    for (ClassId i = 0; i < c; ++i) {
        if (y.y[static_cast<std::size_t>(i)]) continue;
        double g = 0.0;
        if (mode == ConcurrentGradMode::Exact) {
            // dL/dz_i = sum_{k in K} (1 - r_ki) e^{z_i} / D_k
            for (ClassId k = 0; k < c; ++k) {
                if (!y.y[static_cast<std::size_t>(k)]) continue;
                const double contrib = std::exp(z[static_cast<std::size_t>(i)] -
                                                shift_k[static_cast<std::size_t>(k)]) /
                                       denom_k[static_cast<std::size_t>(k)];
                g += (1.0 - r(k, i)) * contrib;
            }
        } else {
            // sum_{j in K} (1 - r_ij) sigma*_i
            const double s = row_shift(i);
            const double d = denominator(i, s);
            if (d <= 0.0 || !std::isfinite(d)) {
                throw NumericalError("concurrent_softmax_ce: denominator underflow");
            }
            const double sigma_i = std::exp(z[static_cast<std::size_t>(i)] - s) / d;
            for (ClassId j = 0; j < c; ++j) {
                if (!y.y[static_cast<std::size_t>(j)]) continue;
                g += (1.0 - r(i, j)) * sigma_i;
            }
        }
        res.gradient[static_cast<std::size_t>(i)] = g;
    }
    return res;
}

std::vector<double> concurrent_softmax_infer(const std::vector<double>& z, const RateMatrix& r) {
    check_finite(z);
    if (r.size() != static_cast<int>(z.size())) {
        throw std::invalid_argument("concurrent_softmax_infer: rate matrix size mismatch");
    }
    const int c = static_cast<int>(z.size());
    std::vector<double> out(z.size());
    for (ClassId i = 0; i < c; ++i) {
        // Self term enters at full weight (r_ii = 0), so the shift always
        // covers at least one surviving term.
        double shift = z[static_cast<std::size_t>(i)];
        for (ClassId j = 0; j < c; ++j) {
            if (j == i) continue;
            if (1.0 - r(i, j) == 0.0) continue;
            shift = std::max(shift, z[static_cast<std::size_t>(j)]);
        }
        double d = std::exp(z[static_cast<std::size_t>(i)] - shift);
        for (ClassId j = 0; j < c; ++j) {
            if (j == i) continue;
            const double w = 1.0 - r(i, j);
            if (w == 0.0) continue;
            d += w * std::exp(z[static_cast<std::size_t>(j)] - shift);
        }
        if (d <= 0.0 || !std::isfinite(d)) {
            throw NumericalError("concurrent_softmax_infer: denominator underflow");
        }
        out[static_cast<std::size_t>(i)] = std::exp(z[static_cast<std::size_t>(i)] - shift) / d;
    }
    return out;
}

LossResult bce_loss(const std::vector<double>& z, const LabelVector& y) {
    check_sizes(z, y);
    LossResult res;
    res.gradient.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double target = y.y[i] ? 1.0 : 0.0;
        // max(z,0) - z*y + log(1+e^{-|z|})
        res.value += std::max(z[i], 0.0) - z[i] * target + softplus(-std::abs(z[i]));
        res.gradient[i] = sigmoid(z[i]) - target;
    }
    return res;
}

LossResult focal_loss(const std::vector<double>& z, const LabelVector& y, double gamma,
                      double alpha) {
    check_sizes(z, y);
    if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("focal_loss: alpha must be in [0,1]");

    LossResult res;
    res.gradient.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double p = sigmoid(z[i]);
        const double q = sigmoid(-z[i]);     // 1 - p, computed stably
        const double log_p = -softplus(-z[i]);
        const double log_q = -softplus(z[i]);
        if (y.y[i]) {
            // -alpha (1-p)^gamma log p
            res.value += -alpha * std::pow(q, gamma) * log_p;
            // d/dz = alpha gamma p (1-p)^gamma log p - alpha (1-p)^{gamma+1}
            res.gradient[i] = alpha * gamma * p * std::pow(q, gamma) * log_p -
                              alpha * std::pow(q, gamma + 1.0);
        } else {
            // -(1-alpha) p^gamma log(1-p)
            res.value += -(1.0 - alpha) * std::pow(p, gamma) * log_q;
            // d/dz = (1-alpha) [p^{gamma+1} - gamma p^gamma (1-p) log(1-p)]
            res.gradient[i] = (1.0 - alpha) *
                              (std::pow(p, gamma + 1.0) - gamma * std::pow(p, gamma) * q * log_q);
        }
    }
    return res;
}

std::vector<double> effective_number_weights(const std::vector<std::int64_t>& counts, double beta) {
    if (beta < 0.0 || beta >= 1.0) {
        throw std::invalid_argument("effective_number_weights: beta must be in [0,1)");
    }
    std::vector<double> w(counts.size(), 0.0);
    double sum = 0.0;
    int present = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] <= 0) continue;
        const double effective =
            (beta == 0.0) ? 1.0
                          : (1.0 - std::pow(beta, static_cast<double>(counts[i]))) / (1.0 - beta);
        w[i] = 1.0 / effective;
        sum += w[i];
        ++present;
    }
    if (present == 0) return w;
    const double mean = sum / present;
    for (double& v : w) v /= mean;
    return w;
}

LossResult weighted_softmax_ce(const std::vector<double>& z, const LabelVector& y,
                               const std::vector<double>& weights) {
    check_sizes(z, y);
    if (weights.size() != z.size()) {
        throw std::invalid_argument("weighted_softmax_ce: weight length mismatch");
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - zmax);
    const double log_total = std::log(total);

    double weight_mass = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (y.y[i]) weight_mass += weights[i];
    }
    if (weight_mass <= 0.0) {
        throw std::invalid_argument("weighted_softmax_ce: no positive label with weight");
    }

    LossResult res;
    res.gradient.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double log_p = (z[i] - zmax) - log_total;
        if (y.y[i]) res.value -= weights[i] * log_p;
        res.gradient[i] = weight_mass * std::exp(log_p) - (y.y[i] ? weights[i] : 0.0);
    }
    return res;
}

}  // namespace imbk
