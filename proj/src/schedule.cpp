#include "imbk/schedule.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "imbk/errors.hpp"
#include "imbk/rng.hpp"

namespace imbk {

namespace {

void validate_phase(const Phase& phase) {
    if (phase.epochs < 1) throw ConfigError("phase must have at least one epoch");
    if (phase.lr_steps.empty() || phase.lr_steps.front().start_epoch != 0) {
        throw ConfigError("phase lr schedule must start at epoch 0");
    }
    double prev = std::numeric_limits<double>::infinity();
    int prev_start = -1;
    for (const LrStep& step : phase.lr_steps) {
        if (step.multiplier <= 0.0 || step.multiplier > prev) {
            throw ConfigError("lr multipliers must be positive and non-increasing");
        }
        if (step.start_epoch <= prev_start || step.start_epoch >= phase.epochs) {
            throw ConfigError("lr steps must be strictly increasing within the phase");
        }
        prev = step.multiplier;
        prev_start = step.start_epoch;
    }
}

}  // namespace

int TrainPlan::total_epochs() const {
    int total = 0;
    for (const Phase& p : phases) total += p.epochs;
    return total;
}

Phase one_x_schedule() {
    Phase p;
    p.kind = PhaseKind::Sequential;
    p.epochs = 7;
    p.lr_steps = {{0, 1.0}, {3, 0.1}, {5, 0.01}};
    return p;
}

Phase scaled_sequential_phase(int epochs) {
    if (epochs < 1) throw ConfigError("scaled_sequential_phase: epochs must be >= 1");
    Phase p;
    p.kind = PhaseKind::Sequential;
    p.epochs = epochs;
    p.lr_steps = {{0, 1.0}};
    // Decay points at the stock schedule's relative positions (1-based epochs
    // floor(n*4/7) and floor(n*6/7)), shifted to keep epoch 1 at full rate
    // and the two decays distinct.
    int first = std::max(epochs * 4 / 7, 2);
    int second = std::max(epochs * 6 / 7, first + 1);
    if (first <= epochs) {
        p.lr_steps.push_back({first - 1, 0.1});
        if (second <= epochs) p.lr_steps.push_back({second - 1, 0.01});
    }
    validate_phase(p);
    return p;
}

TrainPlan hybrid_plan(int pretrain_epochs, double finetune_lambda) {
    if (pretrain_epochs < 1) throw ConfigError("hybrid_plan: pretrain_epochs must be >= 1");
    if (finetune_lambda < 0.0 || !std::isfinite(finetune_lambda)) {
        throw ConfigError("hybrid_plan: finetune_lambda must be a finite value >= 0");
    }
    TrainPlan plan;
    plan.phases.push_back(scaled_sequential_phase(pretrain_epochs));
    Phase finetune = one_x_schedule();
    finetune.kind = PhaseKind::Balanced;
    finetune.lambda = finetune_lambda;
    plan.phases.push_back(finetune);
    return plan;
}

TrainPlan sequential_plan(int epochs) {
    TrainPlan plan;
    plan.phases.push_back(scaled_sequential_phase(epochs));
    return plan;
}

TrainPlan balanced_plan(int epochs, double lambda) {
    if (lambda < 0.0 || !std::isfinite(lambda)) {
        throw ConfigError("balanced_plan: lambda must be a finite value >= 0");
    }
    TrainPlan plan;
    Phase p = scaled_sequential_phase(epochs);
    p.kind = PhaseKind::Balanced;
    p.lambda = lambda;
    plan.phases.push_back(p);
    return plan;
}

double multiplier_at(const Phase& phase, int epoch_in_phase) {
    if (epoch_in_phase < 0 || epoch_in_phase >= phase.epochs) {
        throw ConfigError("multiplier_at: epoch outside phase");
    }
    double m = phase.lr_steps.front().multiplier;
    for (const LrStep& step : phase.lr_steps) {
        if (step.start_epoch <= epoch_in_phase) m = step.multiplier;
    }
    return m;
}

EpochInfo next_epoch(const TrainPlan& plan, int global_epoch) {
    if (plan.phases.empty()) throw ConfigError("next_epoch: plan has no phases");
    if (global_epoch < 0 || global_epoch >= plan.total_epochs()) {
        throw ConfigError("next_epoch: epoch outside plan");
    }
    int offset = global_epoch;
    for (std::size_t i = 0; i < plan.phases.size(); ++i) {
        const Phase& phase = plan.phases[i];
        if (offset >= phase.epochs) {
            offset -= phase.epochs;
            continue;
        }
        EpochInfo info;
        info.kind = phase.kind;
        if (phase.kind == PhaseKind::Balanced) info.lambda = phase.lambda;
        info.lr = plan.base_lr() * multiplier_at(phase, offset);
        info.phase_index = static_cast<int>(i);
        info.epoch_in_phase = offset;
        return info;
    }
    throw ConfigError("next_epoch: epoch outside plan");
}

std::vector<std::size_t> sequential_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    return order;
}

}  // namespace imbk
