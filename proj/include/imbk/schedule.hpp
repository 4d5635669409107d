#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace imbk {

enum class PhaseKind {
    Sequential,  // one seeded pass over the full dataset per epoch
    Balanced,    // batches drawn from a soft-balance plan
};

// Learning-rate step: `multiplier` applies from `start_epoch` (0-based within
// the phase) until the next step begins.
struct LrStep {
    int start_epoch = 0;
    double multiplier = 1.0;

    bool operator==(const LrStep& other) const = default;
};

struct Phase {
    PhaseKind kind = PhaseKind::Sequential;
    double lambda = 0.0;  // balance factor; meaningful only for Balanced
    int epochs = 0;
    std::vector<LrStep> lr_steps;  // first step starts at 0; multipliers non-increasing

    bool operator==(const Phase& other) const = default;
};

struct TrainPlan {
    std::vector<Phase> phases;
    double base_lr_per_sample = 0.00125;
    int batch_size = 16;
    double momentum = 0.9;
    double weight_decay = 0.0001;

    double base_lr() const { return base_lr_per_sample * batch_size; }
    int total_epochs() const;
};

// The stock 7-epoch sequential phase: full rate for 3 epochs, then x0.1 for
// 2, then x0.01 for 2.
Phase one_x_schedule();

// Stretch the stock phase to n epochs, keeping the decay points at the same
// relative positions (4/7 and 6/7 of the way through, floored). Decays that
// would land on epoch 0 or collide are pushed later; any pushed past the end
// are dropped.
Phase scaled_sequential_phase(int epochs);

// Sequential pretrain for pretrain_epochs, then a balanced finetune phase
// (7 epochs, stock schedule) whose sampler uses finetune_lambda. The finetune
// restarts from the full base learning rate.
TrainPlan hybrid_plan(int pretrain_epochs, double finetune_lambda);

// Single-phase plans for the comparison arms.
TrainPlan sequential_plan(int epochs);
TrainPlan balanced_plan(int epochs, double lambda);

struct EpochInfo {
    PhaseKind kind = PhaseKind::Sequential;
    std::optional<double> lambda;  // set for balanced phases
    double lr = 0.0;
    int phase_index = 0;
    int epoch_in_phase = 0;
};

// Resolves the active phase and exact learning rate for a 0-based global
// epoch index.
EpochInfo next_epoch(const TrainPlan& plan, int global_epoch);

double multiplier_at(const Phase& phase, int epoch_in_phase);

// Seeded permutation of [0, n) used by sequential epochs, so every instance
// appears exactly once per pass.
std::vector<std::size_t> sequential_order(std::size_t n, std::uint64_t seed);

}  // namespace imbk
