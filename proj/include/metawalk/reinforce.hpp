#pragma once
// Relation-specific policy-gradient training. The surrogate
//   loss = -(1/N) sum_i (R_i - b) * sum_t log pi(a_t^i | s_t^i) - w_H * H
// is built by replaying frozen trajectories on a gradient tape, so its
// gradient is the Monte-Carlo estimator of the true objective's gradient
// while staying deterministic given the trajectories. b is the configured
// baseline (0 when disabled); H is the mean per-step policy entropy.

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "metawalk/policy.hpp"

namespace metawalk {

enum class BaselineKind { None, MovingAverage };

struct TrainConfig {
    int64_t rollouts_per_triple = 20;
    double learn_rate = 1e-2;  // plain SGD; the inner loop of Eq-style adaptation
    BaselineKind baseline = BaselineKind::MovingAverage;
    double baseline_decay = 0.95;
    double entropy_weight = 0.01;  // annealed linearly to 0 across the run
    double action_dropout = 0.1;
    int64_t steps = 1;
    uint64_t seed = 0;
    int64_t workers = 1;
};

struct TrainStepStats {
    int64_t step = 0;
    double mean_reward = 0.0;
    double loss = 0.0;
    double hit_rate = 0.0;
};

using TrainLog = std::function<void(const TrainStepStats&)>;

struct LossOptions {
    double baseline = 0.0;
    double entropy_weight = 0.0;
};

// Scalar surrogate over the batch; rejects an empty batch.
Var batch_loss(Tape& tape, const PolicyVars& pv, const Environment& env,
               std::span<const Trajectory> trajectories, const LossOptions& options);

// Tracks the moving-average reward baseline across training steps. The value
// used for a batch is the average before that batch is folded in.
class RewardBaseline {
public:
    RewardBaseline(BaselineKind kind, double decay) : kind_(kind), decay_(decay) {}
    double value() const { return kind_ == BaselineKind::None ? 0.0 : value_; }
    void update(double batch_mean_reward);

private:
    BaselineKind kind_;
    double decay_;
    double value_ = 0.0;
};

// Runs config.steps SGD steps of the surrogate over rollouts from the given
// triples. The input parameters are copied, never mutated. Entropy weight
// anneals linearly to 0 across the configured steps.
ParamSet train_relation(const ParamSet& params, const Environment& env,
                        const EmbedModel* reward_model, std::span<const Triple> triples,
                        const TrainConfig& config, const TrainLog& log = {});

}  // namespace metawalk
