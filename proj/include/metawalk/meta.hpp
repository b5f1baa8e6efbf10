#pragma once
// Meta-learning loop: learn an initialization over normal-relation tasks such
// that a handful of gradient steps on a new relation's support set produces a
// usable agent. The outer gradient uses the first-order approximation: each
// task's query-set gradient is evaluated at the adapted parameters and applied
// to the shared initialization.

#include <cstdint>
#include <functional>
#include <span>

#include "metawalk/eval.hpp"
#include "metawalk/reinforce.hpp"

namespace metawalk {

enum class TaskDistribution { Uniform, FrequencyProportional };
enum class OuterOptimizer { Sgd, Adam };

struct MetaConfig {
    double inner_lr = 1e-2;  // plain SGD, matching the single-step adaptation form
    double outer_lr = 1e-3;
    int64_t task_batch = 4;
    int64_t support_size = 32;
    int64_t query_size = 32;
    int64_t inner_steps = 1;
    int64_t outer_steps = 500;
    bool first_order = true;  // exact second-order meta-gradients are unsupported
    TaskDistribution task_distribution = TaskDistribution::Uniform;
    OuterOptimizer outer_optimizer = OuterOptimizer::Adam;

    TrainConfig rollout;  // rollouts per triple, baseline, entropy, dropout, workers

    // Meta-validation: beam MRR over normal-task valid queries every
    // eval_every outer steps; keeps the best checkpoint, stops after
    // `patience` evaluations без improvement. 0 disables validation.
    int64_t eval_every = 50;
    int64_t patience = 5;
    int64_t val_queries = 64;
    int64_t val_beam_width = 32;

    uint64_t seed = 0;
};

// Stream seeds for the support/query phases of one task within one outer
// step; exposed so replay-equivalence checks can re-derive them.
uint64_t meta_support_seed(const MetaConfig& config, uint64_t outer_step, int64_t task_index);
uint64_t meta_query_seed(const MetaConfig& config, uint64_t outer_step, int64_t task_index);
// Seed for drawing (support, query) from the task's train partition.
uint64_t meta_task_sample_seed(const MetaConfig& config, uint64_t outer_step, int64_t task_index);
// Seed used to initialize the meta parameters inside meta_train.
uint64_t meta_init_seed(const MetaConfig& config);

// Single-task adaptation on a support set (delegates to train_relation with
// plain SGD at inner_lr). The input parameters are never mutated.
ParamSet inner_adapt(const ParamSet& theta, const Environment& env,
                     const EmbedModel* reward_model, std::span<const Triple> support,
                     double inner_lr, int64_t steps, const MetaConfig& config, uint64_t seed);

struct MetaStepStats {
    std::vector<double> task_query_loss;
    double mean_query_loss = 0.0;
    double mean_query_reward = 0.0;
};

// One outer update over a batch of tasks: sample support/query, adapt,
// evaluate the query loss at the adapted parameters, sum the per-task
// gradients, and apply the outer optimizer to theta.
MetaStepStats meta_step(ParamSet& theta, const Environment& env, const EmbedModel* reward_model,
                        std::span<const Task> batch, const MetaConfig& config,
                        uint64_t outer_step);

struct MetaTrainStats {
    int64_t outer_step = 0;
    double mean_query_loss = 0.0;
    double mean_query_reward = 0.0;
    double val_mrr = -1.0;  // <0 when this step ran no validation
};

using MetaLog = std::function<void(const MetaTrainStats&)>;

// Full meta-training over the given tasks; returns the best checkpoint per
// meta-validation (the final parameters when validation is disabled).
ParamSet meta_train(const Graph& graph, const Environment& env, const EmbedModel* reward_model,
                    std::span<const Task> tasks, const PolicyConfig& policy_config,
                    const MetaConfig& config, const MetaLog& log = {});

// Few-shot adaptation from a meta-initialization; steps may be arbitrary.
ParamSet adapt_fewshot(const ParamSet& theta_star, const Environment& env,
                       const EmbedModel* reward_model, const Task& task, double inner_lr,
                       int64_t steps, const MetaConfig& config, uint64_t seed);

}  // namespace metawalk
