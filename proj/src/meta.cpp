#include "metawalk/meta.hpp"

#include <algorithm>
#include <stdexcept>

namespace metawalk {

uint64_t meta_support_seed(const MetaConfig& config, uint64_t outer_step, int64_t task_index) {
    return mix_seed(config.seed, outer_step, static_cast<uint64_t>(task_index), 0x5100ULL);
}

uint64_t meta_query_seed(const MetaConfig& config, uint64_t outer_step, int64_t task_index) {
    return mix_seed(config.seed, outer_step, static_cast<uint64_t>(task_index), 0x9100ULL);
}

uint64_t meta_task_sample_seed(const MetaConfig& config, uint64_t outer_step, int64_t task_index) {
    return mix_seed(config.seed, outer_step, static_cast<uint64_t>(task_index), 0xda7aULL);
}

uint64_t meta_init_seed(const MetaConfig& config) { return mix_seed(config.seed, 0x1217ULL); }

namespace {

TrainConfig inner_config(const MetaConfig& config, double lr, int64_t steps, uint64_t seed) {
    TrainConfig tc = config.rollout;
    tc.learn_rate = lr;
    tc.steps = steps;
    tc.seed = seed;
    return tc;
}

}  // namespace

ParamSet inner_adapt(const ParamSet& theta, const Environment& env,
                     const EmbedModel* reward_model, std::span<const Triple> support,
                     double inner_lr, int64_t steps, const MetaConfig& config, uint64_t seed) {
    if (steps == 0) return theta;
    return train_relation(theta, env, reward_model, support,
                          inner_config(config, inner_lr, steps, seed));
}

MetaStepStats meta_step(ParamSet& theta, const Environment& env, const EmbedModel* reward_model,
                        std::span<const Task> batch, const MetaConfig& config,
                        uint64_t outer_step) {
    if (batch.empty()) throw std::invalid_argument("meta_step: empty task batch");
    if (!config.first_order)
        throw std::invalid_argument(
            "meta_step: exact second-order meta-gradients are not supported; use first_order");

    MetaStepStats stats;
    GradMap total;
    for (const auto& [name, t] : theta.tensors()) total.emplace(name, Tensor::zeros(t.shape));

    for (size_t ti = 0; ti < batch.size(); ++ti) {
        const Task& task = batch[ti];
        Rng sample_rng(meta_task_sample_seed(config, outer_step, static_cast<int64_t>(ti)));
        auto [support, query] =
            sample_support_query(task, config.support_size, config.query_size, sample_rng);

        ParamSet adapted =
            inner_adapt(theta, env, reward_model, support, config.inner_lr, config.inner_steps,
                        config, meta_support_seed(config, outer_step, static_cast<int64_t>(ti)));

        RolloutOptions rollout{.mode = RolloutMode::Sample,
                               .gold_mask = true,
                               .action_dropout = config.rollout.action_dropout};
        auto trajectories = sample_batch(
            adapted, env, reward_model, query, config.rollout.rollouts_per_triple, rollout,
            meta_query_seed(config, outer_step, static_cast<int64_t>(ti)), config.rollout.workers);

        double mean_reward = 0.0;
        for (const Trajectory& t : trajectories) mean_reward += t.reward;
        mean_reward /= static_cast<double>(trajectories.size());

        // Query loss mirrors the first step of train_relation: fresh baseline
        // (0 before any batch) and un-annealed entropy weight.
        LossOptions options{.baseline = 0.0, .entropy_weight = config.rollout.entropy_weight};
        Tape tape;
        PolicyVars pv = attach_policy(tape, adapted);
        Var loss = batch_loss(tape, pv, env, trajectories, options);
        tape.backward(loss);
        GradMap task_grad = policy_grads(tape, pv);
        for (auto& [name, g] : total) {
            const Tensor& tg = task_grad.at(name);
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += tg.v[i];
        }
        stats.task_query_loss.push_back(loss.value().item());
        stats.mean_query_loss += loss.value().item();
        stats.mean_query_reward += mean_reward;
    }
    stats.mean_query_loss /= static_cast<double>(batch.size());
    stats.mean_query_reward /= static_cast<double>(batch.size());

    if (config.outer_optimizer == OuterOptimizer::Adam)
        adam_step(theta, total, config.outer_lr);
    else
        sgd_step(theta, total, config.outer_lr);
    return stats;
}

namespace {

double meta_validation_mrr(const ParamSet& theta, const Environment& env,
                           std::span<const Task> tasks, const KnownTails& known,
                           const MetaConfig& config) {
    std::vector<Query> pool;
    for (const Task& task : tasks)
        for (const Triple& t : task.valid) pool.push_back({t.head, t.relation, t.tail});
    if (pool.empty()) return -1.0;
    Rng rng(mix_seed(config.seed, 0x3e7aULL));
    rng.shuffle(pool);
    if (static_cast<int64_t>(pool.size()) > config.val_queries)
        pool.resize(static_cast<size_t>(config.val_queries));

    BeamConfig beam{.width = config.val_beam_width, .score_mode = ScoreMode::MaxPath,
                    .gold_mask = true};
    std::vector<RankedAnswer> answers(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) answers[i] = beam_search(theta, env, pool[i], beam);
    return compute_metrics(answers, known, true).mrr;
}

}  // namespace

ParamSet meta_train(const Graph& graph, const Environment& env, const EmbedModel* reward_model,
                    std::span<const Task> tasks, const PolicyConfig& policy_config,
                    const MetaConfig& config, const MetaLog& log) {
    if (tasks.empty()) throw std::invalid_argument("meta_train: no tasks");

    ParamSet theta = init_policy_params(graph, policy_config, meta_init_seed(config));

    std::vector<double> weights(tasks.size(), 1.0);
    if (config.task_distribution == TaskDistribution::FrequencyProportional)
        for (size_t i = 0; i < tasks.size(); ++i)
            weights[i] = static_cast<double>(std::max<size_t>(1, tasks[i].train.size()));

    KnownTails known(graph);
    ParamSet best = theta;
    double best_mrr = -1.0;
    int64_t evals_without_gain = 0;

    Rng task_rng(mix_seed(config.seed, 0x7a58ULL));
    for (int64_t outer = 0; outer < config.outer_steps; ++outer) {
        std::vector<Task> batch;
        for (int64_t b = 0; b < config.task_batch; ++b)
            batch.push_back(tasks[static_cast<size_t>(task_rng.categorical(weights))]);

        // Entropy anneals across outer steps.
        MetaConfig step_config = config;
        step_config.rollout.entropy_weight =
            config.rollout.entropy_weight *
            (1.0 - static_cast<double>(outer) / static_cast<double>(config.outer_steps));
        MetaStepStats stats =
            meta_step(theta, env, reward_model, batch, step_config, static_cast<uint64_t>(outer));

        MetaTrainStats line{outer, stats.mean_query_loss, stats.mean_query_reward, -1.0};
        if (config.eval_every > 0 && (outer + 1) % config.eval_every == 0) {
            double mrr = meta_validation_mrr(theta, env, tasks, known, config);
            line.val_mrr = mrr;
            if (mrr > best_mrr + 1e-12) {
                best_mrr = mrr;
                best = theta;
                evals_without_gain = 0;
            } else {
                ++evals_without_gain;
            }
            if (log) log(line);
            if (evals_without_gain >= config.patience) break;
            continue;
        }
        if (log) log(line);
    }
    return best_mrr >= 0.0 ? best : theta;
}

ParamSet adapt_fewshot(const ParamSet& theta_star, const Environment& env,
                       const EmbedModel* reward_model, const Task& task, double inner_lr,
                       int64_t steps, const MetaConfig& config, uint64_t seed) {
    if (task.train.empty())
        throw std::invalid_argument("adapt_fewshot: task has no train triples");
    return inner_adapt(theta_star, env, reward_model, task.train, inner_lr, steps, config, seed);
}

}  // namespace metawalk
