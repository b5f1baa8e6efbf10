#include "metawalk/reinforce.hpp"

#include <stdexcept>

namespace metawalk {

Var batch_loss(Tape& tape, const PolicyVars& pv, const Environment& env,
               std::span<const Trajectory> trajectories, const LossOptions& options) {
    if (trajectories.empty()) throw std::invalid_argument("batch_loss: empty batch");
    double n = static_cast<double>(trajectories.size());
    bool want_entropy = options.entropy_weight != 0.0;

    Var loss{};
    Var entropy_sum{};
    for (const Trajectory& traj : trajectories) {
        Var lp = trajectory_logprob(tape, pv, env, traj, want_entropy ? &entropy_sum : nullptr);
        Var term = scale(lp, -(traj.reward - options.baseline) / n);
        loss = loss.valid() ? add(loss, term) : term;
    }
    if (want_entropy) {
        double steps = n * static_cast<double>(trajectories[0].actions.size());
        loss = add(loss, scale(entropy_sum, -options.entropy_weight / steps));
    }
    return loss;
}

void RewardBaseline::update(double batch_mean_reward) {
    if (kind_ == BaselineKind::None) return;
    value_ = decay_ * value_ + (1.0 - decay_) * batch_mean_reward;
}

ParamSet train_relation(const ParamSet& params, const Environment& env,
                        const EmbedModel* reward_model, std::span<const Triple> triples,
                        const TrainConfig& config, const TrainLog& log) {
    if (triples.empty()) throw std::invalid_argument("train_relation: empty triple set");
    ParamSet adapted = params;
    RewardBaseline baseline(config.baseline, config.baseline_decay);
    RolloutOptions rollout{.mode = RolloutMode::Sample,
                           .gold_mask = true,
                           .action_dropout = config.action_dropout};

    for (int64_t step = 0; step < config.steps; ++step) {
        auto trajectories =
            sample_batch(adapted, env, reward_model, triples, config.rollouts_per_triple, rollout,
                         mix_seed(config.seed, static_cast<uint64_t>(step)), config.workers);

        double mean_reward = 0.0, hits = 0.0;
        for (const Trajectory& t : trajectories) {
            mean_reward += t.reward;
            if (t.query.has_answer() && t.final_entity == t.query.answer) hits += 1.0;
        }
        mean_reward /= static_cast<double>(trajectories.size());
        hits /= static_cast<double>(trajectories.size());

        double anneal = config.steps > 1
                            ? 1.0 - static_cast<double>(step) / static_cast<double>(config.steps)
                            : 1.0;
        LossOptions options{.baseline = baseline.value(),
                            .entropy_weight = config.entropy_weight * anneal};

        Tape tape;
        PolicyVars pv = attach_policy(tape, adapted);
        Var loss = batch_loss(tape, pv, env, trajectories, options);
        tape.backward(loss);
        sgd_step(adapted, policy_grads(tape, pv), config.learn_rate);
        baseline.update(mean_reward);

        if (log) log({step, mean_reward, loss.value().item(), hits});
    }
    return adapted;
}

}  // namespace metawalk
