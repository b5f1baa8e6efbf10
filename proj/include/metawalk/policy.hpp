#pragma once
// The walking agent. A path-history LSTM consumes action embeddings
// [relation; entity]; an MLP scorer maps [current entity; history; query
// relation] to a vector that is dotted with each stacked candidate action and
// softmaxed. Rollouts run on a scratch tape; training replays recorded
// trajectories on a gradient tape, reproducing the sampling-time math
// bit-for-bit because both paths execute the same op sequence.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "metawalk/env.hpp"
#include "metawalk/tensor.hpp"

namespace metawalk {

struct PolicyConfig {
    int64_t dim = 64;            // entity/relation embedding width
    int64_t hidden = 64;         // LSTM hidden width
    int64_t scorer_hidden = 64;  // MLP hidden width
};

// Parameters: entity_emb |E| x d, relation_emb |R| x d (self-loop, start and
// inverse relations included), LSTM weights for input 2d -> hidden h, learned
// initial state, and the two scorer matrices.
ParamSet init_policy_params(const Graph& graph, const PolicyConfig& config, uint64_t seed);
PolicyConfig policy_config_of(const ParamSet& params);

struct PolicyVars {
    Var entity_emb, relation_emb;
    Var lstm_wx, lstm_wh, lstm_b;
    Var h0, c0;
    Var w1, w2;
};

PolicyVars attach_policy(Tape& tape, const ParamSet& params);

// Gradients for every policy parameter after backward() (zeros if unreached).
GradMap policy_grads(const Tape& tape, const PolicyVars& pv);

struct LstmState {
    Var h, c;
};

// Learned initial state, before any action is consumed.
LstmState initial_history(const PolicyVars& pv);

// One LSTM cell update with the previous action's embedding (length 2d).
LstmState encode_step(const PolicyVars& pv, const LstmState& prev, Var action_embedding);

// [relation; target] embedding of one action (length 2d).
Var action_embedding(const PolicyVars& pv, const Action& action);

// Softmax over the candidate actions from state/history. Rejects an empty
// action list (the environment's self-loop guarantees at least one).
Var action_distribution(const PolicyVars& pv, const State& state, const LstmState& history,
                        std::span<const Action> actions);

struct Trajectory {
    Query query;
    std::vector<Action> actions;        // length = horizon
    std::vector<int64_t> action_index;  // position within each step's action space
    std::vector<double> log_probs;      // unmasked log pi(a_t | s_t)
    double reward = 0.0;
    EntityId final_entity = -1;
    bool gold_masked = true;            // action-space masking used at sампling time
};

enum class RolloutMode { Sample, Greedy };

struct RolloutOptions {
    RolloutMode mode = RolloutMode::Sample;
    bool gold_mask = true;
    double action_dropout = 0.0;  // sampling-time exploration mask
};

// Perturbs a sampling distribution: every non-self-loop action (index > 0)
// is dropped with probability rate; if all of them drop, the original
// distribution is returned. Learning always uses the unmasked distribution.
std::vector<double> action_dropout(std::span<const double> probs, double rate, Rng& rng);

// Roll one trajectory with the given parameters. Greedy mode takes the
// argmax, ties broken by the lowest action index.
Trajectory sample_rollout(const ParamSet& params, const Environment& env,
                          const EmbedModel* reward_model, const Query& query,
                          const RolloutOptions& options, Rng& rng);

// Same rollout on a caller-owned tape whose policy leaves are already
// attached; the caller rewinds the tape between rollouts.
Trajectory sample_rollout(Tape& tape, const PolicyVars& pv, const Environment& env,
                          const EmbedModel* reward_model, const Query& query,
                          const RolloutOptions& options, Rng& rng);

// Replays a trajectory on the tape: returns sum_t log pi(a_t | s_t) and, when
// entropy_sum is non-null, also accumulates the per-step policy entropies.
Var trajectory_logprob(Tape& tape, const PolicyVars& pv, const Environment& env,
                       const Trajectory& trajectory, Var* entropy_sum = nullptr);

// Deterministic per-rollout seeds make batches independent of worker count.
std::vector<Trajectory> sample_batch(const ParamSet& params, const Environment& env,
                                     const EmbedModel* reward_model,
                                     std::span<const Triple> triples, int64_t rollouts_per_triple,
                                     const RolloutOptions& options, uint64_t seed, int64_t workers);

}  // namespace metawalk
