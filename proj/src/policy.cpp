#include "metawalk/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace metawalk {

ParamSet init_policy_params(const Graph& graph, const PolicyConfig& config, uint64_t seed) {
    if (config.dim < 1 || config.hidden < 1 || config.scorer_hidden < 1)
        throw std::invalid_argument("init_policy_params: dims must be >= 1");
    int64_t d = config.dim, h = config.hidden, s = config.scorer_hidden;
    Rng rng(mix_seed(seed, 0x9019ceULL));
    auto u = [&rng](std::vector<int64_t> shape, int64_t fan_in) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        return Tensor::uniform(std::move(shape), -bound, bound, rng);
    };

    ParamSet p;
    p.insert("entity_emb", u({graph.num_entities(), d}, d));
    p.insert("relation_emb", u({graph.num_relations(), d}, d));
    p.insert("lstm_wx", u({2 * d, 4 * h}, 2 * d));
    p.insert("lstm_wh", u({h, 4 * h}, h));
    Tensor b = Tensor::zeros({4 * h});
    for (int64_t i = h; i < 2 * h; ++i) b.v[static_cast<size_t>(i)] = 1.0;  // forget-gate bias
    p.insert("lstm_b", std::move(b));
    p.insert("h0", Tensor::zeros({h}));
    p.insert("c0", Tensor::zeros({h}));
    p.insert("w1", u({2 * d + h, s}, 2 * d + h));
    p.insert("w2", u({s, 2 * d}, s));

    p.meta["model"] = "policy";
    p.meta["dim"] = std::to_string(d);
    p.meta["hidden"] = std::to_string(h);
    p.meta["scorer_hidden"] = std::to_string(s);
    p.meta["seed"] = std::to_string(seed);
    return p;
}

PolicyConfig policy_config_of(const ParamSet& params) {
    PolicyConfig c;
    c.dim = params.at("entity_emb").cols();
    c.hidden = params.at("h0").numel();
    c.scorer_hidden = params.at("w1").cols();
    return c;
}

PolicyVars attach_policy(Tape& tape, const ParamSet& params) {
    PolicyVars pv;
    pv.entity_emb = tape.leaf(params.at("entity_emb"), true);
    pv.relation_emb = tape.leaf(params.at("relation_emb"), true);
    pv.lstm_wx = tape.leaf(params.at("lstm_wx"), true);
    pv.lstm_wh = tape.leaf(params.at("lstm_wh"), true);
    pv.lstm_b = tape.leaf(params.at("lstm_b"), true);
    pv.h0 = tape.leaf(params.at("h0"), true);
    pv.c0 = tape.leaf(params.at("c0"), true);
    pv.w1 = tape.leaf(params.at("w1"), true);
    pv.w2 = tape.leaf(params.at("w2"), true);
    return pv;
}

GradMap policy_grads(const Tape& tape, const PolicyVars& pv) {
    GradMap g;
    g.emplace("entity_emb", tape.grad(pv.entity_emb));
    g.emplace("relation_emb", tape.grad(pv.relation_emb));
    g.emplace("lstm_wx", tape.grad(pv.lstm_wx));
    g.emplace("lstm_wh", tape.grad(pv.lstm_wh));
    g.emplace("lstm_b", tape.grad(pv.lstm_b));
    g.emplace("h0", tape.grad(pv.h0));
    g.emplace("c0", tape.grad(pv.c0));
    g.emplace("w1", tape.grad(pv.w1));
    g.emplace("w2", tape.grad(pv.w2));
    return g;
}

LstmState initial_history(const PolicyVars& pv) { return {pv.h0, pv.c0}; }

LstmState encode_step(const PolicyVars& pv, const LstmState& prev, Var action_embedding) {
    int64_t in = pv.lstm_wx.value().rows();
    int64_t h = pv.h0.value().numel();
    if (action_embedding.value().numel() != in)
        throw std::invalid_argument("encode_step: action embedding has " +
                                    std::to_string(action_embedding.value().numel()) +
                                    " values, LSTM expects " + std::to_string(in));
    Var z = add(add(matmul(action_embedding, pv.lstm_wx), matmul(prev.h, pv.lstm_wh)), pv.lstm_b);
    Var i_gate = sigmoid(slice(z, 0, h));
    Var f_gate = sigmoid(slice(z, h, h));
    Var g_gate = tanh(slice(z, 2 * h, h));
    Var o_gate = sigmoid(slice(z, 3 * h, h));
    Var c_next = add(mul(f_gate, prev.c), mul(i_gate, g_gate));
    Var h_next = mul(o_gate, tanh(c_next));
    return {h_next, c_next};
}

namespace {

Var entity_row(const PolicyVars& pv, EntityId e) {
    std::vector<int64_t> id{e};
    return reshape(gather_rows(pv.entity_emb, id), {pv.entity_emb.value().cols()});
}

Var relation_row(const PolicyVars& pv, RelationId r) {
    std::vector<int64_t> id{r};
    return reshape(gather_rows(pv.relation_emb, id), {pv.relation_emb.value().cols()});
}

}  // namespace

Var action_embedding(const PolicyVars& pv, const Action& action) {
    return concat({relation_row(pv, action.relation), entity_row(pv, action.target)});
}

Var action_distribution(const PolicyVars& pv, const State& state, const LstmState& history,
                        std::span<const Action> actions) {
    if (actions.empty())
        throw std::logic_error("action_distribution: empty action space (self-loop missing?)");
    Var x = concat({entity_row(pv, state.current), history.h, relation_row(pv, state.query_relation)});
    Var hidden = relu(matmul(x, pv.w1));
    Var key = matmul(hidden, pv.w2);  // length 2d

    std::vector<int64_t> rel_ids, ent_ids;
    rel_ids.reserve(actions.size());
    ent_ids.reserve(actions.size());
    for (const Action& a : actions) {
        rel_ids.push_back(a.relation);
        ent_ids.push_back(a.target);
    }
    Var stacked = concat({gather_rows(pv.relation_emb, rel_ids), gather_rows(pv.entity_emb, ent_ids)});
    Var logits = matmul(stacked, key);
    return softmax(logits);
}

std::vector<double> action_dropout(std::span<const double> probs, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("action_dropout: rate must be in [0, 1)");
    std::vector<double> out(probs.begin(), probs.end());
    if (rate == 0.0 || probs.size() <= 1) return out;
    bool any_kept = false;
    for (size_t i = 1; i < out.size(); ++i) {
        if (rng.uniform() < rate)
            out[i] = 0.0;
        else
            any_kept = true;
    }
    if (!any_kept) return {probs.begin(), probs.end()};
    double total = 0.0;
    for (double p : out) total += p;
    for (double& p : out) p /= total;
    return out;
}

namespace {

int64_t choose_action(std::span<const double> probs, const RolloutOptions& options, Rng& rng) {
    if (options.mode == RolloutMode::Greedy) {
        int64_t best = 0;
        for (size_t i = 1; i < probs.size(); ++i)
            if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int64_t>(i);
        return best;
    }
    if (options.action_dropout > 0.0) {
        auto masked = action_dropout(probs, options.action_dropout, rng);
        return rng.categorical(masked);
    }
    return rng.categorical(probs);
}

}  // namespace

Trajectory sample_rollout(Tape& tape, const PolicyVars& pv, const Environment& env,
                          const EmbedModel* reward_model, const Query& query,
                          const RolloutOptions& options, Rng& rng) {
    Trajectory traj;
    traj.query = query;
    traj.gold_masked = options.gold_mask;

    State state = env.reset(query);
    LstmState history = encode_step(
        pv, initial_history(pv),
        action_embedding(pv, {env.graph().start_relation(), query.source}));

    int64_t horizon = env.horizon();
    for (int64_t t = 0; t < horizon; ++t) {
        auto actions = env.action_space(state, query, options.gold_mask);
        Var dist = action_distribution(pv, state, history, actions);
        const std::vector<double>& probs = dist.value().v;
        int64_t idx = choose_action(probs, options, rng);

        traj.actions.push_back(actions[static_cast<size_t>(idx)]);
        traj.action_index.push_back(idx);
        traj.log_probs.push_back(guarded_log(probs[static_cast<size_t>(idx)]));

        state = env.step(state, actions[static_cast<size_t>(idx)]);
        if (t + 1 < horizon)
            history = encode_step(pv, history,
                                  action_embedding(pv, actions[static_cast<size_t>(idx)]));
    }
    traj.final_entity = state.current;
    traj.reward = env.terminal_reward(state, query, reward_model);
    return traj;
}

Trajectory sample_rollout(const ParamSet& params, const Environment& env,
                          const EmbedModel* reward_model, const Query& query,
                          const RolloutOptions& options, Rng& rng) {
    Tape tape;
    PolicyVars pv = attach_policy(tape, params);
    return sample_rollout(tape, pv, env, reward_model, query, options, rng);
}

Var trajectory_logprob(Tape& tape, const PolicyVars& pv, const Environment& env,
                       const Trajectory& trajectory, Var* entropy_sum) {
    State state = env.reset(trajectory.query);
    LstmState history = encode_step(
        pv, initial_history(pv),
        action_embedding(pv, {env.graph().start_relation(), trajectory.query.source}));

    int64_t horizon = env.horizon();
    if (static_cast<int64_t>(trajectory.actions.size()) != horizon)
        throw std::invalid_argument("trajectory_logprob: trajectory length " +
                                    std::to_string(trajectory.actions.size()) +
                                    " does not match horizon " + std::to_string(horizon));
    Var total{};
    for (int64_t t = 0; t < horizon; ++t) {
        auto actions = env.action_space(state, trajectory.query, trajectory.gold_masked);
        int64_t idx = trajectory.action_index[static_cast<size_t>(t)];
        if (idx < 0 || idx >= static_cast<int64_t>(actions.size()) ||
            actions[static_cast<size_t>(idx)] != trajectory.actions[static_cast<size_t>(t)])
            throw std::invalid_argument(
                "trajectory_logprob: recorded action does not replay against the graph");
        Var dist = action_distribution(pv, state, history, actions);
        Var lp = pick(log(dist), idx);
        total = t == 0 ? lp : add(total, lp);
        if (entropy_sum != nullptr) {
            Var h = scale(sum(mul(dist, log(dist))), -1.0);
            *entropy_sum = entropy_sum->valid() ? add(*entropy_sum, h) : h;
        }
        state = env.step(state, actions[static_cast<size_t>(idx)]);
        if (t + 1 < horizon)
            history = encode_step(pv, history,
                                  action_embedding(pv, actions[static_cast<size_t>(idx)]));
    }
    (void)tape;
    return total;
}

std::vector<Trajectory> sample_batch(const ParamSet& params, const Environment& env,
                                     const EmbedModel* reward_model,
                                     std::span<const Triple> triples, int64_t rollouts_per_triple,
                                     const RolloutOptions& options, uint64_t seed,
                                     int64_t workers) {
    if (rollouts_per_triple < 1)
        throw std::invalid_argument("sample_batch: rollouts_per_triple must be >= 1");
    int64_t n_jobs = static_cast<int64_t>(triples.size()) * rollouts_per_triple;
    std::vector<Trajectory> out(static_cast<size_t>(n_jobs));

    auto run_range = [&](int64_t lo, int64_t hi) {
        Tape tape;
        PolicyVars pv = attach_policy(tape, params);
        size_t mark = tape.mark();
        for (int64_t job = lo; job < hi; ++job) {
            int64_t triple_idx = job / rollouts_per_triple;
            int64_t rollout_idx = job % rollouts_per_triple;
            const Triple& t = triples[static_cast<size_t>(triple_idx)];
            Query query{t.head, t.relation, t.tail};
            // Seed depends only on (seed, triple, rollout): worker count
            // never changes the batch.
            Rng rng(mix_seed(seed, static_cast<uint64_t>(triple_idx),
                             static_cast<uint64_t>(rollout_idx)));
            out[static_cast<size_t>(job)] =
                sample_rollout(tape, pv, env, reward_model, query, options, rng);
            tape.rewind(mark);
        }
    };

    workers = std::max<int64_t>(1, std::min(workers, n_jobs));
    if (workers == 1 || n_jobs <= 1) {
        run_range(0, n_jobs);
        return out;
    }
    std::vector<std::thread> threads;
    int64_t chunk = (n_jobs + workers - 1) / workers;
    for (int64_t w = 0; w < workers; ++w) {
        int64_t lo = w * chunk;
        int64_t hi = std::min(n_jobs, lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back(run_range, lo, hi);
    }
    for (auto& th : threads) th.join();
    return out;
}

}  // namespace metawalk
