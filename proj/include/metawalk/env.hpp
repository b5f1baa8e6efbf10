#pragma once
// The reasoning MDP: states carry (query relation, source, current entity,
// step); actions are outgoing edges plus an always-available self-loop; the
// walk runs a fixed number of steps and scores only the final entity.

#include <cstdint>
#include <vector>

#include "metawalk/embed.hpp"
#include "metawalk/kg.hpp"

namespace metawalk {

inline constexpr EntityId kNoAnswer = -1;

struct Query {
    EntityId source = -1;
    RelationId relation = -1;
    EntityId answer = kNoAnswer;  // known in train/eval, absent at inference
    bool has_answer() const { return answer != kNoAnswer; }
    auto operator<=>(const Query&) const = default;
};

struct State {
    RelationId query_relation = -1;
    EntityId source = -1;
    EntityId current = -1;
    int64_t step = 0;
    auto operator<=>(const State&) const = default;
};

struct Action {
    RelationId relation = -1;
    EntityId target = -1;
    auto operator<=>(const Action&) const = default;
};

struct EnvConfig {
    int64_t horizon = 3;
    int64_t action_cap = 256;
    // During training (and eval under the same protocol) the gold edge
    // (source, r_q, answer) is hidden whenever the walker sits on the source,
    // and its synthesized inverse whenever it sits on the answer. Without
    // this the agent just copies the edge it is being asked to predict.
    bool mask_gold_edge = true;
};

class Environment {
public:
    Environment(const Graph& graph, EnvConfig config);

    State reset(const Query& query) const;

    // Ordered: self-loop first, then out-edges sorted by (relation, target).
    // Over the cap, the self-loop plus the first cap-1 edges survive. With
    // use_mask the gold edge and its inverse are filtered before capping.
    std::vector<Action> action_space(const State& state, const Query& query, bool use_mask) const;
    std::vector<Action> action_space(const State& state, const Query& query, bool use_mask,
                                     int64_t cap) const;

    // Contract: action must be the self-loop or a graph edge from the current
    // entity, and the horizon must not be exhausted. Violations throw
    // std::logic_error. (Cap truncation is a caller policy and is not
    // re-checked here.)
    State step(const State& state, const Action& action) const;

    // Defined only at the horizon: 1 on a hit, otherwise the reward model's
    // score, or 0 with no model.
    double terminal_reward(const State& state, const Query& query,
                           const EmbedModel* reward_model) const;

    const Graph& graph() const { return *graph_; }
    const EnvConfig& config() const { return config_; }
    int64_t horizon() const { return config_.horizon; }

private:
    const Graph* graph_;
    EnvConfig config_;
};

}  // namespace metawalk
