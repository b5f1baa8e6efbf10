#include "metawalk/env.hpp"

#include <stdexcept>

namespace metawalk {

Environment::Environment(const Graph& graph, EnvConfig config)
    : graph_(&graph), config_(config) {
    if (config_.horizon < 1) throw std::invalid_argument("Environment: horizon must be >= 1");
    if (config_.action_cap < 1) throw std::invalid_argument("Environment: action_cap must be >= 1");
}

State Environment::reset(const Query& query) const {
    if (query.source < 0 || query.source >= graph_->num_entities())
        throw std::invalid_argument("reset: unknown source entity id " +
                                    std::to_string(query.source));
    if (query.relation < 0 || query.relation >= graph_->num_relations())
        throw std::invalid_argument("reset: unknown relation id " + std::to_string(query.relation));
    if (query.has_answer() && (query.answer < 0 || query.answer >= graph_->num_entities()))
        throw std::invalid_argument("reset: unknown answer entity id " +
                                    std::to_string(query.answer));
    return State{query.relation, query.source, query.source, 0};
}

std::vector<Action> Environment::action_space(const State& state, const Query& query,
                                              bool use_mask) const {
    return action_space(state, query, use_mask, config_.action_cap);
}

std::vector<Action> Environment::action_space(const State& state, const Query& query,
                                              bool use_mask, int64_t cap) const {
    std::vector<Action> actions;
    actions.push_back({graph_->self_loop(), state.current});

    bool mask = use_mask && config_.mask_gold_edge && query.has_answer();
    RelationId inv = (mask && graph_->has_inverses() && graph_->is_forward(query.relation))
                         ? graph_->inverse_of(query.relation)
                         : -1;

    for (const Edge& e : graph_->out_edges(state.current)) {
        if (mask) {
            if (state.current == query.source && e.relation == query.relation &&
                e.target == query.answer)
                continue;
            if (inv >= 0 && state.current == query.answer && e.relation == inv &&
                e.target == query.source)
                continue;
        }
        actions.push_back({e.relation, e.target});
        if (static_cast<int64_t>(actions.size()) == cap) break;
    }
    return actions;
}

State Environment::step(const State& state, const Action& action) const {
    if (state.step >= config_.horizon)
        throw std::logic_error("step: horizon exhausted at t=" + std::to_string(state.step));
    bool self_loop = action.relation == graph_->self_loop() && action.target == state.current;
    if (!self_loop && !graph_->has_edge(state.current, action.relation, action.target))
        throw std::logic_error("step: action is not available from entity " +
                               graph_->entities().name(state.current));
    return State{state.query_relation, state.source, action.target, state.step + 1};
}

double Environment::terminal_reward(const State& state, const Query& query,
                                    const EmbedModel* reward_model) const {
    if (state.step != config_.horizon)
        throw std::logic_error("terminal_reward: called at t=" + std::to_string(state.step) +
                               " before horizon " + std::to_string(config_.horizon));
    if (query.has_answer() && state.current == query.answer) return 1.0;
    if (reward_model == nullptr) return 0.0;
    return reward_model->score(query.source, query.relation, state.current);
}

}  // namespace metawalk
