#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace metawalk::testsupport {

Dataset dataset_from_text(const std::string& train, const std::string& valid,
                          const std::string& test) {
    Dataset d;
    std::istringstream tr(train), va(valid), te(test);
    d.train = parse_triples(tr, d.entities, d.relations);
    d.valid = parse_triples(va, d.entities, d.relations);
    d.test = parse_triples(te, d.entities, d.relations);
    return d;
}

Graph chain_graph(int64_t n, bool add_inverses) {
    std::string text;
    for (int64_t i = 0; i + 1 < n; ++i)
        text += "e" + std::to_string(i) + "\tnext\te" + std::to_string(i + 1) + "\n";
    return build_graph(dataset_from_text(text), add_inverses);
}

Graph random_graph(uint64_t seed, int64_t n_entities, int64_t n_relations, int64_t n_edges,
                   bool add_inverses) {
    Rng rng(seed);
    std::string text;
    for (int64_t i = 0; i < n_edges; ++i) {
        int64_t h = rng.below(n_entities);
        int64_t r = rng.below(n_relations);
        int64_t t = rng.below(n_entities);
        text += "e" + std::to_string(h) + "\tr" + std::to_string(r) + "\te" + std::to_string(t) +
                "\n";
    }
    // Make sure every entity exists even if it drew no random edge.
    for (int64_t e = 0; e < n_entities; ++e)
        text += "e" + std::to_string(e) + "\tr0\te" + std::to_string((e + 1) % n_entities) + "\n";
    return build_graph(dataset_from_text(text), add_inverses);
}

CompositionalKg compositional_kg(uint64_t seed, int64_t layer_size, int64_t n_first,
                                 int64_t n_second, int64_t n_fewshot_first,
                                 int64_t support_size) {
    Rng rng(mix_seed(seed, 0xc0deULL));
    int64_t total_first = n_first + n_fewshot_first;

    // Functional base maps a->b and b->c.
    std::vector<std::vector<int64_t>> fmap(static_cast<size_t>(total_first)),
        gmap(static_cast<size_t>(n_second));
    for (auto& m : fmap) {
        m.resize(static_cast<size_t>(layer_size));
        for (auto& x : m) x = rng.below(layer_size);
    }
    for (auto& m : gmap) {
        m.resize(static_cast<size_t>(layer_size));
        for (auto& x : m) x = rng.below(layer_size);
    }

    auto a = [](int64_t i) { return "a" + std::to_string(i); };
    auto b = [](int64_t i) { return "b" + std::to_string(i); };
    auto c = [](int64_t i) { return "c" + std::to_string(i); };

    std::string train, valid, test;
    for (int64_t k = 0; k < total_first; ++k)
        for (int64_t i = 0; i < layer_size; ++i)
            train += a(i) + "\tf" + std::to_string(k) + "\t" + b(fmap[static_cast<size_t>(k)][static_cast<size_t>(i)]) + "\n";
    for (int64_t j = 0; j < n_second; ++j)
        for (int64_t i = 0; i < layer_size; ++i)
            train += b(i) + "\tg" + std::to_string(j) + "\t" + c(gmap[static_cast<size_t>(j)][static_cast<size_t>(i)]) + "\n";

    std::vector<std::string> normal_names, fewshot_names;
    for (int64_t k = 0; k < total_first; ++k) {
        for (int64_t j = 0; j < n_second; ++j) {
            std::string rel = "q" + std::to_string(k) + "x" + std::to_string(j);
            std::vector<int64_t> order(static_cast<size_t>(layer_size));
            for (int64_t i = 0; i < layer_size; ++i) order[static_cast<size_t>(i)] = i;
            rng.shuffle(order);
            bool fewshot = k >= n_first;
            int64_t n_train = fewshot ? support_size : (layer_size * 7) / 10;
            int64_t n_valid = fewshot ? 0 : layer_size / 10;
            for (int64_t idx = 0; idx < layer_size; ++idx) {
                int64_t i = order[static_cast<size_t>(idx)];
                int64_t target =
                    gmap[static_cast<size_t>(j)][static_cast<size_t>(fmap[static_cast<size_t>(k)][static_cast<size_t>(i)])];
                std::string line = a(i) + "\t" + rel + "\t" + c(target) + "\n";
                if (idx < n_train)
                    train += line;
                else if (idx < n_train + n_valid)
                    valid += line;
                else
                    test += line;
            }
            (fewshot ? fewshot_names : normal_names).push_back(rel);
        }
    }

    CompositionalKg kg;
    kg.graph = build_graph(dataset_from_text(train, valid, test), true);
    for (const auto& name : normal_names)
        kg.normal_relations.push_back(kg.graph.relations().id_of(name));
    for (const auto& name : fewshot_names)
        kg.fewshot_relations.push_back(kg.graph.relations().id_of(name));
    return kg;
}

std::pair<std::vector<double>, std::vector<double>> scalar_lstm_cell(
    const std::vector<double>& x, const std::vector<double>& h_prev,
    const std::vector<double>& c_prev, const Tensor& wx, const Tensor& wh, const Tensor& b) {
    size_t in = x.size();
    size_t h = h_prev.size();
    std::vector<double> z(4 * h);
    for (size_t g = 0; g < 4 * h; ++g) {
        double acc = b.v[g];
        for (size_t i = 0; i < in; ++i) acc += x[i] * wx.v[i * 4 * h + g];
        for (size_t i = 0; i < h; ++i) acc += h_prev[i] * wh.v[i * 4 * h + g];
        z[g] = acc;
    }
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<double> h_next(h), c_next(h);
    for (size_t i = 0; i < h; ++i) {
        double ig = sig(z[i]);
        double fg = sig(z[h + i]);
        double gg = std::tanh(z[2 * h + i]);
        double og = sig(z[3 * h + i]);
        c_next[i] = fg * c_prev[i] + ig * gg;
        h_next[i] = og * std::tanh(c_next[i]);
    }
    return {h_next, c_next};
}

std::vector<double> scalar_action_distribution(const ParamSet& params, const State& state,
                                               const std::vector<double>& history_h,
                                               const std::vector<Action>& actions) {
    const Tensor& ent = params.at("entity_emb");
    const Tensor& rel = params.at("relation_emb");
    const Tensor& w1 = params.at("w1");
    const Tensor& w2 = params.at("w2");
    size_t d = static_cast<size_t>(ent.cols());
    size_t h = history_h.size();

    std::vector<double> x;
    for (size_t k = 0; k < d; ++k) x.push_back(ent.v[static_cast<size_t>(state.current) * d + k]);
    for (double v : history_h) x.push_back(v);
    for (size_t k = 0; k < d; ++k)
        x.push_back(rel.v[static_cast<size_t>(state.query_relation) * d + k]);

    size_t s = static_cast<size_t>(w1.cols());
    std::vector<double> hidden(s, 0.0);
    for (size_t i = 0; i < 2 * d + h; ++i)
        for (size_t j = 0; j < s; ++j) hidden[j] += x[i] * w1.v[i * s + j];
    for (double& v : hidden) v = v > 0.0 ? v : 0.0;

    std::vector<double> key(2 * d, 0.0);
    for (size_t i = 0; i < s; ++i)
        for (size_t j = 0; j < 2 * d; ++j) key[j] += hidden[i] * w2.v[i * 2 * d + j];

    std::vector<double> logits;
    for (const Action& action : actions) {
        double acc = 0.0;
        for (size_t k = 0; k < d; ++k)
            acc += rel.v[static_cast<size_t>(action.relation) * d + k] * key[k];
        for (size_t k = 0; k < d; ++k)
            acc += ent.v[static_cast<size_t>(action.target) * d + k] * key[d + k];
        logits.push_back(acc);
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double total = 0.0;
    std::vector<double> probs(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - mx);
        total += probs[i];
    }
    for (double& p : probs) p /= total;
    return probs;
}

namespace {

void enumerate_paths(Tape& tape, const PolicyVars& pv, const Environment& env, const Query& query,
                     bool gold_mask, const State& state, const LstmState& history, double logp,
                     int64_t depth, std::map<EntityId, double>& best) {
    if (depth == env.horizon()) {
        auto it = best.find(state.current);
        if (it == best.end() || logp > it->second) best[state.current] = logp;
        return;
    }
    auto actions = env.action_space(state, query, gold_mask);
    Var dist = action_distribution(pv, state, history, actions);
    std::vector<double> probs = dist.value().v;
    for (size_t i = 0; i < actions.size(); ++i) {
        double lp = logp + guarded_log(probs[i]);
        State next = env.step(state, actions[i]);
        size_t mark = tape.mark();
        LstmState next_history =
            depth + 1 < env.horizon() ? encode_step(pv, history, action_embedding(pv, actions[i]))
                                      : history;
        enumerate_paths(tape, pv, env, query, gold_mask, next, next_history, lp, depth + 1, best);
        tape.rewind(mark);
    }
}

}  // namespace

std::vector<std::pair<EntityId, double>> exhaustive_ranking(const ParamSet& params,
                                                            const Environment& env,
                                                            const Query& query, bool gold_mask) {
    Tape tape;
    PolicyVars pv = attach_policy(tape, params);
    State state = env.reset(query);
    LstmState history = encode_step(
        pv, initial_history(pv),
        action_embedding(pv, {env.graph().start_relation(), query.source}));
    std::map<EntityId, double> best;
    enumerate_paths(tape, pv, env, query, gold_mask, state, history, 0.0, 0, best);

    std::vector<std::pair<EntityId, double>> ranked(best.begin(), best.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });
    return ranked;
}

}  // namespace metawalk::testsupport
