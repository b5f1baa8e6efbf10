#pragma once
// Shared test fixtures and independent oracles. Everything here avoids the
// library's tape/policy internals where it acts as an oracle: the scalar
// LSTM and scorer are straight-line re-implementations, and the exhaustive
// ranker enumerates paths instead of beam searching.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "metawalk/env.hpp"
#include "metawalk/kg.hpp"
#include "metawalk/policy.hpp"

namespace metawalk::testsupport {

Dataset dataset_from_text(const std::string& train, const std::string& valid = "",
                          const std::string& test = "");

// e0 -next-> e1 -next-> ... -next-> e{n-1}; all triples in train.
Graph chain_graph(int64_t n, bool add_inverses = true);

// Random multigraph; every triple lands in train.
Graph random_graph(uint64_t seed, int64_t n_entities, int64_t n_relations, int64_t n_edges,
                   bool add_inverses = true);

// Three entity layers a/b/c. "first" relations map layer a to b, "second"
// relations map b to c, both functional and dense. Composite relations are
// first-then-second pairs: normal composites get train/valid/test partitions,
// few-shot composites keep only `support_size` train triples and push the
// rest to test.
struct CompositionalKg {
    Graph graph;
    std::vector<RelationId> normal_relations;
    std::vector<RelationId> fewshot_relations;
};

CompositionalKg compositional_kg(uint64_t seed, int64_t layer_size = 66, int64_t n_first = 4,
                                 int64_t n_second = 3, int64_t n_fewshot_first = 1,
                                 int64_t support_size = 5);

// Independent scalar LSTM cell (gate order i, f, g, o; c' = f*c + i*g,
// h' = o * tanh(c')).
std::pair<std::vector<double>, std::vector<double>> scalar_lstm_cell(
    const std::vector<double>& x, const std::vector<double>& h_prev,
    const std::vector<double>& c_prev, const Tensor& wx, const Tensor& wh, const Tensor& b);

// Independent straight-line scorer: probs over actions from raw parameter
// tensors, no tape involved.
std::vector<double> scalar_action_distribution(const ParamSet& params, const State& state,
                                               const std::vector<double>& history_h,
                                               const std::vector<Action>& actions);

// Exhaustive decoding oracle: enumerate every length-horizon action sequence,
// score each final entity by the maximum cumulative log-probability, and sort
// by (score desc, entity asc).
std::vector<std::pair<EntityId, double>> exhaustive_ranking(const ParamSet& params,
                                                            const Environment& env,
                                                            const Query& query, bool gold_mask);

}  // namespace metawalk::testsupport
