#pragma once
// Beam-search decoding into ranked answers with explanation paths, filtered
// MRR/Hits metrics, and the few-shot robustness sweep over the truncation
// threshold.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metawalk/reinforce.hpp"

namespace metawalk {

struct PathStep {
    RelationId relation = -1;
    EntityId entity = -1;
    auto operator<=>(const PathStep&) const = default;
};

struct Candidate {
    EntityId entity = -1;
    double score = 0.0;  // cumulative log-probability
    std::vector<PathStep> path;
};

struct RankedAnswer {
    Query query;
    std::vector<Candidate> candidates;  // score-descending, ties by entity id
    int64_t gold_rank = 0;              // filled by compute_metrics; 0 = unranked
};

enum class ScoreMode { MaxPath, SumPaths };

struct BeamConfig {
    int64_t width = 128;
    ScoreMode score_mode = ScoreMode::MaxPath;
    // Hide the gold edge exactly as during training (only meaningful when the
    // query carries its answer).
    bool gold_mask = true;
};

// Width-limited decoding: keep the top-B partial paths by cumulative
// log-probability, expand every action each step, and at the horizon score
// each distinct final entity by the maximum (or log-sum-exp) over its beams.
RankedAnswer beam_search(const ParamSet& params, const Environment& env, const Query& query,
                         const BeamConfig& config);

// Known (source, relation) -> tails index for filtered ranking.
class KnownTails {
public:
    KnownTails() = default;
    explicit KnownTails(const Graph& graph);  // train + valid + test triples
    void add(const Triple& t);
    bool contains(EntityId source, RelationId relation, EntityId tail) const;

private:
    std::map<std::pair<EntityId, RelationId>, std::vector<EntityId>> tails_;
};

struct RelationMetrics {
    double mrr = 0.0, hits1 = 0.0, hits10 = 0.0;
    int64_t count = 0;
};

struct MetricReport {
    double mrr = 0.0, hits1 = 0.0, hits10 = 0.0;
    int64_t count = 0;
    std::map<RelationId, RelationMetrics> per_relation;
};

// Filtered protocol by default: other known-true tails are removed from above
// the gold before its rank is read off. Gold absent from the candidate list
// contributes reciprocal rank 0. Sets gold_rank on each answer.
MetricReport compute_metrics(std::span<RankedAnswer> answers, const KnownTails& known,
                             bool filtered = true);

// Replays every candidate path through the environment; true when each one is
// graph-valid and ends at its claimed entity.
bool paths_replay_valid(const RankedAnswer& answer, const Environment& env);

struct AdaptEvalConfig {
    TrainConfig adapt;       // learn_rate/steps drive few-shot adaptation
    BeamConfig beam;
    uint64_t seed = 0;
    int64_t workers = 1;
};

// Adapt from theta on the task's (possibly truncated) train triples, then
// beam-decode the task's test queries.
std::vector<RankedAnswer> adapt_and_eval_task(const ParamSet& theta, const Environment& env,
                                              const EmbedModel* reward_model, const Task& task,
                                              std::optional<int64_t> truncate_to,
                                              const AdaptEvalConfig& config);

struct SweepRow {
    std::string k_label;  // "1", "5", ... or "max"
    MetricReport report;
};

// One row per K: few-shot train sets truncated to K triples (seeded sample,
// std::nullopt = keep everything), adaptation re-run, test queries decoded.
std::vector<SweepRow> robustness_sweep(const ParamSet& theta, const Environment& env,
                                       const EmbedModel* reward_model, std::span<const Task> tasks,
                                       std::span<const std::optional<int64_t>> k_values,
                                       const KnownTails& known, const AdaptEvalConfig& config);

// `(a) -r1-> (b) -r2-> (c)`; trailing self-loops are dropped.
std::string render_path(const Graph& graph, EntityId source, std::span<const PathStep> path);

}  // namespace metawalk
