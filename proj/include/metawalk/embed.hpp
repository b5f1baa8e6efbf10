#pragma once
// Knowledge-graph embedding scorers used as the soft terminal reward and for
// reranking: DistMult (trilinear product) and a ConvE-style pipeline
// (reshape to 2-D, correlate with learned filters, ReLU, flatten, project,
// dot with the tail embedding plus tail bias). Both squash through a sigmoid
// so scores live in (0,1).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metawalk/kg.hpp"
#include "metawalk/tensor.hpp"

namespace metawalk {

enum class EmbedKind { DistMult, ConvE };

std::string to_string(EmbedKind kind);
EmbedKind embed_kind_from_string(const std::string& name);

struct EmbedConfig {
    EmbedKind kind = EmbedKind::DistMult;
    int64_t dim = 32;
    // ConvE only: the head/relation embeddings are viewed as reshape_rows x
    // (dim / reshape_rows) maps, stacked vertically. 0 = pick automatically.
    int64_t reshape_rows = 0;
    int64_t filters = 8;
    int64_t kernel = 3;

    int64_t epochs = 100;
    double learn_rate = 1e-3;
    double label_smoothing = 0.1;
    // "all": 1-vs-all over the entity set; "sampled": per-positive negatives.
    std::string negative_mode = "all";
    int64_t negatives_per_positive = 16;
    uint64_t seed = 0;
};

class EmbedModel {
public:
    EmbedModel() = default;
    // Fresh model with seeded initialization; vocab sizes from the graph.
    EmbedModel(const Graph& graph, const EmbedConfig& config);

    double score(EntityId source, RelationId relation, EntityId tail) const;
    std::vector<double> score_all_tails(EntityId source, RelationId relation) const;

    const EmbedConfig& config() const { return config_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    int64_t num_entities() const { return n_entities_; }
    int64_t num_relations() const { return n_relations_; }

    void save(const std::string& path) const;
    static EmbedModel load(const std::string& path);

    // Builds the raw (pre-sigmoid) scores for every tail on the given tape.
    Var all_tail_logits(Tape& tape, const std::map<std::string, Var>& vars, EntityId source,
                        RelationId relation) const;

private:
    void check_ids(EntityId source, RelationId relation, EntityId tail) const;
    EmbedConfig config_;
    int64_t n_entities_ = 0;
    int64_t n_relations_ = 0;
    ParamSet params_;
    Tensor im2col_;  // ConvE: constant patch-extraction matrix, rebuilt on load
};

struct PretrainResult {
    EmbedModel model;
    std::vector<double> epoch_loss;  // mean BCE per epoch
};

// Trains on exactly the given triples (the pipeline passes normal-relation
// train triples so few-shot evaluation data never leaks into the reward).
PretrainResult pretrain(const Graph& graph, std::span<const Triple> triples,
                        const EmbedConfig& config);

// Mean reciprocal rank by exhaustive tail ranking (raw, unfiltered).
double embed_mrr(const EmbedModel& model, std::span<const Triple> triples);

}  // namespace metawalk
