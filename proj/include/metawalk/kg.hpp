#pragma once
// Knowledge-graph store: triple parsing, vocabularies, the reasoning graph
// with synthesized inverse edges, and frequency-based task splitting.
//
// Relation id layout after build_graph:
//   [0, F)          forward relations, in first-seen file order
//   F               reserved self-loop relation
//   F + 1           reserved start relation (initial history token)
//   [F+2, 2F+2)     synthesized inverses, inverse_of(r) = F + 2 + r

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "metawalk/rng.hpp"

namespace metawalk {

using EntityId = int64_t;
using RelationId = int64_t;

inline constexpr const char* kSelfLoopName = "@self_loop";
inline constexpr const char* kStartName = "@start";
inline constexpr const char* kInverseSuffix = "@inv";

struct Triple {
    EntityId head = -1;
    RelationId relation = -1;
    EntityId tail = -1;
    auto operator<=>(const Triple&) const = default;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Vocab {
public:
    int64_t get_or_add(const std::string& name);
    std::optional<int64_t> find(const std::string& name) const;
    // Throws std::out_of_range naming the missing symbol.
    int64_t id_of(const std::string& name) const;
    const std::string& name(int64_t id) const;
    int64_t size() const { return static_cast<int64_t>(names_.size()); }
    bool operator==(const Vocab& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int64_t> ids_;
};

// Parse `head<TAB>relation<TAB>tail` lines, extending the vocabularies in
// first-seen order. Blank lines are skipped; anything else malformed is a
// ParseError naming the 1-based line number.
std::vector<Triple> parse_triples(std::istream& in, Vocab& entities, Vocab& relations);

// Vocabularies plus train/valid/test partitions (forward relations only).
struct Dataset {
    Vocab entities;
    Vocab relations;
    std::vector<Triple> train, valid, test;
};

Dataset load_dataset(const std::string& train_path, const std::string& valid_path = "",
                     const std::string& test_path = "");

struct Edge {
    RelationId relation = -1;
    EntityId target = -1;
    auto operator<=>(const Edge&) const = default;
};

class Graph {
public:
    const Vocab& entities() const { return entities_; }
    const Vocab& relations() const { return relations_; }
    int64_t num_entities() const { return entities_.size(); }
    int64_t num_relations() const { return relations_.size(); }
    int64_t num_forward_relations() const { return n_forward_; }

    RelationId self_loop() const { return n_forward_; }
    RelationId start_relation() const { return n_forward_ + 1; }
    bool has_inverses() const { return inverses_added_; }
    bool is_forward(RelationId r) const { return r >= 0 && r < n_forward_; }
    bool is_inverse(RelationId r) const { return r >= n_forward_ + 2 && r < num_relations(); }
    // Maps forward <-> inverse; rejects the reserved relations.
    RelationId inverse_of(RelationId r) const;

    std::span<const Edge> out_edges(EntityId e) const;
    bool has_edge(EntityId head, RelationId r, EntityId tail) const;
    // Graph edges grouped by relation (includes synthesized inverses).
    const std::vector<Triple>& triples_of(RelationId r) const;

    const std::vector<Triple>& train_triples() const { return train_; }
    const std::vector<Triple>& valid_triples() const { return valid_; }
    const std::vector<Triple>& test_triples() const { return test_; }

    void save(const std::string& path) const;
    static Graph load(const std::string& path);

    friend Graph build_graph(Dataset data, bool add_inverses);

private:
    Vocab entities_;
    Vocab relations_;  // forward + reserved + inverses
    int64_t n_forward_ = 0;
    bool inverses_added_ = false;
    std::vector<std::vector<Edge>> adjacency_;  // sorted by (relation, target), deduplicated
    std::map<RelationId, std::vector<Triple>> by_relation_;
    std::vector<Triple> train_, valid_, test_;
    std::vector<Triple> empty_;
};

// Edges come from the train partition; valid/test triples ride along for task
// formation and evaluation but never become edges.
Graph build_graph(Dataset data, bool add_inverses = true);

struct TaskSplit {
    int64_t threshold = 0;
    std::map<RelationId, std::vector<Triple>> normal;
    std::map<RelationId, std::vector<Triple>> fewshot;
};

// Frequency over the given triples (callers pass forward train triples).
// A relation is few-shot iff its count < k. k must be >= 1.
TaskSplit split_by_frequency(std::span<const Triple> triples, int64_t k);

std::map<RelationId, int64_t> relation_frequency(std::span<const Triple> triples);

struct Task {
    RelationId relation = -1;
    std::vector<Triple> train, valid, test;
};

Task make_task(const Graph& graph, RelationId relation);
std::vector<Task> make_tasks(const Graph& graph, std::span<const RelationId> relations);

// Support and query samples from the task's train partition. When the task
// has at least support + query triples the two sets are disjoint; otherwise
// the support set is drawn with replacement and the query set is whatever was
// never drawn (the full train set if nothing remains).
std::pair<std::vector<Triple>, std::vector<Triple>> sample_support_query(const Task& task,
                                                                         int64_t support_size,
                                                                         int64_t query_size,
                                                                         Rng& rng);

}  // namespace metawalk
