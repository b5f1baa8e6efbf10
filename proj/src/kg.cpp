#include "metawalk/kg.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>

#include "metawalk/checkpoint.hpp"

namespace metawalk {

int64_t Vocab::get_or_add(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    int64_t id = static_cast<int64_t>(names_.size());
    names_.push_back(name);
    ids_.emplace(name, id);
    return id;
}

std::optional<int64_t> Vocab::find(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

int64_t Vocab::id_of(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) throw std::out_of_range("unknown name: " + name);
    return it->second;
}

const std::string& Vocab::name(int64_t id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocab id out of range: " + std::to_string(id));
    return names_[static_cast<size_t>(id)];
}

std::vector<Triple> parse_triples(std::istream& in, Vocab& entities, Vocab& relations) {
    std::vector<Triple> triples;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        size_t t3 = t2 == std::string::npos ? std::string::npos : line.find('\t', t2 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || t3 != std::string::npos)
            throw ParseError("line " + std::to_string(line_no) +
                             ": expected head<TAB>relation<TAB>tail");
        std::string head = line.substr(0, t1);
        std::string rel = line.substr(t1 + 1, t2 - t1 - 1);
        std::string tail = line.substr(t2 + 1);
        if (head.empty() || rel.empty() || tail.empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty field");
        triples.push_back(
            {entities.get_or_add(head), relations.get_or_add(rel), entities.get_or_add(tail)});
    }
    return triples;
}

Dataset load_dataset(const std::string& train_path, const std::string& valid_path,
                     const std::string& test_path) {
    Dataset data;
    auto parse_file = [&data](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open triple file: " + path);
        try {
            return parse_triples(in, data.entities, data.relations);
        } catch (const ParseError& e) {
            throw ParseError(path + ": " + e.what());
        }
    };
    data.train = parse_file(train_path);
    if (!valid_path.empty()) data.valid = parse_file(valid_path);
    if (!test_path.empty()) data.test = parse_file(test_path);
    return data;
}

RelationId Graph::inverse_of(RelationId r) const {
    if (!inverses_added_)
        throw std::invalid_argument("inverse_of: graph built without inverse edges");
    if (is_forward(r)) return n_forward_ + 2 + r;
    if (is_inverse(r)) return r - n_forward_ - 2;
    throw std::invalid_argument("inverse_of: relation " + std::to_string(r) +
                                " has no inverse (reserved)");
}

std::span<const Edge> Graph::out_edges(EntityId e) const {
    if (e < 0 || e >= num_entities())
        throw std::invalid_argument("out_edges: entity id out of range: " + std::to_string(e));
    return adjacency_[static_cast<size_t>(e)];
}

bool Graph::has_edge(EntityId head, RelationId r, EntityId tail) const {
    auto edges = out_edges(head);
    return std::binary_search(edges.begin(), edges.end(), Edge{r, tail});
}

const std::vector<Triple>& Graph::triples_of(RelationId r) const {
    auto it = by_relation_.find(r);
    if (it == by_relation_.end()) return empty_;
    return it->second;
}

Graph build_graph(Dataset data, bool add_inverses) {
    Graph g;
    g.entities_ = std::move(data.entities);
    g.relations_ = data.relations;
    g.n_forward_ = g.relations_.size();
    g.inverses_added_ = add_inverses;

    g.relations_.get_or_add(kSelfLoopName);
    g.relations_.get_or_add(kStartName);
    if (add_inverses) {
        for (RelationId r = 0; r < g.n_forward_; ++r)
            g.relations_.get_or_add(g.relations_.name(r) + kInverseSuffix);
    }

    std::set<Triple> edges;
    for (const Triple& t : data.train) {
        edges.insert(t);
        if (add_inverses) edges.insert({t.tail, g.n_forward_ + 2 + t.relation, t.head});
    }

    g.adjacency_.assign(static_cast<size_t>(g.entities_.size()), {});
    for (const Triple& t : edges) {
        g.adjacency_[static_cast<size_t>(t.head)].push_back({t.relation, t.tail});
        g.by_relation_[t.relation].push_back(t);
    }
    // std::set iteration is (head, relation, tail)-ordered, so per-entity edge
    // lists arrive already sorted by (relation, target).

    g.train_ = std::move(data.train);
    g.valid_ = std::move(data.valid);
    g.test_ = std::move(data.test);
    return g;
}

std::map<RelationId, int64_t> relation_frequency(std::span<const Triple> triples) {
    std::map<RelationId, int64_t> counts;
    for (const Triple& t : triples) counts[t.relation] += 1;
    return counts;
}

TaskSplit split_by_frequency(std::span<const Triple> triples, int64_t k) {
    if (k < 1)
        throw std::invalid_argument("split_by_frequency: threshold must be >= 1, got " +
                                    std::to_string(k));
    TaskSplit split;
    split.threshold = k;
    std::map<RelationId, std::vector<Triple>> grouped;
    for (const Triple& t : triples) grouped[t.relation].push_back(t);
    for (auto& [r, ts] : grouped) {
        if (static_cast<int64_t>(ts.size()) < k)
            split.fewshot.emplace(r, std::move(ts));
        else
            split.normal.emplace(r, std::move(ts));
    }
    return split;
}

Task make_task(const Graph& graph, RelationId relation) {
    Task task;
    task.relation = relation;
    for (const Triple& t : graph.train_triples())
        if (t.relation == relation) task.train.push_back(t);
    for (const Triple& t : graph.valid_triples())
        if (t.relation == relation) task.valid.push_back(t);
    for (const Triple& t : graph.test_triples())
        if (t.relation == relation) task.test.push_back(t);
    return task;
}

std::vector<Task> make_tasks(const Graph& graph, std::span<const RelationId> relations) {
    std::vector<Task> tasks;
    tasks.reserve(relations.size());
    for (RelationId r : relations) tasks.push_back(make_task(graph, r));
    return tasks;
}

std::pair<std::vector<Triple>, std::vector<Triple>> sample_support_query(const Task& task,
                                                                         int64_t support_size,
                                                                         int64_t query_size,
                                                                         Rng& rng) {
    const auto& pool = task.train;
    int64_t n = static_cast<int64_t>(pool.size());
    if (n == 0) throw std::invalid_argument("sample_support_query: task has no train triples");
    if (support_size < 1 || query_size < 1)
        throw std::invalid_argument("sample_support_query: sizes must be >= 1");

    std::vector<Triple> support, query;
    if (n >= support_size + query_size) {
        auto ids = rng.sample_indices(n, support_size + query_size);
        for (int64_t i = 0; i < support_size; ++i)
            support.push_back(pool[static_cast<size_t>(ids[static_cast<size_t>(i)])]);
        for (int64_t i = support_size; i < support_size + query_size; ++i)
            query.push_back(pool[static_cast<size_t>(ids[static_cast<size_t>(i)])]);
        return {support, query};
    }

    // Tiny task: support drawn with replacement, query = never-drawn remainder.
    std::vector<bool> drawn(static_cast<size_t>(n), false);
    for (int64_t i = 0; i < support_size; ++i) {
        int64_t j = rng.below(n);
        drawn[static_cast<size_t>(j)] = true;
        support.push_back(pool[static_cast<size_t>(j)]);
    }
    for (int64_t j = 0; j < n; ++j)
        if (!drawn[static_cast<size_t>(j)]) query.push_back(pool[static_cast<size_t>(j)]);
    if (query.empty()) query = pool;
    return {support, query};
}

void Graph::save(const std::string& path) const {
    BinWriter w(path);
    write_header(w, kGraphMagic);
    w.u32(inverses_added_ ? 1 : 0);
    w.u64(static_cast<uint64_t>(num_entities()));
    for (int64_t i = 0; i < num_entities(); ++i) w.str(entities_.name(i));
    w.u64(static_cast<uint64_t>(n_forward_));
    for (int64_t i = 0; i < n_forward_; ++i) w.str(relations_.name(i));
    auto write_triples = [&w](const std::vector<Triple>& ts) {
        w.u64(ts.size());
        for (const Triple& t : ts) {
            w.u32(static_cast<uint32_t>(t.head));
            w.u32(static_cast<uint32_t>(t.relation));
            w.u32(static_cast<uint32_t>(t.tail));
        }
    };
    write_triples(train_);
    write_triples(valid_);
    write_triples(test_);
    w.close();
}

Graph Graph::load(const std::string& path) {
    BinReader r(path);
    read_header(r, kGraphMagic, path);
    bool inverses = r.u32() != 0;
    Dataset data;
    uint64_t n_ent = r.u64();
    for (uint64_t i = 0; i < n_ent; ++i) data.entities.get_or_add(r.str());
    if (static_cast<uint64_t>(data.entities.size()) != n_ent)
        throw CheckpointError(path + ": duplicate entity names");
    uint64_t n_rel = r.u64();
    for (uint64_t i = 0; i < n_rel; ++i) data.relations.get_or_add(r.str());
    if (static_cast<uint64_t>(data.relations.size()) != n_rel)
        throw CheckpointError(path + ": duplicate relation names");
    auto read_triples = [&r, n_ent, n_rel, &path]() {
        uint64_t n = r.u64();
        std::vector<Triple> ts(n);
        for (auto& t : ts) {
            t.head = r.u32();
            t.relation = r.u32();
            t.tail = r.u32();
            if (t.head >= static_cast<int64_t>(n_ent) || t.tail >= static_cast<int64_t>(n_ent) ||
                t.relation >= static_cast<int64_t>(n_rel))
                throw CheckpointError(path + ": triple id out of range");
        }
        return ts;
    };
    data.train = read_triples();
    data.valid = read_triples();
    data.test = read_triples();
    // Rebuilding through build_graph reproduces adjacency bit-for-bit.
    return build_graph(std::move(data), inverses);
}

}  // namespace metawalk
