#include "metawalk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metawalk {

namespace {

struct BeamItem {
    EntityId entity;
    LstmState history;
    double logp;
    std::vector<PathStep> path;
};

double log_sum_exp(double a, double b) {
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

RankedAnswer beam_search(const ParamSet& params, const Environment& env, const Query& query,
                         const BeamConfig& config) {
    if (config.width < 1) throw std::invalid_argument("beam_search: width must be >= 1");

    Tape tape;
    PolicyVars pv = attach_policy(tape, params);
    env.reset(query);  // id validation

    std::vector<BeamItem> beam;
    beam.push_back({query.source,
                    encode_step(pv, initial_history(pv),
                                action_embedding(pv, {env.graph().start_relation(), query.source})),
                    0.0,
                    {}});

    struct Expansion {
        double logp;
        size_t item;
        size_t action;
        Action act;
    };

    for (int64_t t = 0; t < env.horizon(); ++t) {
        std::vector<Expansion> expansions;
        std::vector<std::vector<Action>> spaces(beam.size());
        for (size_t i = 0; i < beam.size(); ++i) {
            State state{query.relation, query.source, beam[i].entity, t};
            spaces[i] = env.action_space(state, query, config.gold_mask);
            Var dist = action_distribution(pv, state, beam[i].history, spaces[i]);
            const auto& probs = dist.value().v;
            for (size_t a = 0; a < spaces[i].size(); ++a)
                expansions.push_back(
                    {beam[i].logp + guarded_log(probs[a]), i, a, spaces[i][a]});
        }
        std::sort(expansions.begin(), expansions.end(), [](const Expansion& x, const Expansion& y) {
            if (x.logp != y.logp) return x.logp > y.logp;
            if (x.item != y.item) return x.item < y.item;
            return x.action < y.action;
        });
        if (static_cast<int64_t>(expansions.size()) > config.width)
            expansions.resize(static_cast<size_t>(config.width));

        std::vector<BeamItem> next;
        next.reserve(expansions.size());
        for (const Expansion& e : expansions) {
            BeamItem item{e.act.target, beam[e.item].history, e.logp, beam[e.item].path};
            item.path.push_back({e.act.relation, e.act.target});
            if (t + 1 < env.horizon())
                item.history = encode_step(pv, beam[e.item].history, action_embedding(pv, e.act));
            next.push_back(std::move(item));
        }
        beam = std::move(next);
    }

    // Group finished beams by final entity.
    std::map<EntityId, Candidate> grouped;
    std::map<EntityId, double> best_path_score;
    for (const BeamItem& item : beam) {
        auto it = grouped.find(item.entity);
        if (it == grouped.end()) {
            grouped.emplace(item.entity, Candidate{item.entity, item.logp, item.path});
            best_path_score.emplace(item.entity, item.logp);
            continue;
        }
        Candidate& cand = it->second;
        if (config.score_mode == ScoreMode::SumPaths)
            cand.score = log_sum_exp(cand.score, item.logp);
        else
            cand.score = std::max(cand.score, item.logp);
        // The explanation stays the single best path either way.
        if (item.logp > best_path_score.at(item.entity)) {
            best_path_score[item.entity] = item.logp;
            cand.path = item.path;
        }
    }

    RankedAnswer answer;
    answer.query = query;
    answer.candidates.reserve(grouped.size());
    for (auto& [entity, cand] : grouped) answer.candidates.push_back(std::move(cand));
    std::sort(answer.candidates.begin(), answer.candidates.end(),
              [](const Candidate& x, const Candidate& y) {
                  if (x.score != y.score) return x.score > y.score;
                  return x.entity < y.entity;
              });
    return answer;
}

KnownTails::KnownTails(const Graph& graph) {
    for (const Triple& t : graph.train_triples()) add(t);
    for (const Triple& t : graph.valid_triples()) add(t);
    for (const Triple& t : graph.test_triples()) add(t);
}

void KnownTails::add(const Triple& t) { tails_[{t.head, t.relation}].push_back(t.tail); }

bool KnownTails::contains(EntityId source, RelationId relation, EntityId tail) const {
    auto it = tails_.find({source, relation});
    if (it == tails_.end()) return false;
    return std::find(it->second.begin(), it->second.end(), tail) != it->second.end();
}

MetricReport compute_metrics(std::span<RankedAnswer> answers, const KnownTails& known,
                             bool filtered) {
    if (answers.empty()) throw std::invalid_argument("compute_metrics: empty answer set");
    MetricReport report;
    for (RankedAnswer& answer : answers) {
        const Query& q = answer.query;
        if (!q.has_answer())
            throw std::invalid_argument("compute_metrics: query without a gold answer");
        int64_t rank = 0;
        int64_t position = 0;
        for (const Candidate& cand : answer.candidates) {
            if (cand.entity == q.answer) {
                rank = position + 1;
                break;
            }
            // Filtered protocol: other known-true tails do not occupy ranks.
            if (filtered && known.contains(q.source, q.relation, cand.entity)) continue;
            ++position;
        }
        answer.gold_rank = rank;

        double rr = rank > 0 ? 1.0 / static_cast<double>(rank) : 0.0;
        double h1 = rank == 1 ? 1.0 : 0.0;
        double h10 = (rank >= 1 && rank <= 10) ? 1.0 : 0.0;
        report.mrr += rr;
        report.hits1 += h1;
        report.hits10 += h10;
        report.count += 1;
        auto& rel = report.per_relation[q.relation];
        rel.mrr += rr;
        rel.hits1 += h1;
        rel.hits10 += h10;
        rel.count += 1;
    }
    report.mrr /= static_cast<double>(report.count);
    report.hits1 /= static_cast<double>(report.count);
    report.hits10 /= static_cast<double>(report.count);
    for (auto& [r, m] : report.per_relation) {
        m.mrr /= static_cast<double>(m.count);
        m.hits1 /= static_cast<double>(m.count);
        m.hits10 /= static_cast<double>(m.count);
    }
    return report;
}

bool paths_replay_valid(const RankedAnswer& answer, const Environment& env) {
    for (const Candidate& cand : answer.candidates) {
        State state = env.reset(Query{answer.query.source, answer.query.relation, kNoAnswer});
        try {
            for (const PathStep& step : cand.path)
                state = env.step(state, Action{step.relation, step.entity});
        } catch (const std::logic_error&) {
            return false;
        }
        if (state.current != cand.entity) return false;
    }
    return true;
}

std::vector<RankedAnswer> adapt_and_eval_task(const ParamSet& theta, const Environment& env,
                                              const EmbedModel* reward_model, const Task& task,
                                              std::optional<int64_t> truncate_to,
                                              const AdaptEvalConfig& config) {
    std::vector<Triple> train = task.train;
    if (truncate_to && static_cast<int64_t>(train.size()) > *truncate_to) {
        Rng rng(mix_seed(config.seed, static_cast<uint64_t>(task.relation), 0x7c0cULL));
        auto keep = rng.sample_indices(static_cast<int64_t>(train.size()), *truncate_to);
        std::sort(keep.begin(), keep.end());
        std::vector<Triple> kept;
        kept.reserve(keep.size());
        for (int64_t i : keep) kept.push_back(train[static_cast<size_t>(i)]);
        train = std::move(kept);
    }

    TrainConfig adapt = config.adapt;
    adapt.seed = mix_seed(config.seed, static_cast<uint64_t>(task.relation), 0xadacULL);
    adapt.workers = config.workers;
    ParamSet adapted = train.empty() ? theta : train_relation(theta, env, reward_model, train, adapt);

    std::vector<RankedAnswer> answers(task.test.size());
    for (size_t i = 0; i < task.test.size(); ++i) {
        Query q{task.test[i].head, task.test[i].relation, task.test[i].tail};
        answers[i] = beam_search(adapted, env, q, config.beam);
    }
    return answers;
}

std::vector<SweepRow> robustness_sweep(const ParamSet& theta, const Environment& env,
                                       const EmbedModel* reward_model, std::span<const Task> tasks,
                                       std::span<const std::optional<int64_t>> k_values,
                                       const KnownTails& known, const AdaptEvalConfig& config) {
    std::vector<SweepRow> rows;
    for (const auto& k : k_values) {
        if (k && *k < 1) throw std::invalid_argument("robustness_sweep: K must be >= 1");
        std::vector<RankedAnswer> answers;
        for (const Task& task : tasks) {
            auto task_answers = adapt_and_eval_task(theta, env, reward_model, task, k, config);
            for (auto& a : task_answers) answers.push_back(std::move(a));
        }
        SweepRow row;
        row.k_label = k ? std::to_string(*k) : "max";
        row.report = compute_metrics(answers, known, true);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string render_path(const Graph& graph, EntityId source, std::span<const PathStep> path) {
    size_t end = path.size();
    while (end > 0 && path[end - 1].relation == graph.self_loop()) --end;
    std::string out = "(" + graph.entities().name(source) + ")";
    for (size_t i = 0; i < end; ++i) {
        out += " -" + graph.relations().name(path[i].relation) + "-> (" +
               graph.entities().name(path[i].entity) + ")";
    }
    return out;
}

}  // namespace metawalk
