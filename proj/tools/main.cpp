// metawalk: meta-learned multi-hop reasoning over knowledge graphs.
//
// Subcommands: ingest, split, pretrain, meta-train, adapt, eval, sweep,
// explain. Every tunable is an app-level option; a --config file supplies
// flat key=value pairs, METAWALK_* environment variables override the file,
// and command-line flags override both. Unknown config keys are rejected.
//
// Exit codes: 0 ok; 1 internal error; 2 bad invocation/input (missing file,
// malformed data, bad flag); 3 checkpoint format/version mismatch; 4 unknown
// entity or relation name.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "metawalk/checkpoint.hpp"
#include "metawalk/eval.hpp"
#include "metawalk/meta.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace metawalk;

namespace {

struct Options {
    // shared
    uint64_t seed = 0;
    int64_t workers = static_cast<int64_t>(std::max(1u, std::thread::hardware_concurrency()));
    // policy dims
    int64_t dim = 64, hidden = 64, scorer_hidden = 64;
    // environment
    int64_t horizon = 3, action_cap = 256;
    bool mask_gold_edge = true;
    // embedding reward
    std::string embed_kind = "distmult";
    int64_t embed_dim = 32, embed_epochs = 100;
    double embed_lr = 1e-2, label_smoothing = 0.1;
    std::string negative_mode = "all";
    int64_t negatives = 16;
    // relation-specific training
    int64_t rollouts = 20;
    double learn_rate = 1e-2;
    std::string baseline = "moving-average";
    double baseline_decay = 0.95, entropy_weight = 0.01, action_dropout = 0.1;
    // meta loop
    double inner_lr = 1e-2, outer_lr = 1e-3;
    int64_t task_batch = 4, support_size = 32, query_size = 32;
    int64_t inner_steps = 1, outer_steps = 500;
    bool first_order = true;
    std::string task_distribution = "uniform", outer_optimizer = "adam";
    int64_t eval_every = 50, patience = 5, val_queries = 64;
    // adaptation
    double adapt_lr = 1e-2;
    int64_t adapt_steps = 20;
    // decoding
    int64_t beam = 128, topk = 10;
    bool filtered = true;
    std::string score_mode = "max";
};

std::vector<std::pair<std::string, std::string>> config_echo(const Options& o) {
    auto b = [](bool v) { return v ? std::string("true") : std::string("false"); };
    auto f = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%g", v);
        return std::string(buf);
    };
    return {
        {"action-cap", std::to_string(o.action_cap)},
        {"action-dropout", f(o.action_dropout)},
        {"adapt-lr", f(o.adapt_lr)},
        {"adapt-steps", std::to_string(o.adapt_steps)},
        {"baseline", o.baseline},
        {"baseline-decay", f(o.baseline_decay)},
        {"beam", std::to_string(o.beam)},
        {"dim", std::to_string(o.dim)},
        {"embed-dim", std::to_string(o.embed_dim)},
        {"embed-epochs", std::to_string(o.embed_epochs)},
        {"embed-kind", o.embed_kind},
        {"embed-lr", f(o.embed_lr)},
        {"entropy-weight", f(o.entropy_weight)},
        {"eval-every", std::to_string(o.eval_every)},
        {"filtered", b(o.filtered)},
        {"first-order", b(o.first_order)},
        {"hidden", std::to_string(o.hidden)},
        {"horizon", std::to_string(o.horizon)},
        {"inner-lr", f(o.inner_lr)},
        {"inner-steps", std::to_string(o.inner_steps)},
        {"label-smoothing", f(o.label_smoothing)},
        {"learn-rate", f(o.learn_rate)},
        {"mask-gold-edge", b(o.mask_gold_edge)},
        {"negative-mode", o.negative_mode},
        {"negatives", std::to_string(o.negatives)},
        {"outer-lr", f(o.outer_lr)},
        {"outer-optimizer", o.outer_optimizer},
        {"outer-steps", std::to_string(o.outer_steps)},
        {"patience", std::to_string(o.patience)},
        {"query-size", std::to_string(o.query_size)},
        {"rollouts", std::to_string(o.rollouts)},
        {"score-mode", o.score_mode},
        {"scorer-hidden", std::to_string(o.scorer_hidden)},
        {"seed", std::to_string(o.seed)},
        {"support-size", std::to_string(o.support_size)},
        {"task-batch", std::to_string(o.task_batch)},
        {"task-distribution", o.task_distribution},
        {"topk", std::to_string(o.topk)},
        {"val-queries", std::to_string(o.val_queries)},
        {"workers", std::to_string(o.workers)},
    };
}

void print_config(const Options& o) {
    for (const auto& [k, v] : config_echo(o)) std::cout << "# " << k << "=" << v << "\n";
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw ParseError("missing file: " + path);
}

ParamSet load_policy_checkpoint(const std::string& path) {
    require_file(path);
    ParamSet p = load_params(path);
    if (p.meta.count("model") == 0 || p.meta.at("model") != "policy")
        throw CheckpointVersionError(path + ": not a policy checkpoint");
    return p;
}

EmbedModel load_reward(const std::string& path) {
    require_file(path);
    return EmbedModel::load(path);
}

Graph load_graph(const std::string& path) {
    require_file(path);
    return Graph::load(path);
}

struct Manifest {
    int64_t threshold = 0;
    std::vector<std::string> normal;
    std::vector<std::string> fewshot;
};

Manifest load_manifest(const std::string& path) {
    require_file(path);
    std::ifstream in(path);
    ordered_json j = ordered_json::parse(in);
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
        throw CheckpointVersionError(path + ": unsupported manifest version");
    Manifest m;
    m.threshold = j["K"].get<int64_t>();
    for (const auto& row : j["normal"]) m.normal.push_back(row["relation"].get<std::string>());
    for (const auto& row : j["fewshot"]) m.fewshot.push_back(row["relation"].get<std::string>());
    return m;
}

std::vector<RelationId> relation_ids(const Graph& g, const std::vector<std::string>& names) {
    std::vector<RelationId> ids;
    ids.reserve(names.size());
    for (const auto& n : names) ids.push_back(g.relations().id_of(n));
    return ids;
}

EnvConfig env_config_from(const Options& o, const ParamSet* checkpoint, const CLI::App* app) {
    EnvConfig cfg{o.horizon, o.action_cap, o.mask_gold_edge};
    if (checkpoint == nullptr) return cfg;
    // Checkpoint metadata wins unless the flag was supplied explicitly.
    auto overridden = [app](const std::string& name) {
        const CLI::Option* opt = app->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    const auto& meta = checkpoint->meta;
    if (!overridden("--horizon") && meta.count("horizon"))
        cfg.horizon = std::stoll(meta.at("horizon"));
    if (!overridden("--action-cap") && meta.count("action_cap"))
        cfg.action_cap = std::stoll(meta.at("action_cap"));
    if (!overridden("--mask-gold-edge") && meta.count("mask_gold_edge"))
        cfg.mask_gold_edge = meta.at("mask_gold_edge") == "1";
    return cfg;
}

TrainConfig adapt_config(const Options& o) {
    TrainConfig tc;
    tc.rollouts_per_triple = o.rollouts;
    tc.learn_rate = o.adapt_lr;
    tc.baseline = o.baseline == "none" ? BaselineKind::None : BaselineKind::MovingAverage;
    tc.baseline_decay = o.baseline_decay;
    tc.entropy_weight = o.entropy_weight;
    tc.action_dropout = o.action_dropout;
    tc.steps = o.adapt_steps;
    tc.seed = o.seed;
    tc.workers = o.workers;
    return tc;
}

MetaConfig meta_config(const Options& o) {
    MetaConfig mc;
    mc.inner_lr = o.inner_lr;
    mc.outer_lr = o.outer_lr;
    mc.task_batch = o.task_batch;
    mc.support_size = o.support_size;
    mc.query_size = o.query_size;
    mc.inner_steps = o.inner_steps;
    mc.outer_steps = o.outer_steps;
    mc.first_order = o.first_order;
    mc.task_distribution = o.task_distribution == "frequency"
                               ? TaskDistribution::FrequencyProportional
                               : TaskDistribution::Uniform;
    mc.outer_optimizer = o.outer_optimizer == "sgd" ? OuterOptimizer::Sgd : OuterOptimizer::Adam;
    mc.rollout.rollouts_per_triple = o.rollouts;
    mc.rollout.baseline = o.baseline == "none" ? BaselineKind::None : BaselineKind::MovingAverage;
    mc.rollout.baseline_decay = o.baseline_decay;
    mc.rollout.entropy_weight = o.entropy_weight;
    mc.rollout.action_dropout = o.action_dropout;
    mc.rollout.workers = o.workers;
    mc.eval_every = o.eval_every;
    mc.patience = o.patience;
    mc.val_queries = o.val_queries;
    mc.val_beam_width = std::min<int64_t>(o.beam, 32);
    mc.seed = o.seed;
    return mc;
}

BeamConfig beam_config(const Options& o) {
    return {o.beam, o.score_mode == "sum" ? ScoreMode::SumPaths : ScoreMode::MaxPath, true};
}

std::string sanitize(const std::string& name) {
    std::string out = name;
    for (char& c : out)
        if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
    return out;
}

void write_metric_table(std::ostream& out, const Graph& g, const MetricReport& report) {
    out << "relation\tqueries\tMRR\tHits@1\tHits@10\n";
    char buf[160];
    for (const auto& [rel, m] : report.per_relation) {
        std::snprintf(buf, sizeof buf, "%s\t%lld\t%.2f\t%.2f\t%.2f\n",
                      g.relations().name(rel).c_str(), static_cast<long long>(m.count),
                      100.0 * m.mrr, 100.0 * m.hits1, 100.0 * m.hits10);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "ALL\t%lld\t%.2f\t%.2f\t%.2f\n",
                  static_cast<long long>(report.count), 100.0 * report.mrr, 100.0 * report.hits1,
                  100.0 * report.hits10);
    out << buf;
}

void dump_answers(std::ostream& out, const Graph& g, const std::vector<RankedAnswer>& answers,
                  int64_t topk) {
    for (const RankedAnswer& a : answers) {
        out << g.entities().name(a.query.source) << "\t" << g.relations().name(a.query.relation)
            << "\t" << (a.query.has_answer() ? g.entities().name(a.query.answer) : "?") << "\t"
            << a.gold_rank;
        int64_t shown = 0;
        char buf[32];
        for (const Candidate& c : a.candidates) {
            if (shown++ == topk) break;
            std::snprintf(buf, sizeof buf, "%.6f", c.score);
            out << "\t" << g.entities().name(c.entity) << "\t" << buf << "\t"
                << render_path(g, a.query.source, c.path);
        }
        out << "\n";
    }
}

int cmd_ingest(const Options& o, const std::string& train, const std::string& valid,
               const std::string& test, bool no_inverses, const std::string& out) {
    print_config(o);
    require_file(train);
    if (!valid.empty()) require_file(valid);
    if (!test.empty()) require_file(test);
    Dataset data = load_dataset(train, valid, test);
    Graph g = build_graph(std::move(data), !no_inverses);
    g.save(out);
    std::cout << "entities\t" << g.num_entities() << "\n";
    std::cout << "relations\t" << g.num_forward_relations() << "\n";
    std::cout << "train\t" << g.train_triples().size() << "\n";
    std::cout << "valid\t" << g.valid_triples().size() << "\n";
    std::cout << "test\t" << g.test_triples().size() << "\n";
    std::cout << "graph\t" << out << "\n";
    return 0;
}

int cmd_split(const Options& o, const std::string& graph_path, int64_t k,
              const std::string& out) {
    print_config(o);
    Graph g = load_graph(graph_path);
    TaskSplit split = split_by_frequency(g.train_triples(), k);

    ordered_json j;
    j["format_version"] = 1;
    j["K"] = k;
    auto section = [&](const std::map<RelationId, std::vector<Triple>>& tasks) {
        ordered_json rows = ordered_json::array();
        for (const auto& [rel, triples] : tasks) {
            Task task = make_task(g, rel);
            rows.push_back({{"relation", g.relations().name(rel)},
                            {"train", task.train.size()},
                            {"valid", task.valid.size()},
                            {"test", task.test.size()}});
        }
        return rows;
    };
    j["normal"] = section(split.normal);
    j["fewshot"] = section(split.fewshot);
    std::ofstream f(out);
    if (!f) throw ParseError("cannot write manifest: " + out);
    f << j.dump(2) << "\n";

    std::cout << "normal-relations\t" << split.normal.size() << "\n";
    std::cout << "fewshot-relations\t" << split.fewshot.size() << "\n";
    int64_t fewshot_triples = 0;
    for (const auto& [rel, triples] : split.fewshot)
        fewshot_triples += static_cast<int64_t>(triples.size());
    std::cout << "fewshot-train-triples\t" << fewshot_triples << "\n";
    std::cout << "manifest\t" << out << "\n";
    return 0;
}

int cmd_pretrain(const Options& o, const std::string& graph_path, const std::string& split_path,
                 const std::string& out) {
    print_config(o);
    Graph g = load_graph(graph_path);
    Manifest manifest = load_manifest(split_path);

    std::vector<Triple> normal_train;
    std::vector<bool> is_normal(static_cast<size_t>(g.num_relations()), false);
    for (RelationId r : relation_ids(g, manifest.normal)) is_normal[static_cast<size_t>(r)] = true;
    for (const Triple& t : g.train_triples())
        if (is_normal[static_cast<size_t>(t.relation)]) normal_train.push_back(t);

    EmbedConfig cfg;
    cfg.kind = embed_kind_from_string(o.embed_kind);
    cfg.dim = o.embed_dim;
    cfg.epochs = o.embed_epochs;
    cfg.learn_rate = o.embed_lr;
    cfg.label_smoothing = o.label_smoothing;
    cfg.negative_mode = o.negative_mode;
    cfg.negatives_per_positive = o.negatives;
    cfg.seed = o.seed;

    PretrainResult result = pretrain(g, normal_train, cfg);
    result.model.save(out);

    char buf[64];
    std::cout << "triples\t" << normal_train.size() << "\n";
    std::cout << "epochs\t" << cfg.epochs << "\n";
    if (!result.epoch_loss.empty()) {
        std::snprintf(buf, sizeof buf, "%.6f", result.epoch_loss.front());
        std::cout << "first-epoch-loss\t" << buf << "\n";
        std::snprintf(buf, sizeof buf, "%.6f", result.epoch_loss.back());
        std::cout << "last-epoch-loss\t" << buf << "\n";
    }
    std::cout << "reward-model\t" << out << "\n";
    return 0;
}

int cmd_meta_train(const Options& o, const std::string& graph_path, const std::string& split_path,
                   const std::string& reward_path, const std::string& out) {
    print_config(o);
    Graph g = load_graph(graph_path);
    Manifest manifest = load_manifest(split_path);
    EmbedModel reward;
    const EmbedModel* reward_ptr = nullptr;
    if (!reward_path.empty()) {
        reward = load_reward(reward_path);
        reward_ptr = &reward;
    }

    std::vector<Task> tasks;
    for (RelationId r : relation_ids(g, manifest.normal)) {
        Task task = make_task(g, r);
        if (!task.train.empty()) tasks.push_back(std::move(task));
    }

    Environment env(g, {o.horizon, o.action_cap, o.mask_gold_edge});
    PolicyConfig pc{o.dim, o.hidden, o.scorer_hidden};
    MetaConfig mc = meta_config(o);

    std::cout << "outer_step\tquery_loss\tquery_reward\tval_mrr\n";
    MetaLog log = [](const MetaTrainStats& s) {
        char buf[128];
        if (s.val_mrr >= 0.0)
            std::snprintf(buf, sizeof buf, "%lld\t%.6f\t%.6f\t%.6f\n",
                          static_cast<long long>(s.outer_step), s.mean_query_loss,
                          s.mean_query_reward, s.val_mrr);
        else
            std::snprintf(buf, sizeof buf, "%lld\t%.6f\t%.6f\t-\n",
                          static_cast<long long>(s.outer_step), s.mean_query_loss,
                          s.mean_query_reward);
        std::cout << buf;
    };
    ParamSet theta = meta_train(g, env, reward_ptr, tasks, pc, mc, log);
    theta.meta["horizon"] = std::to_string(o.horizon);
    theta.meta["action_cap"] = std::to_string(o.action_cap);
    theta.meta["mask_gold_edge"] = o.mask_gold_edge ? "1" : "0";
    save_params(theta, out);
    std::cout << "checkpoint\t" << out << "\n";
    return 0;
}

int cmd_adapt(const Options& o, const CLI::App* app, const std::string& graph_path,
              const std::string& split_path, const std::string& checkpoint_path,
              const std::string& reward_path, const std::string& relation,
              const std::string& out) {
    print_config(o);
    Graph g = load_graph(graph_path);
    Manifest manifest = load_manifest(split_path);
    ParamSet theta = load_policy_checkpoint(checkpoint_path);
    EmbedModel reward;
    const EmbedModel* reward_ptr = nullptr;
    if (!reward_path.empty()) {
        reward = load_reward(reward_path);
        reward_ptr = &reward;
    }
    Environment env(g, env_config_from(o, &theta, app));
    MetaConfig mc = meta_config(o);

    std::vector<std::string> names;
    if (relation == "all")
        names = manifest.fewshot;
    else
        names.push_back(relation);

    bool directory = relation == "all";
    if (directory) fs::create_directories(out);
    for (const std::string& name : names) {
        RelationId rel = g.relations().id_of(name);
        Task task = make_task(g, rel);
        if (task.train.empty())
            throw std::invalid_argument("relation " + name + " has no train triples to adapt on");
        ParamSet adapted = adapt_fewshot(theta, env, reward_ptr, task, o.adapt_lr, o.adapt_steps,
                                         mc, mix_seed(o.seed, static_cast<uint64_t>(rel)));
        adapted.meta = theta.meta;
        adapted.meta["adapted_relation"] = name;
        std::string path = directory ? (fs::path(out) / (sanitize(name) + ".mwck")).string() : out;
        save_params(adapted, path);
        std::cout << "adapted\t" << name << "\t" << task.train.size() << "\t" << path << "\n";
    }
    return 0;
}

int cmd_eval(const Options& o, const CLI::App* app, const std::string& graph_path,
             const std::string& split_path, const std::string& checkpoint_path,
             const std::string& adapted_dir, const std::string& section,
             const std::string& relation, const std::string& out, const std::string& dump_path) {
    print_config(o);
    Graph g = load_graph(graph_path);
    Manifest manifest = load_manifest(split_path);
    ParamSet theta = load_policy_checkpoint(checkpoint_path);
    Environment env(g, env_config_from(o, &theta, app));

    std::vector<std::string> names;
    if (!relation.empty()) {
        names.push_back(relation);
    } else {
        if (section == "fewshot" || section == "all")
            names.insert(names.end(), manifest.fewshot.begin(), manifest.fewshot.end());
        if (section == "normal" || section == "all")
            names.insert(names.end(), manifest.normal.begin(), manifest.normal.end());
    }

    BeamConfig beam = beam_config(o);
    KnownTails known(g);
    std::vector<RankedAnswer> answers;
    for (const std::string& name : names) {
        RelationId rel = g.relations().id_of(name);
        Task task = make_task(g, rel);
        if (task.test.empty()) continue;

        const ParamSet* params = &theta;
        ParamSet adapted;
        if (!adapted_dir.empty()) {
            fs::path p = fs::path(adapted_dir) / (sanitize(name) + ".mwck");
            if (fs::exists(p)) {
                adapted = load_policy_checkpoint(p.string());
                params = &adapted;
            }
        }
        for (const Triple& t : task.test) {
            Query q{t.head, t.relation, t.tail};
            answers.push_back(beam_search(*params, env, q, beam));
        }
    }
    if (answers.empty()) throw std::invalid_argument("eval: no test queries in selection");
    MetricReport report = compute_metrics(answers, known, o.filtered);

    write_metric_table(std::cout, g, report);
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw ParseError("cannot write metric table: " + out);
        write_metric_table(f, g, report);
    }
    if (!dump_path.empty()) {
        std::ofstream f(dump_path);
        if (!f) throw ParseError("cannot write answer dump: " + dump_path);
        dump_answers(f, g, answers, o.topk);
    }
    return 0;
}

int cmd_sweep(const Options& o, const CLI::App* app, const std::string& graph_path,
              const std::string& split_path, const std::string& checkpoint_path,
              const std::string& reward_path, const std::string& k_list, const std::string& out) {
    print_config(o);
    Graph g = load_graph(graph_path);
    Manifest manifest = load_manifest(split_path);
    ParamSet theta = load_policy_checkpoint(checkpoint_path);
    EmbedModel reward;
    const EmbedModel* reward_ptr = nullptr;
    if (!reward_path.empty()) {
        reward = load_reward(reward_path);
        reward_ptr = &reward;
    }
    Environment env(g, env_config_from(o, &theta, app));

    std::vector<std::optional<int64_t>> ks;
    std::stringstream ss(k_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "max")
            ks.push_back(std::nullopt);
        else
            ks.push_back(std::stoll(item));
    }
    if (ks.empty()) throw std::invalid_argument("sweep: empty K list");

    auto tasks = make_tasks(g, relation_ids(g, manifest.fewshot));
    KnownTails known(g);
    AdaptEvalConfig cfg{adapt_config(o), beam_config(o), o.seed, o.workers};
    auto rows = robustness_sweep(theta, env, reward_ptr, tasks, ks, known, cfg);

    std::ostringstream table;
    table << "K\tqueries\tMRR\tHits@1\tHits@10\n";
    char buf[128];
    for (const SweepRow& row : rows) {
        std::snprintf(buf, sizeof buf, "%s\t%lld\t%.2f\t%.2f\t%.2f\n", row.k_label.c_str(),
                      static_cast<long long>(row.report.count), 100.0 * row.report.mrr,
                      100.0 * row.report.hits1, 100.0 * row.report.hits10);
        table << buf;
    }
    std::cout << table.str();
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw ParseError("cannot write sweep table: " + out);
        f << table.str();
    }
    return 0;
}

int cmd_explain(const Options& o, const CLI::App* app, const std::string& graph_path,
                const std::string& checkpoint_path, const std::string& source,
                const std::string& relation) {
    print_config(o);
    Graph g = load_graph(graph_path);
    ParamSet theta = load_policy_checkpoint(checkpoint_path);
    Environment env(g, env_config_from(o, &theta, app));

    Query q{g.entities().id_of(source), g.relations().id_of(relation), kNoAnswer};
    RankedAnswer ans = beam_search(theta, env, q, beam_config(o));

    char buf[32];
    int64_t shown = 0;
    for (const Candidate& c : ans.candidates) {
        if (shown++ == o.topk) break;
        std::snprintf(buf, sizeof buf, "%.6f", c.score);
        std::cout << shown << "\t" << g.entities().name(c.entity) << "\t" << buf << "\t"
                  << render_path(g, q.source, c.path) << "\n";
    }
    return 0;
}

void add_env_names(CLI::App& app) {
    for (CLI::Option* opt : app.get_options()) {
        if (opt->get_lnames().empty()) continue;
        std::string name = opt->get_lnames()[0];
        if (name.empty() || name == "help") continue;
        std::string env = "METAWALK_";
        for (char c : name) env += c == '-' ? '_' : static_cast<char>(std::toupper(c));
        opt->envname(env);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meta-learned multi-hop knowledge-graph reasoner"};
    app.require_subcommand(1);
    Options o;

    app.set_config("--config", "", "flat key=value config file; flags override");
    app.allow_config_extras(CLI::config_extras_mode::error);  // unknown keys rejected
    app.add_option("--seed", o.seed, "global random seed");
    app.add_option("--workers", o.workers, "rollout/evaluation worker threads");
    app.add_option("--dim", o.dim, "entity/relation embedding width");
    app.add_option("--hidden", o.hidden, "LSTM hidden width");
    app.add_option("--scorer-hidden", o.scorer_hidden, "scorer hidden width");
    app.add_option("--horizon", o.horizon, "walk length T");
    app.add_option("--action-cap", o.action_cap, "max actions per step");
    app.add_flag("--mask-gold-edge,!--no-mask-gold-edge", o.mask_gold_edge,
                 "hide the queried edge during training/eval");
    app.add_option("--embed-kind", o.embed_kind, "reward model kind: distmult|conve")
        ->check(CLI::IsMember({"distmult", "conve"}));
    app.add_option("--embed-dim", o.embed_dim, "reward embedding width");
    app.add_option("--embed-epochs", o.embed_epochs, "reward pretraining epochs");
    app.add_option("--embed-lr", o.embed_lr, "reward pretraining learning rate");
    app.add_option("--label-smoothing", o.label_smoothing, "reward pretraining label smoothing");
    app.add_option("--negative-mode", o.negative_mode, "reward negatives: all|sampled")
        ->check(CLI::IsMember({"all", "sampled"}));
    app.add_option("--negatives", o.negatives, "sampled negatives per positive");
    app.add_option("--rollouts", o.rollouts, "rollouts per training triple");
    app.add_option("--learn-rate", o.learn_rate, "relation-specific learning rate");
    app.add_option("--baseline", o.baseline, "reward baseline: none|moving-average")
        ->check(CLI::IsMember({"none", "moving-average"}));
    app.add_option("--baseline-decay", o.baseline_decay, "moving-average baseline decay");
    app.add_option("--entropy-weight", o.entropy_weight, "entropy bonus weight (annealed to 0)");
    app.add_option("--action-dropout", o.action_dropout, "sampling-time action dropout rate");
    app.add_option("--inner-lr", o.inner_lr, "meta inner-loop learning rate");
    app.add_option("--outer-lr", o.outer_lr, "meta outer-loop learning rate");
    app.add_option("--task-batch", o.task_batch, "tasks per outer step");
    app.add_option("--support-size", o.support_size, "support triples per task");
    app.add_option("--query-size", o.query_size, "query triples per task");
    app.add_option("--inner-steps", o.inner_steps, "inner gradient steps");
    app.add_option("--outer-steps", o.outer_steps, "outer steps");
    app.add_flag("--first-order,!--exact-meta", o.first_order,
                 "first-order outer gradient (exact mode unsupported)");
    app.add_option("--task-distribution", o.task_distribution, "task sampling: uniform|frequency")
        ->check(CLI::IsMember({"uniform", "frequency"}));
    app.add_option("--outer-optimizer", o.outer_optimizer, "outer optimizer: adam|sgd")
        ->check(CLI::IsMember({"adam", "sgd"}));
    app.add_option("--eval-every", o.eval_every, "meta-validation cadence (0 = off)");
    app.add_option("--patience", o.patience, "meta-validation patience");
    app.add_option("--val-queries", o.val_queries, "meta-validation query budget");
    app.add_option("--adapt-lr", o.adapt_lr, "few-shot adaptation learning rate");
    app.add_option("--adapt-steps", o.adapt_steps, "few-shot adaptation steps");
    app.add_option("--beam", o.beam, "beam width");
    app.add_option("--topk", o.topk, "answers shown per query");
    app.add_flag("--filtered,!--raw", o.filtered, "filtered vs raw ranking");
    app.add_option("--score-mode", o.score_mode, "entity score: max|sum over beams")
        ->check(CLI::IsMember({"max", "sum"}));
    add_env_names(app);

    auto* ingest = app.add_subcommand("ingest", "parse triple files into a graph checkpoint");
    std::string in_train, in_valid, in_test, in_out;
    bool no_inverses = false;
    ingest->add_option("--train", in_train, "train triple file")->required();
    ingest->add_option("--valid", in_valid, "valid triple file");
    ingest->add_option("--test", in_test, "test triple file");
    ingest->add_flag("--no-inverses", no_inverses, "skip synthesized inverse edges");
    ingest->add_option("--out", in_out, "graph checkpoint path")->required();

    auto* split = app.add_subcommand("split", "split relations into normal vs few-shot tasks");
    std::string sp_graph, sp_out;
    int64_t sp_k = 0;
    split->add_option("--graph", sp_graph, "graph checkpoint")->required();
    split->add_option("--K", sp_k, "few-shot threshold (count < K)")->required();
    split->add_option("--out", sp_out, "manifest path")->required();

    auto* pre = app.add_subcommand("pretrain", "pretrain the embedding reward model");
    std::string pr_graph, pr_split, pr_out;
    pre->add_option("--graph", pr_graph, "graph checkpoint")->required();
    pre->add_option("--split", pr_split, "task-split manifest")->required();
    pre->add_option("--out", pr_out, "reward checkpoint path")->required();

    auto* mt = app.add_subcommand("meta-train", "learn the meta initialization");
    std::string mt_graph, mt_split, mt_reward, mt_out;
    mt->add_option("--graph", mt_graph, "graph checkpoint")->required();
    mt->add_option("--split", mt_split, "task-split manifest")->required();
    mt->add_option("--reward-model", mt_reward, "reward checkpoint (optional)");
    mt->add_option("--out", mt_out, "meta checkpoint path")->required();

    auto* ad = app.add_subcommand("adapt", "fast-adapt to a few-shot relation");
    std::string ad_graph, ad_split, ad_ckpt, ad_reward, ad_rel, ad_out;
    ad->add_option("--graph", ad_graph, "graph checkpoint")->required();
    ad->add_option("--split", ad_split, "task-split manifest")->required();
    ad->add_option("--checkpoint", ad_ckpt, "meta checkpoint")->required();
    ad->add_option("--reward-model", ad_reward, "reward checkpoint (optional)");
    ad->add_option("--relation", ad_rel, "relation name, or 'all' for every few-shot relation")
        ->required();
    ad->add_option("--out", ad_out, "output checkpoint path (directory for 'all')")->required();

    auto* ev = app.add_subcommand("eval", "rank test queries and report MRR/Hits");
    std::string ev_graph, ev_split, ev_ckpt, ev_dir, ev_section = "fewshot", ev_rel, ev_out,
                                                     ev_dump;
    ev->add_option("--graph", ev_graph, "graph checkpoint")->required();
    ev->add_option("--split", ev_split, "task-split manifest")->required();
    ev->add_option("--checkpoint", ev_ckpt, "policy checkpoint")->required();
    ev->add_option("--adapted-dir", ev_dir, "directory of per-relation adapted checkpoints");
    ev->add_option("--section", ev_section, "fewshot|normal|all")
        ->check(CLI::IsMember({"fewshot", "normal", "all"}));
    ev->add_option("--relation", ev_rel, "evaluate a single relation");
    ev->add_option("--out", ev_out, "metric table path");
    ev->add_option("--dump", ev_dump, "answer dump path");

    auto* sw = app.add_subcommand("sweep", "robustness sweep over the few-shot threshold");
    std::string sw_graph, sw_split, sw_ckpt, sw_reward, sw_klist = "1,5,10,max", sw_out;
    sw->add_option("--graph", sw_graph, "graph checkpoint")->required();
    sw->add_option("--split", sw_split, "task-split manifest")->required();
    sw->add_option("--checkpoint", sw_ckpt, "meta checkpoint")->required();
    sw->add_option("--reward-model", sw_reward, "reward checkpoint (optional)");
    sw->add_option("--K-list", sw_klist, "comma-separated K values; 'max' keeps everything");
    sw->add_option("--out", sw_out, "sweep table path");

    auto* ex = app.add_subcommand("explain", "decode top answers with reasoning paths");
    std::string ex_graph, ex_ckpt, ex_source, ex_rel;
    ex->add_option("--graph", ex_graph, "graph checkpoint")->required();
    ex->add_option("--checkpoint", ex_ckpt, "policy checkpoint")->required();
    ex->add_option("--source", ex_source, "source entity name")->required();
    ex->add_option("--relation", ex_rel, "query relation name")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(o, in_train, in_valid, in_test, no_inverses, in_out);
        if (*split) return cmd_split(o, sp_graph, sp_k, sp_out);
        if (*pre) return cmd_pretrain(o, pr_graph, pr_split, pr_out);
        if (*mt) return cmd_meta_train(o, mt_graph, mt_split, mt_reward, mt_out);
        if (*ad) return cmd_adapt(o, &app, ad_graph, ad_split, ad_ckpt, ad_reward, ad_rel, ad_out);
        if (*ev)
            return cmd_eval(o, &app, ev_graph, ev_split, ev_ckpt, ev_dir, ev_section, ev_rel,
                            ev_out, ev_dump);
        if (*sw)
            return cmd_sweep(o, &app, sw_graph, sw_split, sw_ckpt, sw_reward, sw_klist, sw_out);
        if (*ex) return cmd_explain(o, &app, ex_graph, ex_ckpt, ex_source, ex_rel);
        return 2;
    } catch (const CheckpointVersionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
