#include "metawalk/embed.hpp"

#include <algorithm>
#include <cmath>

#include "metawalk/checkpoint.hpp"

namespace metawalk {

namespace {

int64_t pick_reshape_rows(int64_t dim) {
    // Largest divisor of dim that is <= sqrt(dim); keeps the 2-D map roughly square.
    int64_t best = 1;
    for (int64_t r = 1; r * r <= dim; ++r)
        if (dim % r == 0) best = r;
    return best;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Patch-extraction matrix for a valid 2-D correlation over an H x W input:
// row (position, cell) -> flattened input index.
Tensor build_im2col(int64_t h, int64_t w, int64_t kernel) {
    int64_t oh = h - kernel + 1;
    int64_t ow = w - kernel + 1;
    if (oh < 1 || ow < 1)
        throw std::invalid_argument("ConvE: kernel " + std::to_string(kernel) +
                                    " does not fit the " + std::to_string(h) + "x" +
                                    std::to_string(w) + " stacked input");
    int64_t patch = kernel * kernel;
    Tensor p = Tensor::zeros({oh * ow * patch, h * w});
    int64_t row = 0;
    for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j)
            for (int64_t ki = 0; ki < kernel; ++ki)
                for (int64_t kj = 0; kj < kernel; ++kj) {
                    int64_t col = (i + ki) * w + (j + kj);
                    p.v[static_cast<size_t>(row * h * w + col)] = 1.0;
                    ++row;
                }
    return p;
}

}  // namespace

std::string to_string(EmbedKind kind) {
    return kind == EmbedKind::DistMult ? "distmult" : "conve";
}

EmbedKind embed_kind_from_string(const std::string& name) {
    if (name == "distmult") return EmbedKind::DistMult;
    if (name == "conve") return EmbedKind::ConvE;
    throw std::invalid_argument("unknown embedding kind: " + name);
}

EmbedModel::EmbedModel(const Graph& graph, const EmbedConfig& config)
    : config_(config), n_entities_(graph.num_entities()), n_relations_(graph.num_relations()) {
    if (config_.dim < 1) throw std::invalid_argument("EmbedModel: dim must be >= 1");
    Rng rng(mix_seed(config_.seed, 0x3bedULL));
    double bound = 1.0 / std::sqrt(static_cast<double>(config_.dim));
    params_.insert("entity_emb", Tensor::uniform({n_entities_, config_.dim}, -bound, bound, rng));
    params_.insert("relation_emb",
                   Tensor::uniform({n_relations_, config_.dim}, -bound, bound, rng));
    if (config_.kind == EmbedKind::ConvE) {
        if (config_.reshape_rows <= 0) config_.reshape_rows = pick_reshape_rows(config_.dim);
        if (config_.dim % config_.reshape_rows != 0)
            throw std::invalid_argument("ConvE: reshape_rows must divide dim");
        int64_t h = 2 * config_.reshape_rows;
        int64_t w = config_.dim / config_.reshape_rows;
        im2col_ = build_im2col(h, w, config_.kernel);
        int64_t patch = config_.kernel * config_.kernel;
        int64_t positions = (h - config_.kernel + 1) * (w - config_.kernel + 1);
        double fbound = 1.0 / std::sqrt(static_cast<double>(patch));
        params_.insert("conv_filters",
                       Tensor::uniform({patch, config_.filters}, -fbound, fbound, rng));
        double pbound = 1.0 / std::sqrt(static_cast<double>(positions * config_.filters));
        params_.insert("proj_w", Tensor::uniform({positions * config_.filters, config_.dim},
                                                 -pbound, pbound, rng));
        params_.insert("tail_bias", Tensor::zeros({n_entities_}));
    }
    params_.meta["model"] = "embed";
    params_.meta["kind"] = to_string(config_.kind);
    params_.meta["dim"] = std::to_string(config_.dim);
    params_.meta["reshape_rows"] = std::to_string(config_.reshape_rows);
    params_.meta["filters"] = std::to_string(config_.filters);
    params_.meta["kernel"] = std::to_string(config_.kernel);
    params_.meta["seed"] = std::to_string(config_.seed);
}

void EmbedModel::check_ids(EntityId source, RelationId relation, EntityId tail) const {
    if (source < 0 || source >= n_entities_)
        throw std::invalid_argument("EmbedModel: entity id out of range: " +
                                    std::to_string(source));
    if (tail >= n_entities_)
        throw std::invalid_argument("EmbedModel: entity id out of range: " + std::to_string(tail));
    if (relation < 0 || relation >= n_relations_)
        throw std::invalid_argument("EmbedModel: relation id out of range: " +
                                    std::to_string(relation));
}

Var EmbedModel::all_tail_logits(Tape& tape, const std::map<std::string, Var>& vars,
                                EntityId source, RelationId relation) const {
    std::vector<int64_t> src{source}, rel{relation};
    Var e_s = reshape(gather_rows(vars.at("entity_emb"), src), {config_.dim});
    Var r_q = reshape(gather_rows(vars.at("relation_emb"), rel), {config_.dim});
    if (config_.kind == EmbedKind::DistMult) {
        // raw_i = sum_k e_s[k] r[k] E[i,k]
        return matmul(vars.at("entity_emb"), mul(e_s, r_q));
    }
    int64_t h = 2 * config_.reshape_rows;
    int64_t w = config_.dim / config_.reshape_rows;
    Var stacked = concat({e_s, r_q});  // row-major view = vertical stack of the two maps
    Var patches = reshape(matmul(tape.constant(im2col_), stacked),
                          {(h - config_.kernel + 1) * (w - config_.kernel + 1),
                           config_.kernel * config_.kernel});
    Var conv = relu(matmul(patches, vars.at("conv_filters")));
    Var flat = reshape(conv, {conv.value().numel()});
    Var proj = matmul(flat, vars.at("proj_w"));
    return add(matmul(vars.at("entity_emb"), proj), vars.at("tail_bias"));
}

std::vector<double> EmbedModel::score_all_tails(EntityId source, RelationId relation) const {
    check_ids(source, relation, 0);
    Tape tape;
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : params_.tensors()) vars.emplace(name, tape.constant(t));
    Var logits = all_tail_logits(tape, vars, source, relation);
    std::vector<double> out(logits.value().v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(logits.value().v[i]);
    return out;
}

double EmbedModel::score(EntityId source, RelationId relation, EntityId tail) const {
    check_ids(source, relation, tail);
    if (tail < 0) throw std::invalid_argument("EmbedModel: entity id out of range");
    if (config_.kind == EmbedKind::DistMult) {
        const Tensor& e = params_.at("entity_emb");
        const Tensor& r = params_.at("relation_emb");
        double raw = 0.0;
        for (int64_t k = 0; k < config_.dim; ++k)
            raw += e.v[static_cast<size_t>(source * config_.dim + k)] *
                   r.v[static_cast<size_t>(relation * config_.dim + k)] *
                   e.v[static_cast<size_t>(tail * config_.dim + k)];
        return sigmoid(raw);
    }
    // ConvE shares the whole head pipeline across tails; scalar calls go
    // through the vector path to keep the two bit-consistent.
    return score_all_tails(source, relation)[static_cast<size_t>(tail)];
}

void EmbedModel::save(const std::string& path) const { save_params(params_, path); }

EmbedModel EmbedModel::load(const std::string& path) {
    ParamSet params = load_params(path);
    if (params.meta.count("model") == 0 || params.meta.at("model") != "embed")
        throw CheckpointVersionError(path + ": not an embedding-model checkpoint");
    EmbedModel m;
    m.config_.kind = embed_kind_from_string(params.meta.at("kind"));
    m.config_.dim = std::stoll(params.meta.at("dim"));
    m.config_.reshape_rows = std::stoll(params.meta.at("reshape_rows"));
    m.config_.filters = std::stoll(params.meta.at("filters"));
    m.config_.kernel = std::stoll(params.meta.at("kernel"));
    m.config_.seed = std::stoull(params.meta.at("seed"));
    m.n_entities_ = params.at("entity_emb").rows();
    m.n_relations_ = params.at("relation_emb").rows();
    m.params_ = std::move(params);
    if (m.config_.kind == EmbedKind::ConvE) {
        int64_t h = 2 * m.config_.reshape_rows;
        int64_t w = m.config_.dim / m.config_.reshape_rows;
        m.im2col_ = build_im2col(h, w, m.config_.kernel);
    }
    return m;
}

PretrainResult pretrain(const Graph& graph, std::span<const Triple> triples,
                        const EmbedConfig& config) {
    if (triples.empty()) throw std::invalid_argument("pretrain: empty training set");
    EmbedModel model(graph, config);
    ParamSet& params = model.params();
    int64_t n_ent = model.num_entities();

    // Group gold tails per (source, relation) query for 1-vs-all targets.
    std::map<std::pair<EntityId, RelationId>, std::vector<EntityId>> tails;
    for (const Triple& t : triples) tails[{t.head, t.relation}].push_back(t.tail);
    std::vector<std::pair<EntityId, RelationId>> queries;
    queries.reserve(tails.size());
    for (const auto& [q, ts] : tails) queries.push_back(q);

    bool sampled = config.negative_mode == "sampled";
    if (!sampled && config.negative_mode != "all")
        throw std::invalid_argument("pretrain: unknown negative_mode " + config.negative_mode);

    std::vector<double> epoch_loss;
    Rng order_rng(mix_seed(config.seed, 0x0bdeULL));
    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        order_rng.shuffle(queries);
        double loss_sum = 0.0;
        for (const auto& [source, relation] : queries) {
            Tape tape;
            auto vars = attach_params(tape, params);
            Var loss{};
            if (!sampled) {
                Var p = sigmoid(model.all_tail_logits(tape, vars, source, relation));
                Tensor y = Tensor::full({n_ent}, config.label_smoothing / static_cast<double>(n_ent));
                for (EntityId t : tails.at({source, relation}))
                    y.v[static_cast<size_t>(t)] =
                        1.0 - config.label_smoothing + config.label_smoothing / static_cast<double>(n_ent);
                Var target = tape.constant(y);
                Var ones = tape.constant(Tensor::full({n_ent}, 1.0));
                Var bce = add(mul(target, log(p)),
                              mul(add(ones, scale(target, -1.0)), log(add(ones, scale(p, -1.0)))));
                loss = scale(mean(bce), -1.0);
            } else {
                // Positive plus sampled negatives per gold tail.
                const auto& gold = tails.at({source, relation});
                std::vector<int64_t> cand;
                std::vector<double> y;
                Rng neg_rng(mix_seed(config.seed, static_cast<uint64_t>(epoch),
                                     static_cast<uint64_t>(source * 131 + relation)));
                for (EntityId t : gold) {
                    cand.push_back(t);
                    y.push_back(1.0 - config.label_smoothing);
                    for (int64_t i = 0; i < config.negatives_per_positive; ++i) {
                        cand.push_back(neg_rng.below(n_ent));
                        y.push_back(config.label_smoothing);
                    }
                }
                Var all = sigmoid(model.all_tail_logits(tape, vars, source, relation));
                std::vector<Var> picks;
                picks.reserve(cand.size());
                for (int64_t c : cand) picks.push_back(reshape(pick(all, c), {1}));
                Var p = concat(std::span<const Var>(picks));
                Var target = tape.constant(Tensor::from({static_cast<int64_t>(y.size())}, y));
                Var ones = tape.constant(Tensor::full({static_cast<int64_t>(y.size())}, 1.0));
                Var bce = add(mul(target, log(p)),
                              mul(add(ones, scale(target, -1.0)), log(add(ones, scale(p, -1.0)))));
                loss = scale(mean(bce), -1.0);
            }
            loss_sum += loss.value().item();
            tape.backward(loss);
            adam_step(params, collect_grads(tape, vars), config.learn_rate);
        }
        epoch_loss.push_back(loss_sum / static_cast<double>(queries.size()));
    }
    params.meta["epochs"] = std::to_string(config.epochs);
    return {std::move(model), std::move(epoch_loss)};
}

double embed_mrr(const EmbedModel& model, std::span<const Triple> triples) {
    if (triples.empty()) throw std::invalid_argument("embed_mrr: empty triple set");
    double rr_sum = 0.0;
    for (const Triple& t : triples) {
        auto scores = model.score_all_tails(t.head, t.relation);
        double gold = scores[static_cast<size_t>(t.tail)];
        int64_t rank = 1;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (static_cast<EntityId>(i) == t.tail) continue;
            if (scores[i] > gold || (scores[i] == gold && static_cast<EntityId>(i) < t.tail))
                ++rank;
        }
        rr_sum += 1.0 / static_cast<double>(rank);
    }
    return rr_sum / static_cast<double>(triples.size());
}

}  // namespace metawalk
