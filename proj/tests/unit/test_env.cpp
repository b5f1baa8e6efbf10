#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metawalk/env.hpp"
#include "synthetic.hpp"

using namespace metawalk;
using namespace metawalk::testsupport;

TEST_CASE("reset builds the start state and validates ids") {
    Graph g = chain_graph(4);
    Environment env(g, {});
    EntityId a = g.entities().id_of("e0");
    Query q{a, 0, g.entities().id_of("e1")};

    State s = env.reset(q);
    CHECK(s.query_relation == 0);
    CHECK(s.source == a);
    CHECK(s.current == a);
    CHECK(s.step == 0);
    CHECK(env.reset(q) == s);  // two resets agree

    CHECK_THROWS_AS(env.reset(Query{999, 0, kNoAnswer}), std::invalid_argument);
    CHECK_THROWS_AS(env.reset(Query{a, 999, kNoAnswer}), std::invalid_argument);
}

TEST_CASE("action_space ordering, isolation, capping") {
    // e0 has edges to e1 via r0 and r1; e9 is isolated apart from inverses.
    auto d = dataset_from_text("x\tr0\ty\nx\tr1\ty\nx\tr0\tz\n");
    Graph g = build_graph(d, false);
    Environment env(g, {});
    EntityId x = g.entities().id_of("x"), y = g.entities().id_of("y");

    State at_y{0, y, y, 0};
    auto only_self = env.action_space(at_y, Query{y, 0, kNoAnswer}, false);
    REQUIRE(only_self.size() == 1);  // no out-edges -> just the self-loop
    CHECK(only_self[0].relation == g.self_loop());
    CHECK(only_self[0].target == y);

    State at_x{0, x, x, 0};
    auto all = env.action_space(at_x, Query{x, 0, kNoAnswer}, false, 10);
    REQUIRE(all.size() == 4);  // self-loop + 3 edges under a roomy cap
    CHECK(all[0].relation == g.self_loop());
    for (size_t i = 2; i < all.size(); ++i) {
        bool ordered = all[i - 1].relation < all[i].relation ||
                       (all[i - 1].relation == all[i].relation && all[i - 1].target < all[i].target);
        CHECK(ordered);
    }

    auto capped = env.action_space(at_x, Query{x, 0, kNoAnswer}, false, 2);
    REQUIRE(capped.size() == 2);
    CHECK(capped[0].relation == g.self_loop());
    CHECK(capped[1] == all[1]);  // deterministic truncation keeps the first edges
}

TEST_CASE("action_space cap on a hub entity") {
    // hub with 500 distinct out-edges; cap 256 keeps self-loop + 255 edges.
    std::string text;
    for (int i = 0; i < 500; ++i) text += "hub\tr\tt" + std::to_string(i) + "\n";
    Graph g = build_graph(dataset_from_text(text), false);
    Environment env(g, {.horizon = 3, .action_cap = 256, .mask_gold_edge = true});
    EntityId hub = g.entities().id_of("hub");
    auto actions = env.action_space(State{0, hub, hub, 0}, Query{hub, 0, kNoAnswer}, false);
    CHECK(actions.size() == 256);
    CHECK(actions[0].relation == g.self_loop());
}

TEST_CASE("gold-edge masking hides the answer edge and its inverse") {
    Graph g = chain_graph(3);
    Environment env(g, {});
    EntityId e0 = g.entities().id_of("e0"), e1 = g.entities().id_of("e1");
    Query q{e0, 0, e1};

    auto masked = env.action_space(env.reset(q), q, true);
    for (const Action& a : masked) CHECK(!(a.relation == 0 && a.target == e1));

    auto unmasked = env.action_space(env.reset(q), q, false);
    CHECK(unmasked.size() == masked.size() + 1);

    // Inverse edge from the answer back to the source is hidden too.
    State at_answer{0, e0, e1, 1};
    auto at_answer_masked = env.action_space(at_answer, q, true);
    for (const Action& a : at_answer_masked)
        CHECK(!(a.relation == g.inverse_of(0) && a.target == e0));

    // Inference query without an answer: nothing to mask.
    Query open{e0, 0, kNoAnswer};
    CHECK(env.action_space(env.reset(open), open, true).size() == unmasked.size());
}

TEST_CASE("step transitions and contract violations") {
    Graph g = chain_graph(4);
    Environment env(g, {.horizon = 3, .action_cap = 256, .mask_gold_edge = true});
    EntityId e0 = g.entities().id_of("e0"), e1 = g.entities().id_of("e1");
    Query q{e0, 0, kNoAnswer};

    State s = env.reset(q);
    State after_self = env.step(s, {g.self_loop(), e0});
    CHECK(after_self.current == e0);
    CHECK(after_self.step == 1);
    CHECK(after_self.query_relation == s.query_relation);
    CHECK(after_self.source == s.source);

    State after_edge = env.step(s, {0, e1});
    CHECK(after_edge.current == e1);

    // Self-loop to the horizon stays on the source.
    State t = env.reset(q);
    for (int i = 0; i < 3; ++i) t = env.step(t, {g.self_loop(), t.current});
    CHECK(t.current == e0);
    CHECK(t.step == 3);
    CHECK_THROWS_AS(env.step(t, {g.self_loop(), t.current}), std::logic_error);

    // An action that is not an edge from the current entity.
    CHECK_THROWS_AS(env.step(s, {0, g.entities().id_of("e3")}), std::logic_error);
}

TEST_CASE("terminal_reward: hit, binary fallback, shaped miss") {
    Graph g = chain_graph(3);
    Environment env(g, {});
    EntityId e0 = g.entities().id_of("e0"), e1 = g.entities().id_of("e1"),
             e2 = g.entities().id_of("e2");
    Query q{e0, 0, e1};

    State hit{0, e0, e1, 3};
    CHECK(env.terminal_reward(hit, q, nullptr) == 1.0);

    State miss{0, e0, e2, 3};
    CHECK(env.terminal_reward(miss, q, nullptr) == 0.0);

    // Zero-initialized DistMult scores sigmoid(0) = 0.5 on a miss.
    EmbedConfig cfg;
    cfg.dim = 8;
    EmbedModel zero_model(g, cfg);
    for (auto& [name, t] : zero_model.params().tensors())
        for (double& x : t.v) x = 0.0;
    CHECK(env.terminal_reward(miss, q, &zero_model) == doctest::Approx(0.5).epsilon(1e-12));

    State early{0, e0, e1, 2};
    CHECK_THROWS_AS(env.terminal_reward(early, q, nullptr), std::logic_error);
}

TEST_CASE("reward ordering: shaped miss always below hit") {
    Graph g = random_graph(21, 12, 3, 30);
    Environment env(g, {});
    EmbedConfig cfg;
    cfg.dim = 8;
    cfg.seed = 5;
    EmbedModel model(g, cfg);
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        EntityId src = rng.below(g.num_entities());
        RelationId rel = rng.below(g.num_forward_relations());
        EntityId gold = rng.below(g.num_entities());
        EntityId final = rng.below(g.num_entities());
        Query q{src, rel, gold};
        State s{rel, src, final, env.horizon()};
        double r = env.terminal_reward(s, q, &model);
        if (final == gold) {
            CHECK(r == 1.0);
        } else {
            CHECK(r > 0.0);
            CHECK(r < 1.0);
        }
    }
}

TEST_CASE("trajectory validity: states stay connected and constants hold") {
    Graph g = random_graph(33, 20, 4, 60);
    Environment env(g, {});
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        EntityId src = rng.below(g.num_entities());
        RelationId rel = rng.below(g.num_forward_relations());
        Query q{src, rel, kNoAnswer};
        State s = env.reset(q);
        for (int t = 0; t < 3; ++t) {
            auto actions = env.action_space(s, q, true);
            auto chosen = actions[static_cast<size_t>(rng.below(static_cast<int64_t>(actions.size())))];
            bool is_self = chosen.relation == g.self_loop() && chosen.target == s.current;
            CHECK((is_self || g.has_edge(s.current, chosen.relation, chosen.target)));
            State next = env.step(s, chosen);
            CHECK(next.query_relation == q.relation);
            CHECK(next.source == q.source);
            s = next;
        }
    }
}

TEST_CASE("action_space determinism") {
    Graph g = random_graph(77, 30, 5, 120);
    Environment env(g, {});
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        EntityId e = rng.below(g.num_entities());
        Query q{e, 0, kNoAnswer};
        State s{0, e, e, 1};
        auto once = env.action_space(s, q, true);
        auto twice = env.action_space(s, q, true);
        CHECK(once == twice);
    }
}
