#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout only
};

RunResult run(const std::string& args) {
    std::string cmd = std::string(METAWALK_BIN) + " " + args + " 2>/dev/null";
    std::array<char, 4096> buf{};
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Workspace {
    fs::path dir;

    Workspace() {
        dir = fs::temp_directory_path() / "metawalk_cli_test";
        fs::remove_all(dir);
        fs::create_directories(dir);

        // A small two-hop corpus: person -born_in-> city -located_in-> country;
        // `nationality` composes them with plenty of triples, `citizen_of` is
        // the few-shot twin with two support triples.
        std::ofstream train(dir / "train.txt");
        std::ofstream valid(dir / "valid.txt");
        std::ofstream test(dir / "test.txt");
        const char* persons[10] = {"p0", "p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "p9"};
        const char* cities[5] = {"c0", "c1", "c2", "c3", "c4"};
        const char* lands[3] = {"l0", "l1", "l2"};
        for (int i = 0; i < 10; ++i)
            train << persons[i] << "\tborn_in\t" << cities[i % 5] << "\n";
        for (int i = 0; i < 5; ++i)
            train << cities[i] << "\tlocated_in\t" << lands[i % 3] << "\n";
        auto land_of = [&](int i) { return lands[(i % 5) % 3]; };
        for (int i = 0; i < 7; ++i)
            train << persons[i] << "\tnationality\t" << land_of(i) << "\n";
        valid << persons[7] << "\tnationality\t" << land_of(7) << "\n";
        for (int i = 8; i < 10; ++i)
            test << persons[i] << "\tnationality\t" << land_of(i) << "\n";
        train << persons[0] << "\tcitizen_of\t" << land_of(0) << "\n";
        train << persons[1] << "\tcitizen_of\t" << land_of(1) << "\n";
        for (int i = 2; i < 7; ++i)
            test << persons[i] << "\tcitizen_of\t" << land_of(i) << "\n";
    }

    std::string path(const std::string& name) const { return (dir / name).string(); }
};

const std::string kCommon =
    " --seed 11 --workers 1 --dim 12 --hidden 12 --scorer-hidden 12 --rollouts 6"
    " --support-size 3 --query-size 3 --task-batch 2 --inner-lr 0.4 --outer-lr 0.05"
    " --outer-steps 8 --eval-every 0 --beam 24 --embed-dim 12 --embed-epochs 20"
    " --adapt-lr 0.4 --adapt-steps 6";

}  // namespace

TEST_CASE("cli: full pipeline, determinism, and error codes") {
    Workspace ws;

    // --- ingest ---
    std::string ingest_args = "ingest --train " + ws.path("train.txt") + " --valid " +
                              ws.path("valid.txt") + " --test " + ws.path("test.txt") +
                              " --out " + ws.path("graph.mwkg");
    RunResult ingest = run(ingest_args);
    REQUIRE(ingest.exit_code == 0);
    CHECK(ingest.output.find("entities\t18") != std::string::npos);
    CHECK(ingest.output.find("relations\t4") != std::string::npos);

    RunResult missing = run("ingest --train /nonexistent/x.txt --out " + ws.path("g2.mwkg"));
    CHECK(missing.exit_code == 2);

    // --- split ---
    std::string split_args =
        "split --graph " + ws.path("graph.mwkg") + " --K 5 --out " + ws.path("split.json");
    RunResult split = run(split_args);
    REQUIRE(split.exit_code == 0);
    CHECK(split.output.find("fewshot-relations\t1") != std::string::npos);
    {
        std::ifstream in(ws.path("split.json"));
        nlohmann::json j = nlohmann::json::parse(in);
        CHECK(j["K"] == 5);
        REQUIRE(j["fewshot"].size() == 1);
        CHECK(j["fewshot"][0]["relation"] == "citizen_of");
        CHECK(j["normal"].size() == 3);
    }
    CHECK(run("split --graph " + ws.path("graph.mwkg") + " --out x.json").exit_code == 2);

    // byte-identical manifest on rerun
    std::string manifest_once = slurp(ws.path("split.json"));
    REQUIRE(run(split_args).exit_code == 0);
    CHECK(slurp(ws.path("split.json")) == manifest_once);

    // --- pretrain ---
    std::string pre_args = kCommon + " pretrain --graph " + ws.path("graph.mwkg") + " --split " +
                           ws.path("split.json") + " --out " + ws.path("reward.mwck");
    REQUIRE(run(pre_args).exit_code == 0);
    std::string reward_once = slurp(ws.path("reward.mwck"));
    REQUIRE(run(pre_args).exit_code == 0);
    CHECK(slurp(ws.path("reward.mwck")) == reward_once);

    // --- meta-train ---
    std::string mt_args = kCommon + " meta-train --graph " + ws.path("graph.mwkg") + " --split " +
                          ws.path("split.json") + " --reward-model " + ws.path("reward.mwck") +
                          " --out " + ws.path("theta.mwck");
    RunResult mt = run(mt_args);
    REQUIRE(mt.exit_code == 0);
    CHECK(mt.output.find("outer_step\tquery_loss\tquery_reward\tval_mrr") != std::string::npos);
    std::string theta_once = slurp(ws.path("theta.mwck"));
    RunResult mt2 = run(mt_args);
    REQUIRE(mt2.exit_code == 0);
    CHECK(slurp(ws.path("theta.mwck")) == theta_once);  // byte-identical checkpoint
    CHECK(mt2.output == mt.output);                     // byte-identical log

    // --- adapt ---
    std::string ad_args = kCommon + " adapt --graph " + ws.path("graph.mwkg") + " --split " +
                          ws.path("split.json") + " --checkpoint " + ws.path("theta.mwck") +
                          " --reward-model " + ws.path("reward.mwck") +
                          " --relation citizen_of --out " + ws.path("theta_citizen.mwck");
    REQUIRE(run(ad_args).exit_code == 0);
    std::string adapted_once = slurp(ws.path("theta_citizen.mwck"));
    REQUIRE(run(ad_args).exit_code == 0);
    CHECK(slurp(ws.path("theta_citizen.mwck")) == adapted_once);

    RunResult unknown_rel = run(kCommon + " adapt --graph " + ws.path("graph.mwkg") + " --split " +
                                ws.path("split.json") + " --checkpoint " + ws.path("theta.mwck") +
                                " --relation not_a_relation --out " + ws.path("x.mwck"));
    CHECK(unknown_rel.exit_code == 4);

    // adapt --relation all writes one checkpoint per few-shot relation
    REQUIRE(run(kCommon + " adapt --graph " + ws.path("graph.mwkg") + " --split " +
                ws.path("split.json") + " --checkpoint " + ws.path("theta.mwck") +
                " --relation all --out " + ws.path("adapted"))
                .exit_code == 0);
    CHECK(fs::exists(ws.dir / "adapted" / "citizen_of.mwck"));

    // --- eval ---
    std::string ev_args = kCommon + " eval --graph " + ws.path("graph.mwkg") + " --split " +
                          ws.path("split.json") + " --checkpoint " + ws.path("theta.mwck") +
                          " --adapted-dir " + ws.path("adapted") + " --section all --out " +
                          ws.path("report.tsv") + " --dump " + ws.path("answers.txt");
    RunResult ev = run(ev_args);
    REQUIRE(ev.exit_code == 0);
    CHECK(ev.output.find("relation\tqueries\tMRR\tHits@1\tHits@10") != std::string::npos);
    CHECK(ev.output.find("ALL\t7\t") != std::string::npos);  // 2 nationality + 5 citizen_of
    std::string report_once = slurp(ws.path("report.tsv"));
    std::string answers_once = slurp(ws.path("answers.txt"));
    REQUIRE(run(ev_args).exit_code == 0);
    CHECK(slurp(ws.path("report.tsv")) == report_once);
    CHECK(slurp(ws.path("answers.txt")) == answers_once);

    // --- sweep ---
    std::string sw_args = kCommon + " sweep --graph " + ws.path("graph.mwkg") + " --split " +
                          ws.path("split.json") + " --checkpoint " + ws.path("theta.mwck") +
                          " --reward-model " + ws.path("reward.mwck") + " --K-list 1,2,max" +
                          " --out " + ws.path("sweep.tsv");
    RunResult sw = run(sw_args);
    REQUIRE(sw.exit_code == 0);
    CHECK(sw.output.find("K\tqueries\tMRR\tHits@1\tHits@10") != std::string::npos);
    CHECK(sw.output.find("max\t") != std::string::npos);
    {
        std::istringstream lines(slurp(ws.path("sweep.tsv")));
        std::string line;
        int rows = 0;
        while (std::getline(lines, line))
            if (!line.empty() && line[0] != 'K') ++rows;
        CHECK(rows == 3);
    }
    std::string sweep_once = slurp(ws.path("sweep.tsv"));
    REQUIRE(run(sw_args).exit_code == 0);
    CHECK(slurp(ws.path("sweep.tsv")) == sweep_once);

    // --- explain ---
    std::string ex_args = kCommon + " --topk 3 explain --graph " + ws.path("graph.mwkg") +
                          " --checkpoint " + ws.path("adapted/citizen_of.mwck") +
                          " --source p3 --relation citizen_of";
    RunResult ex = run(ex_args);
    REQUIRE(ex.exit_code == 0);
    CHECK(ex.output.find("(p3)") != std::string::npos);
    CHECK(ex.output.find("->") != std::string::npos);
    RunResult ex2 = run(ex_args);
    CHECK(ex2.output == ex.output);

    CHECK(run(kCommon + " explain --graph " + ws.path("graph.mwkg") + " --checkpoint " +
              ws.path("theta.mwck") + " --source nobody --relation nationality")
              .exit_code == 4);

    // --- checkpoint type and version errors ---
    CHECK(run(kCommon + " eval --graph " + ws.path("graph.mwkg") + " --split " +
              ws.path("split.json") + " --checkpoint " + ws.path("reward.mwck"))
              .exit_code == 3);  // embedding checkpoint where a policy is required
    {
        std::ofstream junk(ws.path("junk.mwck"), std::ios::binary);
        junk << "this is not a checkpoint at all, padded to pass the header read....";
    }
    CHECK(run(kCommon + " explain --graph " + ws.path("graph.mwkg") + " --checkpoint " +
              ws.path("junk.mwck") + " --source p0 --relation nationality")
              .exit_code == 3);

    // --- config file: valid keys load, unknown keys rejected ---
    {
        std::ofstream cfg(ws.path("run.cfg"));
        cfg << "seed=11\nbeam=16\n";
    }
    CHECK(run("--config " + ws.path("run.cfg") + " split --graph " + ws.path("graph.mwkg") +
              " --K 5 --out " + ws.path("split2.json"))
              .exit_code == 0);
    {
        std::ofstream cfg(ws.path("bad.cfg"));
        cfg << "seed=11\nno-such-key=1\n";
    }
    CHECK(run("--config " + ws.path("bad.cfg") + " split --graph " + ws.path("graph.mwkg") +
              " --K 5 --out " + ws.path("split3.json"))
              .exit_code == 2);

    // config echo appears in every command's output
    CHECK(ingest.output.find("# seed=") != std::string::npos);
    CHECK(mt.output.find("# inner-lr=0.4") != std::string::npos);
}
