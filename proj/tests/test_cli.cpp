#include <doctest.h>

#include <iostream>
#include <map>
#include <sstream>

#include "commands.hpp"
#include "dft/io.hpp"
#include "support.hpp"

using namespace dft;
using dft::testing::read_file;
using dft::testing::TempDir;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "dft");
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    dft::testing::QuietLog quiet;
    const int code = cli::run(args);
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    return {code, out.str(), err.str()};
}

void write(const fs::path& p, const json& j) { write_text_file(p, j.dump()); }

json sbm_spec(std::vector<int> blocks, double p_in = 0.3, double p_out = 0.02) {
    return {{"name", "sbm"}, {"blocks", blocks}, {"p_in", p_in}, {"p_out", p_out}, {"feature_dim", 8},
            {"separation", 1.5}};
}

// Two small labelled SBMs plus a short run config.
struct Workspace {
    TempDir tmp{"cli"};
    Workspace() {
        write(tmp / "src.json", sbm_spec({15, 15}));
        write(tmp / "tgt.json", sbm_spec({15, 15}, 0.25, 0.03));
        REQUIRE(run({"gen-sbm", (tmp / "src.json").string(), "--out", (tmp / "src").string(), "--seed", "1"}).code == 0);
        REQUIRE(run({"gen-sbm", (tmp / "tgt.json").string(), "--out", (tmp / "tgt").string(), "--seed", "2"}).code == 0);
    }
    fs::path config(json extra = json::object()) const {
        json j = {{"source", "src"}, {"target", "tgt"}, {"output_dir", "out"}, {"epochs", 2},
                  {"model", {{"hidden", 8}, {"ffn_width", 16}}}};
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
        const fs::path p = tmp / "run.json";
        write(p, j);
        return p;
    }
    fs::path operator/(const std::string& s) const { return tmp / s; }
};

}  // namespace

TEST_CASE("gen-sbm is deterministic and honours block sizes") {
    TempDir tmp("cli");
    write(tmp / "spec.json", sbm_spec({7, 12, 5}));
    for (const char* dir : {"a", "b"})
        REQUIRE(run({"gen-sbm", (tmp / "spec.json").string(), "--out", (tmp / dir).string(), "--seed", "4"}).code == 0);
    for (const char* f : {"manifest.json", "edges.tsv", "features.bin", "labels.tsv"})
        CHECK(read_file(tmp / "a" / f) == read_file(tmp / "b" / f));
    Dataset d = load_dataset(tmp / "a");
    std::map<int, int> hist;
    for (int y : d.graph.labels()) ++hist[y];
    CHECK(hist == std::map<int, int>{{0, 7}, {1, 12}, {2, 5}});
}

TEST_CASE("gen-sbm rejects unknown spec keys as a config error") {
    TempDir tmp("cli");
    json spec = sbm_spec({5, 5});
    spec["bogus"] = true;
    write(tmp / "spec.json", spec);
    Result r = run({"gen-sbm", (tmp / "spec.json").string(), "--out", (tmp / "x").string(), "--seed", "1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("bogus") != std::string::npos);
}

TEST_CASE("train writes its artifacts and eval scores them") {
    Workspace ws;
    Result r = run({"train", ws.config({{"export_embeddings", true}}).string(), "--seed", "3"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("target micro_f1") != std::string::npos);
    const fs::path out = ws / "out";
    for (const char* f : {"checkpoint/manifest.json", "checkpoint/tensors.bin", "loss_history.csv", "report.json",
                          "embeddings.csv"})
        CHECK_MESSAGE(fs::exists(out / f), f);
    const std::string hist = read_file(out / "loss_history.csv");
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 3);

    const std::string emb = read_file(out / "embeddings.csv");
    CHECK(std::count(emb.begin(), emb.end(), '\n') == 31);
    CHECK(emb.rfind("z0,z1,z2,z3,z4,z5,z6,z7\n", 0) == 0);

    SUBCASE("eval on the source dataset") {
        Result e = run({"eval", "--checkpoint", (out / "checkpoint").string(), "--dataset", (ws / "src").string(),
                        "--embeddings", (ws / "emb.csv").string()});
        REQUIRE_MESSAGE(e.code == 0, e.err);
        json rep = json::parse(e.out);
        for (const char* key : {"num_nodes", "micro_f1", "macro_f1", "per_class", "icdr", "silhouette", "dataset"})
            CHECK_MESSAGE(rep.contains(key), key);
        CHECK(rep["num_nodes"] == 30);
        const double f1 = rep["micro_f1"];
        CHECK(f1 >= 0.0);
        CHECK(f1 <= 1.0);
        CHECK(fs::exists(ws / "emb.csv"));
    }
    SUBCASE("eval against a dataset with other feature width") {
        json spec = sbm_spec({4, 4});
        spec["feature_dim"] = 5;
        write(ws / "odd.json", spec);
        REQUIRE(run({"gen-sbm", (ws / "odd.json").string(), "--out", (ws / "odd").string(), "--seed", "1"}).code == 0);
        Result e = run({"eval", "--checkpoint", (out / "checkpoint").string(), "--dataset", (ws / "odd").string()});
        CHECK(e.code == 3);
        CHECK(e.err.find('5') != std::string::npos);
    }
}

TEST_CASE("training fits the source better than the majority rate") {
    Workspace ws;
    REQUIRE(run({"train", ws.config({{"epochs", 40}}).string(), "--seed", "1"}).code == 0);
    Result e = run({"eval", "--checkpoint", (ws / "out" / "checkpoint").string(), "--dataset", (ws / "src").string()});
    REQUIRE(e.code == 0);
    CHECK(json::parse(e.out)["micro_f1"].get<double>() > 0.5);
}

TEST_CASE("dft_mmd checkpoints have no critic") {
    Workspace ws;
    REQUIRE(run({"train", ws.config({{"model", {{"hidden", 8}, {"ffn_width", 16}, {"variant", "dft_mmd"}}}}).string(),
                 "--seed", "1"})
                .code == 0);
    CHECK(read_file(ws / "out" / "checkpoint" / "manifest.json").find("critic") == std::string::npos);
}

TEST_CASE("target without labels still trains") {
    Workspace ws;
    const Graph g = load_dataset(ws / "tgt").graph;
    fs::remove_all(ws / "tgt");
    save_dataset(Graph(g.num_nodes(), g.edges(), g.features()), ws / "tgt", "tgt");
    Result r = run({"train", ws.config().string(), "--seed", "1"});
    CHECK_MESSAGE(r.code == 0, r.err);
    CHECK_FALSE(fs::exists(ws / "out" / "report.json"));
}

TEST_CASE("training loss history is reproducible") {
    Workspace ws;
    auto losses = [&] {
        REQUIRE(run({"train", ws.config().string(), "--seed", "9"}).code == 0);
        // Drop the wall-clock column.
        std::istringstream in(read_file(ws / "out" / "loss_history.csv"));
        std::string line, out;
        while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
        return out;
    };
    CHECK(losses() == losses());
}

TEST_CASE("exit codes") {
    Workspace ws;
    SUBCASE("missing config file") {
        Result r = run({"train", (ws / "nope.json").string(), "--seed", "1"});
        CHECK(r.code != 0);
        CHECK(r.err.find("nope.json") != std::string::npos);
    }
    SUBCASE("missing dataset") {
        Result r = run({"eval", "--checkpoint", (ws / "none").string(), "--dataset", (ws / "src").string()});
        CHECK(r.code == 3);
        CHECK(r.err.find("none") != std::string::npos);
    }
    SUBCASE("unknown config key") {
        Result r = run({"train", ws.config({{"epochz", 3}}).string(), "--seed", "1"});
        CHECK(r.code == 2);
        CHECK(r.err.find("epochz") != std::string::npos);
    }
    SUBCASE("model shape keys come from the data") {
        Result r = run({"train", ws.config({{"model", {{"input_dim", 8}}}}).string(), "--seed", "1"});
        CHECK(r.code == 2);
    }
    SUBCASE("bad variant") {
        Result r = run({"train", ws.config({{"model", {{"variant", "dft_x"}}}}).string(), "--seed", "1"});
        CHECK(r.code == 2);
    }
    SUBCASE("unknown subcommand") { CHECK(run({"frobnicate"}).code != 0); }
    SUBCASE("source without labels") {
        const Graph g = load_dataset(ws / "src").graph;
        fs::remove_all(ws / "src");
        save_dataset(Graph(g.num_nodes(), g.edges(), g.features()), ws / "src", "src");
        CHECK(run({"train", ws.config().string(), "--seed", "1"}).code == 3);
    }
}

TEST_CASE("analyze-correlation output is deterministic and the closed form grows with depth") {
    TempDir tmp("cli");
    const std::vector<std::string> args{"analyze-correlation", "--random-n", "20", "--random-p", "0.2", "--depth", "4",
                                        "--dim", "4", "--samples", "1000", "--seed", "5"};
    Result a = run(args), b = run(args);
    REQUIRE_MESSAGE(a.code == 0, a.err);
    CHECK(a.out == b.out);
    std::istringstream in(a.out);
    std::string line;
    std::getline(in, line);
    CHECK(line == "k,closed_form,mc_identity_mean,mc_identity_stderr,glorot_mean,glorot_stderr");
    double prev = -1;
    int rows = 0;
    while (std::getline(in, line)) {
        const double cf = std::stod(line.substr(line.find(',') + 1));
        CHECK(cf >= prev - 1e-12);
        prev = cf;
        ++rows;
    }
    CHECK(rows == 5);
    CHECK(run({"analyze-correlation", "--samples", "999"}).code == 2);
}

TEST_CASE("probe-covariate reports full agreement for identical datasets") {
    Workspace ws;
    Result r = run({"probe-covariate", "--source", (ws / "src").string(), "--target", (ws / "src").string(), "--k", "1",
                    "--out", (ws / "probe.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(std::stod(r.out) == 1.0);
    json j = json::parse(read_file(ws / "probe.json"));
    CHECK(j["agreement"] == 1.0);
    CHECK(j.contains("shuffled_control"));
}

TEST_CASE("split writes two loadable parts") {
    Workspace ws;
    Result r = run({"split", "--dataset", (ws / "src").string(), "--fraction", "0.4", "--seed", "2", "--out-a",
                    (ws / "a").string(), "--out-b", (ws / "b").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(load_dataset(ws / "a").graph.num_nodes() == 12);
    CHECK(load_dataset(ws / "b").graph.num_nodes() == 18);
}
