#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>

#include "dft/config.hpp"
#include "dft/error.hpp"
#include "dft/graph.hpp"
#include "dft/io.hpp"
#include "dft/log.hpp"
#include "dft/metrics.hpp"
#include "dft/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dft::cli {

namespace {

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
    } else {
        write_text_file(out_path, text);
    }
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::uint64_t seed = 0;
    std::size_t log_every = 0;
};

int cmd_train(const TrainArgs& a) {
    RunConfig rc = load_run_config(a.config);
    rc.train.seed = a.seed;

    Dataset src = load_dataset(rc.source);
    if (!src.graph.has_labels()) throw DataError(rc.source.string() + ": source dataset needs labels.tsv");
    // The training path sees only the unlabelled view of the target.
    std::optional<std::vector<int>> target_truth;
    UnlabeledGraph target = [&] {
        Dataset tgt = load_dataset(rc.target);
        if (rc.evaluate_target && tgt.graph.has_labels()) target_truth = tgt.graph.labels();
        return UnlabeledGraph(tgt.graph);
    }();

    Trainer trainer(src.graph, target, rc.train);
    for (std::size_t e = 0; e < rc.train.epochs; ++e) {
        const EpochRecord r = trainer.run_epoch();
        if (a.log_every && (r.epoch % a.log_every == 0 || r.epoch == rc.train.epochs)) {
            logging::info("epoch " + std::to_string(r.epoch) + " L_s=" + format_number(r.l_s) +
                          " L_t=" + format_number(r.l_t) + " L_critic=" + format_number(r.l_critic) +
                          " L_gp=" + format_number(r.l_gp));
        }
    }

    ensure_dir(rc.output_dir);
    save_checkpoint(rc.output_dir / "checkpoint", trainer.params(), trainer.model_config());
    write_text_file(rc.output_dir / "loss_history.csv", loss_history_csv(trainer.history()));

    const DomainForward out =
        infer(target.graph(), trainer.target_operators(), trainer.params(), trainer.model_config());
    if (target_truth) {
        const MetricsReport rep = evaluate(argmax_rows(out.y_hat), *target_truth,
                                           static_cast<int>(trainer.model_config().num_classes), &out.z);
        json j = to_json(rep);
        j["dataset"] = rc.target.string();
        write_text_file(rc.output_dir / "report.json", j.dump(2) + "\n");
        std::cout << "target micro_f1 " << format_number(rep.f1.micro) << " macro_f1 "
                  << format_number(rep.f1.macro) << "\n";
    }
    if (rc.export_embeddings) write_text_file(rc.output_dir / "embeddings.csv", embeddings_csv(out.z));
    return ok;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string dataset;
    std::string out;
    std::string embeddings;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    Dataset ds = load_dataset(a.dataset);
    const Graph& g = ds.graph;
    if (g.feature_dim() != ck.config.input_dim) {
        throw DimensionError("dataset has " + std::to_string(g.feature_dim()) + " features, checkpoint expects " +
                             std::to_string(ck.config.input_dim));
    }
    if (!g.has_labels()) throw DataError(a.dataset + ": evaluation needs labels.tsv");
    if (static_cast<std::size_t>(*g.num_classes()) != ck.config.num_classes) {
        throw DimensionError("dataset has " + std::to_string(*g.num_classes()) + " classes, checkpoint expects " +
                             std::to_string(ck.config.num_classes));
    }
    Rng rng(a.seed);
    OperatorConfig oc;
    oc.pe_dim = ck.config.pe_dim;
    const GraphOperators ops = build_operators(g, oc, rng);
    const DomainForward out = infer(g, ops, ck.params, ck.config);
    const MetricsReport rep =
        evaluate(argmax_rows(out.y_hat), g.labels(), static_cast<int>(ck.config.num_classes), &out.z);
    json j = to_json(rep);
    j["dataset"] = a.dataset;
    emit(j.dump(2) + "\n", a.out);
    if (!a.embeddings.empty()) write_text_file(a.embeddings, embeddings_csv(out.z));
    return ok;
}

// --- analyze-correlation ----------------------------------------------------

struct CorrArgs {
    std::string dataset;
    std::size_t random_n = 50;
    double random_p = 0.1;
    unsigned depth = 5;
    std::size_t dim = 16;
    std::size_t samples = 1000;
    std::uint64_t seed = 0;
    std::string op = "unnormalized";
    std::string out;
};

int cmd_analyze(const CorrArgs& a) {
    if (a.op != "unnormalized" && a.op != "normalized") {
        throw ConfigError("--operator must be 'unnormalized' or 'normalized'");
    }
    if (a.dim == 0) throw ConfigError("--dim must be >= 1");
    if (a.samples < 1000) throw ConfigError("--samples must be >= 1000");
    Rng rng(a.seed);
    Rng graph_rng = rng.split();
    Rng mc_rng = rng.split();
    Rng glorot_rng = rng.split();
    const Graph g = a.dataset.empty() ? erdos_renyi(a.random_n, a.random_p, graph_rng) : load_dataset(a.dataset).graph;

    Tensor op;
    if (a.op == "normalized") {
        op = normalized_adjacency(g);
    } else {
        op = add(adjacency_matrix(g), Tensor::identity(g.num_nodes()));
    }
    const auto curve = glorot_correlation_curve(op, a.depth, a.dim, a.samples, glorot_rng);
    std::string csv = "k,closed_form,mc_identity_mean,mc_identity_stderr,glorot_mean,glorot_stderr\n";
    for (unsigned k = 0; k <= a.depth; ++k) {
        const double exact = expected_correlation(op, k, a.dim);
        const McEstimate mc = monte_carlo_correlation(op, k, a.dim, a.samples, mc_rng);
        csv += std::to_string(k) + "," + format_number(exact) + "," + format_number(mc.mean) + "," +
               format_number(mc.stderr_) + "," + format_number(curve[k].mean) + "," +
               format_number(curve[k].stderr_) + "\n";
    }
    emit(csv, a.out);
    return ok;
}

// --- probe-covariate ----------------------------------------------------------

struct ProbeArgs {
    std::string source;
    std::string target;
    std::size_t k = 128;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_probe(const ProbeArgs& a) {
    const Dataset s = load_dataset(a.source);
    const Dataset t = load_dataset(a.target);
    if (!s.graph.has_labels()) throw DataError(a.source + ": probe needs labels.tsv");
    if (!t.graph.has_labels()) throw DataError(a.target + ": probe needs labels.tsv");
    if (s.graph.feature_dim() != t.graph.feature_dim()) {
        throw DimensionError("source has " + std::to_string(s.graph.feature_dim()) + " features, target has " +
                             std::to_string(t.graph.feature_dim()));
    }
    const double agree =
        covariate_shift_probe(s.graph.features(), s.graph.labels(), t.graph.features(), t.graph.labels(), a.k);
    Rng rng(a.seed);
    const auto shuffled = shuffled_labels(t.graph.labels(), rng);
    const double control =
        covariate_shift_probe(s.graph.features(), s.graph.labels(), t.graph.features(), shuffled, a.k);
    std::cout << format_number(agree) << "\n";
    const json j = {{"k", a.k}, {"agreement", agree}, {"shuffled_control", control}, {"seed", a.seed}};
    if (!a.out.empty()) write_text_file(a.out, j.dump(2) + "\n");
    else std::cerr << j.dump() << "\n";
    return ok;
}

// --- gen-sbm --------------------------------------------------------------------

struct GenArgs {
    std::string spec;
    std::string out;
    std::uint64_t seed = 0;
};

// {"name": "sbm", "blocks": [100, 100], "p_in": 0.1, "p_out": 0.01,
//  "feature_dim": 16, "separation": 1.0, "feat_std": 1.0, "encoding": "dense_f32"}
// or "feat_means": [[...], ...] in place of feature_dim/separation.
int cmd_gen(const GenArgs& a) {
    json j;
    try {
        j = json::parse(read_text_file(a.spec));
    } catch (const json::parse_error& e) {
        throw ConfigError(a.spec + ": invalid JSON: " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    if (!j.is_object()) throw ConfigError(a.spec + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::set<std::string> known{"name",     "blocks",     "p_in",       "p_out",   "feature_dim",
                                                 "separation", "feat_std", "feat_means", "encoding"};
        if (!known.count(it.key())) throw ConfigError(a.spec + ": unknown key '" + it.key() + "'");
    }
    SbmConfig cfg;
    std::string name = "sbm", encoding = "dense_f32";
    try {
        if (j.contains("name")) name = j["name"].get<std::string>();
        cfg.blocks = j.at("blocks").get<std::vector<std::size_t>>();
        cfg.p_in = j.at("p_in").get<double>();
        cfg.p_out = j.at("p_out").get<double>();
        if (j.contains("feat_std")) cfg.feat_std = j["feat_std"].get<double>();
        if (j.contains("encoding")) encoding = j["encoding"].get<std::string>();
        if (j.contains("feat_means")) {
            if (j.contains("feature_dim") || j.contains("separation")) {
                throw ConfigError(a.spec + ": give either feat_means or feature_dim/separation");
            }
            cfg.feat_means = j["feat_means"].get<std::vector<std::vector<double>>>();
        } else {
            const auto dim = j.at("feature_dim").get<std::size_t>();
            const double sep = j.contains("separation") ? j["separation"].get<double>() : 1.0;
            cfg.feat_means = separated_class_means(cfg.blocks.size(), dim, sep * cfg.feat_std);
        }
    } catch (const json::exception& e) {
        throw ConfigError(a.spec + ": " + e.what());
    } catch (const ContractError& e) {
        throw ConfigError(a.spec + ": " + e.what());
    }
    FeatureEncoding enc;
    try {
        enc = parse_encoding(encoding);
    } catch (const DataError& e) {
        throw ConfigError(a.spec + ": " + e.what());
    }
    Rng rng(a.seed);
    Graph g;
    try {
        g = sbm_generate(cfg, rng);
    } catch (const ContractError& e) {
        throw ConfigError(a.spec + ": " + e.what());
    }
    save_dataset(g, a.out, name, enc);
    return ok;
}

// --- split ---------------------------------------------------------------------

struct SplitArgs {
    std::string dataset;
    double fraction = 0.5;
    std::uint64_t seed = 0;
    std::string out_a;
    std::string out_b;
};

int cmd_split(const SplitArgs& a) {
    const Dataset ds = load_dataset(a.dataset);
    Rng rng(a.seed);
    auto [first, second] = split_graph(ds.graph, a.fraction, rng);
    save_dataset(first, a.out_a, ds.manifest.name + "_1", ds.manifest.encoding);
    save_dataset(second, a.out_b, ds.manifest.name + "_2", ds.manifest.encoding);
    return ok;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Decorrelated feature extraction and graph transformer domain adaptation"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train on a labelled source and an unlabelled target graph");
    train->add_option("config", train_args.config, "Run configuration (JSON)")->required();
    train->add_option("--seed", train_args.seed, "Random seed")->required();
    train->add_option("--log-every", train_args.log_every, "Print losses every N epochs (0: quiet)");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labelled dataset");
    eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory")->required();
    eval->add_option("--dataset", eval_args.dataset, "Dataset directory")->required();
    eval->add_option("--out", eval_args.out, "Report path (default: stdout)");
    eval->add_option("--embeddings", eval_args.embeddings, "Write representations as CSV");
    eval->add_option("--seed", eval_args.seed, "Seed for the random-walk operator");

    CorrArgs corr_args;
    auto* corr = app.add_subcommand("analyze-correlation", "Feature correlation against propagation depth");
    auto* ds_opt = corr->add_option("--dataset", corr_args.dataset, "Dataset directory");
    corr->add_option("--random-n", corr_args.random_n, "Erdos-Renyi node count")->excludes(ds_opt);
    corr->add_option("--random-p", corr_args.random_p, "Erdos-Renyi edge probability")->excludes(ds_opt);
    corr->add_option("--depth", corr_args.depth, "Largest depth k");
    corr->add_option("--dim", corr_args.dim, "Feature dimension D");
    corr->add_option("--samples", corr_args.samples, "Monte Carlo samples per depth");
    corr->add_option("--seed", corr_args.seed, "Random seed");
    corr->add_option("--operator", corr_args.op, "unnormalized (A+I) or normalized");
    corr->add_option("--out", corr_args.out, "CSV path (default: stdout)");

    ProbeArgs probe_args;
    auto* probe = app.add_subcommand("probe-covariate", "k-NN label agreement between two labelled graphs");
    probe->add_option("--source", probe_args.source, "Source dataset")->required();
    probe->add_option("--target", probe_args.target, "Target dataset")->required();
    probe->add_option("--k", probe_args.k, "Neighbours per vote");
    probe->add_option("--seed", probe_args.seed, "Seed for the shuffled control");
    probe->add_option("--out", probe_args.out, "JSON path");

    GenArgs gen_args;
    auto* gen = app.add_subcommand("gen-sbm", "Generate a stochastic block model dataset");
    gen->add_option("spec", gen_args.spec, "Generator spec (JSON)")->required();
    gen->add_option("--out", gen_args.out, "Output dataset directory")->required();
    gen->add_option("--seed", gen_args.seed, "Random seed")->required();

    SplitArgs split_args;
    auto* split = app.add_subcommand("split", "Partition a dataset into two induced subgraphs");
    split->add_option("--dataset", split_args.dataset, "Dataset directory")->required();
    split->add_option("--fraction", split_args.fraction, "Share of nodes in the first part");
    split->add_option("--seed", split_args.seed, "Random seed")->required();
    split->add_option("--out-a", split_args.out_a, "First output directory")->required();
    split->add_option("--out-b", split_args.out_b, "Second output directory")->required();

    std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return config_error;
    }

    try {
        if (train->parsed()) return cmd_train(train_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (corr->parsed()) return cmd_analyze(corr_args);
        if (probe->parsed()) return cmd_probe(probe_args);
        if (gen->parsed()) return cmd_gen(gen_args);
        if (split->parsed()) return cmd_split(split_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config_error;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data_error;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data_error;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return numerical_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return failure;
    }
    return failure;
}

}  // namespace dft::cli
