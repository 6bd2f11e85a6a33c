#include "dft/config.hpp"

#include <set>

#include "dft/error.hpp"
#include "dft/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dft {

GpMode parse_gp_mode(const std::string& s) {
    if (s == "at_samples") return GpMode::at_samples;
    if (s == "interpolate") return GpMode::interpolate;
    throw ConfigError("gp_mode must be 'at_samples' or 'interpolate', got '" + s + "'");
}

std::string gp_mode_name(GpMode m) { return m == GpMode::interpolate ? "interpolate" : "at_samples"; }

namespace {

const json& require(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("config: missing required key '") + key + "'");
    return j.at(key);
}

std::size_t as_uint(const json& v, const std::string& key) {
    if (!v.is_number_unsigned()) throw ConfigError("config: '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

double as_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
    return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw ConfigError("config: '" + key + "' must be true or false");
    return v.get<bool>();
}

fs::path as_path(const json& v, const std::string& key, const fs::path& base) {
    if (!v.is_string()) throw ConfigError("config: '" + key + "' must be a string");
    fs::path p = v.get<std::string>();
    return p.is_relative() ? base / p : p;
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    static const std::set<std::string> known{"source",        "target",        "output_dir",       "seed",
                                             "epochs",        "lr",            "n_critic",         "lambda_critic",
                                             "lambda_gp",     "lambda_t_divisor", "gp_mode",       "dropedge_rate",
                                             "ppmi",          "model",         "export_embeddings", "evaluate_target"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
    }
    RunConfig rc;
    rc.source = as_path(require(j, "source"), "source", base_dir);
    rc.target = as_path(require(j, "target"), "target", base_dir);
    rc.output_dir = as_path(require(j, "output_dir"), "output_dir", base_dir);
    TrainConfig& t = rc.train;
    if (j.contains("seed")) t.seed = as_uint(j["seed"], "seed");
    if (j.contains("epochs")) t.epochs = as_uint(j["epochs"], "epochs");
    if (j.contains("lr")) t.lr = as_number(j["lr"], "lr");
    if (j.contains("n_critic")) t.n_critic = as_uint(j["n_critic"], "n_critic");
    if (j.contains("lambda_critic")) t.lambda_critic = as_number(j["lambda_critic"], "lambda_critic");
    if (j.contains("lambda_gp")) t.lambda_gp = as_number(j["lambda_gp"], "lambda_gp");
    if (j.contains("lambda_t_divisor")) t.lambda_t_divisor = as_number(j["lambda_t_divisor"], "lambda_t_divisor");
    if (j.contains("gp_mode")) {
        if (!j["gp_mode"].is_string()) throw ConfigError("config: 'gp_mode' must be a string");
        t.gp_mode = parse_gp_mode(j["gp_mode"].get<std::string>());
    }
    if (j.contains("dropedge_rate")) t.dropedge_rate = as_number(j["dropedge_rate"], "dropedge_rate");
    if (j.contains("ppmi")) {
        const json& p = j["ppmi"];
        if (!p.is_object()) throw ConfigError("config: 'ppmi' must be an object");
        for (auto it = p.begin(); it != p.end(); ++it) {
            const std::string k = it.key();
            if (k == "walk_len") t.operators.ppmi.walk_len = as_uint(it.value(), "ppmi.walk_len");
            else if (k == "walks_per_node") t.operators.ppmi.walks_per_node = as_uint(it.value(), "ppmi.walks_per_node");
            else if (k == "window") t.operators.ppmi.window = as_uint(it.value(), "ppmi.window");
            else throw ConfigError("config: unknown key 'ppmi." + k + "'");
        }
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        if (m.is_object() && (m.contains("input_dim") || m.contains("num_classes"))) {
            throw ConfigError("config: model.input_dim and model.num_classes come from the data");
        }
        t.model = model_config_from_json(m);
    }
    if (j.contains("export_embeddings")) rc.export_embeddings = as_bool(j["export_embeddings"], "export_embeddings");
    if (j.contains("evaluate_target")) rc.evaluate_target = as_bool(j["evaluate_target"], "evaluate_target");
    t.validate();
    return rc;
}

RunConfig load_run_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

}  // namespace dft
