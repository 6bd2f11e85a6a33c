#pragma once

// Run configuration for the command-line tool: a strict JSON document.
//
// {
//   "source": "data/src", "target": "data/tgt", "output_dir": "runs/a",
//   "epochs": 500, "lr": 0.003, "n_critic": 5, "lambda_critic": 1, "lambda_gp": 10,
//   "lambda_t_divisor": 100, "gp_mode": "at_samples", "dropedge_rate": 0.2,
//   "ppmi": {"walk_len": 40, "walks_per_node": 10, "window": 5},
//   "model": {"hidden": 128, "variant": "dft", ...},
//   "export_embeddings": false, "evaluate_target": true
// }
//
// Every key is optional except source, target and output_dir. Unknown keys are
// rejected. Relative paths are resolved against the config file's directory.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dft/train.hpp"

namespace dft {

struct RunConfig {
    std::filesystem::path source;
    std::filesystem::path target;
    std::filesystem::path output_dir;
    TrainConfig train;
    bool export_embeddings = false;
    // Score the trained model on the target labels when the target dataset has
    // them. They are read after training and never reach the training path.
    bool evaluate_target = true;
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

GpMode parse_gp_mode(const std::string& s);
std::string gp_mode_name(GpMode m);

}  // namespace dft
