#pragma once

// Dataset directories, checkpoints, reports and CSV exports.
//
// Dataset directory:
//   manifest.json  {"name", "n", "d", "c", "feature_encoding": "dense_f32" | "csr_f32",
//                   "files": {"edges", "features", "labels" (optional)}}
//   edges.tsv      header "src\tdst", then one 0-indexed pair per line
//   labels.tsv     header "node\tlabel", one line per node
//   features.bin   u32 n, u32 d, then n*d f32, row-major
//   features.csr   u32 n, u32 d, u64 nnz, u64 indptr[n+1], u32 indices[nnz], f32 values[nnz]
// All binary fields are little-endian.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dft/graph.hpp"
#include "dft/metrics.hpp"
#include "dft/model.hpp"
#include "dft/train.hpp"

namespace dft {

enum class FeatureEncoding { dense_f32, csr_f32 };

struct DatasetManifest {
    std::string name;
    std::size_t n = 0;
    std::size_t d = 0;
    int c = 0;
    FeatureEncoding encoding = FeatureEncoding::dense_f32;
    std::string edges_file = "edges.tsv";
    std::string features_file = "features.bin";
    std::string labels_file;  // empty when the dataset carries no labels
};

struct Dataset {
    DatasetManifest manifest;
    Graph graph;
};

DatasetManifest read_manifest(const std::filesystem::path& dir);

// Throws IntegrityError on count mismatches against the manifest and
// ParseError (with the line number) on malformed text lines.
Dataset load_dataset(const std::filesystem::path& dir);

// Writes the canonical layout. Features are stored as f32. When the graph has
// labels, c is its class count.
void save_dataset(const Graph& g, const std::filesystem::path& dir, const std::string& name,
                  FeatureEncoding encoding = FeatureEncoding::dense_f32);

// Seeded node partition into two induced subgraphs; the first receives
// round(fraction * n) nodes. Node ids are renumbered in ascending order.
std::pair<Graph, Graph> split_graph(const Graph& g, double fraction, Rng& rng);

std::string encoding_name(FeatureEncoding e);
FeatureEncoding parse_encoding(const std::string& s);

// --- configuration <-> JSON --------------------------------------------------

nlohmann::json to_json(const ModelConfig& m);
// Strict: unknown keys raise ConfigError. Missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

// --- checkpoints ---------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "dft-ckpt-1";

// Directory with manifest.json (format, dtype, model config, tensor table) and
// tensors.bin (f64 little-endian, concatenated in table order).
void save_checkpoint(const std::filesystem::path& dir, ModelParams& params, const ModelConfig& cfg);

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    std::vector<std::string> tensor_names;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

// --- reports and CSV -----------------------------------------------------------

// %.9g
std::string format_number(double v);

nlohmann::json to_json(const MetricsReport& r);

void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

std::string loss_history_csv(const std::vector<EpochRecord>& history);
// n rows, one column per representation dimension.
std::string embeddings_csv(const Tensor& z);

}  // namespace dft
