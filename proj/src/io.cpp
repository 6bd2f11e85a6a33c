#include "dft/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "dft/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dft {

namespace {

// --- little-endian byte buffers --------------------------------------------

class Writer {
public:
    template <class T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
        buf_.append(reinterpret_cast<const char*>(b), sizeof(T));
    }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& data, std::string file) : data_(data), file_(std::move(file)) {}

    template <class T>
    T get() {
        if (pos_ + sizeof(T) > data_.size()) {
            throw IntegrityError(file_ + ": truncated at byte " + std::to_string(pos_) + " (file has " +
                                 std::to_string(data_.size()) + " bytes)");
        }
        unsigned char b[sizeof(T)];
        std::memcpy(b, data_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    const std::string& data_;
    std::string file_;
    std::size_t pos_ = 0;
};

std::string read_binary(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_binary(const fs::path& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

// --- TSV ---------------------------------------------------------------------

struct TsvLine {
    std::size_t number;
    std::uint64_t a;
    std::uint64_t b;
};

std::uint64_t parse_field(std::string_view s, const std::string& file, std::size_t line, const char* what) {
    std::uint64_t v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || p != end) {
        throw ParseError(file, line, std::string("expected a non-negative integer ") + what + ", got '" +
                                         std::string(s) + "'");
    }
    return v;
}

std::vector<TsvLine> read_tsv_pairs(const fs::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    const std::string file = path.filename().string();
    std::string line;
    std::size_t number = 0;
    std::vector<TsvLine> out;
    bool seen_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!seen_header) {
            if (line != header) throw ParseError(file, number, "expected header '" + header + "'");
            seen_header = true;
            continue;
        }
        if (line.empty()) throw ParseError(file, number, "empty line");
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw ParseError(file, number, "expected exactly two tab-separated fields");
        }
        const std::string_view sv(line);
        out.push_back({number, parse_field(sv.substr(0, tab), file, number, "in column 1"),
                       parse_field(sv.substr(tab + 1), file, number, "in column 2")});
    }
    if (!seen_header) throw ParseError(file, 1, "missing header '" + header + "'");
    return out;
}

const char* kEdgeHeader = "src\tdst";
const char* kLabelHeader = "node\tlabel";

// --- strict JSON helpers -----------------------------------------------------

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }) == keys.end()) {
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
        }
    }
}

std::size_t get_uint(const json& j, const char* key, const std::string& where) {
    const json& v = j.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(where + "." + key + ": expected a non-negative integer");
    return v.get<std::size_t>();
}

double get_number(const json& j, const char* key, const std::string& where) {
    const json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return v.get<double>();
}

bool get_bool(const json& j, const char* key, const std::string& where) {
    const json& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected true or false");
    return v.get<bool>();
}

std::string get_string(const json& j, const char* key, const std::string& where) {
    const json& v = j.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return v.get<std::string>();
}

json decorr_to_json(const DecorrConfig& d) {
    return {{"lambda1", d.lambda1}, {"lambda2", d.lambda2}, {"gamma", d.gamma}, {"num_layers", d.num_layers}};
}

DecorrConfig decorr_from_json(const json& j, const std::string& where) {
    reject_unknown(j, {"lambda1", "lambda2", "gamma", "num_layers"}, where);
    DecorrConfig d;
    if (j.contains("lambda1")) d.lambda1 = get_number(j, "lambda1", where);
    if (j.contains("lambda2")) d.lambda2 = get_number(j, "lambda2", where);
    if (j.contains("gamma")) d.gamma = get_number(j, "gamma", where);
    if (j.contains("num_layers")) d.num_layers = get_uint(j, "num_layers", where);
    return d;
}

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": invalid JSON: " + e.what());
    }
}

std::size_t manifest_uint(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw IntegrityError(where + ": missing '" + key + "'");
    const json& v = j.at(key);
    if (!v.is_number_unsigned()) throw IntegrityError(where + ": '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

}  // namespace

std::string encoding_name(FeatureEncoding e) { return e == FeatureEncoding::csr_f32 ? "csr_f32" : "dense_f32"; }

FeatureEncoding parse_encoding(const std::string& s) {
    if (s == "dense_f32") return FeatureEncoding::dense_f32;
    if (s == "csr_f32") return FeatureEncoding::csr_f32;
    throw DataError("unknown feature_encoding '" + s + "' (expected dense_f32 or csr_f32)");
}

std::string read_text_file(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("no such file: " + path.string());
    return read_binary(path);
}

void write_text_file(const fs::path& path, const std::string& contents) { write_binary(path, contents); }

DatasetManifest read_manifest(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
    const fs::path mpath = dir / "manifest.json";
    const std::string where = mpath.string();
    const json j = parse_json_file(mpath);
    if (!j.is_object()) throw IntegrityError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::set<std::string> known{"name", "n", "d", "c", "feature_encoding", "files"};
        if (!known.count(it.key())) throw IntegrityError(where + ": unknown key '" + it.key() + "'");
    }
    DatasetManifest m;
    if (!j.contains("name") || !j["name"].is_string()) throw IntegrityError(where + ": 'name' must be a string");
    m.name = j["name"].get<std::string>();
    m.n = manifest_uint(j, "n", where);
    m.d = manifest_uint(j, "d", where);
    m.c = static_cast<int>(manifest_uint(j, "c", where));
    if (!j.contains("feature_encoding") || !j["feature_encoding"].is_string()) {
        throw IntegrityError(where + ": 'feature_encoding' must be a string");
    }
    try {
        m.encoding = parse_encoding(j["feature_encoding"].get<std::string>());
    } catch (const DataError& e) {
        throw IntegrityError(where + ": " + e.what());
    }
    if (!j.contains("files") || !j["files"].is_object()) throw IntegrityError(where + ": 'files' must be an object");
    const json& f = j["files"];
    for (auto it = f.begin(); it != f.end(); ++it) {
        if (it.key() != "edges" && it.key() != "features" && it.key() != "labels") {
            throw IntegrityError(where + ": unknown key 'files." + it.key() + "'");
        }
        if (!it.value().is_string()) throw IntegrityError(where + ": 'files." + it.key() + "' must be a string");
    }
    if (!f.contains("edges") || !f.contains("features")) {
        throw IntegrityError(where + ": 'files' needs 'edges' and 'features'");
    }
    m.edges_file = f["edges"].get<std::string>();
    m.features_file = f["features"].get<std::string>();
    if (f.contains("labels")) m.labels_file = f["labels"].get<std::string>();
    if (m.n == 0) throw IntegrityError(where + ": n must be > 0");
    if (m.d == 0) throw IntegrityError(where + ": d must be > 0");
    return m;
}

namespace {

Tensor load_dense_features(const fs::path& path, const DatasetManifest& m) {
    const std::string data = read_binary(path);
    const std::string file = path.filename().string();
    Reader r(data, file);
    const auto n = r.get<std::uint32_t>();
    const auto d = r.get<std::uint32_t>();
    if (n != m.n || d != m.d) {
        throw IntegrityError(file + ": header says " + std::to_string(n) + " x " + std::to_string(d) +
                             ", manifest expects " + std::to_string(m.n) + " x " + std::to_string(m.d));
    }
    const std::size_t expected = static_cast<std::size_t>(n) * d * sizeof(float);
    if (r.remaining() != expected) {
        throw IntegrityError(file + ": expected " + std::to_string(static_cast<std::size_t>(n) * d) +
                             " f32 values (" + std::to_string(expected) + " bytes), found " +
                             std::to_string(r.remaining()) + " bytes");
    }
    std::vector<double> v(static_cast<std::size_t>(n) * d);
    for (auto& x : v) x = static_cast<double>(r.get<float>());
    return Tensor(n, d, std::move(v));
}

Tensor load_csr_features(const fs::path& path, const DatasetManifest& m) {
    const std::string data = read_binary(path);
    const std::string file = path.filename().string();
    Reader r(data, file);
    const auto n = r.get<std::uint32_t>();
    const auto d = r.get<std::uint32_t>();
    const auto nnz = r.get<std::uint64_t>();
    if (n != m.n || d != m.d) {
        throw IntegrityError(file + ": header says " + std::to_string(n) + " x " + std::to_string(d) +
                             ", manifest expects " + std::to_string(m.n) + " x " + std::to_string(m.d));
    }
    const std::size_t expected = (static_cast<std::size_t>(n) + 1) * 8 + nnz * 4 + nnz * 4;
    if (r.remaining() != expected) {
        throw IntegrityError(file + ": expected " + std::to_string(expected) + " bytes after the header for nnz " +
                             std::to_string(nnz) + ", found " + std::to_string(r.remaining()));
    }
    std::vector<std::uint64_t> indptr(static_cast<std::size_t>(n) + 1);
    for (auto& p : indptr) p = r.get<std::uint64_t>();
    std::vector<std::uint32_t> idx(nnz);
    for (auto& i : idx) i = r.get<std::uint32_t>();
    if (indptr.front() != 0 || indptr.back() != nnz) {
        throw IntegrityError(file + ": indptr must start at 0 and end at nnz " + std::to_string(nnz));
    }
    std::vector<double> v(static_cast<std::size_t>(n) * d, 0.0);
    for (std::size_t row = 0; row < n; ++row) {
        if (indptr[row] > indptr[row + 1]) throw IntegrityError(file + ": indptr decreases at row " + std::to_string(row));
        for (std::uint64_t p = indptr[row]; p < indptr[row + 1]; ++p) {
            if (idx[p] >= d) {
                throw IntegrityError(file + ": column index " + std::to_string(idx[p]) + " >= d " + std::to_string(d));
            }
            if (p > indptr[row] && idx[p] <= idx[p - 1]) {
                throw IntegrityError(file + ": column indices not strictly increasing in row " + std::to_string(row));
            }
        }
    }
    for (std::size_t row = 0; row < n; ++row) {
        for (std::uint64_t p = indptr[row]; p < indptr[row + 1]; ++p) {
            v[row * d + idx[p]] = static_cast<double>(r.get<float>());
        }
    }
    return Tensor(n, d, std::move(v));
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
    DatasetManifest m = read_manifest(dir);

    std::vector<Edge> edges;
    const fs::path epath = dir / m.edges_file;
    for (const auto& l : read_tsv_pairs(epath, kEdgeHeader)) {
        if (l.a >= m.n || l.b >= m.n) {
            throw ParseError(epath.filename().string(), l.number,
                             "endpoint out of range for n = " + std::to_string(m.n));
        }
        if (l.a == l.b) continue;
        edges.push_back({static_cast<std::uint32_t>(l.a), static_cast<std::uint32_t>(l.b)});
    }

    const fs::path fpath = dir / m.features_file;
    Tensor features = m.encoding == FeatureEncoding::dense_f32 ? load_dense_features(fpath, m) : load_csr_features(fpath, m);

    std::optional<std::vector<int>> labels;
    if (!m.labels_file.empty()) {
        const fs::path lpath = dir / m.labels_file;
        const std::string file = lpath.filename().string();
        const auto lines = read_tsv_pairs(lpath, kLabelHeader);
        if (lines.size() != m.n) {
            throw IntegrityError(file + ": expected " + std::to_string(m.n) + " label lines, found " +
                                 std::to_string(lines.size()));
        }
        std::vector<int> lab(m.n, -1);
        for (const auto& l : lines) {
            if (l.a >= m.n) throw ParseError(file, l.number, "node out of range for n = " + std::to_string(m.n));
            if (l.b >= static_cast<std::uint64_t>(m.c)) {
                throw ParseError(file, l.number, "label " + std::to_string(l.b) + " >= c = " + std::to_string(m.c));
            }
            if (lab[l.a] != -1) throw ParseError(file, l.number, "duplicate node " + std::to_string(l.a));
            lab[l.a] = static_cast<int>(l.b);
        }
        labels = std::move(lab);
    }
    std::optional<int> c;
    if (labels) c = m.c;
    Graph g(m.n, std::move(edges), std::move(features), std::move(labels), c);
    return {std::move(m), std::move(g)};
}

void save_dataset(const Graph& g, const fs::path& dir, const std::string& name, FeatureEncoding encoding) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    const std::size_t n = g.num_nodes(), d = g.feature_dim();

    json files = {{"edges", "edges.tsv"},
                  {"features", encoding == FeatureEncoding::csr_f32 ? "features.csr" : "features.bin"}};
    if (g.has_labels()) files["labels"] = "labels.tsv";
    json manifest = {{"name", name},
                     {"n", n},
                     {"d", d},
                     {"c", g.has_labels() ? *g.num_classes() : 0},
                     {"feature_encoding", encoding_name(encoding)},
                     {"files", files}};
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

    std::string edges = std::string(kEdgeHeader) + "\n";
    for (const auto& e : g.edges()) edges += std::to_string(e.u) + "\t" + std::to_string(e.v) + "\n";
    write_text_file(dir / "edges.tsv", edges);

    const auto x = g.features().values();
    Writer w;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(n));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    if (encoding == FeatureEncoding::dense_f32) {
        for (double v : x) w.put<float>(static_cast<float>(v));
        write_binary(dir / "features.bin", w.bytes());
    } else {
        std::vector<std::uint64_t> indptr{0};
        std::vector<std::uint32_t> idx;
        std::vector<float> vals;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                const auto f = static_cast<float>(x[i * d + j]);
                if (f != 0.0f) {
                    idx.push_back(static_cast<std::uint32_t>(j));
                    vals.push_back(f);
                }
            }
            indptr.push_back(idx.size());
        }
        w.put<std::uint64_t>(idx.size());
        for (auto p : indptr) w.put<std::uint64_t>(p);
        for (auto i : idx) w.put<std::uint32_t>(i);
        for (auto v : vals) w.put<float>(v);
        write_binary(dir / "features.csr", w.bytes());
    }

    if (g.has_labels()) {
        std::string labels = std::string(kLabelHeader) + "\n";
        const auto& lab = g.labels();
        for (std::size_t i = 0; i < n; ++i) labels += std::to_string(i) + "\t" + std::to_string(lab[i]) + "\n";
        write_text_file(dir / "labels.tsv", labels);
    }
}

std::pair<Graph, Graph> split_graph(const Graph& g, double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split: fraction must lie in (0, 1)");
    const std::size_t n = g.num_nodes();
    const auto first = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (first == 0 || first == n) throw ConfigError("split: fraction leaves one side empty");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    std::vector<int> side(n, 1);
    for (std::size_t i = 0; i < first; ++i) side[perm[i]] = 0;

    auto induced = [&](int which) {
        std::vector<std::int64_t> remap(n, -1);
        std::vector<std::size_t> nodes;
        for (std::size_t i = 0; i < n; ++i) {
            if (side[i] == which) {
                remap[i] = static_cast<std::int64_t>(nodes.size());
                nodes.push_back(i);
            }
        }
        const std::size_t d = g.feature_dim();
        std::vector<double> feats(nodes.size() * d);
        const auto x = g.features().values();
        for (std::size_t r = 0; r < nodes.size(); ++r) {
            std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(nodes[r] * d), d, feats.begin() + static_cast<std::ptrdiff_t>(r * d));
        }
        std::vector<Edge> edges;
        for (const auto& e : g.edges()) {
            if (remap[e.u] >= 0 && remap[e.v] >= 0) {
                edges.push_back({static_cast<std::uint32_t>(remap[e.u]), static_cast<std::uint32_t>(remap[e.v])});
            }
        }
        std::optional<std::vector<int>> labels;
        std::optional<int> c;
        if (g.has_labels()) {
            std::vector<int> lab;
            for (auto i : nodes) lab.push_back(g.labels()[i]);
            labels = std::move(lab);
            c = g.num_classes();
        }
        return Graph(nodes.size(), std::move(edges), Tensor(nodes.size(), d, std::move(feats)), std::move(labels), c);
    };
    return {induced(0), induced(1)};
}

json to_json(const ModelConfig& m) {
    return {{"input_dim", m.input_dim},
            {"hidden", m.hidden},
            {"num_classes", m.num_classes},
            {"pe_dim", m.pe_dim},
            {"transformer_layers", m.transformer_layers},
            {"ffn_width", m.ffn_width},
            {"decorr_adj", decorr_to_json(m.decorr_adj)},
            {"decorr_ppmi", decorr_to_json(m.decorr_ppmi)},
            {"variant", std::string(variant_name(m.variant))},
            {"dropout", m.dropout},
            {"pe_every_layer", m.pe_every_layer},
            {"attention_mask", m.attention_mask == AttentionMask::literal ? "literal" : "neighbors"},
            {"bn_graph_stats", m.bn_graph_stats}};
}

ModelConfig model_config_from_json(const json& j) {
    const std::string where = "model";
    reject_unknown(j,
                   {"input_dim", "hidden", "num_classes", "pe_dim", "transformer_layers", "ffn_width", "decorr_adj",
                    "decorr_ppmi", "variant", "dropout", "pe_every_layer", "attention_mask", "bn_graph_stats"},
                   where);
    ModelConfig m;
    if (j.contains("input_dim")) m.input_dim = get_uint(j, "input_dim", where);
    if (j.contains("hidden")) m.hidden = get_uint(j, "hidden", where);
    if (j.contains("num_classes")) m.num_classes = get_uint(j, "num_classes", where);
    if (j.contains("pe_dim")) m.pe_dim = get_uint(j, "pe_dim", where);
    if (j.contains("transformer_layers")) m.transformer_layers = get_uint(j, "transformer_layers", where);
    if (j.contains("ffn_width")) m.ffn_width = get_uint(j, "ffn_width", where);
    if (j.contains("decorr_adj")) m.decorr_adj = decorr_from_json(j["decorr_adj"], where + ".decorr_adj");
    if (j.contains("decorr_ppmi")) m.decorr_ppmi = decorr_from_json(j["decorr_ppmi"], where + ".decorr_ppmi");
    if (j.contains("variant")) m.variant = parse_variant(get_string(j, "variant", where));
    if (j.contains("dropout")) m.dropout = get_number(j, "dropout", where);
    if (j.contains("pe_every_layer")) m.pe_every_layer = get_bool(j, "pe_every_layer", where);
    if (j.contains("attention_mask")) {
        const std::string mask = get_string(j, "attention_mask", where);
        if (mask == "neighbors") m.attention_mask = AttentionMask::neighbors;
        else if (mask == "literal") m.attention_mask = AttentionMask::literal;
        else throw ConfigError(where + ".attention_mask: expected 'neighbors' or 'literal'");
    }
    if (j.contains("bn_graph_stats")) m.bn_graph_stats = get_bool(j, "bn_graph_stats", where);
    return m;
}

void save_checkpoint(const fs::path& dir, ModelParams& params, const ModelConfig& cfg) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    Writer w;
    json table = json::array();
    std::size_t offset = 0;
    params.visit_state([&](const std::string& name, std::size_t rows, std::size_t cols, std::span<double> data) {
        table.push_back({{"name", name}, {"shape", {rows, cols}}, {"offset", offset}});
        for (double v : data) w.put<double>(v);
        offset += data.size() * sizeof(double);
    });
    json manifest = {{"format", kCheckpointFormat}, {"dtype", "f64"}, {"model", to_json(cfg)}, {"tensors", table}};
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
    write_binary(dir / "tensors.bin", w.bytes());
}

Checkpoint load_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("checkpoint directory not found: " + dir.string());
    const fs::path mpath = dir / "manifest.json";
    const json j = parse_json_file(mpath);
    const std::string where = mpath.string();
    if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
        throw IntegrityError(where + ": not a " + std::string(kCheckpointFormat) + " checkpoint");
    }
    if (j.value("dtype", "") != "f64") throw IntegrityError(where + ": unsupported dtype");
    Checkpoint ck;
    try {
        ck.config = model_config_from_json(j.at("model"));
        ck.config.validate();
    } catch (const ConfigError& e) {
        throw IntegrityError(where + ": " + e.what());
    }
    Rng scratch(0);
    ck.params = init_model(ck.config, scratch);

    std::map<std::string, std::tuple<std::size_t, std::size_t, std::size_t>> table;
    for (const auto& t : j.at("tensors")) {
        const auto& shape = t.at("shape");
        table[t.at("name").get<std::string>()] = {shape.at(0).get<std::size_t>(), shape.at(1).get<std::size_t>(),
                                                  t.at("offset").get<std::size_t>()};
    }
    const std::string blob = read_binary(dir / "tensors.bin");
    std::size_t used = 0;
    ck.params.visit_state([&](const std::string& name, std::size_t rows, std::size_t cols, std::span<double> data) {
        auto it = table.find(name);
        if (it == table.end()) throw IntegrityError(where + ": missing tensor '" + name + "'");
        const auto [r, c, off] = it->second;
        if (r != rows || c != cols) {
            throw IntegrityError(where + ": tensor '" + name + "' has shape " + std::to_string(r) + "x" +
                                 std::to_string(c) + ", model expects " + std::to_string(rows) + "x" +
                                 std::to_string(cols));
        }
        if (off + data.size() * sizeof(double) > blob.size()) {
            throw IntegrityError("tensors.bin: tensor '" + name + "' extends past the end of the file");
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::uint64_t bits = 0;
            for (std::size_t b = 0; b < 8; ++b) {
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[off + i * 8 + b])) << (8 * b);
            }
            data[i] = std::bit_cast<double>(bits);
        }
        used += 1;
        ck.tensor_names.push_back(name);
    });
    if (used != table.size()) {
        throw IntegrityError(where + ": " + std::to_string(table.size() - used) +
                             " tensor(s) not used by the configured model");
    }
    return ck;
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

json to_json(const MetricsReport& r) {
    json per_class = json::array();
    for (std::size_t c = 0; c < r.f1.f1.size(); ++c) {
        per_class.push_back({{"class", c},
                             {"present", static_cast<bool>(r.f1.present[c])},
                             {"precision", r.f1.precision[c]},
                             {"recall", r.f1.recall[c]},
                             {"f1", r.f1.f1[c]}});
    }
    json j = {{"num_nodes", r.num_nodes},
              {"num_classes", r.num_classes},
              {"micro_f1", r.f1.micro},
              {"macro_f1", r.f1.macro},
              {"per_class", per_class}};
    j["icdr"] = r.icdr ? json(*r.icdr) : json(nullptr);
    j["silhouette"] = r.silhouette ? json(*r.silhouette) : json(nullptr);
    return j;
}

std::string loss_history_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,L_s,L_t,L_critic,L_gp,seconds\n";
    for (const auto& r : history) {
        out += std::to_string(r.epoch) + "," + format_number(r.l_s) + "," + format_number(r.l_t) + "," +
               format_number(r.l_critic) + "," + format_number(r.l_gp) + "," + format_number(r.seconds) + "\n";
    }
    return out;
}

std::string embeddings_csv(const Tensor& z) {
    std::string out;
    for (std::size_t c = 0; c < z.cols(); ++c) out += (c ? ",z" : "z") + std::to_string(c);
    out += "\n";
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t c = 0; c < z.cols(); ++c) {
            if (c) out += ",";
            out += format_number(z(i, c));
        }
        out += "\n";
    }
    return out;
}

}  // namespace dft
