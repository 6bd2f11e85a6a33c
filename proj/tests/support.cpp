#include "support.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "dft/log.hpp"

namespace dft::testing {

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(rows, cols, std::move(v));
}

Tensor random_param(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::parameter(rows, cols, std::move(v));
}

Tensor contract(const Tensor& t, const Tensor& w) { return sum(hadamard(t, w)); }

double grad_rel_error(const ScalarFn& f, std::vector<Tensor> inputs, double h) {
    for (auto& t : inputs) t.zero_grad();
    backward(f(inputs));
    double worst = 0.0;
    for (auto& t : inputs) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        std::vector<double> numeric(t.size());
        {
            NoGradGuard no_grad;
            auto v = t.mutable_values();
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double orig = v[i];
                v[i] = orig + h;
                const double fp = f(inputs).item();
                v[i] = orig - h;
                const double fm = f(inputs).item();
                v[i] = orig;
                numeric[i] = (fp - fm) / (2.0 * h);
            }
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += analytic[i] * analytic[i];
            nn += numeric[i] * numeric[i];
        }
        const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
        worst = std::max(worst, std::sqrt(diff) / denom);
    }
    return worst;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Graph two_block_sbm(std::size_t per_block, double p_in, double p_out, std::size_t dim, double separation,
                    Rng& rng) {
    SbmConfig cfg;
    cfg.blocks = {per_block, per_block};
    cfg.p_in = p_in;
    cfg.p_out = p_out;
    cfg.feat_means = separated_class_means(2, dim, separation);
    return sbm_generate(cfg, rng);
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dft-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

QuietLog::QuietLog() { logging::set_sink([](logging::Level, const std::string&) {}); }
QuietLog::~QuietLog() { logging::reset_sink(); }

}  // namespace dft::testing
