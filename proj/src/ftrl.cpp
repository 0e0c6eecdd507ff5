#include "rtb/ftrl.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rtb/errors.hpp"

namespace rtb::ctr {

namespace {

// Keeps the logit bounded so predictions never collapse to exactly 0 or 1.
constexpr double kLogitCap = 35.0;

double sigmoid(double x) {
    if (x > kLogitCap) x = kLogitCap;
    if (x < -kLogitCap) x = -kLogitCap;
    return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

void FtrlConfig::validate() const {
    if (alpha <= 0 || beta < 0) throw ConfigError("ftrl: alpha must be > 0, beta >= 0");
    if (l1 < 0 || l2 < 0) throw ConfigError("ftrl: l1/l2 must be >= 0");
    if (dimension == 0) throw ConfigError("ftrl: dimension must be > 0");
}

FtrlModel::FtrlModel(FtrlConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    z_.assign(cfg_.dimension, 0.0);
    n_.assign(cfg_.dimension, 0.0);
}

double FtrlModel::weight(std::uint32_t i) const {
    const double z = z_[i];
    if (std::fabs(z) <= cfg_.l1) return 0.0;
    const double sign = z >= 0 ? 1.0 : -1.0;
    return -(z - sign * cfg_.l1) / ((cfg_.beta + std::sqrt(n_[i])) / cfg_.alpha + cfg_.l2);
}

double FtrlModel::predict(const SparseFeatures& features) const {
    double wx = 0.0;
    for (std::uint32_t i : features.indices) {
        if (i >= cfg_.dimension)
            throw InputError("ftrl: feature id " + std::to_string(i) + " out of range");
        wx += weight(i);
    }
    return sigmoid(wx);
}

void FtrlModel::update(const SparseFeatures& features, int label) {
    const double p = predict(features);
    const double g = p - static_cast<double>(label != 0);
    const double g2 = g * g;
    for (std::uint32_t i : features.indices) {
        const double w = weight(i);
        const double s = (std::sqrt(n_[i] + g2) - std::sqrt(n_[i])) / cfg_.alpha;
        z_[i] += g - s * w;
        n_[i] += g2;
    }
}

void FtrlModel::save(const std::string& file) const {
    std::ofstream out(file);
    if (!out) throw InputError("cannot open ftrl checkpoint for writing: " + file);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "# ftrl 1 dim=%u alpha=%.17g beta=%.17g l1=%.17g l2=%.17g",
                  cfg_.dimension, cfg_.alpha, cfg_.beta, cfg_.l1, cfg_.l2);
    out << buf << "\n";
    for (std::uint32_t i = 0; i < cfg_.dimension; ++i) {
        if (z_[i] == 0.0 && n_[i] == 0.0) continue;
        std::snprintf(buf, sizeof(buf), "%u %.17g %.17g", i, z_[i], n_[i]);
        out << buf << "\n";
    }
    if (!out) throw InputError("write failure on ftrl checkpoint: " + file);
}

FtrlModel FtrlModel::load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open ftrl checkpoint: " + file);
    std::string hash, magic;
    int version = 0;
    FtrlConfig cfg;
    std::string tok;
    in >> hash >> magic >> version;
    if (hash != "#" || magic != "ftrl" || version != 1)
        throw InputError("not an ftrl v1 checkpoint: " + file);
    auto read_kv = [&](const char* key, auto& dst) {
        in >> tok;
        const std::string prefix = std::string(key) + "=";
        if (tok.rfind(prefix, 0) != 0) throw InputError("ftrl checkpoint: expected " + prefix);
        dst = static_cast<std::decay_t<decltype(dst)>>(std::stod(tok.substr(prefix.size())));
    };
    read_kv("dim", cfg.dimension);
    read_kv("alpha", cfg.alpha);
    read_kv("beta", cfg.beta);
    read_kv("l1", cfg.l1);
    read_kv("l2", cfg.l2);
    FtrlModel model(cfg);
    std::uint32_t idx;
    double z, n;
    while (in >> idx >> z >> n) {
        if (idx >= cfg.dimension) throw InputError("ftrl checkpoint: index out of range");
        model.z_[idx] = z;
        model.n_[idx] = n;
    }
    return model;
}

}  // namespace rtb::ctr
