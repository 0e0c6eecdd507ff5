#include "rtb/params.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "rtb/errors.hpp"

namespace rtb::nn {

Tensor& ParamSet::declare(const std::string& path, std::size_t rows, std::size_t cols) {
    auto it = entries_.find(path);
    if (it != entries_.end()) {
        if (it->second.value.rows() != rows || it->second.value.cols() != cols)
            throw ConfigError("ParamSet::declare: shape conflict for " + path);
        return it->second.value;
    }
    Entry e;
    e.value = Tensor(rows, cols);
    e.grad = Tensor(rows, cols);
    return entries_.emplace(path, std::move(e)).first->second.value;
}

Tensor& ParamSet::value(const std::string& path) {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw ConfigError("ParamSet: unknown parameter " + path);
    return it->second.value;
}

const Tensor& ParamSet::value(const std::string& path) const {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw ConfigError("ParamSet: unknown parameter " + path);
    return it->second.value;
}

Tensor& ParamSet::grad(const std::string& path) {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw ConfigError("ParamSet: unknown parameter " + path);
    return it->second.grad;
}

const Tensor& ParamSet::grad(const std::string& path) const {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw ConfigError("ParamSet: unknown parameter " + path);
    return it->second.grad;
}

void ParamSet::add_grad(const std::string& path, const Tensor& g) {
    Tensor& acc = grad(path);
    if (!acc.same_shape(g)) throw ConfigError("ParamSet::add_grad: shape mismatch for " + path);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

void ParamSet::zero_grads() {
    for (auto& [path, e] : entries_) e.grad.fill(0.0);
}

std::vector<std::string> ParamSet::paths() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [path, e] : entries_) out.push_back(path);
    return out;
}

void ParamSet::copy_values_from(const ParamSet& other) {
    if (entries_.size() != other.entries_.size())
        throw ConfigError("ParamSet::copy_values_from: structure mismatch");
    auto it = entries_.begin();
    auto ot = other.entries_.begin();
    for (; it != entries_.end(); ++it, ++ot) {
        if (it->first != ot->first || !it->second.value.same_shape(ot->second.value))
            throw ConfigError("ParamSet::copy_values_from: structure mismatch at " + it->first);
        it->second.value = ot->second.value;
    }
}

void ParamSet::soft_update_from(const ParamSet& online, double tau) {
    if (entries_.size() != online.entries_.size())
        throw ConfigError("ParamSet::soft_update_from: structure mismatch");
    auto it = entries_.begin();
    auto ot = online.entries_.begin();
    for (; it != entries_.end(); ++it, ++ot) {
        if (it->first != ot->first)
            throw ConfigError("ParamSet::soft_update_from: structure mismatch at " + it->first);
        Tensor& t = it->second.value;
        const Tensor& o = ot->second.value;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += tau * (o[i] - t[i]);
    }
}

void xavier_init(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.data()) v = rng.uniform(-r, r);
}

void write_params(std::ostream& out, const ParamSet& params) {
    out << "rtbnn 1\n" << params.count() << "\n";
    char buf[64];
    params.for_each([&](const std::string& path, const Tensor& v, const Tensor&) {
        out << path << " " << v.rows() << " " << v.cols() << "\n";
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
            out << buf << (i + 1 == v.size() ? "" : " ");
        }
        out << "\n";
    });
}

void read_params(std::istream& in, ParamSet& params) {
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "rtbnn" || version != 1) throw InputError("not a rtbnn v1 checkpoint");
    std::size_t count = 0;
    in >> count;
    for (std::size_t k = 0; k < count; ++k) {
        std::string path;
        std::size_t rows = 0, cols = 0;
        in >> path >> rows >> cols;
        if (!in) throw InputError("truncated checkpoint");
        Tensor& t = params.declare(path, rows, cols);
        for (std::size_t i = 0; i < t.size(); ++i) in >> t[i];
        if (!in) throw InputError("truncated checkpoint values");
    }
}

void save_checkpoint(const ParamSet& params, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw InputError("cannot open checkpoint for writing: " + file);
    write_params(out, params);
    if (!out) throw InputError("write failure on checkpoint: " + file);
}

void load_checkpoint(ParamSet& params, const std::string& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open checkpoint: " + file);
    try {
        read_params(in, params);
    } catch (const InputError& e) {
        throw InputError(std::string(e.what()) + ": " + file);
    }
}

}  // namespace rtb::nn
