#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rtb/rng.hpp"
#include "rtb/tensor.hpp"

namespace rtb::nn {

// Named map from parameter path to tensor, with a gradient accumulator of
// identical shape per parameter. Paths are kept in a std::map so every
// iteration order (optimizer steps, checkpoints, soft updates) is
// deterministic.
class ParamSet {
public:
    Tensor& declare(const std::string& path, std::size_t rows, std::size_t cols);
    bool contains(const std::string& path) const { return entries_.count(path) != 0; }

    Tensor& value(const std::string& path);
    const Tensor& value(const std::string& path) const;
    Tensor& grad(const std::string& path);
    const Tensor& grad(const std::string& path) const;

    void add_grad(const std::string& path, const Tensor& g);
    void zero_grads();

    std::size_t count() const { return entries_.size(); }
    std::vector<std::string> paths() const;

    // Copies values from another set with identical structure (target nets).
    void copy_values_from(const ParamSet& other);

    // target <- tau * online + (1 - tau) * target, computed as
    // target += tau * (online - target) so the gap contracts by exactly
    // (1 - tau) per call.
    void soft_update_from(const ParamSet& online, double tau);

    template <class F>
    void for_each(F&& f) {
        for (auto& [path, e] : entries_) f(path, e.value, e.grad);
    }

    template <class F>
    void for_each(F&& f) const {
        for (const auto& [path, e] : entries_) f(path, e.value, e.grad);
    }

private:
    struct Entry {
        Tensor value;
        Tensor grad;
    };
    std::map<std::string, Entry> entries_;
};

void xavier_init(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Self-describing text checkpoint, format "rtbnn 1". Values are written with
// 17 significant digits so doubles round-trip bit-exactly.
void write_params(std::ostream& out, const ParamSet& params);
void read_params(std::istream& in, ParamSet& params);
void save_checkpoint(const ParamSet& params, const std::string& file);
void load_checkpoint(ParamSet& params, const std::string& file);

}  // namespace rtb::nn
