#pragma once

#include <cmath>
#include <map>
#include <string>

#include "rtb/errors.hpp"
#include "rtb/params.hpp"

namespace rtb::nn {

struct OptimizerConfig {
    double learning_rate = 1e-3;  // > 0
    double decay_factor = 1.0;    // (0, 1], multiplies the rate once per decay epoch
    double beta1 = 0.9;           // (0, 1)
    double beta2 = 0.999;         // (0, 1)
    double epsilon = 1e-8;        // > 0

    void validate() const {
        if (learning_rate <= 0) throw ConfigError("optimizer: learning_rate must be > 0");
        if (decay_factor <= 0 || decay_factor > 1)
            throw ConfigError("optimizer: decay_factor must be in (0, 1]");
        if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
            throw ConfigError("optimizer: moment coefficients must be in (0, 1)");
        if (epsilon <= 0) throw ConfigError("optimizer: epsilon must be > 0");
    }
};

// Adaptive-moment optimizer with bias correction. The decayed learning rate
// is always lr0 * decay^k so the stationarity argument (rate -> 0) holds
// exactly, not just approximately.
class AdamOptimizer {
public:
    explicit AdamOptimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    double current_lr() const {
        return cfg_.learning_rate * std::pow(cfg_.decay_factor, static_cast<double>(decay_epochs_));
    }

    void advance_decay() { ++decay_epochs_; }
    std::size_t steps() const { return step_count_; }
    const OptimizerConfig& config() const { return cfg_; }

    void step(ParamSet& params) {
        ++step_count_;
        const double lr = current_lr();
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
        params.for_each([&](const std::string& path, Tensor& v, Tensor& g) {
            Tensor& m = moment(m_, path, v);
            Tensor& s = moment(v_, path, v);
            for (std::size_t i = 0; i < v.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                s[i] = cfg_.beta2 * s[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                v[i] -= lr * (m[i] / bc1) / (std::sqrt(s[i] / bc2) + cfg_.epsilon);
                g[i] = 0.0;
            }
        });
    }

private:
    static Tensor& moment(std::map<std::string, Tensor>& store, const std::string& path,
                          const Tensor& like) {
        auto it = store.find(path);
        if (it == store.end()) it = store.emplace(path, Tensor(like.rows(), like.cols())).first;
        return it->second;
    }

    OptimizerConfig cfg_;
    std::size_t step_count_ = 0;
    std::size_t decay_epochs_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

}  // namespace rtb::nn
