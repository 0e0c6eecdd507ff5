#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtb/features.hpp"

namespace rtb::ctr {

struct FtrlConfig {
    double alpha = 0.05;
    double beta = 1.0;
    double l1 = 1.0;
    double l2 = 1.0;
    std::uint32_t dimension = 1u << 18;

    void validate() const;
};

// Online logistic regression with the FTRL-proximal per-coordinate update.
// Training is single-threaded; a trained model is read-only through
// predict() and safe to share.
class FtrlModel {
public:
    explicit FtrlModel(FtrlConfig cfg);

    // sigmoid of the sparse dot product, strictly inside (0, 1).
    double predict(const SparseFeatures& features) const;

    void update(const SparseFeatures& features, int label);

    double weight(std::uint32_t index) const;
    const FtrlConfig& config() const { return cfg_; }

    // Text checkpoint: header plus one "feature_id z n" line per touched
    // coordinate.
    void save(const std::string& file) const;
    static FtrlModel load(const std::string& file);

private:
    FtrlConfig cfg_;
    std::vector<double> z_;
    std::vector<double> n_;
};

}  // namespace rtb::ctr
