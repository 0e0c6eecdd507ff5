#pragma once

#include <functional>
#include <vector>

#include "rtb/errors.hpp"
#include "rtb/features.hpp"

namespace rtb::om {

// Floor used whenever hazards feed a logarithm. Model outputs are clipped to
// [kHazardFloor, 1 - kHazardFloor]; aggregated estimators (Kaplan-Meier) may
// carry exact 0/1 hazards and are clipped at evaluation time instead.
constexpr double kHazardFloor = 1e-6;

struct PriceSpace {
    int b_max = 300;  // integer price buckets 1..b_max

    void validate() const {
        if (b_max < 2) throw ConfigError("price space: b_max must be >= 2");
    }
};

// One censored-auction observation. For a lost (censored) auction the
// observed price is the loser's own bid; for a won auction it is the market
// price itself.
struct SurvivalSample {
    SparseFeatures features;
    int observed_price = 1;  // bucket in [1, b_max]
    bool censored = false;
};

// Per-bucket market-price distribution: hazards and the pdf they induce,
// p_j = h_j * prod_{k<j} (1 - h_k), with the leftover mass above b_max kept
// explicitly.
class MarketDistribution {
public:
    static MarketDistribution from_hazards(std::vector<double> hazards);

    int b_max() const { return static_cast<int>(hazards_.size()); }
    const std::vector<double>& hazards() const { return hazards_; }
    const std::vector<double>& pdf() const { return pdf_; }
    double residual_mass() const { return residual_; }

    double hazard(int bucket) const { return hazards_[static_cast<std::size_t>(bucket - 1)]; }
    double pdf_at(int bucket) const { return pdf_[static_cast<std::size_t>(bucket - 1)]; }

    // Probability that the market price falls in buckets 1..cutoff.
    double win_probability(int cutoff) const;

    // Copy with hazards clamped into [floor, 1 - floor] and the pdf rederived.
    MarketDistribution clipped(double floor = kHazardFloor) const;

private:
    friend MarketDistribution kaplan_meier(const std::vector<SurvivalSample>&, const PriceSpace&);
    std::vector<double> hazards_;
    std::vector<double> pdf_;
    double residual_ = 0.0;
};

// Negative log likelihood of an observed market price, computed on the
// hazard scale: -[log h_z + sum_{j<z} log(1 - h_j)]. Equals -log pdf[z] by
// the telescoping identity; tests hold the two routes against each other.
double loss_observed(const MarketDistribution& dist, int z);

// Lost auction at own bid a: bidding below the market price is a certain
// loss, so the likelihood is the survival past every bucket below a,
// -sum_{j<a} log(1 - h_j).
double loss_censored(const MarketDistribution& dist, int own_bid);

// Won auction at own bid a (a >= 2): -log[1 - prod_{j<a} (1 - h_j)].
double loss_win(const MarketDistribution& dist, int own_bid);

// Aggregated (feature-blind) discrete Kaplan-Meier estimate. Hazard at j is
// events_j / at_risk_j; censored samples leave the risk set after their own
// bid bucket. The pdf is accumulated in exact rational arithmetic while it
// fits, so an uncensored dataset reproduces the empirical histogram exactly.
MarketDistribution kaplan_meier(const std::vector<SurvivalSample>& data,
                                const PriceSpace& space);

// Average negative log probability of the true market price under a
// per-request model. Eval samples must all be uncensored.
double anlp(const std::function<MarketDistribution(const SparseFeatures&)>& model,
            const std::vector<SurvivalSample>& eval);

}  // namespace rtb::om
