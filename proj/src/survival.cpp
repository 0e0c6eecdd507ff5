#include "rtb/survival.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>

namespace rtb::om {

MarketDistribution MarketDistribution::from_hazards(std::vector<double> hazards) {
    if (hazards.empty()) throw ConfigError("market distribution: empty hazard vector");
    MarketDistribution d;
    d.hazards_ = std::move(hazards);
    d.pdf_.resize(d.hazards_.size());
    double survival = 1.0;
    for (std::size_t j = 0; j < d.hazards_.size(); ++j) {
        const double h = d.hazards_[j];
        if (!(h >= 0.0 && h <= 1.0))
            throw InputError("market distribution: hazard outside [0, 1]");
        d.pdf_[j] = h * survival;
        survival *= 1.0 - h;
    }
    d.residual_ = survival;
    return d;
}

double MarketDistribution::win_probability(int cutoff) const {
    if (cutoff <= 0) return 0.0;
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cutoff), pdf_.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += pdf_[j];
    return sum;
}

MarketDistribution MarketDistribution::clipped(double floor) const {
    std::vector<double> h = hazards_;
    for (double& v : h) v = std::min(std::max(v, floor), 1.0 - floor);
    return from_hazards(std::move(h));
}

namespace {

void check_bucket(const MarketDistribution& dist, int bucket, const char* who) {
    if (bucket < 1 || bucket > dist.b_max())
        throw InputError(std::string(who) + ": bucket out of range");
}

}  // namespace

double loss_observed(const MarketDistribution& dist, int z) {
    check_bucket(dist, z, "loss_observed");
    double loss = -std::log(dist.hazard(z));
    for (int j = 1; j < z; ++j) loss -= std::log(1.0 - dist.hazard(j));
    return loss;
}

double loss_censored(const MarketDistribution& dist, int own_bid) {
    check_bucket(dist, own_bid, "loss_censored");
    double loss = 0.0;
    for (int j = 1; j < own_bid; ++j) loss -= std::log(1.0 - dist.hazard(j));
    return loss;
}

double loss_win(const MarketDistribution& dist, int own_bid) {
    check_bucket(dist, own_bid, "loss_win");
    double survival = 1.0;
    for (int j = 1; j < own_bid; ++j) survival *= 1.0 - dist.hazard(j);
    return -std::log(1.0 - survival);
}

namespace {

// Running survival product kept as an exact reduced fraction while the
// numerator and denominator fit comfortably in 64 bits; degrades to plain
// doubles afterwards.
struct SurvivalFraction {
    std::uint64_t num = 1, den = 1;
    bool exact = true;
    double approx = 1.0;

    void multiply(std::uint64_t a, std::uint64_t b) {  // *= a / b, b > 0
        approx *= static_cast<double>(a) / static_cast<double>(b);
        if (!exact) return;
        if (a == 0) {
            num = 0;
            den = 1;
            return;
        }
        std::uint64_t g1 = std::gcd(a, b);
        a /= g1;
        b /= g1;
        const std::uint64_t g2 = std::gcd(num, b);
        std::uint64_t n2 = num / g2;
        b /= g2;
        const std::uint64_t g3 = std::gcd(a, den);
        a /= g3;
        std::uint64_t d2 = den / g3;
        constexpr std::uint64_t kLimit = 1ull << 53;
        if (n2 > kLimit / std::max<std::uint64_t>(a, 1) ||
            d2 > kLimit / std::max<std::uint64_t>(b, 1)) {
            exact = false;
            return;
        }
        num = n2 * a;
        den = d2 * b;
    }

    double value() const {
        return exact ? static_cast<double>(num) / static_cast<double>(den) : approx;
    }

    // value() * a / b with a single rounding when everything is exact
    double times(std::uint64_t a, std::uint64_t b) const {
        constexpr std::uint64_t kLimit = 1ull << 53;
        if (exact && a <= kLimit / std::max<std::uint64_t>(num, 1) &&
            b <= kLimit / std::max<std::uint64_t>(den, 1))
            return static_cast<double>(num * a) / static_cast<double>(den * b);
        return approx * static_cast<double>(a) / static_cast<double>(b);
    }
};

}  // namespace

MarketDistribution kaplan_meier(const std::vector<SurvivalSample>& data,
                                const PriceSpace& space) {
    if (data.empty()) throw InputError("kaplan_meier: empty dataset");
    space.validate();
    const std::size_t b = static_cast<std::size_t>(space.b_max);
    std::vector<std::uint64_t> events(b + 1, 0);  // uncensored market prices at j
    std::vector<std::uint64_t> exits(b + 1, 0);   // samples leaving the risk set after j
    for (const auto& s : data) {
        if (s.observed_price < 1 || s.observed_price > space.b_max)
            throw InputError("kaplan_meier: observed price out of bucket range");
        const auto j = static_cast<std::size_t>(s.observed_price);
        if (!s.censored) events[j] += 1;
        exits[j] += 1;
    }

    MarketDistribution d;
    d.hazards_.assign(b, 0.0);
    d.pdf_.assign(b, 0.0);
    SurvivalFraction survival;
    std::uint64_t at_risk = data.size();
    for (std::size_t j = 1; j <= b; ++j) {
        if (at_risk > 0 && events[j] > 0) {
            d.hazards_[j - 1] = static_cast<double>(events[j]) / static_cast<double>(at_risk);
            d.pdf_[j - 1] = survival.times(events[j], at_risk);
            survival.multiply(at_risk - events[j], at_risk);
        }
        at_risk -= std::min(exits[j], at_risk);
    }
    d.residual_ = survival.value();
    return d;
}

double anlp(const std::function<MarketDistribution(const SparseFeatures&)>& model,
            const std::vector<SurvivalSample>& eval) {
    if (eval.empty()) throw InputError("anlp: empty eval set");
    double total = 0.0;
    for (const auto& s : eval) {
        if (s.censored) throw InputError("anlp: eval set must be uncensored");
        const MarketDistribution dist = model(s.features).clipped();
        total += -std::log(dist.pdf_at(s.observed_price));
    }
    return total / static_cast<double>(eval.size());
}

}  // namespace rtb::om
