#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtb/features.hpp"
#include "rtb/rng.hpp"
#include "rtb/survival.hpp"

namespace rtb::io {

// One auction opportunity as read from a bid log.
struct BidRequest {
    std::uint64_t auction_id = 0;
    SparseFeatures features;
    std::optional<int> click_label;
    std::optional<std::int64_t> logged_market_price;  // [1, b_max] when present
};

// Column roles for TSV ingestion, declared rather than positional-fixed so
// small real excerpts in other layouts can be ingested. Roles:
//   id     auction id (integer)
//   click  binary click label
//   price  logged market price, must land in [1, b_max]
//   feats  comma-separated native feature ids (the format write_bid_log emits)
//   feat   raw categorical value, hashed into the feature space
//   skip   ignored column
struct LogSchema {
    std::vector<std::string> roles;
    std::uint32_t feature_dimension = 1u << 18;
    int b_max = 300;

    static LogSchema parse(const std::string& decl, std::uint32_t dimension, int b_max);
    void validate() const;
};

struct ParseStats {
    std::size_t lines = 0;
    std::size_t parsed = 0;
    std::size_t malformed = 0;
};

// Reads a whole log; malformed lines are counted and skipped, more than 1%
// malformed is a hard error.
std::vector<BidRequest> parse_bid_log(const std::string& path, const LogSchema& schema,
                                      ParseStats* stats = nullptr);

// Writes the native layout: id <tab> click <tab> price <tab> feats.
void write_bid_log(const std::string& path, const std::vector<BidRequest>& requests);
LogSchema native_schema(std::uint32_t dimension, int b_max);

// --- synthetic market with known ground truth ---

struct SegmentSpec {
    double weight = 0.0;
    std::map<int, double> price_pdf;  // bucket -> probability, sums to 1
    double ctr = 0.0;
};

struct SyntheticMarketSpec {
    std::size_t num_requests = 0;
    std::vector<std::uint32_t> noise_field_cardinalities;
    std::vector<SegmentSpec> segments;  // weights sum to 1; segment id becomes field 0
    int b_max = 300;
    std::uint64_t seed = 1;

    void validate() const;
    std::uint32_t feature_dimension() const;
};

struct SyntheticGroundTruth {
    SyntheticMarketSpec spec;

    // Conditional entropy E[-log p(z | segment)]: the ANLP floor for any
    // model that sees the segment.
    double price_entropy() const;
    std::vector<double> aggregate_pdf() const;  // mixture over segments
    double mean_price() const;

    void save(const std::string& file) const;
    static SyntheticGroundTruth load(const std::string& file);
};

std::vector<BidRequest> generate_synthetic(const SyntheticMarketSpec& spec,
                                           SyntheticGroundTruth* truth = nullptr);

// CPM of the logged prices, per mille: 1000 * mean(price). The episode
// budget formula B = CPM * 1e-3 * K * c0 then reduces to mean_price * K * c0
// in bucket units.
double compute_cpm_train(const std::vector<BidRequest>& requests);

// Survival dataset file: "# survival 1 dim=D b_max=B" header, then one
// "censored_flag price feat_id,feat_id,..." line per sample.
void write_survival_dataset(const std::string& path,
                            const std::vector<om::SurvivalSample>& samples,
                            std::uint32_t dimension, int b_max);
std::vector<om::SurvivalSample> read_survival_dataset(const std::string& path,
                                                      std::uint32_t* dimension = nullptr,
                                                      int* b_max = nullptr);

}  // namespace rtb::io
