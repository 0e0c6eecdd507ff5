#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtb/auction.hpp"

namespace rtb::sim {

struct AgentSpec {
    enum class Kind { Linear, Ddpg };
    Kind kind = Kind::Linear;
    agents::LinearBidderConfig linear{};
    agents::DdpgConfig ddpg{};
    // Opponent-model source for the replay phase: empty = none (plain DDPG),
    // "uniform" = the random-market ablation, otherwise a dasa checkpoint path.
    std::string opponent_model;
};

struct ScenarioConfig {
    std::vector<AgentSpec> roster;
    env::EpisodeConfig episode;

    void validate() const;
};

// Impression-share trajectory and the first epoch where every agent's share
// stays within epsilon of its window mean for `window` consecutive epochs.
struct ConvergenceReport {
    std::vector<std::vector<double>> shares;  // [epoch][agent]
    std::optional<std::size_t> convergence_epoch;
    std::vector<double> share_at_convergence;
    double epsilon = 0.05;
    std::size_t window = 20;
};

ConvergenceReport analyze_convergence(const std::vector<env::EpochMetrics>& series,
                                      double epsilon = 0.05, std::size_t window = 20);

struct RunOptions {
    bool collect_bidlog = true;
    std::size_t test_epochs = 0;  // frozen-policy epochs on the test stream after training
    double convergence_epsilon = 0.05;
    std::size_t convergence_window = 20;
};

struct RunResult {
    std::vector<env::EpochMetrics> train_metrics;
    std::vector<env::EpochMetrics> test_metrics;
    std::vector<env::SimLogRecord> bidlog;  // training phase
    ConvergenceReport convergence;
    std::size_t contract_violations = 0;
};

// Runs one scenario end to end: phase 1 when `models` are absent, the replay
// phase when they are attached. models[i] (when non-null) feeds agent i's
// mean-field critic; roster agents with use_opponent_model expect one.
RunResult run_scenario(const ScenarioConfig& scenario,
                       const std::vector<io::BidRequest>& train_requests,
                       const std::vector<io::BidRequest>& test_requests,
                       const env::AuctionEnv::PctrFn& pctr,
                       const std::vector<std::shared_ptr<const agents::OpponentModel>>& models,
                       const RunOptions& opts = {});

// Per-agent censored view of the simulation log: winners yield uncensored
// samples at the market price, losers censored samples at their own bid
// (clamped into the bucket range).
std::vector<om::SurvivalSample> extract_survival_dataset(
    const std::vector<env::SimLogRecord>& log, int agent, const om::PriceSpace& space);

double total_variation(const std::vector<double>& p, const std::vector<double>& q);

struct MfeDiagnostic {
    double distance = 1.0;
    std::size_t from_epoch = 0;
    std::size_t to_epoch = 0;
};

// Total-variation distance between the models' aggregated predicted market
// pdf (averaged over the request sample) and the empirical clearing-price
// histogram of epochs [from, to).
MfeDiagnostic mfe_check(const std::vector<const agents::OpponentModel*>& models,
                        const std::vector<io::BidRequest>& request_sample,
                        const std::vector<env::EpochMetrics>& series, std::size_t from_epoch,
                        std::size_t to_epoch, int b_max);

// 80/20-style split by auction order.
std::pair<std::vector<io::BidRequest>, std::vector<io::BidRequest>> split_requests(
    const std::vector<io::BidRequest>& requests, double train_fraction);

// --- run directory artifacts ---

void write_metrics_csv(const std::string& path, const std::vector<env::EpochMetrics>& series);
void write_price_hist_csv(const std::string& path, const std::vector<env::EpochMetrics>& series);
// Rebuilds per-epoch clearing-price histograms from a price_hist csv; only
// the epoch and histogram fields are populated.
std::vector<env::EpochMetrics> read_price_hist_csv(const std::string& path, int b_max);
void write_convergence(const std::string& path, const ConvergenceReport& report);
void write_mfe(const std::string& path, const MfeDiagnostic& early, const MfeDiagnostic& late);
void write_sim_log(const std::string& path, const std::vector<env::SimLogRecord>& log,
                   std::uint32_t feature_dimension, int b_max);
std::vector<env::SimLogRecord> read_sim_log(const std::string& path,
                                            std::uint32_t* feature_dimension = nullptr);

}  // namespace rtb::sim
