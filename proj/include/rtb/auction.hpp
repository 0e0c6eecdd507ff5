#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rtb/agents.hpp"
#include "rtb/bidlog.hpp"
#include "rtb/rng.hpp"
#include "rtb/survival.hpp"

namespace rtb::env {

struct EpisodeConfig {
    std::size_t auctions_per_epoch = 1000;  // K
    double budget_ratio = 0.25;             // c0
    double cpm_train = 0.0;                  // per mille, from the training log
    std::size_t num_epochs = 1;             // E
    std::uint64_t seed = 1;
    om::PriceSpace price_space{};

    // B = CPM_train * 1e-3 * K * c0, rounded down to integer bucket units.
    std::int64_t budget() const;
    void validate() const;
};

// What one agent is allowed to see after an auction: winners observe the
// market price, losers only their own bid.
struct AgentObservation {
    bool won = false;
    std::int64_t own_bid = 0;
    std::int64_t observed_price = 0;
    bool censored = false;
    double reward = 0.0;
};

struct AuctionOutcome {
    int winner = -1;  // agent index, -1 when every bid was zero
    std::int64_t market_price = 0;
    std::vector<AgentObservation> per_agent;
};

// Second-price clearing: highest bid wins (ties uniform at random), winner
// pays the highest non-winning bid. Zero bids never win.
AuctionOutcome clear_auction(const std::vector<std::int64_t>& bids, Rng& rng);

struct BidDecision {
    std::int64_t bid = 0;
    double action = 0.0;  // policy-native action in [0, 1], recorded in transitions
};

// Environment-facing policy interface. The environment owns budgets and
// reveals exactly one agent's own state per call; partial observability is
// enforced here.
class Bidder {
public:
    virtual ~Bidder() = default;
    virtual BidDecision place_bid(const agents::AgentState& state,
                                  const SparseFeatures& features) = 0;
    virtual void observe(const agents::Transition&) {}
    virtual void on_epoch_begin(double /*budget*/, std::size_t /*epoch*/) {}
    virtual void on_epoch_end(std::size_t /*epoch*/) {}
};

struct EpochMetrics {
    struct PerAgent {
        std::int64_t impressions = 0;
        std::int64_t clicks = 0;
        std::int64_t spend = 0;
        double reward_sum = 0.0;
    };
    std::size_t epoch = 0;
    std::size_t auctions = 0;
    std::vector<PerAgent> agents;
    double mean_clearing_price = 0.0;               // over auctions with a winner
    std::vector<std::int64_t> clearing_price_hist;  // index = price, 0..b_max
    bool partial = false;                           // stream ran out mid-epoch
};

// One line of the simulation bid log, the input to survival-set extraction.
struct SimLogRecord {
    std::uint64_t auction_id = 0;
    std::size_t epoch = 0;
    int winner = -1;
    std::int64_t market_price = 0;
    std::vector<std::int64_t> bids;
    double pctr = 0.0;
    SparseFeatures features;
};

class RequestStream {
public:
    virtual ~RequestStream() = default;
    virtual const io::BidRequest* next() = 0;  // nullptr = exhausted
};

// Endless stream cycling over a fixed request set in order.
class CyclingRequestStream : public RequestStream {
public:
    explicit CyclingRequestStream(const std::vector<io::BidRequest>& requests)
        : requests_(&requests) {
        if (requests.empty()) throw InputError("request stream: empty request set");
    }
    const io::BidRequest* next() override {
        const io::BidRequest* r = &(*requests_)[pos_];
        pos_ = (pos_ + 1) % requests_->size();
        return r;
    }

private:
    const std::vector<io::BidRequest>* requests_;
    std::size_t pos_ = 0;
};

// Repeated second-price auctions with budget accounting, epoch lifecycle and
// censored per-agent observations. The auction loop is strictly sequential;
// independent environments may run on distinct threads.
class AuctionEnv {
public:
    using PctrFn = std::function<double(const io::BidRequest&)>;

    AuctionEnv(EpisodeConfig cfg, std::vector<Bidder*> bidders, PctrFn pctr);

    // Resets every budget to B, runs K auctions, emits metrics; appends one
    // record per auction to `log` when given.
    EpochMetrics run_epoch(RequestStream& stream, std::vector<SimLogRecord>* log = nullptr);

    std::int64_t budget_left(std::size_t agent) const { return budgets_[agent]; }
    std::size_t epochs_run() const { return epoch_; }
    std::size_t contract_violations() const { return contract_violations_; }

private:
    struct Pending {
        bool active = false;
        agents::AgentState state;
        agents::Action action;
        double reward = 0.0;
        SparseFeatures features;
    };

    EpisodeConfig cfg_;
    std::vector<Bidder*> bidders_;
    PctrFn pctr_;
    Rng rng_;
    std::vector<std::int64_t> budgets_;
    std::vector<bool> done_;  // budget exhausted this epoch, terminal already emitted
    std::vector<Pending> pending_;
    std::size_t epoch_ = 0;
    std::uint64_t auction_counter_ = 0;
    std::size_t contract_violations_ = 0;
};

}  // namespace rtb::env
