#include "rtb/auction.hpp"

#include <algorithm>
#include <cmath>

namespace rtb::env {

std::int64_t EpisodeConfig::budget() const {
    return static_cast<std::int64_t>(std::floor(cpm_train * 1e-3 *
                                                static_cast<double>(auctions_per_epoch) *
                                                budget_ratio));
}

void EpisodeConfig::validate() const {
    if (auctions_per_epoch == 0) throw ConfigError("episode: auctions_per_epoch must be positive");
    if (budget_ratio <= 0.0) throw ConfigError("episode: budget_ratio must be > 0");
    if (num_epochs == 0) throw ConfigError("episode: num_epochs must be positive");
    price_space.validate();
    if (budget() <= 0)
        throw ConfigError("episode: derived budget is not positive (cpm_train too small?)");
}

AuctionOutcome clear_auction(const std::vector<std::int64_t>& bids, Rng& rng) {
    if (bids.empty()) throw ProtocolError("clear_auction: no bids submitted");
    AuctionOutcome out;
    out.per_agent.resize(bids.size());

    std::int64_t best = 0;
    for (std::int64_t b : bids) best = std::max(best, b);
    if (best > 0) {
        std::vector<std::size_t> top;
        for (std::size_t i = 0; i < bids.size(); ++i)
            if (bids[i] == best) top.push_back(i);
        const std::size_t pick = top.size() == 1
                                     ? top[0]
                                     : top[static_cast<std::size_t>(rng.uniform_int(top.size()))];
        out.winner = static_cast<int>(pick);
        std::int64_t second = 0;
        for (std::size_t i = 0; i < bids.size(); ++i)
            if (i != pick) second = std::max(second, bids[i]);
        out.market_price = second;
    }

    for (std::size_t i = 0; i < bids.size(); ++i) {
        AgentObservation& obs = out.per_agent[i];
        obs.own_bid = bids[i];
        obs.won = static_cast<int>(i) == out.winner;
        obs.observed_price = obs.won ? out.market_price : bids[i];
        obs.censored = !obs.won;
    }
    return out;
}

AuctionEnv::AuctionEnv(EpisodeConfig cfg, std::vector<Bidder*> bidders, PctrFn pctr)
    : cfg_(cfg),
      bidders_(std::move(bidders)),
      pctr_(std::move(pctr)),
      rng_(substream_seed(cfg.seed, "env")) {
    cfg_.validate();
    if (bidders_.size() < 2) throw ConfigError("auction env: need at least 2 bidders");
    budgets_.assign(bidders_.size(), 0);
    done_.assign(bidders_.size(), false);
    pending_.assign(bidders_.size(), {});
}

EpochMetrics AuctionEnv::run_epoch(RequestStream& stream, std::vector<SimLogRecord>* log) {
    const std::int64_t budget = cfg_.budget();
    const std::size_t n = bidders_.size();

    EpochMetrics metrics;
    metrics.epoch = epoch_;
    metrics.agents.resize(n);
    metrics.clearing_price_hist.assign(static_cast<std::size_t>(cfg_.price_space.b_max) + 1, 0);

    for (std::size_t i = 0; i < n; ++i) {
        budgets_[i] = budget;
        done_[i] = false;
        pending_[i].active = false;
        bidders_[i]->on_epoch_begin(static_cast<double>(budget), epoch_);
    }

    double price_total = 0.0;
    std::size_t cleared = 0;

    std::vector<std::int64_t> bids(n, 0);
    std::vector<double> actions(n, 0.0);
    for (std::size_t step = 0; step < cfg_.auctions_per_epoch; ++step) {
        const io::BidRequest* req = stream.next();
        if (!req) {
            metrics.partial = true;  // truncated epoch: stream exhausted
            break;
        }
        const double pctr = pctr_(*req);

        for (std::size_t i = 0; i < n; ++i) {
            if (budgets_[i] <= 0) {
                bids[i] = 0;  // exhausted agents submit zero and cannot win
                actions[i] = 0.0;
                continue;
            }
            agents::AgentState state{static_cast<double>(budgets_[i]), pctr};
            BidDecision dec = bidders_[i]->place_bid(state, req->features);
            if (dec.bid < 0) dec.bid = 0;
            if (dec.bid > budgets_[i]) {
                ++contract_violations_;  // environment re-clips over-budget bids
                dec.bid = budgets_[i];
            }
            dec.bid = std::min<std::int64_t>(dec.bid, cfg_.price_space.b_max);
            bids[i] = dec.bid;
            actions[i] = dec.action;
        }

        AuctionOutcome outcome = clear_auction(bids, rng_);

        // settle and hand out rewards
        std::vector<std::int64_t> budget_before = budgets_;
        if (outcome.winner >= 0) {
            const auto w = static_cast<std::size_t>(outcome.winner);
            budgets_[w] -= outcome.market_price;
            outcome.per_agent[w].reward = pctr;
            metrics.agents[w].impressions += 1;
            metrics.agents[w].spend += outcome.market_price;
            metrics.agents[w].reward_sum += pctr;
            if (req->click_label && *req->click_label == 1) metrics.agents[w].clicks += 1;
            price_total += static_cast<double>(outcome.market_price);
            ++cleared;
            metrics.clearing_price_hist[static_cast<std::size_t>(outcome.market_price)] += 1;
        }

        if (log) {
            SimLogRecord rec;
            rec.auction_id = auction_counter_;
            rec.epoch = epoch_;
            rec.winner = outcome.winner;
            rec.market_price = outcome.market_price;
            rec.bids = bids;
            rec.pctr = pctr;
            rec.features = req->features;
            log->push_back(std::move(rec));
        }

        // transition bookkeeping: finalize the previous step's pending with
        // this request as the successor state, then open a new pending
        const bool last_step = step + 1 == cfg_.auctions_per_epoch;
        for (std::size_t i = 0; i < n; ++i) {
            if (done_[i]) continue;
            if (pending_[i].active) {
                agents::Transition tr;
                tr.state = pending_[i].state;
                tr.action = {pending_[i].action.a};
                tr.reward = pending_[i].reward;
                tr.features = pending_[i].features;
                tr.next_state = {static_cast<double>(budget_before[i]), pctr};
                tr.next_features = req->features;
                tr.terminal = false;
                bidders_[i]->observe(tr);
                pending_[i].active = false;
            }
            if (budget_before[i] <= 0) {
                done_[i] = true;  // exhausted before this auction: nothing more to learn
                continue;
            }
            Pending& p = pending_[i];
            p.active = true;
            p.state = {static_cast<double>(budget_before[i]), pctr};
            p.action = {actions[i]};
            p.reward = outcome.per_agent[i].reward;
            p.features = req->features;

            const bool exhausted_now = budgets_[i] <= 0;
            if (exhausted_now || last_step) {
                agents::Transition tr;
                tr.state = p.state;
                tr.action = p.action;
                tr.reward = p.reward;
                tr.features = p.features;
                tr.next_state = {static_cast<double>(budgets_[i]), 0.0};
                tr.next_features = SparseFeatures{{}, p.features.dimension};
                tr.terminal = true;
                bidders_[i]->observe(tr);
                p.active = false;
                if (exhausted_now) done_[i] = true;
            }
        }
        ++auction_counter_;
        ++metrics.auctions;
    }

    metrics.mean_clearing_price = cleared ? price_total / static_cast<double>(cleared) : 0.0;
    for (std::size_t i = 0; i < n; ++i) bidders_[i]->on_epoch_end(epoch_);
    ++epoch_;
    return metrics;
}

}  // namespace rtb::env
