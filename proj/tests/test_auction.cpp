#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rtb/auction.hpp"

using namespace rtb;
using namespace rtb::env;

namespace {

// Plays a fixed bid sequence, records everything it observes.
class ScriptedBidder : public Bidder {
public:
    explicit ScriptedBidder(std::vector<std::int64_t> script) : script_(std::move(script)) {}

    BidDecision place_bid(const agents::AgentState& state, const SparseFeatures&) override {
        const std::int64_t want = script_.empty() ? 0 : script_[step_ % script_.size()];
        ++step_;
        const auto bid = std::min<std::int64_t>(want, static_cast<std::int64_t>(state.budget_left));
        return {bid, 0.0};
    }

    void observe(const agents::Transition& t) override { transitions.push_back(t); }

    std::vector<agents::Transition> transitions;

private:
    std::vector<std::int64_t> script_;
    std::size_t step_ = 0;
};

std::vector<io::BidRequest> make_requests(std::size_t n, std::uint64_t seed = 1) {
    io::SyntheticMarketSpec spec;
    spec.num_requests = n;
    spec.b_max = 100;
    spec.seed = seed;
    spec.noise_field_cardinalities = {4};
    io::SegmentSpec seg;
    seg.weight = 1.0;
    seg.price_pdf[20] = 1.0;
    seg.ctr = 0.1;
    spec.segments.push_back(seg);
    return io::generate_synthetic(spec);
}

EpisodeConfig small_episode(std::size_t auctions = 50, double c0 = 0.25) {
    EpisodeConfig cfg;
    cfg.auctions_per_epoch = auctions;
    cfg.budget_ratio = c0;
    cfg.cpm_train = 20000.0;  // mean price 20 per mille
    cfg.num_epochs = 1;
    cfg.seed = 11;
    cfg.price_space.b_max = 100;
    return cfg;
}

}  // namespace

TEST_CASE("episode budget formula: B = cpm * 1e-3 * K * c0, floored") {
    EpisodeConfig cfg = small_episode(1000, 0.25);
    cfg.cpm_train = 70000.0;  // mean price 70
    CHECK(cfg.budget() == 17500);
    cfg.budget_ratio = 1.0 / 16.0;
    CHECK(cfg.budget() == 4375);
    cfg.cpm_train = 70.5;
    cfg.auctions_per_epoch = 3;
    CHECK(cfg.budget() == static_cast<std::int64_t>(std::floor(70.5 * 1e-3 * 3 * (1.0 / 16.0))));
}

TEST_CASE("clear_auction: second-price rule") {
    Rng rng(1);
    const auto out = clear_auction({3, 5, 2}, rng);
    CHECK(out.winner == 1);
    CHECK(out.market_price == 3);
    CHECK(out.per_agent[1].won);
    CHECK(out.per_agent[1].observed_price == 3);
    CHECK_FALSE(out.per_agent[1].censored);
    CHECK(out.per_agent[0].censored);
    CHECK(out.per_agent[0].observed_price == 3);  // loser's own bid, not the market price
    CHECK(out.per_agent[2].observed_price == 2);
}

TEST_CASE("clear_auction: tie broken uniformly, winner pays the tied price") {
    Rng rng(42);
    int wins0 = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        const auto out = clear_auction({4, 4}, rng);
        CHECK(out.market_price == 4);
        if (out.winner == 0) ++wins0;
    }
    const double share = static_cast<double>(wins0) / trials;
    CHECK(share == doctest::Approx(0.5).epsilon(0.1));
    CHECK(std::fabs(share - 0.5) < 0.05);
}

TEST_CASE("clear_auction: all-zero bids produce no winner, empty map is a protocol error") {
    Rng rng(1);
    const auto out = clear_auction({0, 0, 0}, rng);
    CHECK(out.winner == -1);
    CHECK(out.market_price == 0);
    CHECK_THROWS_AS(clear_auction({}, rng), ProtocolError);
}

TEST_CASE("clear_auction: single positive bid wins and pays zero") {
    Rng rng(1);
    const auto out = clear_auction({0, 7, 0}, rng);
    CHECK(out.winner == 1);
    CHECK(out.market_price == 0);
}

TEST_CASE("run_epoch: budgets reset, spend bounded, conservation holds") {
    const auto requests = make_requests(60);
    for (std::uint64_t seed : {1ull, 7ull, 23ull}) {
        EpisodeConfig cfg = small_episode(50, 0.05);
        cfg.seed = seed;
        cfg.num_epochs = 3;
        const std::int64_t budget = cfg.budget();

        ScriptedBidder a({30, 10, 50});
        ScriptedBidder b({20, 40});
        AuctionEnv env(cfg, {&a, &b}, [](const io::BidRequest&) { return 0.05; });
        CyclingRequestStream stream(requests);

        for (int epoch = 0; epoch < 3; ++epoch) {
            std::vector<SimLogRecord> log;
            const EpochMetrics m = env.run_epoch(stream, &log);
            CHECK(m.auctions == 50);
            CHECK_FALSE(m.partial);
            std::int64_t payments = 0, prices = 0;
            for (const auto& rec : log) {
                if (rec.winner >= 0) prices += rec.market_price;
                // second-highest recheck against the logged bids
                std::vector<std::int64_t> sorted = rec.bids;
                std::sort(sorted.rbegin(), sorted.rend());
                if (rec.winner >= 0) CHECK(rec.market_price == sorted[1]);
            }
            for (std::size_t i = 0; i < m.agents.size(); ++i) {
                CHECK(m.agents[i].spend <= budget);  // exact budget bound
                CHECK(m.agents[i].clicks <= m.agents[i].impressions);
                payments += m.agents[i].spend;
            }
            CHECK(payments == prices);  // conservation, exact
        }
    }
}

TEST_CASE("run_epoch: all-zero bidders produce zero spend and zero impressions") {
    const auto requests = make_requests(30);
    EpisodeConfig cfg = small_episode(30);
    ScriptedBidder a({0});
    ScriptedBidder b({0});
    AuctionEnv env(cfg, {&a, &b}, [](const io::BidRequest&) { return 0.05; });
    CyclingRequestStream stream(requests);
    const EpochMetrics m = env.run_epoch(stream);
    for (const auto& ag : m.agents) {
        CHECK(ag.impressions == 0);
        CHECK(ag.spend == 0);
    }
    CHECK(m.mean_clearing_price == 0.0);
}

TEST_CASE("run_epoch: dominant bidder with ample budget wins every auction") {
    const auto requests = make_requests(40);
    EpisodeConfig cfg = small_episode(40, 4.0);  // budget 3200: far above total cost
    ScriptedBidder big({90});
    ScriptedBidder small1({10});
    ScriptedBidder small2({15, 5});
    AuctionEnv env(cfg, {&big, &small1, &small2}, [](const io::BidRequest&) { return 0.05; });
    CyclingRequestStream stream(requests);
    const EpochMetrics m = env.run_epoch(stream);
    CHECK(m.agents[0].impressions == 40);
    CHECK(m.agents[1].impressions == 0);
}

TEST_CASE("run_epoch: winner pays market price, loser keeps its budget") {
    const auto requests = make_requests(10);
    EpisodeConfig cfg = small_episode(1, 2.0);
    ScriptedBidder a({30});
    ScriptedBidder b({20});
    AuctionEnv env(cfg, {&a, &b}, [](const io::BidRequest&) { return 0.07; });
    CyclingRequestStream stream(requests);
    const std::int64_t budget = cfg.budget();
    const EpochMetrics m = env.run_epoch(stream);
    CHECK(env.budget_left(0) == budget - 20);
    CHECK(env.budget_left(1) == budget);
    CHECK(m.agents[0].reward_sum == doctest::Approx(0.07));
    CHECK(m.agents[1].reward_sum == 0.0);
}

TEST_CASE("censorship: losing transitions never reveal the market price") {
    const auto requests = make_requests(50);
    EpisodeConfig cfg = small_episode(50, 2.0);  // budget 2000: b can pay 25 all epoch
    ScriptedBidder a({25});                      // loses to b at 30
    ScriptedBidder b({30});
    AuctionEnv env(cfg, {&a, &b}, [](const io::BidRequest&) { return 0.05; });
    CyclingRequestStream stream(requests);
    std::vector<SimLogRecord> log;
    env.run_epoch(stream, &log);
    // a's transitions: budget must never move (it lost everything), so the
    // only numbers it sees are its own bid and its unchanged budget
    REQUIRE_FALSE(a.transitions.empty());
    for (const auto& t : a.transitions) {
        CHECK(t.reward == 0.0);
        CHECK(t.state.budget_left == t.next_state.budget_left);
    }
    // b paid a's bid each time
    for (const auto& rec : log) CHECK(rec.market_price == 25);
}

TEST_CASE("terminal flags: exhaustion inside the epoch and the final auction") {
    const auto requests = make_requests(20);
    EpisodeConfig cfg = small_episode(20, 0.04);  // budget = 20*20*0.04 = 16: two wins at 8
    ScriptedBidder spender({50});
    ScriptedBidder pricemaker({8});
    AuctionEnv env(cfg, {&spender, &pricemaker}, [](const io::BidRequest&) { return 0.05; });
    CyclingRequestStream stream(requests);
    env.run_epoch(stream);
    REQUIRE(env.budget_left(0) == 0);
    REQUIRE_FALSE(spender.transitions.empty());
    // exactly one terminal for the exhausted agent, at the moment of exhaustion
    std::size_t terminals = 0;
    for (const auto& t : spender.transitions)
        if (t.terminal) ++terminals;
    CHECK(terminals == 1);
    CHECK(spender.transitions.back().terminal);
    CHECK(spender.transitions.back().next_state.budget_left == 0.0);
    // the price-maker never wins but finishes the epoch; its last transition
    // is the end-of-epoch terminal
    CHECK(pricemaker.transitions.size() == 20);
    CHECK(pricemaker.transitions.back().terminal);
}

TEST_CASE("second-price dominance: raising a losing bid above the winner flips the outcome") {
    const auto requests = make_requests(5);
    auto run_first_winner = [&](std::int64_t loser_bid) {
        EpisodeConfig cfg = small_episode(1, 2.0);
        ScriptedBidder a({loser_bid});
        ScriptedBidder b({40});
        AuctionEnv env(cfg, {&a, &b}, [](const io::BidRequest&) { return 0.05; });
        CyclingRequestStream stream(requests);
        std::vector<SimLogRecord> log;
        env.run_epoch(stream, &log);
        return log.front().winner;
    };
    CHECK(run_first_winner(30) == 1);
    CHECK(run_first_winner(45) == 0);
}

TEST_CASE("determinism: identical seed and configs give identical logs") {
    const auto requests = make_requests(40);
    auto run_log = [&]() {
        EpisodeConfig cfg = small_episode(40, 0.5);
        cfg.seed = 99;
        ScriptedBidder a({30, 31, 29});
        ScriptedBidder b({30, 28, 33});
        AuctionEnv env(cfg, {&a, &b}, [](const io::BidRequest&) { return 0.05; });
        CyclingRequestStream stream(requests);
        std::vector<SimLogRecord> log;
        env.run_epoch(stream, &log);
        return log;
    };
    const auto log1 = run_log();
    const auto log2 = run_log();
    REQUIRE(log1.size() == log2.size());
    for (std::size_t i = 0; i < log1.size(); ++i) {
        CHECK(log1[i].winner == log2[i].winner);
        CHECK(log1[i].market_price == log2[i].market_price);
        CHECK(log1[i].bids == log2[i].bids);
        CHECK(log1[i].pctr == log2[i].pctr);
    }
}

TEST_CASE("truncated epoch: exhausted stream flags metrics as partial") {
    std::vector<io::BidRequest> few = make_requests(5);
    class OnePassStream : public RequestStream {
    public:
        explicit OnePassStream(const std::vector<io::BidRequest>& r) : r_(&r) {}
        const io::BidRequest* next() override {
            return pos_ < r_->size() ? &(*r_)[pos_++] : nullptr;
        }

    private:
        const std::vector<io::BidRequest>* r_;
        std::size_t pos_ = 0;
    };
    EpisodeConfig cfg = small_episode(10);
    ScriptedBidder a({30});
    ScriptedBidder b({20});
    AuctionEnv env(cfg, {&a, &b}, [](const io::BidRequest&) { return 0.05; });
    OnePassStream stream(few);
    const EpochMetrics m = env.run_epoch(stream);
    CHECK(m.partial);
    CHECK(m.auctions == 5);
}

TEST_CASE("environment re-clips over-budget bids and counts the violation") {
    class Cheater : public Bidder {
    public:
        BidDecision place_bid(const agents::AgentState& state, const SparseFeatures&) override {
            return {static_cast<std::int64_t>(state.budget_left) + 1000, 1.0};
        }
    };
    const auto requests = make_requests(10);
    EpisodeConfig cfg = small_episode(10, 0.5);
    Cheater cheat;
    ScriptedBidder honest({10});
    AuctionEnv env(cfg, {&cheat, &honest}, [](const io::BidRequest&) { return 0.05; });
    CyclingRequestStream stream(requests);
    const EpochMetrics m = env.run_epoch(stream);
    CHECK(env.contract_violations() > 0);
    CHECK(m.agents[0].spend <= cfg.budget());
}
