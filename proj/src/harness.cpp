#include "rtb/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rtb::sim {

void ScenarioConfig::validate() const {
    if (roster.size() < 2) throw ConfigError("scenario: need at least 2 agents");
    episode.validate();
    for (const auto& spec : roster) {
        if (spec.kind == AgentSpec::Kind::Linear) {
            spec.linear.validate();
        } else {
            spec.ddpg.validate();
            if (spec.ddpg.price_space.b_max != episode.price_space.b_max)
                throw ConfigError("scenario: agent b_max disagrees with episode b_max");
            if (spec.ddpg.use_opponent_model && spec.opponent_model.empty())
                throw ConfigError("scenario: ddpg-om agent without an opponent model source");
        }
    }
}

namespace {

class LinearAdapter : public env::Bidder {
public:
    LinearAdapter(agents::LinearBidderConfig cfg, std::uint64_t seed, int b_max)
        : cfg_(cfg), rng_(seed), b_max_(b_max) {
        cfg_.validate();
    }

    env::BidDecision place_bid(const agents::AgentState& state, const SparseFeatures&) override {
        const double bid = agents::linear_bid(state.pctr, cfg_, state.budget_left, rng_);
        env::BidDecision dec;
        dec.bid = static_cast<std::int64_t>(std::floor(bid));
        dec.action = std::clamp(bid / static_cast<double>(b_max_), 0.0, 1.0);
        return dec;
    }

private:
    agents::LinearBidderConfig cfg_;
    Rng rng_;
    int b_max_;
};

class DdpgAdapter : public env::Bidder {
public:
    DdpgAdapter(const agents::DdpgConfig& cfg, std::uint64_t seed,
                std::shared_ptr<const agents::OpponentModel> model)
        : agent_(cfg, seed) {
        if (model) agent_.attach_opponent_model(std::move(model));
    }

    env::BidDecision place_bid(const agents::AgentState& state, const SparseFeatures&) override {
        const agents::Action a = agent_.act(state, /*explore=*/!frozen_);
        return {agents::to_bid_price(a, state, agent_.config().price_space), a.a};
    }

    void observe(const agents::Transition& t) override {
        if (!frozen_) agent_.observe(t);
    }

    void on_epoch_begin(double budget, std::size_t) override { agent_.on_epoch_begin(budget); }
    void on_epoch_end(std::size_t) override {
        if (!frozen_) agent_.on_epoch_end();
    }

    void freeze() { frozen_ = true; }
    agents::DdpgAgent& agent() { return agent_; }

private:
    agents::DdpgAgent agent_;
    bool frozen_ = false;
};

}  // namespace

ConvergenceReport analyze_convergence(const std::vector<env::EpochMetrics>& series,
                                      double epsilon, std::size_t window) {
    ConvergenceReport report;
    report.epsilon = epsilon;
    report.window = window;
    if (series.empty()) return report;
    const std::size_t n = series.front().agents.size();
    report.shares.reserve(series.size());
    for (const auto& m : series) {
        std::int64_t total = 0;
        for (const auto& a : m.agents) total += a.impressions;
        std::vector<double> row(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            row[i] = total > 0 ? static_cast<double>(m.agents[i].impressions) /
                                     static_cast<double>(total)
                               : 0.0;
        report.shares.push_back(std::move(row));
    }
    if (series.size() < window || window == 0) return report;

    for (std::size_t start = 0; start + window <= report.shares.size(); ++start) {
        bool stable = true;
        for (std::size_t agent = 0; agent < n && stable; ++agent) {
            double mean = 0.0;
            for (std::size_t w = 0; w < window; ++w) mean += report.shares[start + w][agent];
            mean /= static_cast<double>(window);
            for (std::size_t w = 0; w < window; ++w)
                if (std::fabs(report.shares[start + w][agent] - mean) > epsilon) {
                    stable = false;
                    break;
                }
        }
        if (stable) {
            report.convergence_epoch = start;
            report.share_at_convergence.assign(n, 0.0);
            for (std::size_t agent = 0; agent < n; ++agent) {
                double mean = 0.0;
                for (std::size_t w = 0; w < window; ++w) mean += report.shares[start + w][agent];
                report.share_at_convergence[agent] = mean / static_cast<double>(window);
            }
            break;
        }
    }
    return report;
}

RunResult run_scenario(const ScenarioConfig& scenario,
                       const std::vector<io::BidRequest>& train_requests,
                       const std::vector<io::BidRequest>& test_requests,
                       const env::AuctionEnv::PctrFn& pctr,
                       const std::vector<std::shared_ptr<const agents::OpponentModel>>& models,
                       const RunOptions& opts) {
    scenario.validate();
    if (!models.empty() && models.size() != scenario.roster.size())
        throw ConfigError("run_scenario: one opponent model slot per roster agent");

    // Auto-scale the pctr input for network conditioning when not pinned.
    double mean_pctr = 0.0;
    for (const auto& req : train_requests) mean_pctr += pctr(req);
    mean_pctr /= std::max<std::size_t>(1, train_requests.size());

    std::vector<std::unique_ptr<env::Bidder>> owned;
    std::vector<DdpgAdapter*> learners;
    for (std::size_t i = 0; i < scenario.roster.size(); ++i) {
        const AgentSpec& spec = scenario.roster[i];
        const std::uint64_t seed =
            substream_seed(scenario.episode.seed, "agent." + std::to_string(i));
        if (spec.kind == AgentSpec::Kind::Linear) {
            owned.push_back(std::make_unique<LinearAdapter>(spec.linear, seed,
                                                            scenario.episode.price_space.b_max));
        } else {
            agents::DdpgConfig cfg = spec.ddpg;
            if (cfg.pctr_scale <= 0.0)
                cfg.pctr_scale = mean_pctr > 0.0 ? 1.0 / mean_pctr : 1.0;
            std::shared_ptr<const agents::OpponentModel> model;
            if (i < models.size()) model = models[i];
            if (cfg.use_opponent_model && !model)
                throw ConfigError("run_scenario: agent " + std::to_string(i) +
                                  " needs an opponent model");
            auto adapter = std::make_unique<DdpgAdapter>(cfg, seed, std::move(model));
            learners.push_back(adapter.get());
            owned.push_back(std::move(adapter));
        }
    }

    std::vector<env::Bidder*> bidders;
    for (auto& b : owned) bidders.push_back(b.get());

    env::AuctionEnv auction_env(scenario.episode, bidders, pctr);
    env::CyclingRequestStream train_stream(train_requests);

    RunResult result;
    for (std::size_t epoch = 0; epoch < scenario.episode.num_epochs; ++epoch)
        result.train_metrics.push_back(
            auction_env.run_epoch(train_stream, opts.collect_bidlog ? &result.bidlog : nullptr));

    if (opts.test_epochs > 0) {
        if (test_requests.empty())
            throw ConfigError("run_scenario: test epochs requested without test requests");
        for (auto* learner : learners) learner->freeze();
        env::CyclingRequestStream test_stream(test_requests);
        for (std::size_t epoch = 0; epoch < opts.test_epochs; ++epoch)
            result.test_metrics.push_back(auction_env.run_epoch(test_stream, nullptr));
    }

    result.convergence = analyze_convergence(result.train_metrics, opts.convergence_epsilon,
                                             opts.convergence_window);
    result.contract_violations = auction_env.contract_violations();
    return result;
}

std::vector<om::SurvivalSample> extract_survival_dataset(
    const std::vector<env::SimLogRecord>& log, int agent, const om::PriceSpace& space) {
    std::vector<om::SurvivalSample> out;
    out.reserve(log.size());
    for (const auto& rec : log) {
        if (agent < 0 || static_cast<std::size_t>(agent) >= rec.bids.size())
            throw InputError("extract_survival_dataset: agent id outside the log roster");
        om::SurvivalSample s;
        s.features = rec.features;
        if (rec.winner == agent) {
            s.censored = false;
            s.observed_price =
                static_cast<int>(std::clamp<std::int64_t>(rec.market_price, 1, space.b_max));
        } else {
            s.censored = true;
            s.observed_price = static_cast<int>(
                std::clamp<std::int64_t>(rec.bids[static_cast<std::size_t>(agent)], 1,
                                         space.b_max));
        }
        out.push_back(std::move(s));
    }
    return out;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw InputError("total_variation: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::fabs(p[i] - q[i]);
    return 0.5 * acc;
}

MfeDiagnostic mfe_check(const std::vector<const agents::OpponentModel*>& models,
                        const std::vector<io::BidRequest>& request_sample,
                        const std::vector<env::EpochMetrics>& series, std::size_t from_epoch,
                        std::size_t to_epoch, int b_max) {
    if (models.empty() || request_sample.empty())
        throw InputError("mfe_check: need at least one model and one request");
    if (from_epoch >= to_epoch || to_epoch > series.size())
        throw InputError("mfe_check: bad epoch window");
    const auto b = static_cast<std::size_t>(b_max);

    // model side: average predicted pdf over models and requests, residual in
    // the trailing bin
    std::vector<double> predicted(b + 1, 0.0);
    for (const auto* model : models)
        for (const auto& req : request_sample) {
            const auto pdf = model->price_pdf(req.features);
            if (pdf.size() != b) throw InputError("mfe_check: model pdf length mismatch");
            for (std::size_t j = 0; j < b; ++j) predicted[j] += pdf[j];
        }
    const double denom = static_cast<double>(models.size() * request_sample.size());
    double mass = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
        predicted[j] /= denom;
        mass += predicted[j];
    }
    predicted[b] = std::max(0.0, 1.0 - mass);

    // empirical side: positive clearing prices over the epoch window
    std::vector<double> empirical(b + 1, 0.0);
    double total = 0.0;
    for (std::size_t e = from_epoch; e < to_epoch; ++e) {
        const auto& hist = series[e].clearing_price_hist;
        for (std::size_t price = 1; price < hist.size() && price <= b; ++price) {
            empirical[price - 1] += static_cast<double>(hist[price]);
            total += static_cast<double>(hist[price]);
        }
    }
    MfeDiagnostic diag;
    diag.from_epoch = from_epoch;
    diag.to_epoch = to_epoch;
    if (total == 0.0) {
        diag.distance = 1.0;  // no cleared auctions: disjoint by convention
        return diag;
    }
    for (auto& v : empirical) v /= total;
    diag.distance = total_variation(predicted, empirical);
    return diag;
}

std::pair<std::vector<io::BidRequest>, std::vector<io::BidRequest>> split_requests(
    const std::vector<io::BidRequest>& requests, double train_fraction) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw ConfigError("split_requests: fraction must be in (0, 1)");
    const auto cut = static_cast<std::size_t>(
        std::floor(static_cast<double>(requests.size()) * train_fraction));
    std::vector<io::BidRequest> train(requests.begin(), requests.begin() + cut);
    std::vector<io::BidRequest> test(requests.begin() + cut, requests.end());
    return {std::move(train), std::move(test)};
}

void write_metrics_csv(const std::string& path, const std::vector<env::EpochMetrics>& series) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open metrics csv for writing: " + path);
    const std::size_t n = series.empty() ? 0 : series.front().agents.size();
    out << "epoch,auctions,mean_clearing_price,partial";
    for (std::size_t i = 0; i < n; ++i)
        out << ",agent" << i << "_impressions,agent" << i << "_clicks,agent" << i
            << "_spend,agent" << i << "_reward";
    out << "\n";
    char buf[64];
    for (const auto& m : series) {
        std::snprintf(buf, sizeof(buf), "%.17g", m.mean_clearing_price);
        out << m.epoch << ',' << m.auctions << ',' << buf << ',' << (m.partial ? 1 : 0);
        for (const auto& a : m.agents) {
            std::snprintf(buf, sizeof(buf), "%.17g", a.reward_sum);
            out << ',' << a.impressions << ',' << a.clicks << ',' << a.spend << ',' << buf;
        }
        out << "\n";
    }
}

void write_price_hist_csv(const std::string& path, const std::vector<env::EpochMetrics>& series) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open price histogram for writing: " + path);
    out << "epoch,price,count\n";
    for (const auto& m : series)
        for (std::size_t price = 0; price < m.clearing_price_hist.size(); ++price)
            if (m.clearing_price_hist[price] > 0)
                out << m.epoch << ',' << price << ',' << m.clearing_price_hist[price] << "\n";
}

std::vector<env::EpochMetrics> read_price_hist_csv(const std::string& path, int b_max) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open price histogram: " + path);
    std::string header;
    std::getline(in, header);
    if (header != "epoch,price,count") throw InputError("not a price_hist csv: " + path);
    std::vector<env::EpochMetrics> series;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t epoch = 0, price = 0;
        long long count = 0;
        if (std::sscanf(line.c_str(), "%zu,%zu,%lld", &epoch, &price, &count) != 3)
            throw InputError("malformed price_hist line: " + line);
        while (series.size() <= epoch) {
            env::EpochMetrics m;
            m.epoch = series.size();
            m.clearing_price_hist.assign(static_cast<std::size_t>(b_max) + 1, 0);
            series.push_back(std::move(m));
        }
        if (price < series[epoch].clearing_price_hist.size())
            series[epoch].clearing_price_hist[price] = count;
    }
    return series;
}

void write_convergence(const std::string& path, const ConvergenceReport& report) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open convergence report for writing: " + path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", report.epsilon);
    out << "epsilon " << buf << "\nwindow " << report.window << "\n";
    if (report.convergence_epoch) {
        out << "convergence_epoch " << *report.convergence_epoch << "\nshare_at_convergence";
        for (double s : report.share_at_convergence) {
            std::snprintf(buf, sizeof(buf), "%.6f", s);
            out << ' ' << buf;
        }
        out << "\n";
    } else {
        out << "convergence_epoch not_converged\n";
    }
    out << "shares\n";
    for (std::size_t e = 0; e < report.shares.size(); ++e) {
        out << e;
        for (double s : report.shares[e]) {
            std::snprintf(buf, sizeof(buf), "%.6f", s);
            out << ' ' << buf;
        }
        out << "\n";
    }
}

void write_mfe(const std::string& path, const MfeDiagnostic& early, const MfeDiagnostic& late) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open mfe report for writing: " + path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", early.distance);
    out << "tv_epochs_" << early.from_epoch << "_" << early.to_epoch << " " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.6f", late.distance);
    out << "tv_epochs_" << late.from_epoch << "_" << late.to_epoch << " " << buf << "\n";
    out << "improved " << (late.distance < early.distance ? 1 : 0) << "\n";
}

void write_sim_log(const std::string& path, const std::vector<env::SimLogRecord>& log,
                   std::uint32_t feature_dimension, int b_max) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open sim log for writing: " + path);
    const std::size_t n = log.empty() ? 0 : log.front().bids.size();
    out << "# simlog 1 agents=" << n << " dim=" << feature_dimension << " b_max=" << b_max
        << "\n";
    char buf[64];
    for (const auto& rec : log) {
        out << rec.auction_id << ' ' << rec.epoch << ' ' << rec.winner << ' '
            << rec.market_price;
        for (auto b : rec.bids) out << ' ' << b;
        std::snprintf(buf, sizeof(buf), "%.17g", rec.pctr);
        out << ' ' << buf << ' ';
        for (std::size_t i = 0; i < rec.features.indices.size(); ++i)
            out << (i ? "," : "") << rec.features.indices[i];
        if (rec.features.indices.empty()) out << '-';
        out << "\n";
    }
}

std::vector<env::SimLogRecord> read_sim_log(const std::string& path,
                                            std::uint32_t* feature_dimension) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open sim log: " + path);
    std::string header;
    std::getline(in, header);
    std::size_t agents = 0;
    std::uint32_t dim = 0;
    int b_max = 0;
    if (std::sscanf(header.c_str(), "# simlog 1 agents=%zu dim=%u b_max=%d", &agents, &dim,
                    &b_max) != 3)
        throw InputError("not a simlog v1 file: " + path);
    if (feature_dimension) *feature_dimension = dim;

    std::vector<env::SimLogRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        env::SimLogRecord rec;
        ls >> rec.auction_id >> rec.epoch >> rec.winner >> rec.market_price;
        rec.bids.resize(agents);
        for (auto& b : rec.bids) ls >> b;
        std::string feats;
        ls >> rec.pctr >> feats;
        if (!ls) throw InputError("malformed simlog line: " + line);
        rec.features.dimension = dim;
        if (feats != "-") {
            std::size_t start = 0;
            while (start < feats.size()) {
                const std::size_t pos = feats.find(',', start);
                const std::string tok = feats.substr(start, pos == std::string::npos
                                                                ? std::string::npos
                                                                : pos - start);
                rec.features.indices.push_back(
                    static_cast<std::uint32_t>(std::stoul(tok)));
                if (pos == std::string::npos) break;
                start = pos + 1;
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace rtb::sim
