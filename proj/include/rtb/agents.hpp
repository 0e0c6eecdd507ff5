#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtb/dasa.hpp"
#include "rtb/layers.hpp"
#include "rtb/optimizer.hpp"
#include "rtb/rng.hpp"
#include "rtb/survival.hpp"

namespace rtb::agents {

// Observation a bidding policy acts on: remaining episode budget and the
// predicted CTR of the current request.
struct AgentState {
    double budget_left = 0.0;
    double pctr = 0.0;
};

struct Action {
    double a = 0.0;  // [0, 1]
};

// b_f = min(b_max * a, B_i), floored to an integer bucket. Clipping before
// flooring guarantees the bid never exceeds the remaining budget.
std::int64_t to_bid_price(Action action, const AgentState& state, const om::PriceSpace& space);

// Number of price buckets a bid at `action` beats: floor(min(b_max * a, B)).
// The critic treats bucket ties as wins, so with action = 1 every bucket is
// in the winning set.
int win_cutoff(double action, double budget_left, const om::PriceSpace& space);

struct LinearBidderConfig {
    double base_bid = 0.0;       // b0 > 0
    double reference_ctr = 0.0;  // anchor: pctr == reference_ctr bids exactly b0
    double pctr_noise_sigma = 0.0;

    void validate() const;
};

// b0 * (pctr + gaussian noise) / reference_ctr, floored at zero and capped at
// the remaining budget.
double linear_bid(double pctr, const LinearBidderConfig& cfg, double budget_left, Rng& rng);

struct Transition {
    AgentState state;
    Action action;
    double reward = 0.0;  // pCTR when the auction was won, else 0
    AgentState next_state;
    bool terminal = false;
    SparseFeatures features;       // request active at `state`
    SparseFeatures next_features;  // request active at `next_state`
    // Opponent-model lookups, filled on first use during updates.
    std::vector<double> pdf;
    std::vector<double> next_pdf;
};

// Fixed-capacity ring buffer with uniform minibatch sampling (without
// replacement within a batch).
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }

    std::vector<std::size_t> sample_indices(std::size_t m, Rng& rng) const;
    Transition& at(std::size_t i) { return items_[i]; }
    const Transition& at(std::size_t i) const { return items_[i]; }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> items_;
};

// Per-request belief over the market price, the critic's view of everyone
// else. Implementations must be safe to share across agents read-only.
class OpponentModel {
public:
    virtual ~OpponentModel() = default;
    virtual std::vector<double> price_pdf(const SparseFeatures& features) const = 0;
};

class DasaOpponentModel : public OpponentModel {
public:
    explicit DasaOpponentModel(om::DasaModel model) : model_(std::move(model)) {}
    std::vector<double> price_pdf(const SparseFeatures& features) const override {
        return model_.infer(features).pdf();
    }
    const om::DasaModel& model() const { return model_; }

private:
    om::DasaModel model_;
};

// The random-market ablation: every request sees the same flat distribution
// over buckets 1..b_max.
class UniformOpponentModel : public OpponentModel {
public:
    explicit UniformOpponentModel(int b_max) : b_max_(b_max) {}
    std::vector<double> price_pdf(const SparseFeatures&) const override {
        return std::vector<double>(static_cast<std::size_t>(b_max_),
                                   1.0 / static_cast<double>(b_max_));
    }

private:
    int b_max_;
};

struct DdpgConfig {
    double gamma = 1.0;  // undiscounted within an episodic budget game
    double tau = 0.01;
    double noise_sigma = 0.1;
    double noise_decay = 0.999;  // multiplies sigma once per epoch
    std::size_t minibatch = 32;
    std::size_t update_period = 1000;  // auctions between update events
    std::size_t updates_per_event = 50;
    std::size_t replay_capacity = 1000;
    om::PriceSpace price_space{};
    bool use_opponent_model = false;
    bool relaxed_indicator = false;       // sigmoid-relaxed win indicator (ablation)
    double indicator_temperature = 0.05;
    std::vector<std::size_t> hidden = {64, 64};
    nn::OptimizerConfig actor_opt{1e-3, 0.999, 0.9, 0.999, 1e-8};
    nn::OptimizerConfig critic_opt{1e-3, 0.999, 0.9, 0.999, 1e-8};
    double pctr_scale = 1.0;  // input scaling for network conditioning

    void validate() const;
};

// DDPG bidding agent; with use_opponent_model the critic marginalizes the
// inner network over the opponent price distribution under the win
// indicator, otherwise it is the plain state-action critic.
class DdpgAgent {
public:
    DdpgAgent(DdpgConfig cfg, std::uint64_t seed);

    const DdpgConfig& config() const { return cfg_; }

    void attach_opponent_model(std::shared_ptr<const OpponentModel> model);
    bool has_opponent_model() const { return opponent_ != nullptr; }

    // Actor output plus exploration noise, clamped into [0, 1].
    Action act(const AgentState& state, bool explore = true);

    // Stores the transition and runs scheduled update events.
    void observe(Transition t);

    void on_epoch_begin(double budget);
    void on_epoch_end();

    struct UpdateStats {
        double critic_loss = 0.0;
        double mean_q = 0.0;
    };
    // One critic step on the TD error, one actor ascent step, soft target
    // updates. Requires replay size >= minibatch.
    UpdateStats update();

    double critic_q(const AgentState& state, double action) const;
    double critic_q_meanfield(const AgentState& state, double action,
                              const SparseFeatures& features) const;

    ReplayMemory& memory() { return memory_; }
    nn::ParamSet& actor_params() { return actor_; }
    nn::ParamSet& critic_params() { return critic_; }
    const nn::ParamSet& target_actor_params() const { return target_actor_; }
    const nn::ParamSet& target_critic_params() const { return target_critic_; }
    double noise_sigma() const { return noise_sigma_; }
    std::size_t updates_run() const { return updates_run_; }

    void save(const std::string& file) const;
    void load(const std::string& file);

private:
    friend struct DdpgUpdateOracle;
    nn::Tensor state_input(const AgentState& state) const;
    nn::Tape::Id meanfield_q_rows(nn::Tape& tape, nn::ParamsRef critic,
                                  const std::vector<const Transition*>& batch,
                                  const std::vector<double>& actions, bool next_state) const;
    std::vector<double>& cached_pdf(Transition& t, bool next_state) const;

    DdpgConfig cfg_;
    nn::Mlp actor_net_;
    nn::Mlp critic_net_;
    nn::ParamSet actor_, critic_, target_actor_, target_critic_;
    nn::AdamOptimizer actor_opt_, critic_opt_;
    ReplayMemory memory_;
    Rng rng_;
    std::shared_ptr<const OpponentModel> opponent_;
    double noise_sigma_ = 0.0;
    double budget_scale_ = 1.0;
    std::size_t observed_ = 0;
    std::size_t updates_run_ = 0;
};

}  // namespace rtb::agents
