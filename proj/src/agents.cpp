#include "rtb/agents.hpp"

#include <algorithm>
#include <cmath>

namespace rtb::agents {

using nn::Tape;
using nn::Tensor;

std::int64_t to_bid_price(Action action, const AgentState& state, const om::PriceSpace& space) {
    const double intent = std::min(static_cast<double>(space.b_max) * action.a, state.budget_left);
    if (intent <= 0.0) return 0;
    return static_cast<std::int64_t>(std::floor(intent));
}

int win_cutoff(double action, double budget_left, const om::PriceSpace& space) {
    const double intent = std::min(static_cast<double>(space.b_max) * action, budget_left);
    if (intent <= 0.0) return 0;
    const int cutoff = static_cast<int>(std::floor(intent));
    return std::min(cutoff, space.b_max);
}

void LinearBidderConfig::validate() const {
    if (base_bid <= 0.0) throw ConfigError("linear bidder: base_bid must be > 0");
    if (reference_ctr <= 0.0 || reference_ctr >= 1.0)
        throw ConfigError("linear bidder: reference_ctr must be in (0, 1)");
    if (pctr_noise_sigma < 0.0) throw ConfigError("linear bidder: noise sigma must be >= 0");
}

double linear_bid(double pctr, const LinearBidderConfig& cfg, double budget_left, Rng& rng) {
    double noisy = pctr;
    if (cfg.pctr_noise_sigma > 0.0) noisy += rng.gaussian(0.0, cfg.pctr_noise_sigma);
    const double bid = cfg.base_bid * (noisy / cfg.reference_ctr);
    return std::max(0.0, std::min(bid, budget_left));
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("replay memory: capacity must be positive");
    items_.reserve(capacity_);
}

void ReplayMemory::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

std::vector<std::size_t> ReplayMemory::sample_indices(std::size_t m, Rng& rng) const {
    if (m > items_.size()) throw ConfigError("replay memory: batch larger than stored items");
    std::vector<std::size_t> idx(items_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t k = 0; k < m; ++k)
        std::swap(idx[k], idx[k + rng.uniform_int(idx.size() - k)]);
    idx.resize(m);
    return idx;
}

void DdpgConfig::validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("ddpg: gamma must be in [0, 1]");
    if (tau <= 0.0 || tau > 1.0) throw ConfigError("ddpg: tau must be in (0, 1]");
    if (noise_sigma < 0.0 || noise_decay <= 0.0 || noise_decay > 1.0)
        throw ConfigError("ddpg: bad noise settings");
    if (minibatch == 0 || update_period == 0 || replay_capacity == 0)
        throw ConfigError("ddpg: counts must be positive");
    if (minibatch > replay_capacity)
        throw ConfigError("ddpg: minibatch exceeds replay capacity");
    if (indicator_temperature <= 0.0) throw ConfigError("ddpg: temperature must be > 0");
    price_space.validate();
    actor_opt.validate();
    critic_opt.validate();
}

namespace {

std::vector<std::size_t> mlp_dims(std::size_t in, const std::vector<std::size_t>& hidden) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    return dims;
}

}  // namespace

DdpgAgent::DdpgAgent(DdpgConfig cfg, std::uint64_t seed)
    : cfg_(cfg),
      actor_net_("actor", mlp_dims(2, cfg.hidden), nn::Activation::Relu, nn::Activation::Sigmoid),
      critic_net_("critic", mlp_dims(cfg.use_opponent_model ? 4 : 3, cfg.hidden),
                  nn::Activation::Relu, nn::Activation::Linear),
      actor_opt_(cfg.actor_opt),
      critic_opt_(cfg.critic_opt),
      memory_(cfg.replay_capacity),
      rng_(substream_seed(seed, "ddpg")),
      noise_sigma_(cfg.noise_sigma) {
    cfg_.validate();
    Rng init_rng(substream_seed(seed, "init"));
    actor_net_.init(actor_, init_rng);
    critic_net_.init(critic_, init_rng);
    actor_net_.init(target_actor_, init_rng);
    critic_net_.init(target_critic_, init_rng);
    target_actor_.copy_values_from(actor_);
    target_critic_.copy_values_from(critic_);
}

void DdpgAgent::attach_opponent_model(std::shared_ptr<const OpponentModel> model) {
    opponent_ = std::move(model);
}

Tensor DdpgAgent::state_input(const AgentState& state) const {
    Tensor x(1, 2);
    x[0] = state.budget_left / budget_scale_;
    x[1] = state.pctr * cfg_.pctr_scale;
    return x;
}

Action DdpgAgent::act(const AgentState& state, bool explore) {
    Tape tape;
    auto out = actor_net_.forward(tape, tape.constant(state_input(state)), actor_);
    double a = tape.value(out).item();
    if (explore && noise_sigma_ > 0.0) a += rng_.gaussian(0.0, noise_sigma_);
    return {std::clamp(a, 0.0, 1.0)};
}

void DdpgAgent::observe(Transition t) {
    memory_.push(std::move(t));
    ++observed_;
    if (observed_ % cfg_.update_period == 0 && memory_.size() >= cfg_.minibatch)
        for (std::size_t i = 0; i < cfg_.updates_per_event; ++i) update();
}

void DdpgAgent::on_epoch_begin(double budget) {
    budget_scale_ = std::max(budget, 1.0);
}

void DdpgAgent::on_epoch_end() {
    noise_sigma_ *= cfg_.noise_decay;
    actor_opt_.advance_decay();
    critic_opt_.advance_decay();
}

std::vector<double>& DdpgAgent::cached_pdf(Transition& t, bool next_state) const {
    std::vector<double>& slot = next_state ? t.next_pdf : t.pdf;
    if (slot.empty()) {
        if (!opponent_) throw ConfigError("ddpg: opponent model required but not attached");
        slot = opponent_->price_pdf(next_state ? t.next_features : t.features);
        if (slot.size() != static_cast<std::size_t>(cfg_.price_space.b_max))
            throw ConfigError("ddpg: opponent pdf length mismatch");
    }
    return slot;
}

// Inner-critic rows for a batch with fixed actions: for transition m and
// bucket j the input row is [B, pctr, a_m, j / b_max] and the row weight is
// pdf_m[j] * [j <= cutoff_m]. Returns per-transition Q, shape M x 1.
Tape::Id DdpgAgent::meanfield_q_rows(Tape& tape, nn::ParamsRef critic,
                                     const std::vector<const Transition*>& batch,
                                     const std::vector<double>& actions, bool next_state) const {
    const auto b = static_cast<std::size_t>(cfg_.price_space.b_max);
    const std::size_t m = batch.size();
    Tensor input(m * b, 4);
    Tensor weights(m * b, 1);
    for (std::size_t i = 0; i < m; ++i) {
        const Transition& t = *batch[i];
        const AgentState& s = next_state ? t.next_state : t.state;
        const std::vector<double>& pdf = next_state ? t.next_pdf : t.pdf;
        if (pdf.size() != b) throw ConfigError("ddpg: opponent pdf not cached for transition");
        const int cutoff = win_cutoff(actions[i], s.budget_left, cfg_.price_space);
        const double bn = s.budget_left / budget_scale_;
        const double pn = s.pctr * cfg_.pctr_scale;
        for (std::size_t j = 0; j < b; ++j) {
            const std::size_t r = i * b + j;
            input.at(r, 0) = bn;
            input.at(r, 1) = pn;
            input.at(r, 2) = actions[i];
            input.at(r, 3) = static_cast<double>(j + 1) / static_cast<double>(b);
            weights.at(r, 0) = (static_cast<int>(j + 1) <= cutoff) ? pdf[j] : 0.0;
        }
    }
    auto q = critic_net_.forward(tape, tape.constant(input), critic);
    return tape.block_sum_rows(tape.mul(q, tape.constant(weights)), b);
}

double DdpgAgent::critic_q(const AgentState& state, double action) const {
    if (cfg_.use_opponent_model)
        throw ConfigError("critic_q: agent is configured with the mean-field critic");
    Tape tape;
    Tensor x(1, 3);
    x[0] = state.budget_left / budget_scale_;
    x[1] = state.pctr * cfg_.pctr_scale;
    x[2] = action;
    auto q = critic_net_.forward(tape, tape.constant(x), critic_);
    return tape.value(q).item();
}

double DdpgAgent::critic_q_meanfield(const AgentState& state, double action,
                                     const SparseFeatures& features) const {
    if (!opponent_) throw ConfigError("critic_q_meanfield: no opponent model attached");
    Transition probe;
    probe.state = state;
    probe.features = features;
    cached_pdf(probe, false);
    Tape tape;
    auto q = meanfield_q_rows(tape, critic_, {&probe}, {action}, false);
    return tape.value(q).item();
}

DdpgAgent::UpdateStats DdpgAgent::update() {
    const std::size_t m = cfg_.minibatch;
    if (memory_.size() < m) throw ConfigError("ddpg update: replay smaller than minibatch");
    const auto idx = memory_.sample_indices(m, rng_);
    std::vector<const Transition*> batch;
    batch.reserve(m);
    for (auto i : idx) batch.push_back(&memory_.at(i));

    const bool om = cfg_.use_opponent_model;
    if (om)
        for (auto i : idx) {
            cached_pdf(memory_.at(i), false);
            if (!memory_.at(i).terminal) cached_pdf(memory_.at(i), true);
        }

    // --- critic target: y = r + gamma * Q'(s', pi'(s')), terminal -> r ---
    std::vector<double> y(m, 0.0);
    std::vector<const Transition*> alive;
    std::vector<std::size_t> alive_pos;
    for (std::size_t i = 0; i < m; ++i) {
        y[i] = batch[i]->reward;
        if (!batch[i]->terminal) {
            alive.push_back(batch[i]);
            alive_pos.push_back(i);
        }
    }
    if (!alive.empty() && cfg_.gamma > 0.0) {
        Tape tape;
        Tensor states(alive.size(), 2);
        for (std::size_t i = 0; i < alive.size(); ++i) {
            states.at(i, 0) = alive[i]->next_state.budget_left / budget_scale_;
            states.at(i, 1) = alive[i]->next_state.pctr * cfg_.pctr_scale;
        }
        auto s_next = tape.constant(states);
        auto a_next = actor_net_.forward(tape, s_next, std::as_const(target_actor_));
        Tape::Id q_next;
        if (om) {
            std::vector<double> actions(alive.size());
            for (std::size_t i = 0; i < alive.size(); ++i) actions[i] = tape.value(a_next).at(i, 0);
            q_next = meanfield_q_rows(tape, std::as_const(target_critic_), alive, actions, true);
        } else {
            auto input = tape.concat_cols(s_next, a_next);
            q_next = critic_net_.forward(tape, input, std::as_const(target_critic_));
        }
        for (std::size_t i = 0; i < alive.size(); ++i)
            y[alive_pos[i]] += cfg_.gamma * tape.value(q_next).at(i, 0);
    }

    // --- critic step ---
    UpdateStats stats;
    {
        Tape tape;
        Tape::Id q;
        if (om) {
            std::vector<double> actions(m);
            for (std::size_t i = 0; i < m; ++i) actions[i] = batch[i]->action.a;
            q = meanfield_q_rows(tape, critic_, batch, actions, false);
        } else {
            Tensor input(m, 3);
            for (std::size_t i = 0; i < m; ++i) {
                input.at(i, 0) = batch[i]->state.budget_left / budget_scale_;
                input.at(i, 1) = batch[i]->state.pctr * cfg_.pctr_scale;
                input.at(i, 2) = batch[i]->action.a;
            }
            q = critic_net_.forward(tape, tape.constant(input), critic_);
        }
        Tensor targets(m, 1);
        for (std::size_t i = 0; i < m; ++i) targets.at(i, 0) = y[i];
        auto diff = tape.sub(q, tape.constant(targets));
        auto loss = tape.mean_all(tape.mul(diff, diff));
        stats.critic_loss = tape.value(loss).item();
        tape.backward(loss);
        critic_opt_.step(critic_);
    }

    // --- actor step: ascend Q(s, pi(s)) with the critic frozen ---
    {
        Tape tape;
        Tensor states(m, 2);
        for (std::size_t i = 0; i < m; ++i) {
            states.at(i, 0) = batch[i]->state.budget_left / budget_scale_;
            states.at(i, 1) = batch[i]->state.pctr * cfg_.pctr_scale;
        }
        auto s = tape.constant(states);
        auto a = actor_net_.forward(tape, s, actor_);
        Tape::Id q;
        if (om) {
            const auto b = static_cast<std::size_t>(cfg_.price_space.b_max);
            Tensor state_rep(m * b, 2);
            Tensor z_col(m * b, 1);
            Tensor cap_col(m * b, 1);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < b; ++j) {
                    const std::size_t r = i * b + j;
                    state_rep.at(r, 0) = states.at(i, 0);
                    state_rep.at(r, 1) = states.at(i, 1);
                    z_col.at(r, 0) = static_cast<double>(j + 1) / static_cast<double>(b);
                    cap_col.at(r, 0) =
                        batch[i]->state.budget_left / static_cast<double>(cfg_.price_space.b_max);
                }
            auto a_rep = tape.repeat_rows(a, b);
            auto input = tape.concat_cols(tape.concat_cols(tape.constant(state_rep), a_rep),
                                          tape.constant(z_col));
            auto q_rows = critic_net_.forward(tape, input, std::as_const(critic_));
            Tape::Id weighted;
            if (cfg_.relaxed_indicator) {
                // differentiable ablation: sigma((min(a, B / b_max) - z_j) / temp)
                auto cap = tape.constant(cap_col);
                auto a_eff = tape.sub(a_rep, tape.relu(tape.sub(a_rep, cap)));
                auto ind = tape.sigmoid(tape.scale(tape.sub(a_eff, tape.constant(z_col)),
                                                   1.0 / cfg_.indicator_temperature));
                Tensor pdf_col(m * b, 1);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < b; ++j)
                        pdf_col.at(i * b + j, 0) = batch[i]->pdf[j];
                weighted = tape.mul(q_rows, tape.mul(tape.constant(pdf_col), ind));
            } else {
                // hard indicator: piecewise-constant in a, zero subgradient
                Tensor w(m * b, 1);
                for (std::size_t i = 0; i < m; ++i) {
                    const int cutoff = win_cutoff(tape.value(a).at(i, 0),
                                                  batch[i]->state.budget_left, cfg_.price_space);
                    for (std::size_t j = 0; j < b; ++j)
                        w.at(i * b + j, 0) =
                            (static_cast<int>(j + 1) <= cutoff) ? batch[i]->pdf[j] : 0.0;
                }
                weighted = tape.mul(q_rows, tape.constant(w));
            }
            q = tape.block_sum_rows(weighted, b);
        } else {
            auto input = tape.concat_cols(s, a);
            q = critic_net_.forward(tape, input, std::as_const(critic_));
        }
        auto objective = tape.mean_all(q);
        stats.mean_q = tape.value(objective).item();
        tape.backward(tape.scale(objective, -1.0));
        actor_opt_.step(actor_);
    }

    target_actor_.soft_update_from(actor_, cfg_.tau);
    target_critic_.soft_update_from(critic_, cfg_.tau);
    ++updates_run_;
    return stats;
}

void DdpgAgent::save(const std::string& file) const {
    nn::ParamSet merged;
    auto copy_in = [&merged](const std::string& prefix, const nn::ParamSet& src) {
        src.for_each([&](const std::string& path, const Tensor& v, const Tensor&) {
            merged.declare(prefix + path, v.rows(), v.cols()) = v;
        });
    };
    copy_in("online/", actor_);
    copy_in("online/", critic_);
    copy_in("target/", target_actor_);
    copy_in("target/", target_critic_);
    nn::save_checkpoint(merged, file);
}

void DdpgAgent::load(const std::string& file) {
    nn::ParamSet merged;
    nn::load_checkpoint(merged, file);
    auto copy_out = [&merged](const std::string& prefix, nn::ParamSet& dst) {
        dst.for_each([&](const std::string& path, Tensor& v, Tensor&) {
            v = merged.value(prefix + path);
        });
    };
    copy_out("online/", actor_);
    copy_out("online/", critic_);
    copy_out("target/", target_actor_);
    copy_out("target/", target_critic_);
}

}  // namespace rtb::agents
