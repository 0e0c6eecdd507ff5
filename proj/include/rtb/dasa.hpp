#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtb/layers.hpp"
#include "rtb/optimizer.hpp"
#include "rtb/survival.hpp"

namespace rtb::om {

struct OpponentTrainConfig {
    double alpha = 0.25;          // mixes the observed-price loss against the win/lose losses
    std::size_t embedding_dim = 32;
    std::size_t model_width = 32;
    std::size_t ffn_width = 64;
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    std::uint32_t embedding_vocab = 4096;  // feature ids are folded mod (vocab - 1); row 0 is a
                                           // learned bias token prepended to every sample
    nn::OptimizerConfig optimizer{1e-3, 0.97, 0.9, 0.999, 1e-8};

    void validate() const;
};

// Attentive hazard network over the discretized price space: each active
// feature field becomes an embedded token, one self-attention stack mixes
// them, mean pooling and a sigmoid head emit per-bucket hazards.
class DasaModel {
public:
    DasaModel(PriceSpace space, OpponentTrainConfig cfg, std::uint64_t seed);

    const PriceSpace& space() const { return space_; }
    const OpponentTrainConfig& config() const { return cfg_; }

    MarketDistribution infer(const SparseFeatures& features) const;

    // Differentiable composite loss over a batch:
    //   alpha * mean(observed-price loss | uncensored)
    //   + (1 - alpha) * (mean(censored loss | censored) + mean(win loss | uncensored))
    // Uncensored samples are treated as won at the tightest bid that beats
    // the observed price. An all-censored batch with alpha = 1 has no signal
    // and raises TrainError.
    nn::Tape::Id loss_total(nn::Tape& tape, const std::vector<const SurvivalSample*>& batch);
    double loss_total_value(const std::vector<const SurvivalSample*>& batch) const;

    // Minibatch descent on loss_total; epochs = 0 leaves parameters at their
    // initialization. Appends the per-epoch mean training loss when a sink is
    // given. Raises TrainError with the epoch/batch position on divergence.
    void train(const std::vector<SurvivalSample>& data, std::uint64_t shuffle_seed,
               std::vector<double>* epoch_losses = nullptr);

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    void save(const std::string& file) const;
    static DasaModel load(const std::string& file);

private:
    nn::Tape::Id hazards_node(nn::Tape& tape, nn::ParamsRef params,
                              const SparseFeatures& features) const;
    nn::Tape::Id build_loss(nn::Tape& tape, nn::ParamsRef params,
                            const std::vector<const SurvivalSample*>& batch) const;
    std::vector<std::uint32_t> tokens(const SparseFeatures& features) const;

    PriceSpace space_;
    OpponentTrainConfig cfg_;
    nn::ParamSet params_;
};

}  // namespace rtb::om
