#include "rtb/dasa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rtb::om {

using nn::Tape;

void OpponentTrainConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("opponent: alpha must be in [0, 1]");
    if (embedding_dim == 0 || model_width == 0 || ffn_width == 0)
        throw ConfigError("opponent: zero network width");
    if (batch_size == 0) throw ConfigError("opponent: batch_size must be positive");
    if (embedding_vocab < 2) throw ConfigError("opponent: embedding vocab too small");
    optimizer.validate();
}

DasaModel::DasaModel(PriceSpace space, OpponentTrainConfig cfg, std::uint64_t seed)
    : space_(space), cfg_(cfg) {
    space_.validate();
    cfg_.validate();
    Rng rng(seed);
    nn::Tensor& emb = params_.declare("dasa/embed", cfg_.embedding_vocab, cfg_.embedding_dim);
    nn::xavier_init(emb, cfg_.embedding_dim, cfg_.embedding_dim, rng);
    if (cfg_.embedding_dim != cfg_.model_width)
        nn::init_dense(params_,
                       {"dasa/proj", cfg_.embedding_dim, cfg_.model_width, nn::Activation::Linear},
                       rng);
    nn::init_attention(params_, {"dasa/att", cfg_.model_width, cfg_.ffn_width}, rng);
    nn::init_dense(params_,
                   {"dasa/head", cfg_.model_width, static_cast<std::size_t>(space_.b_max),
                    nn::Activation::Sigmoid},
                   rng);
}

std::vector<std::uint32_t> DasaModel::tokens(const SparseFeatures& features) const {
    std::vector<std::uint32_t> ids;
    ids.reserve(features.indices.size() + 1);
    ids.push_back(0);  // bias token present in every sample
    for (std::uint32_t raw : features.indices)
        ids.push_back(1 + raw % (cfg_.embedding_vocab - 1));
    return ids;
}

Tape::Id DasaModel::hazards_node(Tape& tape, nn::ParamsRef params,
                                 const SparseFeatures& features) const {
    auto x = tape.embed_rows(params, "dasa/embed", tokens(features));
    if (cfg_.embedding_dim != cfg_.model_width)
        x = nn::forward_dense(tape, x, params,
                              {"dasa/proj", cfg_.embedding_dim, cfg_.model_width,
                               nn::Activation::Linear});
    auto att = nn::forward_attention(tape, x, params, {"dasa/att", cfg_.model_width, cfg_.ffn_width});
    auto pooled = tape.col_means(att.output);
    auto hazards = nn::forward_dense(tape, pooled, params,
                                     {"dasa/head", cfg_.model_width,
                                      static_cast<std::size_t>(space_.b_max),
                                      nn::Activation::Sigmoid});
    return tape.clamp(hazards, kHazardFloor, 1.0 - kHazardFloor);
}

MarketDistribution DasaModel::infer(const SparseFeatures& features) const {
    Tape tape;
    auto hz = hazards_node(tape, params_, features);
    return MarketDistribution::from_hazards(tape.value(hz).data());
}

Tape::Id DasaModel::build_loss(Tape& tape, nn::ParamsRef params,
                               const std::vector<const SurvivalSample*>& batch) const {
    if (batch.empty()) throw InputError("loss_total: empty batch");
    const auto b = static_cast<std::size_t>(space_.b_max);

    std::size_t uncensored = 0, censored = 0;
    for (const auto* s : batch) (s->censored ? censored : uncensored)++;
    if (uncensored == 0 && cfg_.alpha == 1.0)
        throw TrainError("loss_total: batch has no uncensored samples and alpha = 1");

    Tape::Id observed_sum = -1, censored_sum = -1, win_sum = -1;
    auto accumulate = [&tape](Tape::Id& acc, Tape::Id term) {
        acc = acc < 0 ? term : tape.add(acc, term);
    };

    for (const auto* s : batch) {
        if (s->observed_price < 1 || s->observed_price > space_.b_max)
            throw InputError("loss_total: observed price out of bucket range");
        const auto z = static_cast<std::size_t>(s->observed_price);
        auto hz = hazards_node(tape, params, s->features);
        auto log_h = tape.log(hz);
        auto log_surv = tape.log(tape.add_scalar(tape.scale(hz, -1.0), 1.0));

        if (s->censored) {
            if (z > 1) {
                // -sum_{j < z} log(1 - h_j)
                nn::Tensor below(1, b);
                for (std::size_t j = 0; j + 1 < z; ++j) below[j] = 1.0;
                accumulate(censored_sum,
                           tape.scale(tape.sum_all(tape.mul(tape.constant(below), log_surv)), -1.0));
            }
            continue;
        }

        // observed-price loss: -[log h_z + sum_{j < z} log(1 - h_j)]
        nn::Tensor at(1, b), below(1, b);
        at[z - 1] = 1.0;
        for (std::size_t j = 0; j + 1 < z; ++j) below[j] = 1.0;
        auto lz = tape.add(tape.sum_all(tape.mul(tape.constant(at), log_h)),
                           tape.sum_all(tape.mul(tape.constant(below), log_surv)));
        accumulate(observed_sum, tape.scale(lz, -1.0));

        // win loss at the tightest winning bid z + 1: -log[1 - prod_{j <= z}(1 - h_j)]
        nn::Tensor upto(1, b);
        for (std::size_t j = 0; j < z; ++j) upto[j] = 1.0;
        auto surv = tape.exp(tape.sum_all(tape.mul(tape.constant(upto), log_surv)));
        auto win_p = tape.add_scalar(tape.scale(surv, -1.0), 1.0);
        accumulate(win_sum, tape.scale(tape.log(win_p), -1.0));
    }

    Tape::Id total = -1;
    if (observed_sum >= 0 && cfg_.alpha > 0.0)
        accumulate(total, tape.scale(observed_sum, cfg_.alpha / static_cast<double>(uncensored)));
    if (cfg_.alpha < 1.0) {
        if (censored_sum >= 0)
            accumulate(total,
                       tape.scale(censored_sum, (1.0 - cfg_.alpha) / static_cast<double>(censored)));
        if (win_sum >= 0)
            accumulate(total,
                       tape.scale(win_sum, (1.0 - cfg_.alpha) / static_cast<double>(uncensored)));
    }
    if (total < 0) total = tape.constant(nn::Tensor::scalar(0.0));
    return total;
}

Tape::Id DasaModel::loss_total(Tape& tape, const std::vector<const SurvivalSample*>& batch) {
    return build_loss(tape, params_, batch);
}

double DasaModel::loss_total_value(const std::vector<const SurvivalSample*>& batch) const {
    Tape tape;
    return tape.value(build_loss(tape, params_, batch)).item();
}

void DasaModel::train(const std::vector<SurvivalSample>& data, std::uint64_t shuffle_seed,
                      std::vector<double>* epoch_losses) {
    if (data.empty()) throw InputError("opponent training: empty dataset");
    if (std::none_of(data.begin(), data.end(), [](const auto& s) { return !s.censored; }))
        throw InputError("opponent training: dataset has no uncensored samples");

    nn::AdamOptimizer opt(cfg_.optimizer);
    Rng rng(shuffle_seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
            std::vector<const SurvivalSample*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
            bool skip = false;
            if (cfg_.alpha == 1.0 &&
                std::none_of(batch.begin(), batch.end(), [](const auto* s) { return !s->censored; }))
                skip = true;  // no gradient signal in this batch
            if (skip) continue;
            Tape tape;
            auto loss = loss_total(tape, batch);
            const double value = tape.value(loss).item();
            if (!std::isfinite(value))
                throw TrainError("opponent training diverged at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
            tape.backward(loss);
            opt.step(params_);
            epoch_loss += value;
            ++batches;
        }
        opt.advance_decay();
        if (epoch_losses) epoch_losses->push_back(batches ? epoch_loss / batches : 0.0);
    }
}

void DasaModel::save(const std::string& file) const {
    std::ofstream out(file);
    if (!out) throw InputError("cannot open dasa checkpoint for writing: " + file);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "# dasa 1 b_max=%d alpha=%.17g embedding_dim=%zu model_width=%zu ffn_width=%zu "
                  "vocab=%u epochs=%zu batch_size=%zu lr=%.17g decay=%.17g",
                  space_.b_max, cfg_.alpha, cfg_.embedding_dim, cfg_.model_width, cfg_.ffn_width,
                  cfg_.embedding_vocab, cfg_.epochs, cfg_.batch_size, cfg_.optimizer.learning_rate,
                  cfg_.optimizer.decay_factor);
    out << buf << "\n";
    nn::write_params(out, params_);
    if (!out) throw InputError("write failure on dasa checkpoint: " + file);
}

DasaModel DasaModel::load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open dasa checkpoint: " + file);
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string hash, magic;
    int version = 0;
    hs >> hash >> magic >> version;
    if (hash != "#" || magic != "dasa" || version != 1)
        throw InputError("not a dasa v1 checkpoint: " + file);
    PriceSpace space;
    OpponentTrainConfig cfg;
    std::string tok;
    while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const double val = std::stod(tok.substr(eq + 1));
        if (key == "b_max") space.b_max = static_cast<int>(val);
        else if (key == "alpha") cfg.alpha = val;
        else if (key == "embedding_dim") cfg.embedding_dim = static_cast<std::size_t>(val);
        else if (key == "model_width") cfg.model_width = static_cast<std::size_t>(val);
        else if (key == "ffn_width") cfg.ffn_width = static_cast<std::size_t>(val);
        else if (key == "vocab") cfg.embedding_vocab = static_cast<std::uint32_t>(val);
        else if (key == "epochs") cfg.epochs = static_cast<std::size_t>(val);
        else if (key == "batch_size") cfg.batch_size = static_cast<std::size_t>(val);
        else if (key == "lr") cfg.optimizer.learning_rate = val;
        else if (key == "decay") cfg.optimizer.decay_factor = val;
    }
    DasaModel model(space, cfg, /*seed=*/0);
    model.params_ = nn::ParamSet();
    nn::read_params(in, model.params_);
    return model;
}

}  // namespace rtb::om
