#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "rtb/dasa.hpp"
#include "support.hpp"

using namespace rtb;
using namespace rtb::om;

namespace {

OpponentTrainConfig tiny_cfg() {
    OpponentTrainConfig cfg;
    cfg.embedding_dim = 12;
    cfg.model_width = 12;
    cfg.ffn_width = 24;
    cfg.embedding_vocab = 64;
    cfg.batch_size = 16;
    cfg.epochs = 25;
    cfg.optimizer.learning_rate = 5e-3;
    cfg.optimizer.decay_factor = 0.99;
    return cfg;
}

SparseFeatures feats(std::initializer_list<std::uint32_t> ids, std::uint32_t dim = 16) {
    return {std::vector<std::uint32_t>(ids), dim};
}

SurvivalSample make_sample(int price, bool censored, std::initializer_list<std::uint32_t> ids) {
    SurvivalSample s;
    s.features = feats(ids);
    s.observed_price = price;
    s.censored = censored;
    return s;
}

}  // namespace

TEST_CASE("inference: pdf + residual always normalizes and output has b_max buckets") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        DasaModel model(PriceSpace{10}, tiny_cfg(), seed);
        Rng rng(seed);
        for (int trial = 0; trial < 20; ++trial) {
            SparseFeatures f{{static_cast<std::uint32_t>(rng.uniform_int(16)),
                              static_cast<std::uint32_t>(rng.uniform_int(16))},
                             16};
            std::sort(f.indices.begin(), f.indices.end());
            f.indices.erase(std::unique(f.indices.begin(), f.indices.end()), f.indices.end());
            const auto d = model.infer(f);
            CHECK(d.b_max() == 10);
            double sum = d.residual_mass();
            for (double p : d.pdf()) sum += p;
            CHECK(std::fabs(sum - 1.0) < 1e-9);
            for (double h : d.hazards()) {
                CHECK(h >= kHazardFloor);
                CHECK(h <= 1.0 - kHazardFloor);
            }
        }
    }
}

TEST_CASE("loss_total mixture endpoints") {
    auto batch_of = [](std::vector<SurvivalSample>& store) {
        std::vector<const SurvivalSample*> batch;
        for (const auto& s : store) batch.push_back(&s);
        return batch;
    };
    std::vector<SurvivalSample> store{make_sample(3, false, {1}), make_sample(2, true, {2}),
                                      make_sample(5, false, {3})};

    OpponentTrainConfig cfg = tiny_cfg();
    cfg.alpha = 1.0;
    DasaModel pure_z(PriceSpace{8}, cfg, 5);
    // alpha = 1: total is exactly the mean observed-price loss over uncensored
    double expected = 0.0;
    for (const auto& s : store)
        if (!s.censored) expected += loss_observed(pure_z.infer(s.features), s.observed_price);
    expected /= 2.0;
    CHECK(pure_z.loss_total_value(batch_of(store)) == doctest::Approx(expected).epsilon(1e-12));

    cfg.alpha = 0.0;
    DasaModel pure_cw(PriceSpace{8}, cfg, 5);
    double censored_term = 0.0, win_term = 0.0;
    for (const auto& s : store) {
        const auto d = pure_cw.infer(s.features);
        if (s.censored)
            censored_term += loss_censored(d, s.observed_price);
        else
            win_term += loss_win(d, s.observed_price + 1);
    }
    expected = censored_term / 1.0 + win_term / 2.0;
    CHECK(pure_cw.loss_total_value(batch_of(store)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss_total: all-censored batch with alpha=1 is a degenerate-batch error") {
    OpponentTrainConfig cfg = tiny_cfg();
    cfg.alpha = 1.0;
    DasaModel model(PriceSpace{8}, cfg, 5);
    std::vector<SurvivalSample> store{make_sample(3, true, {1}), make_sample(2, true, {2})};
    std::vector<const SurvivalSample*> batch{&store[0], &store[1]};
    CHECK_THROWS_AS(model.loss_total_value(batch), TrainError);
}

TEST_CASE("gradient check: loss_total matches finite differences") {
    OpponentTrainConfig cfg = tiny_cfg();
    cfg.alpha = 0.25;
    DasaModel model(PriceSpace{6}, cfg, 31);
    std::vector<SurvivalSample> store{make_sample(3, false, {1, 9}), make_sample(2, true, {2}),
                                      make_sample(5, false, {3, 7}), make_sample(4, true, {1})};
    std::vector<const SurvivalSample*> batch;
    for (const auto& s : store) batch.push_back(&s);

    model.params().zero_grads();
    {
        nn::Tape tape;
        tape.backward(model.loss_total(tape, batch));
    }
    Rng pick(12);
    auto res = testsupport::gradient_check(
        model.params(), [&]() { return model.loss_total_value(batch); }, 20, pick);
    INFO("worst: ", res.worst_coord, " rel ", res.max_rel_error);
    CHECK(res.ok());
}

TEST_CASE("zero training epochs returns the initialization unchanged") {
    OpponentTrainConfig cfg = tiny_cfg();
    cfg.epochs = 0;
    DasaModel model(PriceSpace{8}, cfg, 11);
    DasaModel untouched(PriceSpace{8}, cfg, 11);
    std::vector<SurvivalSample> data{make_sample(3, false, {1}), make_sample(2, false, {2})};
    model.train(data, 99);
    bool identical = true;
    model.params().for_each([&](const std::string& path, nn::Tensor& v, nn::Tensor&) {
        const nn::Tensor& other = untouched.params().value(path);
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] != other[i]) identical = false;
    });
    CHECK(identical);
}

TEST_CASE("training concentrates the pdf on a point-mass market") {
    DasaModel model(PriceSpace{10}, tiny_cfg(), 17);
    std::vector<SurvivalSample> data;
    Rng rng(3);
    for (int i = 0; i < 300; ++i)
        data.push_back(make_sample(5, false,
                                   {static_cast<std::uint32_t>(rng.uniform_int(4))}));
    std::vector<double> losses;
    model.train(data, 1234, &losses);
    CHECK(losses.size() == tiny_cfg().epochs);
    CHECK(losses.back() < losses.front());
    const auto d = model.infer(feats({2}));
    CHECK(d.pdf_at(5) > 0.9);
}

TEST_CASE("trained ANLP approaches the entropy of a known distribution") {
    // q over buckets {2, 5, 9} with probs {0.2, 0.5, 0.3}; H(q) ~ 1.0297
    const std::vector<std::pair<int, double>> q{{2, 0.2}, {5, 0.5}, {9, 0.3}};
    double entropy = 0.0;
    for (const auto& [bucket, p] : q) entropy -= p * std::log(p);

    Rng rng(8);
    std::vector<SurvivalSample> data;
    for (int i = 0; i < 1500; ++i) {
        double u = rng.uniform01();
        int price = q.back().first;
        for (const auto& [bucket, p] : q) {
            u -= p;
            if (u < 0) {
                price = bucket;
                break;
            }
        }
        data.push_back(make_sample(price, false,
                                   {static_cast<std::uint32_t>(rng.uniform_int(4))}));
    }
    OpponentTrainConfig cfg = tiny_cfg();
    cfg.epochs = 40;
    cfg.alpha = 1.0;  // pure likelihood: the objective whose optimum is H(q)
    DasaModel model(PriceSpace{10}, cfg, 21);
    model.train(data, 55);
    const double v = anlp([&](const SparseFeatures& f) { return model.infer(f); }, data);
    CHECK(v <= entropy + 0.1);
    CHECK(v >= entropy - 0.05);  // cannot beat the entropy floor by more than noise
}

TEST_CASE("feature-conditioned model beats the feature-blind KM baseline") {
    // two segments with disjoint price modes, visible in feature 0/1
    Rng rng(14);
    std::vector<SurvivalSample> data;
    for (int i = 0; i < 800; ++i) {
        const bool seg = rng.uniform01() < 0.5;
        const int price = seg ? 3 : 9;
        auto s = make_sample(price, false, {seg ? 0u : 1u, 2u});
        if (rng.uniform01() < 0.3) {  // censor some below the true price
            s.censored = true;
            s.observed_price = 1 + static_cast<int>(rng.uniform_int(price));
        }
        data.push_back(std::move(s));
    }
    std::vector<SurvivalSample> eval;
    for (const auto& s : data)
        if (!s.censored) eval.push_back(s);

    OpponentTrainConfig cfg = tiny_cfg();
    cfg.epochs = 30;
    DasaModel model(PriceSpace{10}, cfg, 77);
    model.train(data, 31);
    const double model_anlp = anlp([&](const SparseFeatures& f) { return model.infer(f); }, eval);

    const auto km = kaplan_meier(data, PriceSpace{10});
    const double km_anlp = anlp([&](const SparseFeatures&) { return km; }, eval);

    INFO("model ", model_anlp, " km ", km_anlp);
    CHECK(model_anlp < km_anlp);
}

TEST_CASE("checkpoint round-trip preserves inference bit-exactly") {
    DasaModel model(PriceSpace{7}, tiny_cfg(), 3);
    const std::string file = "test_dasa_ckpt.txt";
    model.save(file);
    const DasaModel loaded = DasaModel::load(file);
    CHECK(loaded.space().b_max == 7);
    CHECK(loaded.config().alpha == model.config().alpha);
    const auto a = model.infer(feats({4, 11}));
    const auto b = loaded.infer(feats({4, 11}));
    for (int z = 1; z <= 7; ++z) CHECK(a.pdf_at(z) == b.pdf_at(z));
    std::remove(file.c_str());
}

TEST_CASE("training requires at least one uncensored sample") {
    DasaModel model(PriceSpace{5}, tiny_cfg(), 1);
    std::vector<SurvivalSample> data{make_sample(2, true, {0})};
    CHECK_THROWS_AS(model.train(data, 1), InputError);
    CHECK_THROWS_AS(model.train({}, 1), InputError);
}
