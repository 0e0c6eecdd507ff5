#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rtb/layers.hpp"
#include "rtb/optimizer.hpp"
#include "rtb/tape.hpp"
#include "support.hpp"

using namespace rtb;
using namespace rtb::nn;

TEST_CASE("tensor basics") {
    Tensor t(2, 3, 1.5);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.size() == 6);
    CHECK(t.shape() == std::vector<std::size_t>{2, 3});
    t.at(1, 2) = -4.0;
    CHECK(t[5] == -4.0);
    CHECK(t.all_finite());
    t[0] = std::nan("");
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(Tensor(2, 2).item(), ConfigError);
}

TEST_CASE("dense forward: zero weights annihilate") {
    ParamSet ps;
    DenseSpec spec{"l", 3, 2, Activation::Linear};
    ps.declare("l/W", 3, 2);
    ps.declare("l/b", 1, 2);
    Tape tape;
    auto x = tape.constant(Tensor::row({1.0, -2.0, 3.0}));
    auto y = forward_dense(tape, x, ps, spec);
    CHECK(tape.value(y).at(0, 0) == 0.0);
    CHECK(tape.value(y).at(0, 1) == 0.0);
}

TEST_CASE("dense forward: identity weights pass input through") {
    ParamSet ps;
    DenseSpec spec{"l", 3, 3, Activation::Linear};
    Tensor& w = ps.declare("l/W", 3, 3);
    for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0;
    ps.declare("l/b", 1, 3);
    Tape tape;
    auto x = tape.constant(Tensor::row({0.5, -1.5, 2.0}));
    auto y = forward_dense(tape, x, ps, spec);
    for (std::size_t c = 0; c < 3; ++c) CHECK(tape.value(y)[c] == doctest::Approx(tape.value(x)[c]));
}

TEST_CASE("dense forward: 1x1 affine arithmetic") {
    ParamSet ps;
    ps.declare("l/W", 1, 1).fill(2.0);
    ps.declare("l/b", 1, 1).fill(1.0);
    Tape tape;
    auto x = tape.constant(Tensor::scalar(3.0));
    auto y = forward_dense(tape, x, ps, {"l", 1, 1, Activation::Linear});
    CHECK(tape.value(y).item() == doctest::Approx(7.0));
}

TEST_CASE("dense forward: fan-in mismatch is a configuration error") {
    ParamSet ps;
    Rng rng(7);
    DenseSpec spec{"l", 4, 2, Activation::Relu};
    init_dense(ps, spec, rng);
    Tape tape;
    auto x = tape.constant(Tensor::row({1.0, 2.0}));
    CHECK_THROWS_AS(forward_dense(tape, x, ps, spec), ConfigError);
}

TEST_CASE("backward: loss = sum(w) gives all-ones gradient") {
    ParamSet ps;
    Tensor& w = ps.declare("w", 2, 3);
    w.fill(0.37);
    Tape tape;
    auto loss = tape.sum_all(tape.param(ps, "w"));
    tape.backward(loss);
    for (std::size_t i = 0; i < 6; ++i) CHECK(ps.grad("w")[i] == 1.0);
}

TEST_CASE("backward: loss = w^2 at w = 3 gives gradient 6") {
    ParamSet ps;
    ps.declare("w", 1, 1).fill(3.0);
    Tape tape;
    auto w = tape.param(ps, "w");
    auto loss = tape.sum_all(tape.mul(w, w));
    tape.backward(loss);
    CHECK(ps.grad("w").item() == doctest::Approx(6.0));
}

TEST_CASE("backward twice without re-forward is an error") {
    ParamSet ps;
    ps.declare("w", 1, 1).fill(2.0);
    Tape tape;
    auto loss = tape.sum_all(tape.param(ps, "w"));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), TrainError);
}

TEST_CASE("gradient check: random mlp with every layer type") {
    Rng rng(12345);
    ParamSet ps;
    Mlp net("net", {4, 8, 8, 1}, Activation::Tanh, Activation::Linear);
    net.init(ps, rng);

    Tensor input(5, 4);
    for (auto& v : input.data()) v = rng.uniform(-1.0, 1.0);

    auto loss_value = [&]() {
        Tape tape;
        auto x = tape.constant(input);
        auto out = net.forward(tape, x, ps);
        return tape.value(tape.mean_all(tape.mul(out, out))).item();
    };

    ps.zero_grads();
    {
        Tape tape;
        auto x = tape.constant(input);
        auto out = net.forward(tape, x, ps);
        tape.backward(tape.mean_all(tape.mul(out, out)));
    }
    Rng pick(99);
    auto res = testsupport::gradient_check(ps, loss_value, 20, pick);
    INFO("worst: ", res.worst_coord);
    CHECK(res.ok());
}

TEST_CASE("gradient check: attention block") {
    Rng rng(777);
    ParamSet ps;
    AttentionSpec spec{"att", 6, 12};
    init_attention(ps, spec, rng);

    Tensor input(3, 6);
    for (auto& v : input.data()) v = rng.uniform(-1.0, 1.0);

    auto loss_value = [&]() {
        Tape tape;
        auto x = tape.constant(input);
        auto out = forward_attention(tape, x, ps, spec);
        return tape.value(tape.mean_all(tape.mul(out.output, out.output))).item();
    };

    ps.zero_grads();
    {
        Tape tape;
        auto x = tape.constant(input);
        auto out = forward_attention(tape, x, ps, spec);
        tape.backward(tape.mean_all(tape.mul(out.output, out.output)));
    }
    Rng pick(31);
    auto res = testsupport::gradient_check(ps, loss_value, 20, pick);
    INFO("worst: ", res.worst_coord);
    CHECK(res.ok());
}

TEST_CASE("gradient check: mixed elementwise ops") {
    Rng rng(2024);
    ParamSet ps;
    Tensor& w = ps.declare("w", 3, 4);
    for (auto& v : w.data()) v = rng.uniform(0.2, 1.2);

    auto build = [&](Tape& tape) {
        auto p = tape.param(ps, "w");
        auto a = tape.sigmoid(p);
        auto b = tape.log(tape.add_scalar(tape.scale(a, 0.9), 0.05));
        auto c = tape.exp(tape.row_sums(b));
        auto d = tape.concat_cols(c, tape.clamp(c, 0.1, 0.4));
        return tape.mean_all(tape.mul(d, d));
    };
    auto loss_value = [&]() {
        Tape tape;
        return tape.value(build(tape)).item();
    };
    ps.zero_grads();
    {
        Tape tape;
        tape.backward(build(tape));
    }
    Rng pick(5);
    auto res = testsupport::gradient_check(ps, loss_value, 20, pick);
    INFO("worst: ", res.worst_coord);
    CHECK(res.ok());
}

TEST_CASE("gradient check: broadcast and block ops") {
    Rng rng(4242);
    ParamSet ps;
    Tensor& w = ps.declare("w", 1, 5);
    for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);

    auto build = [&](Tape& tape) {
        auto p = tape.param(ps, "w");
        auto tiled = tape.tile_rows(p, 4);           // 4 x 5
        auto rep = tape.repeat_rows(tiled, 3);       // 12 x 5
        auto t = tape.tanh(rep);
        auto blocks = tape.block_sum_rows(t, 3);     // 4 x 5
        auto pooled = tape.col_means(blocks);        // 1 x 5
        return tape.sum_all(tape.mul(pooled, pooled));
    };
    auto loss_value = [&]() {
        Tape tape;
        return tape.value(build(tape)).item();
    };
    ps.zero_grads();
    {
        Tape tape;
        tape.backward(build(tape));
    }
    Rng pick(6);
    auto res = testsupport::gradient_check(ps, loss_value, 5, pick);
    INFO("worst: ", res.worst_coord);
    CHECK(res.ok());
}

TEST_CASE("attention: singleton softmax weight is 1") {
    Rng rng(1);
    ParamSet ps;
    AttentionSpec spec{"att", 4, 8};
    init_attention(ps, spec, rng);
    Tape tape;
    Tensor input(1, 4);
    for (auto& v : input.data()) v = rng.uniform(-1.0, 1.0);
    auto out = forward_attention(tape, tape.constant(input), ps, spec);
    CHECK(tape.value(out.weights).rows() == 1);
    CHECK(tape.value(out.weights).item() == doctest::Approx(1.0));
    CHECK(tape.value(out.output).rows() == 1);
    CHECK(tape.value(out.output).cols() == 4);
}

TEST_CASE("attention: identical tokens attend uniformly") {
    Rng rng(2);
    ParamSet ps;
    AttentionSpec spec{"att", 4, 8};
    init_attention(ps, spec, rng);
    Tape tape;
    Tensor input(2, 4);
    for (std::size_t c = 0; c < 4; ++c) {
        const double v = rng.uniform(-1.0, 1.0);
        input.at(0, c) = v;
        input.at(1, c) = v;
    }
    auto out = forward_attention(tape, tape.constant(input), ps, spec);
    const Tensor& w = tape.value(out.weights);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(w.at(r, c) == doctest::Approx(0.5));
}

TEST_CASE("attention: weight rows are probability vectors") {
    Rng rng(3);
    ParamSet ps;
    AttentionSpec spec{"att", 4, 8};
    init_attention(ps, spec, rng);
    Tape tape;
    Tensor input(3, 4);
    for (auto& v : input.data()) v = rng.uniform(-2.0, 2.0);
    auto out = forward_attention(tape, tape.constant(input), ps, spec);
    const Tensor& w = tape.value(out.weights);
    for (std::size_t r = 0; r < 3; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(w.at(r, c) >= 0.0);
            sum += w.at(r, c);
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
    CHECK(tape.value(out.output).rows() == 3);
    CHECK(tape.value(out.output).cols() == 4);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    ParamSet ps;
    ps.declare("w", 2, 2).fill(0.7);
    AdamOptimizer opt({0.1, 1.0, 0.9, 0.999, 1e-8});
    ps.zero_grads();
    opt.step(ps);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ps.value("w")[i] == 0.7);
}

TEST_CASE("adam: one step on f(w)=w^2 decreases |w|") {
    ParamSet ps;
    ps.declare("w", 1, 1).fill(1.0);
    AdamOptimizer opt({0.1, 1.0, 0.9, 0.999, 1e-8});
    Tape tape;
    auto w = tape.param(ps, "w");
    tape.backward(tape.sum_all(tape.mul(w, w)));
    opt.step(ps);
    CHECK(std::fabs(ps.value("w").item()) < 1.0);
    CHECK(ps.grad("w").item() == 0.0);
    CHECK(opt.steps() == 1);
}

TEST_CASE("adam: learning rate decays as lr0 * decay^k") {
    AdamOptimizer opt({0.05, 0.9, 0.9, 0.999, 1e-8});
    for (int k = 0; k <= 5; ++k) {
        CHECK(opt.current_lr() == 0.05 * std::pow(0.9, k));
        opt.advance_decay();
    }
}

TEST_CASE("determinism: same seed, same data, bit-identical parameters") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        ParamSet ps;
        Mlp net("n", {3, 16, 1}, Activation::Relu, Activation::Linear);
        net.init(ps, rng);
        AdamOptimizer opt({1e-2, 0.99, 0.9, 0.999, 1e-8});
        Rng data(substream_seed(seed, "data"));
        for (int step = 0; step < 25; ++step) {
            Tensor x(4, 3);
            for (auto& v : x.data()) v = data.uniform(-1.0, 1.0);
            Tape tape;
            auto out = net.forward(tape, tape.constant(x), ps);
            tape.backward(tape.mean_all(tape.mul(out, out)));
            opt.step(ps);
            if (step % 10 == 9) opt.advance_decay();
        }
        return ps;
    };
    ParamSet a = run(555);
    ParamSet b = run(555);
    bool identical = true;
    a.for_each([&](const std::string& path, Tensor& v, Tensor&) {
        const Tensor& other = b.value(path);
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] != other[i]) identical = false;
    });
    CHECK(identical);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    Rng rng(9);
    ParamSet ps;
    Mlp net("n", {2, 5, 3}, Activation::Tanh, Activation::Sigmoid);
    net.init(ps, rng);
    const std::string file = "test_nn_ckpt.txt";
    save_checkpoint(ps, file);
    ParamSet loaded;
    load_checkpoint(loaded, file);
    ps.for_each([&](const std::string& path, Tensor& v, Tensor&) {
        const Tensor& other = loaded.value(path);
        REQUIRE(other.same_shape(v));
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == other[i]);
    });
    std::remove(file.c_str());
    CHECK_THROWS_AS(load_checkpoint(ps, "does_not_exist.ckpt"), InputError);
}

TEST_CASE("soft update contracts the target gap by (1 - tau)") {
    Rng rng(10);
    ParamSet online, target;
    Mlp net("n", {2, 4, 1}, Activation::Relu, Activation::Linear);
    net.init(online, rng);
    net.init(target, rng);
    Rng rng2(11);
    target.for_each([&](const std::string&, Tensor& v, Tensor&) {
        for (auto& x : v.data()) x = rng2.uniform(-1.0, 1.0);
    });

    const double tau = 0.25;
    std::map<std::string, Tensor> before;
    target.for_each([&](const std::string& p, Tensor& v, Tensor&) { before.emplace(p, v); });
    target.soft_update_from(online, tau);
    target.for_each([&](const std::string& p, Tensor& v, Tensor&) {
        const Tensor& b = before.at(p);
        const Tensor& o = online.value(p);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double expected = (1.0 - tau) * (b[i] - o[i]);
            CHECK(std::fabs((v[i] - o[i]) - expected) < 1e-12);
        }
    });
}

TEST_CASE("soft update with tau = 1 copies online exactly") {
    Rng rng(13);
    ParamSet online, target;
    Mlp net("n", {2, 4, 1}, Activation::Relu, Activation::Linear);
    net.init(online, rng);
    net.init(target, rng);
    target.soft_update_from(online, 1.0);
    online.for_each([&](const std::string& p, Tensor& v, Tensor&) {
        const Tensor& t = target.value(p);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == t[i]);
    });
}
