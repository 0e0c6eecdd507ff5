#include "rtb/layers.hpp"

#include <cmath>

#include "rtb/errors.hpp"

namespace rtb::nn {

namespace {

Tape::Id apply_activation(Tape& tape, Tape::Id x, Activation act) {
    switch (act) {
        case Activation::Linear: return x;
        case Activation::Relu: return tape.relu(x);
        case Activation::Tanh: return tape.tanh(x);
        case Activation::Sigmoid: return tape.sigmoid(x);
    }
    throw ConfigError("unknown activation");
}

}  // namespace

void init_dense(ParamSet& params, const DenseSpec& spec, Rng& rng) {
    if (spec.in == 0 || spec.out == 0)
        throw ConfigError("dense " + spec.prefix + ": zero width");
    if (!params.contains(spec.prefix + "/W")) {
        Tensor& w = params.declare(spec.prefix + "/W", spec.in, spec.out);
        xavier_init(w, spec.in, spec.out, rng);
    }
    params.declare(spec.prefix + "/b", 1, spec.out);
}

Tape::Id forward_dense(Tape& tape, Tape::Id input, ParamsRef params, const DenseSpec& spec) {
    if (tape.value(input).cols() != spec.in)
        throw ConfigError("dense " + spec.prefix + ": input width " +
                          std::to_string(tape.value(input).cols()) + ", expected " +
                          std::to_string(spec.in));
    auto w = tape.param(params, spec.prefix + "/W");
    auto b = tape.param(params, spec.prefix + "/b");
    auto z = tape.add_rowvec(tape.matmul(input, w), b);
    return apply_activation(tape, z, spec.act);
}

void init_attention(ParamSet& params, const AttentionSpec& spec, Rng& rng) {
    if (spec.width == 0 || spec.ffn_width == 0)
        throw ConfigError("attention " + spec.prefix + ": zero width");
    const std::size_t d = spec.width;
    for (const char* name : {"/wq", "/wk", "/wv", "/wo"}) {
        if (!params.contains(spec.prefix + name)) {
            Tensor& w = params.declare(spec.prefix + name, d, d);
            xavier_init(w, d, d, rng);
        }
    }
    params.declare(spec.prefix + "/ln1/g", 1, d).fill(1.0);
    params.declare(spec.prefix + "/ln1/b", 1, d);
    params.declare(spec.prefix + "/ln2/g", 1, d).fill(1.0);
    params.declare(spec.prefix + "/ln2/b", 1, d);
    init_dense(params, {spec.prefix + "/ffn/l0", d, spec.ffn_width, Activation::Relu}, rng);
    init_dense(params, {spec.prefix + "/ffn/l1", spec.ffn_width, d, Activation::Linear}, rng);
}

AttentionOut forward_attention(Tape& tape, Tape::Id input, ParamsRef params,
                               const AttentionSpec& spec) {
    const Tensor& x = tape.value(input);
    if (x.cols() != spec.width)
        throw ConfigError("attention " + spec.prefix + ": input width " +
                          std::to_string(x.cols()) + ", expected " + std::to_string(spec.width));

    auto wq = tape.param(params, spec.prefix + "/wq");
    auto wk = tape.param(params, spec.prefix + "/wk");
    auto wv = tape.param(params, spec.prefix + "/wv");
    auto wo = tape.param(params, spec.prefix + "/wo");

    auto q = tape.matmul(input, wq);
    auto k = tape.matmul(input, wk);
    auto v = tape.matmul(input, wv);
    auto scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                             1.0 / std::sqrt(static_cast<double>(spec.width)));
    Tape::Id attn;
    try {
        attn = tape.softmax_rows(scores);
    } catch (const TrainError& e) {
        throw TrainError(spec.prefix + ": " + e.what());
    }
    auto ctx = tape.matmul(tape.matmul(attn, v), wo);

    auto h = tape.layer_norm_rows(tape.add(input, ctx),
                                  tape.param(params, spec.prefix + "/ln1/g"),
                                  tape.param(params, spec.prefix + "/ln1/b"));
    auto f = forward_dense(tape, h, params,
                           {spec.prefix + "/ffn/l0", spec.width, spec.ffn_width, Activation::Relu});
    f = forward_dense(tape, f, params,
                      {spec.prefix + "/ffn/l1", spec.ffn_width, spec.width, Activation::Linear});
    auto out = tape.layer_norm_rows(tape.add(h, f),
                                    tape.param(params, spec.prefix + "/ln2/g"),
                                    tape.param(params, spec.prefix + "/ln2/b"));
    return {out, attn};
}

Mlp::Mlp(std::string prefix, std::vector<std::size_t> dims, Activation hidden, Activation head) {
    if (dims.size() < 2) throw ConfigError("Mlp: need at least in/out widths");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseSpec spec;
        spec.prefix = prefix + "/l" + std::to_string(i);
        spec.in = dims[i];
        spec.out = dims[i + 1];
        spec.act = (i + 2 == dims.size()) ? head : hidden;
        layers_.push_back(std::move(spec));
    }
}

void Mlp::init(ParamSet& params, Rng& rng) const {
    for (const auto& spec : layers_) init_dense(params, spec, rng);
}

Tape::Id Mlp::forward(Tape& tape, Tape::Id input, ParamsRef params) const {
    Tape::Id x = input;
    for (const auto& spec : layers_) x = forward_dense(tape, x, params, spec);
    return x;
}

}  // namespace rtb::nn
