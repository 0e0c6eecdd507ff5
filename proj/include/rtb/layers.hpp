#pragma once

#include <string>
#include <vector>

#include "rtb/tape.hpp"

namespace rtb::nn {

enum class Activation { Linear, Relu, Tanh, Sigmoid };

struct DenseSpec {
    std::string prefix;  // parameter path prefix, e.g. "actor/l0"
    std::size_t in = 0;
    std::size_t out = 0;
    Activation act = Activation::Linear;
};

// Declares W [in x out] (Xavier-uniform) and b [1 x out] (zeros) if absent.
void init_dense(ParamSet& params, const DenseSpec& spec, Rng& rng);

// activation(input * W + b). Throws ConfigError on fan-in mismatch.
Tape::Id forward_dense(Tape& tape, Tape::Id input, ParamsRef params, const DenseSpec& spec);

// One encoder stack: single-head self-attention, then position-wise
// feed-forward, each wrapped in residual + layer norm (post-norm).
struct AttentionSpec {
    std::string prefix;
    std::size_t width = 0;      // model width d
    std::size_t ffn_width = 0;  // inner width of the position-wise FFN
};

struct AttentionOut {
    Tape::Id output;   // tokens x d
    Tape::Id weights;  // tokens x tokens, rows are probability vectors
};

void init_attention(ParamSet& params, const AttentionSpec& spec, Rng& rng);
AttentionOut forward_attention(Tape& tape, Tape::Id input, ParamsRef params,
                               const AttentionSpec& spec);

// Plain feed-forward stack, the workhorse for actor and critic networks.
class Mlp {
public:
    Mlp() = default;
    // dims = {in, h1, ..., out}
    Mlp(std::string prefix, std::vector<std::size_t> dims, Activation hidden, Activation head);

    void init(ParamSet& params, Rng& rng) const;
    Tape::Id forward(Tape& tape, Tape::Id input, ParamsRef params) const;
    std::size_t input_width() const { return layers_.empty() ? 0 : layers_.front().in; }

private:
    std::vector<DenseSpec> layers_;
};

}  // namespace rtb::nn
