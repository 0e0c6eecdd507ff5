#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rtb/params.hpp"
#include "rtb/tensor.hpp"

namespace rtb::nn {

// Either a trainable parameter set or a frozen (read-only) one. Forward code
// is written once against this view; gradients flow back into the set only
// when it was passed in mutable.
class ParamsRef {
public:
    ParamsRef(ParamSet& ps) : mut_(&ps), ro_(&ps) {}          // NOLINT(runtime/explicit)
    ParamsRef(const ParamSet& ps) : ro_(&ps) {}               // NOLINT(runtime/explicit)

    const ParamSet& set() const { return *ro_; }
    ParamSet* mutable_set() const { return mut_; }

private:
    ParamSet* mut_ = nullptr;
    const ParamSet* ro_ = nullptr;
};

// Reverse-mode tape, rebuilt per forward pass. Nodes are appended in
// evaluation order, which is already a valid topological order, so backward
// is a single reverse sweep. A tape can be differentiated once; building a
// fresh tape per step is the intended usage.
class Tape {
public:
    using Id = std::int32_t;

    Id constant(Tensor v);
    Id param(ParamsRef ps, const std::string& path);
    // Gathers rows of an embedding table; ids must already be < table rows.
    Id embed_rows(ParamsRef ps, const std::string& path, const std::vector<std::uint32_t>& ids);

    Id matmul(Id a, Id b);
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id add_rowvec(Id a, Id bias);  // bias is 1 x n, broadcast over rows
    Id scale(Id a, double c);
    Id add_scalar(Id a, double c);
    Id relu(Id a);
    Id tanh(Id a);
    Id sigmoid(Id a);
    Id exp(Id a);
    Id log(Id a);
    Id clamp(Id a, double lo, double hi);  // zero subgradient outside [lo, hi]
    Id clamp_max(Id a, double hi);         // min(a, hi)
    Id softmax_rows(Id a);
    Id layer_norm_rows(Id a, Id gain, Id bias);
    Id transpose(Id a);
    Id row_sums(Id a);    // m x n -> m x 1
    Id col_means(Id a);   // m x n -> 1 x n
    Id sum_all(Id a);     // -> 1 x 1
    Id mean_all(Id a);    // -> 1 x 1
    Id concat_cols(Id a, Id b);
    Id tile_rows(Id a, std::size_t copies);      // 1 x n -> copies x n
    Id repeat_rows(Id a, std::size_t times);     // m x n -> m*times x n, row i repeated
    Id block_sum_rows(Id a, std::size_t block);  // g*block x n -> g x n, consecutive blocks summed

    const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    // Gradient of the last backward() w.r.t. any node (empty if unreached).
    const Tensor& grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Accumulates d(loss)/d(param) into every trainable ParamSet touched by
    // the forward pass. loss must be scalar and finite. Throws TrainError on
    // a second call without rebuilding the tape.
    void backward(Id loss);

private:
    enum class Op : std::uint8_t {
        Constant, Param, Embed,
        MatMul, Add, Sub, Mul, AddRowVec, Scale, AddScalar,
        Relu, Tanh, Sigmoid, Exp, Log, Clamp, ClampMax,
        SoftmaxRows, LayerNormRows, Transpose,
        RowSums, ColMeans, SumAll, MeanAll,
        ConcatCols, TileRows, RepeatRows, BlockSumRows,
    };

    struct Node {
        Tensor value;
        Tensor grad;
        std::array<Id, 3> parent{-1, -1, -1};
        Op op = Op::Constant;
        double c0 = 0.0, c1 = 0.0;
        std::size_t n0 = 0;
        ParamSet* pset = nullptr;
        std::string path;
        std::vector<std::uint32_t> ids;
    };

    Id push(Node n);
    Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& cnode(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }
    Tensor& ensure_grad(Id id);
    void backward_node(Id id);

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace rtb::nn
