#include "rtb/tape.hpp"

#include <cmath>

#include "rtb/errors.hpp"

namespace rtb::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;

// C += A * B
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data().data() + i * k;
        double* crow = c.data().data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data().data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A * B^T
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data().data() + i * k;
        double* crow = c.data().data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data().data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// C += A^T * B
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a.data().data() + p * m;
        const double* brow = b.data().data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c.data().data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tape::Id Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Tape::ensure_grad(Id id) {
    Node& n = node(id);
    if (n.grad.empty() && n.value.size() > 0)
        n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
}

Tape::Id Tape::constant(Tensor v) {
    Node n;
    n.value = std::move(v);
    n.op = Op::Constant;
    return push(n);
}

Tape::Id Tape::param(ParamsRef ps, const std::string& path) {
    Node n;
    n.value = ps.set().value(path);
    n.op = Op::Param;
    n.pset = ps.mutable_set();
    n.path = path;
    return push(n);
}

Tape::Id Tape::embed_rows(ParamsRef ps, const std::string& path,
                          const std::vector<std::uint32_t>& ids) {
    const Tensor& table = ps.set().value(path);
    Node n;
    n.value = Tensor(ids.size(), table.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= table.rows())
            throw ConfigError("embed_rows: id out of range for table " + path);
        for (std::size_t c = 0; c < table.cols(); ++c)
            n.value.at(r, c) = table.at(ids[r], c);
    }
    n.op = Op::Embed;
    n.pset = ps.mutable_set();
    n.path = path;
    n.ids = ids;
    return push(n);
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.cols() != tb.rows()) throw ConfigError("matmul: inner dimensions disagree");
    Node n;
    n.value = Tensor(ta.rows(), tb.cols());
    gemm_nn(ta, tb, n.value);
    n.op = Op::MatMul;
    n.parent = {a, b, -1};
    return push(n);
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ConfigError("add: shape mismatch");
    Node n;
    n.value = ta;
    for (std::size_t i = 0; i < tb.size(); ++i) n.value[i] += tb[i];
    n.op = Op::Add;
    n.parent = {a, b, -1};
    return push(n);
}

Tape::Id Tape::sub(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ConfigError("sub: shape mismatch");
    Node n;
    n.value = ta;
    for (std::size_t i = 0; i < tb.size(); ++i) n.value[i] -= tb[i];
    n.op = Op::Sub;
    n.parent = {a, b, -1};
    return push(n);
}

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ConfigError("mul: shape mismatch");
    Node n;
    n.value = ta;
    for (std::size_t i = 0; i < tb.size(); ++i) n.value[i] *= tb[i];
    n.op = Op::Mul;
    n.parent = {a, b, -1};
    return push(n);
}

Tape::Id Tape::add_rowvec(Id a, Id bias) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(bias);
    if (tb.rows() != 1 || tb.cols() != ta.cols())
        throw ConfigError("add_rowvec: bias must be 1 x cols");
    Node n;
    n.value = ta;
    for (std::size_t r = 0; r < ta.rows(); ++r)
        for (std::size_t c = 0; c < ta.cols(); ++c) n.value.at(r, c) += tb[c];
    n.op = Op::AddRowVec;
    n.parent = {a, bias, -1};
    return push(n);
}

Tape::Id Tape::scale(Id a, double c) {
    Node n;
    n.value = value(a);
    for (auto& v : n.value.data()) v *= c;
    n.op = Op::Scale;
    n.parent = {a, -1, -1};
    n.c0 = c;
    return push(n);
}

Tape::Id Tape::add_scalar(Id a, double c) {
    Node n;
    n.value = value(a);
    for (auto& v : n.value.data()) v += c;
    n.op = Op::AddScalar;
    n.parent = {a, -1, -1};
    n.c0 = c;
    return push(n);
}

Tape::Id Tape::relu(Id a) {
    Node n;
    n.value = value(a);
    for (auto& v : n.value.data()) v = v > 0.0 ? v : 0.0;
    n.op = Op::Relu;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::tanh(Id a) {
    Node n;
    n.value = value(a);
    for (auto& v : n.value.data()) v = std::tanh(v);
    n.op = Op::Tanh;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::sigmoid(Id a) {
    Node n;
    n.value = value(a);
    for (auto& v : n.value.data()) v = 1.0 / (1.0 + std::exp(-v));
    n.op = Op::Sigmoid;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::exp(Id a) {
    Node n;
    n.value = value(a);
    for (auto& v : n.value.data()) v = std::exp(v);
    n.op = Op::Exp;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::log(Id a) {
    Node n;
    n.value = value(a);
    for (auto& v : n.value.data()) v = std::log(v);
    n.op = Op::Log;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::clamp(Id a, double lo, double hi) {
    Node n;
    n.value = value(a);
    for (auto& v : n.value.data()) v = v < lo ? lo : (v > hi ? hi : v);
    n.op = Op::Clamp;
    n.parent = {a, -1, -1};
    n.c0 = lo;
    n.c1 = hi;
    return push(n);
}

Tape::Id Tape::clamp_max(Id a, double hi) {
    Node n;
    n.value = value(a);
    for (auto& v : n.value.data()) v = v > hi ? hi : v;
    n.op = Op::ClampMax;
    n.parent = {a, -1, -1};
    n.c1 = hi;
    return push(n);
}

Tape::Id Tape::softmax_rows(Id a) {
    const Tensor& ta = value(a);
    if (!ta.all_finite()) throw TrainError("softmax_rows: non-finite logits");
    Node n;
    n.value = ta;
    for (std::size_t r = 0; r < ta.rows(); ++r) {
        double mx = n.value.at(r, 0);
        for (std::size_t c = 1; c < ta.cols(); ++c) mx = std::max(mx, n.value.at(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < ta.cols(); ++c) {
            double e = std::exp(n.value.at(r, c) - mx);
            n.value.at(r, c) = e;
            sum += e;
        }
        for (std::size_t c = 0; c < ta.cols(); ++c) n.value.at(r, c) /= sum;
    }
    n.op = Op::SoftmaxRows;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::layer_norm_rows(Id a, Id gain, Id bias) {
    const Tensor& ta = value(a);
    const Tensor& tg = value(gain);
    const Tensor& tb = value(bias);
    if (tg.rows() != 1 || tg.cols() != ta.cols() || !tg.same_shape(tb))
        throw ConfigError("layer_norm_rows: gain/bias must be 1 x cols");
    Node n;
    n.value = Tensor(ta.rows(), ta.cols());
    const std::size_t cols = ta.cols();
    for (std::size_t r = 0; r < ta.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += ta.at(r, c);
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = ta.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t c = 0; c < cols; ++c)
            n.value.at(r, c) = (ta.at(r, c) - mean) * inv * tg[c] + tb[c];
    }
    n.op = Op::LayerNormRows;
    n.parent = {a, gain, bias};
    return push(n);
}

Tape::Id Tape::transpose(Id a) {
    const Tensor& ta = value(a);
    Node n;
    n.value = Tensor(ta.cols(), ta.rows());
    for (std::size_t r = 0; r < ta.rows(); ++r)
        for (std::size_t c = 0; c < ta.cols(); ++c) n.value.at(c, r) = ta.at(r, c);
    n.op = Op::Transpose;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::row_sums(Id a) {
    const Tensor& ta = value(a);
    Node n;
    n.value = Tensor(ta.rows(), 1);
    for (std::size_t r = 0; r < ta.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < ta.cols(); ++c) s += ta.at(r, c);
        n.value.at(r, 0) = s;
    }
    n.op = Op::RowSums;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::col_means(Id a) {
    const Tensor& ta = value(a);
    if (ta.rows() == 0) throw ConfigError("col_means: empty input");
    Node n;
    n.value = Tensor(1, ta.cols());
    for (std::size_t r = 0; r < ta.rows(); ++r)
        for (std::size_t c = 0; c < ta.cols(); ++c) n.value[c] += ta.at(r, c);
    for (std::size_t c = 0; c < ta.cols(); ++c) n.value[c] /= static_cast<double>(ta.rows());
    n.op = Op::ColMeans;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::sum_all(Id a) {
    const Tensor& ta = value(a);
    double s = 0.0;
    for (double v : ta.data()) s += v;
    Node n;
    n.value = Tensor::scalar(s);
    n.op = Op::SumAll;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::mean_all(Id a) {
    const Tensor& ta = value(a);
    if (ta.size() == 0) throw ConfigError("mean_all: empty input");
    double s = 0.0;
    for (double v : ta.data()) s += v;
    Node n;
    n.value = Tensor::scalar(s / static_cast<double>(ta.size()));
    n.op = Op::MeanAll;
    n.parent = {a, -1, -1};
    return push(n);
}

Tape::Id Tape::concat_cols(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rows() != tb.rows()) throw ConfigError("concat_cols: row counts disagree");
    Node n;
    n.value = Tensor(ta.rows(), ta.cols() + tb.cols());
    for (std::size_t r = 0; r < ta.rows(); ++r) {
        for (std::size_t c = 0; c < ta.cols(); ++c) n.value.at(r, c) = ta.at(r, c);
        for (std::size_t c = 0; c < tb.cols(); ++c) n.value.at(r, ta.cols() + c) = tb.at(r, c);
    }
    n.op = Op::ConcatCols;
    n.parent = {a, b, -1};
    n.n0 = ta.cols();
    return push(n);
}

Tape::Id Tape::tile_rows(Id a, std::size_t copies) {
    const Tensor& ta = value(a);
    if (ta.rows() != 1) throw ConfigError("tile_rows: input must be 1 x n");
    Node n;
    n.value = Tensor(copies, ta.cols());
    for (std::size_t r = 0; r < copies; ++r)
        for (std::size_t c = 0; c < ta.cols(); ++c) n.value.at(r, c) = ta[c];
    n.op = Op::TileRows;
    n.parent = {a, -1, -1};
    n.n0 = copies;
    return push(n);
}

Tape::Id Tape::repeat_rows(Id a, std::size_t times) {
    const Tensor& ta = value(a);
    Node n;
    n.value = Tensor(ta.rows() * times, ta.cols());
    for (std::size_t r = 0; r < ta.rows(); ++r)
        for (std::size_t t = 0; t < times; ++t)
            for (std::size_t c = 0; c < ta.cols(); ++c)
                n.value.at(r * times + t, c) = ta.at(r, c);
    n.op = Op::RepeatRows;
    n.parent = {a, -1, -1};
    n.n0 = times;
    return push(n);
}

Tape::Id Tape::block_sum_rows(Id a, std::size_t block) {
    const Tensor& ta = value(a);
    if (block == 0 || ta.rows() % block != 0)
        throw ConfigError("block_sum_rows: rows not divisible by block");
    const std::size_t groups = ta.rows() / block;
    Node n;
    n.value = Tensor(groups, ta.cols());
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t r = 0; r < block; ++r)
            for (std::size_t c = 0; c < ta.cols(); ++c)
                n.value.at(g, c) += ta.at(g * block + r, c);
    n.op = Op::BlockSumRows;
    n.parent = {a, -1, -1};
    n.n0 = block;
    return push(n);
}

void Tape::backward(Id loss) {
    if (consumed_)
        throw TrainError("backward: tape already consumed, rebuild the forward pass");
    Node& top = node(loss);
    if (top.value.size() != 1) throw ConfigError("backward: loss must be scalar");
    if (!std::isfinite(top.value[0])) throw TrainError("backward: loss is not finite");
    ensure_grad(loss)[0] += 1.0;
    for (Id i = loss; i >= 0; --i) {
        if (cnode(i).grad.empty()) continue;
        backward_node(i);
    }
    consumed_ = true;
}

void Tape::backward_node(Id id) {
    Node& n = node(id);
    const Tensor& g = n.grad;
    const auto pa = n.parent[0];
    const auto pb = n.parent[1];
    const auto pc = n.parent[2];
    switch (n.op) {
        case Op::Constant:
            break;
        case Op::Param:
            if (n.pset) n.pset->add_grad(n.path, g);
            break;
        case Op::Embed:
            if (n.pset) {
                Tensor& tg = n.pset->grad(n.path);
                for (std::size_t r = 0; r < n.ids.size(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c)
                        tg.at(n.ids[r], c) += g.at(r, c);
            }
            break;
        case Op::MatMul: {
            gemm_nt(g, cnode(pb).value, ensure_grad(pa));
            gemm_tn(cnode(pa).value, g, ensure_grad(pb));
            break;
        }
        case Op::Add: {
            Tensor& ga = ensure_grad(pa);
            Tensor& gb = ensure_grad(pb);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
            break;
        }
        case Op::Sub: {
            Tensor& ga = ensure_grad(pa);
            Tensor& gb = ensure_grad(pb);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
            }
            break;
        }
        case Op::Mul: {
            Tensor& ga = ensure_grad(pa);
            Tensor& gb = ensure_grad(pb);
            const Tensor& va = cnode(pa).value;
            const Tensor& vb = cnode(pb).value;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * vb[i];
                gb[i] += g[i] * va[i];
            }
            break;
        }
        case Op::AddRowVec: {
            Tensor& ga = ensure_grad(pa);
            Tensor& gb = ensure_grad(pb);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) {
                    ga.at(r, c) += g.at(r, c);
                    gb[c] += g.at(r, c);
                }
            break;
        }
        case Op::Scale: {
            Tensor& ga = ensure_grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.c0 * g[i];
            break;
        }
        case Op::AddScalar: {
            Tensor& ga = ensure_grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            break;
        }
        case Op::Relu: {
            Tensor& ga = ensure_grad(pa);
            const Tensor& va = cnode(pa).value;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (va[i] > 0.0) ga[i] += g[i];
            break;
        }
        case Op::Tanh: {
            Tensor& ga = ensure_grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
            break;
        }
        case Op::Sigmoid: {
            Tensor& ga = ensure_grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
            break;
        }
        case Op::Exp: {
            Tensor& ga = ensure_grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
            break;
        }
        case Op::Log: {
            Tensor& ga = ensure_grad(pa);
            const Tensor& va = cnode(pa).value;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
            break;
        }
        case Op::Clamp: {
            Tensor& ga = ensure_grad(pa);
            const Tensor& va = cnode(pa).value;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (va[i] >= n.c0 && va[i] <= n.c1) ga[i] += g[i];
            break;
        }
        case Op::ClampMax: {
            Tensor& ga = ensure_grad(pa);
            const Tensor& va = cnode(pa).value;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (va[i] <= n.c1) ga[i] += g[i];
            break;
        }
        case Op::SoftmaxRows: {
            Tensor& ga = ensure_grad(pa);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < g.cols(); ++c) dot += g.at(r, c) * n.value.at(r, c);
                for (std::size_t c = 0; c < g.cols(); ++c)
                    ga.at(r, c) += n.value.at(r, c) * (g.at(r, c) - dot);
            }
            break;
        }
        case Op::LayerNormRows: {
            Tensor& ga = ensure_grad(pa);
            Tensor& gg = ensure_grad(pb);
            Tensor& gb = ensure_grad(pc);
            const Tensor& x = cnode(pa).value;
            const Tensor& gain = cnode(pb).value;
            const std::size_t cols = x.cols();
            const double dn = static_cast<double>(cols);
            std::vector<double> xhat(cols), dxhat(cols);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                double mean = 0.0;
                for (std::size_t c = 0; c < cols; ++c) mean += x.at(r, c);
                mean /= dn;
                double var = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    const double d = x.at(r, c) - mean;
                    var += d * d;
                }
                var /= dn;
                const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    xhat[c] = (x.at(r, c) - mean) * inv;
                    dxhat[c] = g.at(r, c) * gain[c];
                    gg[c] += g.at(r, c) * xhat[c];
                    gb[c] += g.at(r, c);
                    m1 += dxhat[c];
                    m2 += dxhat[c] * xhat[c];
                }
                m1 /= dn;
                m2 /= dn;
                for (std::size_t c = 0; c < cols; ++c)
                    ga.at(r, c) += inv * (dxhat[c] - m1 - xhat[c] * m2);
            }
            break;
        }
        case Op::Transpose: {
            Tensor& ga = ensure_grad(pa);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) ga.at(c, r) += g.at(r, c);
            break;
        }
        case Op::RowSums: {
            Tensor& ga = ensure_grad(pa);
            for (std::size_t r = 0; r < ga.rows(); ++r)
                for (std::size_t c = 0; c < ga.cols(); ++c) ga.at(r, c) += g.at(r, 0);
            break;
        }
        case Op::ColMeans: {
            Tensor& ga = ensure_grad(pa);
            const double inv = 1.0 / static_cast<double>(ga.rows());
            for (std::size_t r = 0; r < ga.rows(); ++r)
                for (std::size_t c = 0; c < ga.cols(); ++c) ga.at(r, c) += g[c] * inv;
            break;
        }
        case Op::SumAll: {
            Tensor& ga = ensure_grad(pa);
            const double gv = g[0];
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
            break;
        }
        case Op::MeanAll: {
            Tensor& ga = ensure_grad(pa);
            const double gv = g[0] / static_cast<double>(ga.size());
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
            break;
        }
        case Op::ConcatCols: {
            Tensor& ga = ensure_grad(pa);
            Tensor& gb = ensure_grad(pb);
            const std::size_t split = n.n0;
            for (std::size_t r = 0; r < g.rows(); ++r) {
                for (std::size_t c = 0; c < split; ++c) ga.at(r, c) += g.at(r, c);
                for (std::size_t c = split; c < g.cols(); ++c) gb.at(r, c - split) += g.at(r, c);
            }
            break;
        }
        case Op::TileRows: {
            Tensor& ga = ensure_grad(pa);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) ga[c] += g.at(r, c);
            break;
        }
        case Op::RepeatRows: {
            Tensor& ga = ensure_grad(pa);
            const std::size_t times = n.n0;
            for (std::size_t r = 0; r < ga.rows(); ++r)
                for (std::size_t t = 0; t < times; ++t)
                    for (std::size_t c = 0; c < ga.cols(); ++c)
                        ga.at(r, c) += g.at(r * times + t, c);
            break;
        }
        case Op::BlockSumRows: {
            Tensor& ga = ensure_grad(pa);
            const std::size_t block = n.n0;
            for (std::size_t gr = 0; gr < g.rows(); ++gr)
                for (std::size_t r = 0; r < block; ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c)
                        ga.at(gr * block + r, c) += g.at(gr, c);
            break;
        }
    }
}

}  // namespace rtb::nn
