#include "itgpt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "itgpt/util.hpp"

namespace itgpt {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Input: return "input";
        case OpKind::MatMul: return "matmul";
        case OpKind::Transpose: return "transpose";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::AddRows: return "add_rows";
        case OpKind::Exp: return "exp";
        case OpKind::Ln1p: return "ln1p";
        case OpKind::Relu: return "relu";
        case OpKind::LogClamped: return "log_clamped";
        case OpKind::ReduceSum: return "reduce_sum";
        case OpKind::ReduceMean: return "reduce_mean";
        case OpKind::ReduceMax: return "reduce_max";
        case OpKind::SumAll: return "sum_all";
        case OpKind::MaskedSoftmax: return "masked_softmax";
        case OpKind::ConcatCols: return "concat_cols";
    }
    return "?";
}

namespace {

void check_finite(const Tensor& t, OpKind kind) {
    if (!t.all_finite()) {
        throw numeric_error(std::string("non-finite values produced by ") + op_name(kind));
    }
}

void require_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw std::invalid_argument("operands belong to different tapes");
}

// a*b with the scalar/equal-shape broadcast rule shared by add/sub/mul.
enum class Ew { Add, Sub, Mul };

double ew_apply(Ew op, double x, double y) {
    switch (op) {
        case Ew::Add: return x + y;
        case Ew::Sub: return x - y;
        case Ew::Mul: return x * y;
    }
    return 0;
}

Var binary_ew(OpKind kind, Ew op, Var a, Var b) {
    require_same_tape(a, b);
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    bool a_scalar = ta.numel() == 1;
    bool b_scalar = tb.numel() == 1;
    if (!ta.same_shape(tb) && !a_scalar && !b_scalar) {
        throw std::invalid_argument(std::string(op_name(kind)) + ": incompatible shapes " +
                                    ta.shape_str() + " vs " + tb.shape_str());
    }
    const Tensor& big = (ta.numel() >= tb.numel()) ? ta : tb;
    Tensor out(big.shape());
    size_t n = big.numel();
    for (size_t i = 0; i < n; ++i) {
        double x = a_scalar ? ta.data()[0] : ta.data()[i];
        double y = b_scalar ? tb.data()[0] : tb.data()[i];
        out.data()[i] = ew_apply(op, x, y);
    }
    check_finite(out, kind);
    Tape::Node node{kind, {a.id, b.id}, std::move(out), 0.0, -1, {}, nullptr};
    return Var{&tape, tape.emplace(std::move(node))};
}

Var unary(OpKind kind, Var a, double scalar, double (*fn)(double, double)) {
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    Tensor out(ta.shape());
    for (size_t i = 0; i < ta.numel(); ++i) out.data()[i] = fn(ta.data()[i], scalar);
    check_finite(out, kind);
    Tape::Node node{kind, {a.id}, std::move(out), scalar, -1, {}, nullptr};
    return Var{&tape, tape.emplace(std::move(node))};
}

}  // namespace

Var Tape::input(Tensor value) {
    check_finite(value, OpKind::Input);
    Node node{OpKind::Input, {}, std::move(value), 0.0, -1, {}, nullptr};
    return Var{this, emplace(std::move(node))};
}

int Tape::emplace(Node node) {
    for (int in : node.inputs) {
        if (in < 0 || in >= static_cast<int>(nodes_.size())) {
            throw std::logic_error("tape node references an id that does not precede it");
        }
    }
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Tape::value(Var v) const {
    if (v.tape != this) throw std::invalid_argument("Var does not belong to this tape");
    return nodes_[static_cast<size_t>(v.id)].value;
}

Tensor Tape::grad(Var v) const {
    if (v.tape != this) throw std::invalid_argument("Var does not belong to this tape");
    auto idx = static_cast<size_t>(v.id);
    if (idx < grad_set_.size() && grad_set_[idx]) return grads_[idx];
    return Tensor::zeros(nodes_[idx].value.shape());
}

Tensor& Tape::grad_slot(int id) {
    auto idx = static_cast<size_t>(id);
    if (!grad_set_[idx]) {
        grads_[idx] = Tensor::zeros(nodes_[idx].value.shape());
        grad_set_[idx] = 1;
    }
    return grads_[idx];
}

void Tape::backward(Var root) {
    if (root.tape != this) throw std::invalid_argument("backward root is not on this tape");
    const Tensor& rv = nodes_[static_cast<size_t>(root.id)].value;
    if (rv.numel() != 1) {
        throw std::invalid_argument("backward requires a scalar root, got shape " + rv.shape_str());
    }
    grads_.assign(nodes_.size(), Tensor());
    grad_set_.assign(nodes_.size(), 0);
    grad_slot(root.id).fill(1.0);
    for (int id = root.id; id >= 0; --id) {
        if (grad_set_[static_cast<size_t>(id)]) backward_node(id);
    }
}

void Tape::backward_node(int id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor& g = grads_[static_cast<size_t>(id)];
    switch (n.kind) {
        case OpKind::Input:
            break;
        case OpKind::MatMul: {
            const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
            const Tensor& b = nodes_[static_cast<size_t>(n.inputs[1])].value;
            int m = a.extent(0), k = a.extent(1), p = b.extent(1);
            Tensor& da = grad_slot(n.inputs[0]);
            Tensor& db = grad_slot(n.inputs[1]);
            // dA += dC * B^T
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < p; ++j) {
                    double gij = g.at(i, j);
                    if (gij == 0.0) continue;
                    const double* brow = b.data() + static_cast<size_t>(j);
                    double* darow = da.data() + static_cast<size_t>(i) * k;
                    for (int t = 0; t < k; ++t) darow[t] += gij * brow[static_cast<size_t>(t) * p];
                }
            }
            // dB += A^T * dC
            for (int i = 0; i < m; ++i) {
                const double* arow = a.data() + static_cast<size_t>(i) * k;
                const double* grow = g.data() + static_cast<size_t>(i) * p;
                for (int t = 0; t < k; ++t) {
                    double av = arow[t];
                    if (av == 0.0) continue;
                    double* dbrow = db.data() + static_cast<size_t>(t) * p;
                    for (int j = 0; j < p; ++j) dbrow[j] += av * grow[j];
                }
            }
            break;
        }
        case OpKind::Transpose: {
            const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
            Tensor& da = grad_slot(n.inputs[0]);
            int r = a.extent(0), c = a.extent(1);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) da.at(i, j) += g.at(j, i);
            break;
        }
        case OpKind::Add:
        case OpKind::Sub:
        case OpKind::Mul: {
            const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
            const Tensor& b = nodes_[static_cast<size_t>(n.inputs[1])].value;
            bool a_scalar = a.numel() == 1;
            bool b_scalar = b.numel() == 1;
            Tensor& da = grad_slot(n.inputs[0]);
            Tensor& db = grad_slot(n.inputs[1]);
            size_t cnt = g.numel();
            for (size_t i = 0; i < cnt; ++i) {
                double gi = g.data()[i];
                double xa = a_scalar ? a.data()[0] : a.data()[i];
                double xb = b_scalar ? b.data()[0] : b.data()[i];
                double ga = 0, gb = 0;
                if (n.kind == OpKind::Add) {
                    ga = gi;
                    gb = gi;
                } else if (n.kind == OpKind::Sub) {
                    ga = gi;
                    gb = -gi;
                } else {
                    ga = gi * xb;
                    gb = gi * xa;
                }
                da.data()[a_scalar ? 0 : i] += ga;
                db.data()[b_scalar ? 0 : i] += gb;
            }
            break;
        }
        case OpKind::Scale: {
            Tensor& da = grad_slot(n.inputs[0]);
            for (size_t i = 0; i < g.numel(); ++i) da.data()[i] += g.data()[i] * n.scalar;
            break;
        }
        case OpKind::AddRows: {
            const Tensor& mat = nodes_[static_cast<size_t>(n.inputs[0])].value;
            Tensor& dmat = grad_slot(n.inputs[0]);
            Tensor& drow = grad_slot(n.inputs[1]);
            int rows = mat.extent(0), cols = mat.extent(1);
            for (int i = 0; i < rows; ++i) {
                for (int j = 0; j < cols; ++j) {
                    double gij = g.at(i, j);
                    dmat.at(i, j) += gij;
                    drow.data()[j] += gij;
                }
            }
            break;
        }
        case OpKind::Exp: {
            Tensor& da = grad_slot(n.inputs[0]);
            for (size_t i = 0; i < g.numel(); ++i) da.data()[i] += g.data()[i] * n.value.data()[i];
            break;
        }
        case OpKind::Ln1p: {
            const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
            Tensor& da = grad_slot(n.inputs[0]);
            for (size_t i = 0; i < g.numel(); ++i) da.data()[i] += g.data()[i] / (1.0 + a.data()[i]);
            break;
        }
        case OpKind::Relu: {
            const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
            Tensor& da = grad_slot(n.inputs[0]);
            // subgradient at 0 is 0
            for (size_t i = 0; i < g.numel(); ++i) {
                if (a.data()[i] > 0.0) da.data()[i] += g.data()[i];
            }
            break;
        }
        case OpKind::LogClamped: {
            const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
            Tensor& da = grad_slot(n.inputs[0]);
            for (size_t i = 0; i < g.numel(); ++i) {
                if (a.data()[i] > n.scalar) da.data()[i] += g.data()[i] / a.data()[i];
            }
            break;
        }
        case OpKind::ReduceSum:
        case OpKind::ReduceMean: {
            const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
            Tensor& da = grad_slot(n.inputs[0]);
            int axis = n.axis;
            double inv = 1.0;
            if (n.kind == OpKind::ReduceMean) inv = 1.0 / a.extent(axis);
            if (a.rank() == 1) {
                for (int i = 0; i < a.extent(0); ++i) da.at(i) += g.data()[0] * inv;
            } else {
                int r = a.extent(0), c = a.extent(1);
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        da.at(i, j) += (axis == 0 ? g.at(j) : g.at(i)) * inv;
            }
            break;
        }
        case OpKind::ReduceMax: {
            Tensor& da = grad_slot(n.inputs[0]);
            const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
            if (a.rank() == 1) {
                da.at(n.argmax[0]) += g.data()[0];
            } else {
                int r = a.extent(0), c = a.extent(1);
                if (n.axis == 0) {
                    for (int j = 0; j < c; ++j) da.at(n.argmax[static_cast<size_t>(j)], j) += g.at(j);
                } else {
                    for (int i = 0; i < r; ++i) da.at(i, n.argmax[static_cast<size_t>(i)]) += g.at(i);
                }
            }
            break;
        }
        case OpKind::SumAll: {
            Tensor& da = grad_slot(n.inputs[0]);
            for (size_t i = 0; i < da.numel(); ++i) da.data()[i] += g.data()[0];
            break;
        }
        case OpKind::MaskedSoftmax: {
            const Tensor& w = n.value;
            Tensor& ds = grad_slot(n.inputs[0]);
            int rows = w.extent(0), cols = w.extent(1);
            const auto* mask = n.mask ? n.mask->data() : nullptr;
            for (int i = 0; i < rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < cols; ++j) dot += g.at(i, j) * w.at(i, j);
                for (int j = 0; j < cols; ++j) {
                    if (mask && !mask[static_cast<size_t>(i) * cols + j]) continue;
                    ds.at(i, j) += w.at(i, j) * (g.at(i, j) - dot);
                }
            }
            break;
        }
        case OpKind::ConcatCols: {
            int col = 0;
            int rows = n.value.extent(0);
            for (int in : n.inputs) {
                const Tensor& part = nodes_[static_cast<size_t>(in)].value;
                Tensor& dp = grad_slot(in);
                int pc = part.extent(1);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < pc; ++j) dp.at(i, j) += g.at(i, col + j);
                col += pc;
            }
            break;
        }
    }
}

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.extent(1) != tb.extent(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + ta.shape_str() + " and " +
                                    tb.shape_str());
    }
    int m = ta.extent(0), k = ta.extent(1), p = tb.extent(1);
    Tensor out({m, p});
    for (int i = 0; i < m; ++i) {
        const double* arow = ta.data() + static_cast<size_t>(i) * k;
        double* orow = out.data() + static_cast<size_t>(i) * p;
        for (int t = 0; t < k; ++t) {
            double av = arow[t];
            if (av == 0.0) continue;
            const double* brow = tb.data() + static_cast<size_t>(t) * p;
            for (int j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    }
    check_finite(out, OpKind::MatMul);
    Tape::Node node{OpKind::MatMul, {a.id, b.id}, std::move(out), 0.0, -1, {}, nullptr};
    return Var{&tape, tape.emplace(std::move(node))};
}

Var transpose(Var a) {
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    if (ta.rank() != 2) throw std::invalid_argument("transpose requires rank 2, got " + ta.shape_str());
    int r = ta.extent(0), c = ta.extent(1);
    Tensor out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = ta.at(i, j);
    Tape::Node node{OpKind::Transpose, {a.id}, std::move(out), 0.0, -1, {}, nullptr};
    return Var{&tape, tape.emplace(std::move(node))};
}

Var add(Var a, Var b) { return binary_ew(OpKind::Add, Ew::Add, a, b); }
Var sub(Var a, Var b) { return binary_ew(OpKind::Sub, Ew::Sub, a, b); }
Var mul(Var a, Var b) { return binary_ew(OpKind::Mul, Ew::Mul, a, b); }

Var scale(Var a, double c) {
    return unary(OpKind::Scale, a, c, [](double x, double s) { return x * s; });
}

Var add_rows(Var mat, Var row) {
    require_same_tape(mat, row);
    Tape& tape = *mat.tape;
    const Tensor& tm = tape.value(mat);
    const Tensor& tr = tape.value(row);
    if (tm.rank() != 2 || tr.rank() != 1 || tr.extent(0) != tm.extent(1)) {
        throw std::invalid_argument("add_rows: shapes " + tm.shape_str() + " and " + tr.shape_str());
    }
    Tensor out(tm.shape());
    int rows = tm.extent(0), cols = tm.extent(1);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out.at(i, j) = tm.at(i, j) + tr.at(j);
    check_finite(out, OpKind::AddRows);
    Tape::Node node{OpKind::AddRows, {mat.id, row.id}, std::move(out), 0.0, -1, {}, nullptr};
    return Var{&tape, tape.emplace(std::move(node))};
}

Var exp(Var a) {
    return unary(OpKind::Exp, a, 0.0, [](double x, double) { return std::exp(x); });
}

Var ln1p(Var a) {
    return unary(OpKind::Ln1p, a, 0.0, [](double x, double) { return std::log1p(x); });
}

Var relu(Var a) {
    return unary(OpKind::Relu, a, 0.0, [](double x, double) { return x > 0.0 ? x : 0.0; });
}

Var log_clamped(Var a, double floor) {
    return unary(OpKind::LogClamped, a, floor,
                 [](double x, double f) { return std::log(x > f ? x : f); });
}

namespace {

Var reduce(OpKind kind, Var a, int axis) {
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    if (axis < 0 || axis >= ta.rank()) {
        throw std::invalid_argument(std::string(op_name(kind)) + ": axis " + std::to_string(axis) +
                                    " out of range for " + ta.shape_str());
    }
    if (ta.extent(axis) == 0) {
        throw std::invalid_argument(std::string(op_name(kind)) + ": empty reduction over axis " +
                                    std::to_string(axis) + " of " + ta.shape_str());
    }
    Tensor out;
    std::vector<int> argmax;
    if (ta.rank() == 1) {
        double acc;
        if (kind == OpKind::ReduceMax) {
            int best = 0;
            for (int i = 1; i < ta.extent(0); ++i)
                if (ta.at(i) > ta.at(best)) best = i;
            acc = ta.at(best);
            argmax.push_back(best);
        } else {
            acc = 0;
            for (int i = 0; i < ta.extent(0); ++i) acc += ta.at(i);
            if (kind == OpKind::ReduceMean) acc /= ta.extent(0);
        }
        out = Tensor::scalar(acc);
    } else {
        int r = ta.extent(0), c = ta.extent(1);
        int outn = axis == 0 ? c : r;
        out = Tensor({outn});
        if (kind == OpKind::ReduceMax) argmax.assign(static_cast<size_t>(outn), 0);
        for (int o = 0; o < outn; ++o) {
            int n = axis == 0 ? r : c;
            auto get = [&](int i) { return axis == 0 ? ta.at(i, o) : ta.at(o, i); };
            if (kind == OpKind::ReduceMax) {
                int best = 0;
                for (int i = 1; i < n; ++i)
                    if (get(i) > get(best)) best = i;
                out.at(o) = get(best);
                argmax[static_cast<size_t>(o)] = best;
            } else {
                double acc = 0;
                for (int i = 0; i < n; ++i) acc += get(i);
                out.at(o) = kind == OpKind::ReduceMean ? acc / n : acc;
            }
        }
    }
    check_finite(out, kind);
    Tape::Node node{kind, {a.id}, std::move(out), 0.0, axis, std::move(argmax), nullptr};
    return Var{&tape, tape.emplace(std::move(node))};
}

}  // namespace

Var reduce_sum(Var a, int axis) { return reduce(OpKind::ReduceSum, a, axis); }
Var reduce_mean(Var a, int axis) { return reduce(OpKind::ReduceMean, a, axis); }
Var reduce_max(Var a, int axis) { return reduce(OpKind::ReduceMax, a, axis); }

Var sum_all(Var a) {
    Tape& tape = *a.tape;
    const Tensor& ta = tape.value(a);
    double acc = 0;
    for (size_t i = 0; i < ta.numel(); ++i) acc += ta.data()[i];
    Tensor out = Tensor::scalar(acc);
    check_finite(out, OpKind::SumAll);
    Tape::Node node{OpKind::SumAll, {a.id}, std::move(out), 0.0, -1, {}, nullptr};
    return Var{&tape, tape.emplace(std::move(node))};
}

Var masked_softmax_rows(Var scores, SoftmaxMask mask) {
    Tape& tape = *scores.tape;
    const Tensor& s = tape.value(scores);
    if (s.rank() != 2) {
        throw std::invalid_argument("masked_softmax_rows requires rank 2, got " + s.shape_str());
    }
    int rows = s.extent(0), cols = s.extent(1);
    if (mask && static_cast<int>(mask->size()) != rows * cols) {
        throw std::invalid_argument("masked_softmax_rows: mask size does not match scores");
    }
    const uint8_t* m = mask ? mask->data() : nullptr;
    Tensor out({rows, cols});
    for (int i = 0; i < rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < cols; ++j) {
            if (m && !m[static_cast<size_t>(i) * cols + j]) continue;
            mx = std::max(mx, s.at(i, j));
        }
        if (!std::isfinite(mx)) continue;  // fully masked row stays zero
        double denom = 0;
        for (int j = 0; j < cols; ++j) {
            if (m && !m[static_cast<size_t>(i) * cols + j]) continue;
            double e = std::exp(s.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < cols; ++j) {
            if (m && !m[static_cast<size_t>(i) * cols + j]) continue;
            out.at(i, j) /= denom;
        }
    }
    check_finite(out, OpKind::MaskedSoftmax);
    Tape::Node node{OpKind::MaskedSoftmax, {scores.id}, std::move(out), 0.0, -1, {}, std::move(mask)};
    return Var{&tape, tape.emplace(std::move(node))};
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    Tape& tape = *parts[0].tape;
    int rows = tape.value(parts[0]).extent(0);
    int cols = 0;
    for (const Var& p : parts) {
        require_same_tape(parts[0], p);
        const Tensor& t = tape.value(p);
        if (t.rank() != 2 || t.extent(0) != rows) {
            throw std::invalid_argument("concat_cols: row mismatch at part of shape " + t.shape_str());
        }
        cols += t.extent(1);
    }
    Tensor out({rows, cols});
    int at = 0;
    std::vector<int> ids;
    for (const Var& p : parts) {
        const Tensor& t = tape.value(p);
        int pc = t.extent(1);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pc; ++j) out.at(i, at + j) = t.at(i, j);
        at += pc;
        ids.push_back(p.id);
    }
    Tape::Node node{OpKind::ConcatCols, std::move(ids), std::move(out), 0.0, -1, {}, nullptr};
    return Var{&tape, tape.emplace(std::move(node))};
}

}  // namespace itgpt
