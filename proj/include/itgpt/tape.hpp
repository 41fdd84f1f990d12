#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <vector>

#include "itgpt/tensor.hpp"

namespace itgpt {

class Tape;

// Handle to a node on a tape. Cheap to copy; operations on Vars append nodes.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
};

enum class OpKind : uint8_t {
    Input,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale,
    AddRows,
    Exp,
    Ln1p,
    Relu,
    LogClamped,
    ReduceSum,
    ReduceMean,
    ReduceMax,
    SumAll,
    MaskedSoftmax,
    ConcatCols,
};

const char* op_name(OpKind k);

// Row-major boolean mask for MaskedSoftmax; shared so oracle comparisons can
// reuse it without copies.
using SoftmaxMask = std::shared_ptr<const std::vector<uint8_t>>;

// Reverse-mode tape over dense tensors. Nodes are appended in topological
// order by construction: every input id is strictly smaller than the node's
// own id. backward() walks ids in strictly decreasing order exactly once.
class Tape {
public:
    Var input(Tensor value);

    const Tensor& value(Var v) const;
    // Gradient of the last backward() root w.r.t. node v; zeros if the node
    // does not influence the root.
    Tensor grad(Var v) const;

    void backward(Var root);

    size_t size() const { return nodes_.size(); }

    struct Node {
        OpKind kind;
        std::vector<int> inputs;
        Tensor value;
        double scalar = 0.0;        // Scale factor / LogClamped floor
        int axis = -1;              // reductions
        std::vector<int> argmax;    // ReduceMax routing
        SoftmaxMask mask;           // MaskedSoftmax
    };

    int emplace(Node node);
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

private:
    // deque, not vector: value() hands out references that must survive
    // later node appends
    std::deque<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<uint8_t> grad_set_;

    Tensor& grad_slot(int id);
    void backward_node(int id);
};

// Graph-building operations. All of them validate shapes and check the
// forward result for NaN/Inf (numeric_error), per the engine contract.
Var matmul(Var a, Var b);
Var transpose(Var a);

// add/sub/mul broadcast only scalar-with-tensor or equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

Var scale(Var a, double c);
Var add_rows(Var mat, Var row);  // mat[L x d] + row[d] broadcast over rows

Var exp(Var a);
Var ln1p(Var a);
Var relu(Var a);
Var log_clamped(Var a, double floor = 1e-12);

Var reduce_sum(Var a, int axis);
Var reduce_mean(Var a, int axis);
Var reduce_max(Var a, int axis);
Var sum_all(Var a);

// Row-wise softmax over unmasked entries with max-shift stabilization.
// Masked entries get weight exactly 0; rows with no unmasked entry are all
// zero. mask == nullptr means everything is unmasked.
Var masked_softmax_rows(Var scores, SoftmaxMask mask);

Var concat_cols(std::span<const Var> parts);

inline Var affine(Var x, Var w, Var b) { return add_rows(matmul(x, w), b); }

}  // namespace itgpt
