#pragma once

#include "angio/common.hpp"

#include <Eigen/SparseCore>

#include <functional>
#include <string>

namespace angio::ad {

using SpMat = Eigen::SparseMatrix<double>;

struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense-matrix values (scalars are 1x1). Nodes are
/// recorded in topological order by construction; backward visits each node
/// exactly once in reverse. One tape per training step, single owner.
class Tape {
public:
    struct Node {
        MatX val;
        MatX grad; // lazily allocated
        bool needs_grad = false;
        std::function<void(Tape&, int)> backward; // accumulate into input grads
    };

    Value leaf(MatX value, bool needs_grad = true);
    Value constant(MatX value) { return leaf(std::move(value), false); }
    Value constant_scalar(double v);

    const MatX& val(Value v) const { return nodes_[check(v)].val; }
    double scalar(Value v) const;
    const MatX& grad(Value v) const;
    bool needs_grad(Value v) const { return nodes_[check(v)].needs_grad; }

    /// Accumulation target for v, or nullptr when v does not need gradients.
    MatX* grad_sink(Value v);

    // ---- elementwise / structural primitives ----
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value scale(Value a, double s);
    Value add_scalar(Value a, double s);
    Value add_broadcast_row(Value a, const Eigen::RowVector3d& row);
    Value relu(Value a);
    Value sigmoid(Value a);
    Value abs(Value a);
    Value sqrt_ew(Value a);

    // ---- linear algebra ----
    Value matmul(Value a, Value b);
    Value spmm(const SpMat& s, Value x); // sparse constant times dense value

    // ---- reductions ----
    Value sum(Value a);
    Value mean(Value a);
    Value norm_l2(Value a); // Frobenius norm, scalar

    // ---- rows ----
    Value gather_rows(Value a, std::vector<int> idx);
    Value cross_rows(Value a, Value b);     // per-row 3D cross product
    Value normalize_rows(Value a);          // rows scaled to unit length
    Value rows_dot(Value a, Value b);       // n x 1 of per-row dots

    /// Fused operation with a hand-written backward. The callback receives
    /// the tape and the node id of the result; input ids must be captured.
    Value custom(MatX value, bool needs_grad, std::function<void(Tape&, int)> backward);

    /// Reverse sweep from a scalar output. Throws InvalidInput otherwise.
    void backward(Value output);

    void check_finite(Value v, const std::string& what) const;

    size_t size() const { return nodes_.size(); }

private:
    int check(Value v) const {
        if (!v.valid() || v.id >= int(nodes_.size()))
            throw InvalidInput("Tape: invalid value handle");
        return v.id;
    }
    std::vector<Node> nodes_;
};

/// Normalized adjacency with self-loops: D^-1/2 (A + I) D^-1/2, symmetric.
SpMat normalized_adjacency(int n, const std::vector<std::array<int, 2>>& edges);

/// Uniform neighbor-average operator: row i holds 1/deg(i) per neighbor.
SpMat neighbor_average(int n, const std::vector<std::array<int, 2>>& edges);

} // namespace angio::ad
