#include "angio/autodiff.hpp"

#include <cmath>

namespace angio::ad {

Value Tape::leaf(MatX value, bool needs_grad) {
    Node n;
    n.val = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Value{int(nodes_.size()) - 1};
}

Value Tape::constant_scalar(double v) {
    MatX m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

double Tape::scalar(Value v) const {
    const MatX& m = val(v);
    if (m.rows() != 1 || m.cols() != 1) throw InvalidInput("Tape::scalar: value is not 1x1");
    return m(0, 0);
}

const MatX& Tape::grad(Value v) const {
    const Node& n = nodes_[check(v)];
    if (n.grad.size() == 0)
        throw InvalidInput("Tape::grad: no gradient recorded (run backward first)");
    return n.grad;
}

MatX* Tape::grad_sink(Value v) {
    Node& n = nodes_[check(v)];
    if (!n.needs_grad) return nullptr;
    if (n.grad.size() == 0) n.grad = MatX::Zero(n.val.rows(), n.val.cols());
    return &n.grad;
}

namespace {
bool any_needs(const Tape& t, std::initializer_list<Value> vs) {
    for (Value v : vs)
        if (t.needs_grad(v)) return true;
    return false;
}
} // namespace

Value Tape::add(Value a, Value b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
        throw InvalidInput("Tape::add: shape mismatch");
    MatX out = val(a) + val(b);
    return custom(std::move(out), any_needs(*this, {a, b}), [a, b](Tape& t, int self) {
        const MatX& g = t.grad(Value{self});
        if (auto* ga = t.grad_sink(a)) *ga += g;
        if (auto* gb = t.grad_sink(b)) *gb += g;
    });
}

Value Tape::sub(Value a, Value b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
        throw InvalidInput("Tape::sub: shape mismatch");
    MatX out = val(a) - val(b);
    return custom(std::move(out), any_needs(*this, {a, b}), [a, b](Tape& t, int self) {
        const MatX& g = t.grad(Value{self});
        if (auto* ga = t.grad_sink(a)) *ga += g;
        if (auto* gb = t.grad_sink(b)) *gb -= g;
    });
}

Value Tape::mul(Value a, Value b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
        throw InvalidInput("Tape::mul: shape mismatch");
    MatX out = val(a).cwiseProduct(val(b));
    return custom(std::move(out), any_needs(*this, {a, b}), [a, b](Tape& t, int self) {
        const MatX& g = t.grad(Value{self});
        if (auto* ga = t.grad_sink(a)) *ga += g.cwiseProduct(t.val(b));
        if (auto* gb = t.grad_sink(b)) *gb += g.cwiseProduct(t.val(a));
    });
}

Value Tape::scale(Value a, double s) {
    MatX out = s * val(a);
    return custom(std::move(out), needs_grad(a), [a, s](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a)) *ga += s * t.grad(Value{self});
    });
}

Value Tape::add_scalar(Value a, double s) {
    MatX out = val(a).array() + s;
    return custom(std::move(out), needs_grad(a), [a](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a)) *ga += t.grad(Value{self});
    });
}

Value Tape::add_broadcast_row(Value a, const Eigen::RowVector3d& row) {
    if (val(a).cols() != 3) throw InvalidInput("add_broadcast_row: expected 3 columns");
    MatX out = val(a).rowwise() + row;
    return custom(std::move(out), needs_grad(a), [a](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a)) *ga += t.grad(Value{self});
    });
}

Value Tape::relu(Value a) {
    MatX out = val(a).cwiseMax(0.0);
    return custom(std::move(out), needs_grad(a), [a](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a))
            *ga += t.grad(Value{self})
                       .cwiseProduct((t.val(a).array() > 0.0).cast<double>().matrix());
    });
}

Value Tape::sigmoid(Value a) {
    MatX out = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
    return custom(std::move(out), needs_grad(a), [a](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a)) {
            const MatX& y = t.val(Value{self});
            *ga += t.grad(Value{self})
                       .cwiseProduct((y.array() * (1.0 - y.array())).matrix());
        }
    });
}

Value Tape::abs(Value a) {
    MatX out = val(a).cwiseAbs();
    return custom(std::move(out), needs_grad(a), [a](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a))
            *ga += t.grad(Value{self}).cwiseProduct(t.val(a).array().sign().matrix());
    });
}

Value Tape::sqrt_ew(Value a) {
    MatX out = val(a).cwiseSqrt();
    return custom(std::move(out), needs_grad(a), [a](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a)) {
            const MatX& y = t.val(Value{self});
            *ga += t.grad(Value{self}).cwiseQuotient(
                (2.0 * y.array()).cwiseMax(1e-300).matrix());
        }
    });
}

Value Tape::matmul(Value a, Value b) {
    if (val(a).cols() != val(b).rows()) throw InvalidInput("Tape::matmul: inner dim mismatch");
    MatX out = val(a) * val(b);
    return custom(std::move(out), any_needs(*this, {a, b}), [a, b](Tape& t, int self) {
        const MatX& g = t.grad(Value{self});
        if (auto* ga = t.grad_sink(a)) ga->noalias() += g * t.val(b).transpose();
        if (auto* gb = t.grad_sink(b)) gb->noalias() += t.val(a).transpose() * g;
    });
}

Value Tape::spmm(const SpMat& s, Value x) {
    if (s.cols() != val(x).rows()) throw InvalidInput("Tape::spmm: inner dim mismatch");
    MatX out = s * val(x);
    SpMat st = s.transpose();
    return custom(std::move(out), needs_grad(x), [x, st](Tape& t, int self) {
        if (auto* gx = t.grad_sink(x)) gx->noalias() += st * t.grad(Value{self});
    });
}

Value Tape::sum(Value a) {
    MatX out(1, 1);
    out(0, 0) = val(a).sum();
    return custom(std::move(out), needs_grad(a), [a](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a))
            ga->array() += t.grad(Value{self})(0, 0);
    });
}

Value Tape::mean(Value a) {
    const double n = double(val(a).size());
    MatX out(1, 1);
    out(0, 0) = val(a).sum() / n;
    return custom(std::move(out), needs_grad(a), [a, n](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a)) ga->array() += t.grad(Value{self})(0, 0) / n;
    });
}

Value Tape::norm_l2(Value a) {
    MatX out(1, 1);
    out(0, 0) = val(a).norm();
    return custom(std::move(out), needs_grad(a), [a](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a)) {
            const double y = t.val(Value{self})(0, 0);
            if (y > 0) *ga += (t.grad(Value{self})(0, 0) / y) * t.val(a);
        }
    });
}

Value Tape::gather_rows(Value a, std::vector<int> idx) {
    const MatX& x = val(a);
    MatX out(long(idx.size()), x.cols());
    for (size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= x.rows()) throw InvalidInput("gather_rows: index out of range");
        out.row(long(k)) = x.row(idx[k]);
    }
    return custom(std::move(out), needs_grad(a),
                  [a, idx = std::move(idx)](Tape& t, int self) {
                      if (auto* ga = t.grad_sink(a)) {
                          const MatX& g = t.grad(Value{self});
                          for (size_t k = 0; k < idx.size(); ++k)
                              ga->row(idx[k]) += g.row(long(k));
                      }
                  });
}

Value Tape::cross_rows(Value a, Value b) {
    const MatX& av = val(a);
    const MatX& bv = val(b);
    if (av.cols() != 3 || bv.cols() != 3 || av.rows() != bv.rows())
        throw InvalidInput("cross_rows: expected equal n x 3");
    MatX out(av.rows(), 3);
    for (long i = 0; i < av.rows(); ++i)
        out.row(i) = Vec3(av.row(i)).cross(Vec3(bv.row(i))).transpose();
    return custom(std::move(out), any_needs(*this, {a, b}), [a, b](Tape& t, int self) {
        const MatX& g = t.grad(Value{self});
        MatX* ga = t.grad_sink(a);
        MatX* gb = t.grad_sink(b);
        for (long i = 0; i < g.rows(); ++i) {
            const Vec3 gi = g.row(i).transpose();
            if (ga) ga->row(i) += Vec3(t.val(b).row(i)).cross(gi).transpose();
            if (gb) gb->row(i) += gi.cross(Vec3(t.val(a).row(i))).transpose();
        }
    });
}

Value Tape::normalize_rows(Value a) {
    const MatX& x = val(a);
    MatX out(x.rows(), x.cols());
    for (long i = 0; i < x.rows(); ++i) {
        const double n = x.row(i).norm();
        if (n < 1e-300) throw NumericalError("normalize_rows: zero-length row");
        out.row(i) = x.row(i) / n;
    }
    return custom(std::move(out), needs_grad(a), [a](Tape& t, int self) {
        if (auto* ga = t.grad_sink(a)) {
            const MatX& g = t.grad(Value{self});
            const MatX& y = t.val(Value{self});
            const MatX& x = t.val(a);
            for (long i = 0; i < g.rows(); ++i) {
                const double n = x.row(i).norm();
                const double gy = g.row(i).dot(y.row(i));
                ga->row(i) += (g.row(i) - gy * y.row(i)) / n;
            }
        }
    });
}

Value Tape::rows_dot(Value a, Value b) {
    const MatX& av = val(a);
    const MatX& bv = val(b);
    if (av.rows() != bv.rows() || av.cols() != bv.cols())
        throw InvalidInput("rows_dot: shape mismatch");
    MatX out(av.rows(), 1);
    for (long i = 0; i < av.rows(); ++i) out(i, 0) = av.row(i).dot(bv.row(i));
    return custom(std::move(out), any_needs(*this, {a, b}), [a, b](Tape& t, int self) {
        const MatX& g = t.grad(Value{self});
        if (auto* ga = t.grad_sink(a))
            *ga += g.col(0).asDiagonal() * t.val(b);
        if (auto* gb = t.grad_sink(b))
            *gb += g.col(0).asDiagonal() * t.val(a);
    });
}

Value Tape::custom(MatX value, bool needs_grad, std::function<void(Tape&, int)> backward) {
    Node n;
    n.val = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Value{int(nodes_.size()) - 1};
}

void Tape::backward(Value output) {
    const int out = check(output);
    if (nodes_[out].val.rows() != 1 || nodes_[out].val.cols() != 1)
        throw InvalidInput("Tape::backward: output must be scalar");
    if (!nodes_[out].needs_grad)
        throw InvalidInput("Tape::backward: output does not depend on any parameter");
    nodes_[out].grad = MatX::Ones(1, 1);
    for (int i = out; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
        n.backward(*this, i);
    }
}

void Tape::check_finite(Value v, const std::string& what) const {
    if (!val(v).allFinite())
        throw NumericalError("non-finite values in " + what);
}

SpMat normalized_adjacency(int n, const std::vector<std::array<int, 2>>& edges) {
    VecX deg = VecX::Ones(n); // self-loops
    for (const auto& e : edges) {
        deg[e[0]] += 1.0;
        deg[e[1]] += 1.0;
    }
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(edges.size() * 2 + n);
    auto w = [&](int i, int j) { return 1.0 / std::sqrt(deg[i] * deg[j]); };
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, w(i, i));
    for (const auto& e : edges) {
        trips.emplace_back(e[0], e[1], w(e[0], e[1]));
        trips.emplace_back(e[1], e[0], w(e[1], e[0]));
    }
    SpMat s(n, n);
    s.setFromTriplets(trips.begin(), trips.end());
    s.makeCompressed();
    return s;
}

SpMat neighbor_average(int n, const std::vector<std::array<int, 2>>& edges) {
    VecX deg = VecX::Zero(n);
    for (const auto& e : edges) {
        deg[e[0]] += 1.0;
        deg[e[1]] += 1.0;
    }
    for (int i = 0; i < n; ++i)
        if (deg[i] == 0) throw InvalidInput("neighbor_average: isolated vertex");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(edges.size() * 2);
    for (const auto& e : edges) {
        trips.emplace_back(e[0], e[1], 1.0 / deg[e[0]]);
        trips.emplace_back(e[1], e[0], 1.0 / deg[e[1]]);
    }
    SpMat s(n, n);
    s.setFromTriplets(trips.begin(), trips.end());
    s.makeCompressed();
    return s;
}

} // namespace angio::ad
