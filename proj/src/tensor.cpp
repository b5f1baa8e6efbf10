#include "metawalk/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace metawalk {

namespace {

int64_t product(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                                " vs " + shape_str(b));
}

void check_same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
        throw std::invalid_argument(std::string(op) + ": operands from different tapes");
}

}  // namespace

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.v.assign(static_cast<size_t>(product(t.shape)), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t;
    t.shape = std::move(shape);
    t.v.assign(static_cast<size_t>(product(t.shape)), value);
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t;
    t.v.assign(1, value);
    return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> values) {
    Tensor t;
    t.shape = std::move(shape);
    t.v = std::move(values);
    if (static_cast<int64_t>(t.v.size()) != product(t.shape))
        throw std::invalid_argument("Tensor::from: " + shape_str(t.shape) + " needs " +
                                    std::to_string(product(t.shape)) + " values, got " +
                                    std::to_string(t.v.size()));
    return t;
}

Tensor Tensor::uniform(std::vector<int64_t> shape, double lo, double hi, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(v.size()); }

double Tensor::item() const {
    if (v.size() != 1)
        throw std::invalid_argument("Tensor::item: tensor of shape " + shape_str(*this) +
                                    " is not a scalar");
    return v[0];
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::string s = "{";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "}";
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape); }

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.needs_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
    return nodes_.at(static_cast<size_t>(v.id)).value;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_.at(static_cast<size_t>(v.id));
    if (n.grad.v.empty()) return Tensor::zeros(n.value.shape);
    return n.grad;
}

void Tape::rewind(size_t mark) {
    if (mark > nodes_.size()) throw std::invalid_argument("Tape::rewind: mark beyond tape end");
    nodes_.resize(mark);
}

Tensor& Tape::grad_of(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

Var Tape::record_unary(Var x, Op op, Tensor out) {
    Node n;
    n.op = op;
    n.a = x.id;
    n.needs_grad = x.tape->requires_grad(x);
    n.value = std::move(out);
    return x.tape->push(std::move(n));
}

Var Tape::record_binary(Var a, Var b, Op op, Tensor out) {
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = a.tape->requires_grad(a) || b.tape->requires_grad(b);
    n.value = std::move(out);
    return a.tape->push(std::move(n));
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss from another tape");
    const Node& ln = nodes_.at(static_cast<size_t>(loss.id));
    if (ln.value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(ln.value));
    grad_of(loss.id).v[0] += 1.0;
    for (int32_t id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad || n.grad.v.empty() || n.op == Op::Leaf) continue;
        backprop_node(id);
    }
}

void Tape::backprop_node(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor g = n.grad;  // copy: grad_of() below may reallocate nodes_ storage? no,
                              // but parents can alias n.grad only via self-reference, which
                              // no op produces; copy keeps the loop simple and safe.

    auto parent_needs = [&](int32_t pid) {
        return pid >= 0 && nodes_[static_cast<size_t>(pid)].needs_grad;
    };

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul: {
            const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
            const Tensor& B = nodes_[static_cast<size_t>(n.b)].value;
            if (A.rank() == 2 && B.rank() == 2) {
                int64_t m = A.rows(), k = A.cols(), p = B.cols();
                if (parent_needs(n.a)) {
                    Tensor& ga = grad_of(n.a);
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t j = 0; j < p; ++j) {
                            double gij = g.v[static_cast<size_t>(i * p + j)];
                            if (gij == 0.0) continue;
                            for (int64_t l = 0; l < k; ++l)
                                ga.v[static_cast<size_t>(i * k + l)] +=
                                    gij * B.v[static_cast<size_t>(l * p + j)];
                        }
                }
                if (parent_needs(n.b)) {
                    Tensor& gb = grad_of(n.b);
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t l = 0; l < k; ++l) {
                            double a_il = A.v[static_cast<size_t>(i * k + l)];
                            if (a_il == 0.0) continue;
                            for (int64_t j = 0; j < p; ++j)
                                gb.v[static_cast<size_t>(l * p + j)] +=
                                    a_il * g.v[static_cast<size_t>(i * p + j)];
                        }
                }
            } else if (A.rank() == 2 && B.rank() == 1) {
                int64_t m = A.rows(), k = A.cols();
                if (parent_needs(n.a)) {
                    Tensor& ga = grad_of(n.a);
                    for (int64_t i = 0; i < m; ++i) {
                        double gi = g.v[static_cast<size_t>(i)];
                        if (gi == 0.0) continue;
                        for (int64_t l = 0; l < k; ++l)
                            ga.v[static_cast<size_t>(i * k + l)] += gi * B.v[static_cast<size_t>(l)];
                    }
                }
                if (parent_needs(n.b)) {
                    Tensor& gb = grad_of(n.b);
                    for (int64_t i = 0; i < m; ++i) {
                        double gi = g.v[static_cast<size_t>(i)];
                        if (gi == 0.0) continue;
                        for (int64_t l = 0; l < k; ++l)
                            gb.v[static_cast<size_t>(l)] += gi * A.v[static_cast<size_t>(i * k + l)];
                    }
                }
            } else {  // 1-D x 2-D
                int64_t k = A.numel(), p = B.cols();
                if (parent_needs(n.a)) {
                    Tensor& ga = grad_of(n.a);
                    for (int64_t l = 0; l < k; ++l) {
                        double acc = 0.0;
                        for (int64_t j = 0; j < p; ++j)
                            acc += B.v[static_cast<size_t>(l * p + j)] * g.v[static_cast<size_t>(j)];
                        ga.v[static_cast<size_t>(l)] += acc;
                    }
                }
                if (parent_needs(n.b)) {
                    Tensor& gb = grad_of(n.b);
                    for (int64_t l = 0; l < k; ++l) {
                        double a_l = A.v[static_cast<size_t>(l)];
                        if (a_l == 0.0) continue;
                        for (int64_t j = 0; j < p; ++j)
                            gb.v[static_cast<size_t>(l * p + j)] += a_l * g.v[static_cast<size_t>(j)];
                    }
                }
            }
            break;
        }
        case Op::Add: {
            if (parent_needs(n.a)) {
                Tensor& ga = grad_of(n.a);
                for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
            }
            if (parent_needs(n.b)) {
                Tensor& gb = grad_of(n.b);
                for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i];
            }
            break;
        }
        case Op::Mul: {
            const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
            const Tensor& B = nodes_[static_cast<size_t>(n.b)].value;
            if (parent_needs(n.a)) {
                Tensor& ga = grad_of(n.a);
                for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * B.v[i];
            }
            if (parent_needs(n.b)) {
                Tensor& gb = grad_of(n.b);
                for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i] * A.v[i];
            }
            break;
        }
        case Op::Concat: {
            bool two_d = n.value.rank() == 2;
            int64_t rows = two_d ? n.value.rows() : 1;
            int64_t out_cols = two_d ? n.value.cols() : n.value.numel();
            int64_t offset = 0;
            for (int64_t pid64 : n.aux) {
                auto pid = static_cast<int32_t>(pid64);
                const Tensor& part = nodes_[static_cast<size_t>(pid)].value;
                int64_t cols = two_d ? part.cols() : part.numel();
                if (parent_needs(pid)) {
                    Tensor& gp = grad_of(pid);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int64_t c = 0; c < cols; ++c)
                            gp.v[static_cast<size_t>(r * cols + c)] +=
                                g.v[static_cast<size_t>(r * out_cols + offset + c)];
                }
                offset += cols;
            }
            break;
        }
        case Op::Relu: {
            if (!parent_needs(n.a)) break;
            const Tensor& X = nodes_[static_cast<size_t>(n.a)].value;
            Tensor& ga = grad_of(n.a);
            for (size_t i = 0; i < g.v.size(); ++i)
                if (X.v[i] > 0.0) ga.v[i] += g.v[i];
            break;
        }
        case Op::Sigmoid: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            for (size_t i = 0; i < g.v.size(); ++i) {
                double y = n.value.v[i];
                ga.v[i] += g.v[i] * y * (1.0 - y);
            }
            break;
        }
        case Op::Tanh: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            for (size_t i = 0; i < g.v.size(); ++i) {
                double y = n.value.v[i];
                ga.v[i] += g.v[i] * (1.0 - y * y);
            }
            break;
        }
        case Op::Softmax: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            int64_t cols = n.value.rank() == 2 ? n.value.cols() : n.value.numel();
            int64_t rows = n.value.numel() / cols;
            for (int64_t r = 0; r < rows; ++r) {
                const double* y = n.value.v.data() + r * cols;
                const double* gy = g.v.data() + r * cols;
                double dot = 0.0;
                for (int64_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
                double* gx = ga.v.data() + r * cols;
                for (int64_t c = 0; c < cols; ++c) gx[c] += (gy[c] - dot) * y[c];
            }
            break;
        }
        case Op::Log: {
            if (!parent_needs(n.a)) break;
            const Tensor& X = nodes_[static_cast<size_t>(n.a)].value;
            Tensor& ga = grad_of(n.a);
            for (size_t i = 0; i < g.v.size(); ++i)
                if (X.v[i] >= kLogFloor) ga.v[i] += g.v[i] / X.v[i];
            break;
        }
        case Op::Sum: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            double gy = g.v[0];
            for (double& x : ga.v) x += gy;
            break;
        }
        case Op::Mean: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            double gy = g.v[0] / static_cast<double>(ga.v.size());
            for (double& x : ga.v) x += gy;
            break;
        }
        case Op::GatherRows: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            int64_t cols = n.value.cols();
            for (size_t i = 0; i < n.aux.size(); ++i) {
                int64_t row = n.aux[i];
                for (int64_t c = 0; c < cols; ++c)
                    ga.v[static_cast<size_t>(row * cols + c)] +=
                        g.v[i * static_cast<size_t>(cols) + static_cast<size_t>(c)];
            }
            break;
        }
        case Op::Pick: {
            if (!parent_needs(n.a)) break;
            grad_of(n.a).v[static_cast<size_t>(n.aux[0])] += g.v[0];
            break;
        }
        case Op::Slice: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            int64_t start = n.aux[0];
            for (size_t i = 0; i < g.v.size(); ++i)
                ga.v[static_cast<size_t>(start) + i] += g.v[i];
            break;
        }
        case Op::Scale: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += n.c * g.v[i];
            break;
        }
        case Op::Transpose: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            int64_t m = ga.shape[0], p = ga.shape[1];
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < p; ++j)
                    ga.v[static_cast<size_t>(i * p + j)] += g.v[static_cast<size_t>(j * m + i)];
            break;
        }
        case Op::Reshape: {
            if (!parent_needs(n.a)) break;
            Tensor& ga = grad_of(n.a);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
            break;
        }
    }
}

// --- primitives ---

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    Tensor out;
    if (A.rank() == 2 && B.rank() == 2) {
        if (A.cols() != B.rows()) shape_error("matmul", A, B);
        int64_t m = A.rows(), k = A.cols(), p = B.cols();
        out = Tensor::zeros({m, p});
        for (int64_t i = 0; i < m; ++i)
            for (int64_t l = 0; l < k; ++l) {
                double a_il = A.v[static_cast<size_t>(i * k + l)];
                if (a_il == 0.0) continue;
                const double* brow = B.v.data() + l * p;
                double* orow = out.v.data() + i * p;
                for (int64_t j = 0; j < p; ++j) orow[j] += a_il * brow[j];
            }
    } else if (A.rank() == 2 && B.rank() == 1) {
        if (A.cols() != B.numel()) shape_error("matmul", A, B);
        int64_t m = A.rows(), k = A.cols();
        out = Tensor::zeros({m});
        for (int64_t i = 0; i < m; ++i) {
            double acc = 0.0;
            const double* arow = A.v.data() + i * k;
            for (int64_t l = 0; l < k; ++l) acc += arow[l] * B.v[static_cast<size_t>(l)];
            out.v[static_cast<size_t>(i)] = acc;
        }
    } else if (A.rank() == 1 && B.rank() == 2) {
        if (A.numel() != B.rows()) shape_error("matmul", A, B);
        int64_t k = A.numel(), p = B.cols();
        out = Tensor::zeros({p});
        for (int64_t l = 0; l < k; ++l) {
            double a_l = A.v[static_cast<size_t>(l)];
            if (a_l == 0.0) continue;
            const double* brow = B.v.data() + l * p;
            for (int64_t j = 0; j < p; ++j) out.v[static_cast<size_t>(j)] += a_l * brow[j];
        }
    } else {
        shape_error("matmul", A, B);
    }
    return Tape::record_binary(a, b, Op::MatMul, std::move(out));
}

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (!A.same_shape(B)) shape_error("add", A, B);
    Tensor out = Tensor::zeros(A.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = A.v[i] + B.v[i];
    return Tape::record_binary(a, b, Op::Add, std::move(out));
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (!A.same_shape(B)) shape_error("mul", A, B);
    Tensor out = Tensor::zeros(A.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = A.v[i] * B.v[i];
    return Tape::record_binary(a, b, Op::Mul, std::move(out));
}

Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty part list");
    Tape* tape = parts[0].tape;
    bool two_d = parts[0].value().rank() == 2;
    int64_t rows = two_d ? parts[0].value().rows() : 1;
    int64_t total_cols = 0;
    bool needs = false;
    for (Var p : parts) {
        check_same_tape(parts[0], p, "concat");
        const Tensor& t = p.value();
        if ((t.rank() == 2) != two_d || (two_d && t.rows() != rows) || (!two_d && t.rank() != 1))
            shape_error("concat", parts[0].value(), t);
        total_cols += two_d ? t.cols() : t.numel();
        needs = needs || tape->requires_grad(p);
    }
    Tensor out = two_d ? Tensor::zeros({rows, total_cols}) : Tensor::zeros({total_cols});
    int64_t offset = 0;
    for (Var p : parts) {
        const Tensor& t = p.value();
        int64_t cols = two_d ? t.cols() : t.numel();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c)
                out.v[static_cast<size_t>(r * total_cols + offset + c)] =
                    t.v[static_cast<size_t>(r * cols + c)];
        offset += cols;
    }
    Tape::Node n;
    n.op = Op::Concat;
    n.needs_grad = needs;
    n.aux.reserve(parts.size());
    for (Var p : parts) n.aux.push_back(p.id);
    n.value = std::move(out);
    return tape->push(std::move(n));
}

Var concat(std::initializer_list<Var> parts) {
    std::vector<Var> v(parts);
    return concat(std::span<const Var>(v));
}

Var relu(Var x) {
    const Tensor& X = x.value();
    Tensor out = Tensor::zeros(X.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = X.v[i] > 0.0 ? X.v[i] : 0.0;
    return Tape::record_unary(x, Op::Relu, std::move(out));
}

Var sigmoid(Var x) {
    const Tensor& X = x.value();
    Tensor out = Tensor::zeros(X.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = 1.0 / (1.0 + std::exp(-X.v[i]));
    return Tape::record_unary(x, Op::Sigmoid, std::move(out));
}

Var tanh(Var x) {
    const Tensor& X = x.value();
    Tensor out = Tensor::zeros(X.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = std::tanh(X.v[i]);
    return Tape::record_unary(x, Op::Tanh, std::move(out));
}

Var softmax(Var x) {
    const Tensor& X = x.value();
    if (X.rank() != 1 && X.rank() != 2)
        throw std::invalid_argument("softmax: expected rank 1 or 2, got shape " + shape_str(X));
    Tensor out = Tensor::zeros(X.shape);
    int64_t cols = X.rank() == 2 ? X.cols() : X.numel();
    if (cols == 0) throw std::invalid_argument("softmax: empty axis, shape " + shape_str(X));
    int64_t rows = X.numel() / cols;
    for (int64_t r = 0; r < rows; ++r) {
        const double* xi = X.v.data() + r * cols;
        double* yi = out.v.data() + r * cols;
        double mx = xi[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, xi[c]);
        double total = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
            yi[c] = std::exp(xi[c] - mx);
            total += yi[c];
        }
        for (int64_t c = 0; c < cols; ++c) yi[c] /= total;
    }
    return Tape::record_unary(x, Op::Softmax, std::move(out));
}

Var log(Var x) {
    const Tensor& X = x.value();
    Tensor out = Tensor::zeros(X.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = guarded_log(X.v[i]);
    return Tape::record_unary(x, Op::Log, std::move(out));
}

Var sum(Var x) {
    const Tensor& X = x.value();
    double acc = 0.0;
    for (double v : X.v) acc += v;
    return Tape::record_unary(x, Op::Sum, Tensor::scalar(acc));
}

Var mean(Var x) {
    const Tensor& X = x.value();
    if (X.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    double acc = 0.0;
    for (double v : X.v) acc += v;
    return Tape::record_unary(x, Op::Mean, Tensor::scalar(acc / static_cast<double>(X.numel())));
}

Var gather_rows(Var matrix, std::span<const int64_t> row_ids) {
    const Tensor& M = matrix.value();
    if (M.rank() != 2)
        throw std::invalid_argument("gather_rows: expected matrix, got shape " + shape_str(M));
    int64_t cols = M.cols();
    Tensor out = Tensor::zeros({static_cast<int64_t>(row_ids.size()), cols});
    for (size_t i = 0; i < row_ids.size(); ++i) {
        int64_t r = row_ids[i];
        if (r < 0 || r >= M.rows())
            throw std::invalid_argument("gather_rows: row " + std::to_string(r) +
                                        " out of range for shape " + shape_str(M));
        std::memcpy(out.v.data() + i * static_cast<size_t>(cols),
                    M.v.data() + static_cast<size_t>(r * cols),
                    static_cast<size_t>(cols) * sizeof(double));
    }
    Var v = Tape::record_unary(matrix, Op::GatherRows, std::move(out));
    Tape::Node& n = matrix.tape->nodes_[static_cast<size_t>(v.id)];
    n.aux.assign(row_ids.begin(), row_ids.end());
    return v;
}

Var pick(Var vec, int64_t index) {
    const Tensor& X = vec.value();
    if (X.rank() != 1)
        throw std::invalid_argument("pick: expected 1-D, got shape " + shape_str(X));
    if (index < 0 || index >= X.numel())
        throw std::invalid_argument("pick: index " + std::to_string(index) +
                                    " out of range for shape " + shape_str(X));
    Var v = Tape::record_unary(vec, Op::Pick, Tensor::scalar(X.v[static_cast<size_t>(index)]));
    vec.tape->nodes_[static_cast<size_t>(v.id)].aux = {index};
    return v;
}

Var slice(Var vec, int64_t start, int64_t len) {
    const Tensor& X = vec.value();
    if (X.rank() != 1)
        throw std::invalid_argument("slice: expected 1-D, got shape " + shape_str(X));
    if (start < 0 || len < 0 || start + len > X.numel())
        throw std::invalid_argument("slice: [" + std::to_string(start) + ", " +
                                    std::to_string(start + len) + ") out of range for shape " +
                                    shape_str(X));
    Tensor out = Tensor::zeros({len});
    std::memcpy(out.v.data(), X.v.data() + start, static_cast<size_t>(len) * sizeof(double));
    Var v = Tape::record_unary(vec, Op::Slice, std::move(out));
    vec.tape->nodes_[static_cast<size_t>(v.id)].aux = {start, len};
    return v;
}

Var scale(Var x, double c) {
    const Tensor& X = x.value();
    Tensor out = Tensor::zeros(X.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = c * X.v[i];
    Var v = Tape::record_unary(x, Op::Scale, std::move(out));
    x.tape->nodes_[static_cast<size_t>(v.id)].c = c;
    return v;
}

Var transpose(Var x) {
    const Tensor& X = x.value();
    if (X.rank() != 2)
        throw std::invalid_argument("transpose: expected matrix, got shape " + shape_str(X));
    int64_t m = X.rows(), p = X.cols();
    Tensor out = Tensor::zeros({p, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < p; ++j)
            out.v[static_cast<size_t>(j * m + i)] = X.v[static_cast<size_t>(i * p + j)];
    return Tape::record_unary(x, Op::Transpose, std::move(out));
}

Var reshape(Var x, std::vector<int64_t> new_shape) {
    const Tensor& X = x.value();
    if (product(new_shape) != X.numel())
        throw std::invalid_argument("reshape: cannot view shape " + shape_str(X) + " as " +
                                    shape_str(new_shape));
    Tensor out;
    out.shape = std::move(new_shape);
    out.v = X.v;
    return Tape::record_unary(x, Op::Reshape, std::move(out));
}

// --- ParamSet and optimizers ---

Tensor& ParamSet::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("ParamSet: unknown parameter " + name);
    return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("ParamSet: unknown parameter " + name);
    return it->second;
}

void ParamSet::insert(const std::string& name, Tensor value) {
    if (params_.count(name)) throw std::invalid_argument("ParamSet: duplicate parameter " + name);
    params_.emplace(name, std::move(value));
}

uint64_t ParamSet::content_hash() const {
    uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const void* data, size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : params_) {
        feed(name.data(), name.size());
        feed(t.shape.data(), t.shape.size() * sizeof(int64_t));
        feed(t.v.data(), t.v.size() * sizeof(double));
    }
    return h;
}

std::map<std::string, Var> attach_params(Tape& tape, const ParamSet& params) {
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : params.tensors()) vars.emplace(name, tape.leaf(t, true));
    return vars;
}

GradMap collect_grads(const Tape& tape, const std::map<std::string, Var>& vars) {
    GradMap grads;
    for (const auto& [name, v] : vars) grads.emplace(name, tape.grad(v));
    return grads;
}

namespace {

const Tensor& grad_for(const GradMap& grads, const std::string& name, const Tensor& param) {
    auto it = grads.find(name);
    if (it == grads.end())
        throw std::invalid_argument("optimizer: missing gradient for parameter " + name);
    if (!it->second.same_shape(param))
        throw std::invalid_argument("optimizer: gradient shape " + shape_str(it->second) +
                                    " does not match parameter " + name + " " + shape_str(param));
    return it->second;
}

}  // namespace

void sgd_step(ParamSet& params, const GradMap& grads, double lr) {
    for (auto& [name, p] : params.tensors()) {
        const Tensor& g = grad_for(grads, name, p);
        if (lr == 0.0) continue;
        for (size_t i = 0; i < p.v.size(); ++i) p.v[i] -= lr * g.v[i];
    }
    params.step() += 1;
}

void adam_step(ParamSet& params, const GradMap& grads, double lr, double beta1, double beta2,
               double eps) {
    int64_t t = params.step() + 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, p] : params.tensors()) {
        const Tensor& g = grad_for(grads, name, p);
        auto& st = params.adam_state()[name];
        if (st.m.v.empty()) {
            st.m = Tensor::zeros(p.shape);
            st.v = Tensor::zeros(p.shape);
        }
        for (size_t i = 0; i < p.v.size(); ++i) {
            st.m.v[i] = beta1 * st.m.v[i] + (1.0 - beta1) * g.v[i];
            st.v.v[i] = beta2 * st.v.v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
            if (lr == 0.0) continue;
            double mhat = st.m.v[i] / bc1;
            double vhat = st.v.v[i] / bc2;
            p.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
    params.step() = t;
}

double finite_diff_check(const LossBuilder& build, ParamSet& params, double eps,
                         int64_t coords_per_param, Rng& rng, double floor) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_check: eps must be positive");

    Tape tape;
    auto vars = attach_params(tape, params);
    Var loss = build(tape, vars);
    tape.backward(loss);
    GradMap analytic = collect_grads(tape, vars);

    auto eval = [&](const ParamSet& p) {
        Tape t;
        auto vs = attach_params(t, p);
        return build(t, vs).value().item();
    };

    double worst = 0.0;
    for (auto& [name, p] : params.tensors()) {
        int64_t n = p.numel();
        std::vector<int64_t> coords;
        if (n <= coords_per_param) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            coords = rng.sample_indices(n, coords_per_param);
        }
        for (int64_t c : coords) {
            double saved = p.v[static_cast<size_t>(c)];
            p.v[static_cast<size_t>(c)] = saved + eps;
            double up = eval(params);
            p.v[static_cast<size_t>(c)] = saved - eps;
            double down = eval(params);
            p.v[static_cast<size_t>(c)] = saved;
            double fd = (up - down) / (2.0 * eps);
            double ad = analytic.at(name).v[static_cast<size_t>(c)];
            double denom = std::max({std::abs(ad), std::abs(fd), floor});
            worst = std::max(worst, std::abs(ad - fd) / denom);
        }
    }
    return worst;
}

}  // namespace metawalk
