#pragma once
// Dense 64-bit tensors with reverse-mode autodiff on a tape.
//
// The tape records every primitive in execution order; backward() walks the
// record once in reverse, accumulating gradients by summation. Gradients for
// nodes never reached from the loss stay zero. Only first-order reverse mode
// is supported.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metawalk/rng.hpp"

namespace metawalk {

// log() is guarded: inputs are clamped to this floor before taking the log.
inline constexpr double kLogFloor = 1e-12;

inline double guarded_log(double x) {
    return std::log(x < kLogFloor ? kLogFloor : x);
}

struct Tensor {
    std::vector<int64_t> shape;  // rank 0 = scalar
    std::vector<double> v;       // row-major

    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor from(std::vector<int64_t> shape, std::vector<double> values);
    static Tensor uniform(std::vector<int64_t> shape, double lo, double hi, Rng& rng);

    int64_t numel() const;
    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    int64_t rows() const { return shape.at(0); }
    int64_t cols() const { return shape.at(1); }
    double item() const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::string shape_str(const std::vector<int64_t>& shape);
std::string shape_str(const Tensor& t);

class Tape;

struct Var {
    Tape* tape = nullptr;
    int32_t id = -1;

    const Tensor& value() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

enum class Op : uint8_t {
    Leaf,
    MatMul,
    Add,
    Mul,
    Concat,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
    Log,
    Sum,
    Mean,
    GatherRows,
    Pick,
    Slice,
    Scale,
    Transpose,
    Reshape,
};

class Tape {
public:
    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // loss must be a single-element tensor; gradients accumulate into every
    // reachable node that requires grad.
    void backward(Var loss);

    const Tensor& value(Var v) const;
    // Gradient of the last backward() w.r.t. v; zeros if v was unreachable.
    Tensor grad(Var v) const;

    size_t size() const { return nodes_.size(); }
    // Drop every node recorded after an earlier mark (leaves survive when the
    // mark was taken right after attaching them). Used to reuse one tape
    // across many rollouts.
    size_t mark() const { return nodes_.size(); }
    void rewind(size_t mark);
    void reset() { nodes_.clear(); }

private:
    struct Node {
        Op op = Op::Leaf;
        bool needs_grad = false;
        int32_t a = -1;
        int32_t b = -1;
        double c = 0.0;              // Scale factor
        std::vector<int64_t> aux;    // indices / parent ids / offsets
        Tensor value;
        Tensor grad;                 // allocated lazily during backward
    };

    Var push(Node node);
    Tensor& grad_of(int32_t id);
    void backprop_node(int32_t id);
    bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }
    static Var record_unary(Var x, Op op, Tensor out);
    static Var record_binary(Var a, Var b, Op op, Tensor out);

    std::deque<Node> nodes_;  // deque: value() references stay valid across pushes

    friend Var matmul(Var, Var);
    friend Var add(Var, Var);
    friend Var mul(Var, Var);
    friend Var concat(std::span<const Var>);
    friend Var relu(Var);
    friend Var sigmoid(Var);
    friend Var tanh(Var);
    friend Var softmax(Var);
    friend Var log(Var);
    friend Var sum(Var);
    friend Var mean(Var);
    friend Var gather_rows(Var, std::span<const int64_t>);
    friend Var pick(Var, int64_t);
    friend Var slice(Var, int64_t, int64_t);
    friend Var scale(Var, double);
    friend Var transpose(Var);
    friend Var reshape(Var, std::vector<int64_t>);
};

// Primitives. Forward values are computed eagerly; each call records one node.
Var matmul(Var a, Var b);  // 2Dx2D, 2Dx1D (matvec), 1Dx2D (vecmat)
Var add(Var a, Var b);     // elementwise, exact shape match
Var mul(Var a, Var b);     // elementwise, exact shape match
Var concat(std::span<const Var> parts);  // last axis; all 1-D or all 2-D with equal rows
Var concat(std::initializer_list<Var> parts);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var softmax(Var x);  // last axis, max-subtracted
Var log(Var x);      // clamped at kLogFloor
Var sum(Var x);      // full reduction to scalar
Var mean(Var x);     // full reduction to scalar
Var gather_rows(Var matrix, std::span<const int64_t> row_ids);
Var pick(Var vec, int64_t index);            // 1-D -> scalar
Var slice(Var vec, int64_t start, int64_t len);  // 1-D contiguous
Var scale(Var x, double c);
Var transpose(Var x);  // 2-D
Var reshape(Var x, std::vector<int64_t> new_shape);

// Named parameter collection; houses the trainable state plus Adam moments.
class ParamSet {
public:
    struct Moments {
        Tensor m, v;
    };

    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    void insert(const std::string& name, Tensor value);

    const std::map<std::string, Tensor>& tensors() const { return params_; }
    std::map<std::string, Tensor>& tensors() { return params_; }

    std::map<std::string, Moments>& adam_state() { return adam_; }
    int64_t& step() { return step_; }
    int64_t step() const { return step_; }

    // Free-form metadata persisted in checkpoints (seed, dims, model kind...).
    std::map<std::string, std::string> meta;

    // FNV-1a over names and raw value bytes; used by purity checks.
    uint64_t content_hash() const;

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Moments> adam_;
    int64_t step_ = 0;
};

using GradMap = std::map<std::string, Tensor>;

// Attach every parameter as a grad-requiring leaf; key = parameter name.
std::map<std::string, Var> attach_params(Tape& tape, const ParamSet& params);

// Collect gradients for every parameter (zeros where unreachable).
GradMap collect_grads(const Tape& tape, const std::map<std::string, Var>& vars);

// p <- p - lr * g. Every parameter must have a gradient entry.
void sgd_step(ParamSet& params, const GradMap& grads, double lr);

void adam_step(ParamSet& params, const GradMap& grads, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Builds the loss from freshly attached parameter leaves. Must be
// deterministic for fixed parameter values.
using LossBuilder = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

// Central-difference verification of the analytic gradient. Checks up to
// coords_per_param sampled coordinates of each parameter and returns the
// worst relative error, defined as |ad - fd| / max(|ad|, |fd|, floor).
double finite_diff_check(const LossBuilder& build, ParamSet& params, double eps,
                         int64_t coords_per_param, Rng& rng, double floor = 1e-4);

}  // namespace metawalk
