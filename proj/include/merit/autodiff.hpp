#pragma once

// Reverse-mode differentiation over rank-2 tensors.
//
// A Tape records operations as they are evaluated (define-by-run). Every op
// validates operand shapes when it is recorded and throws ShapeError naming
// the op and the node index it would have occupied. backward() walks the tape
// in reverse and accumulates gradients into the bound Parameters.

#include "merit/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace merit {

enum class ParamGroup { Model, Backbone };

struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Tensor value, ParamGroup group = ParamGroup::Model, bool frozen = false);

    std::string name;
    Tensor value;
    Tensor grad;
    ParamGroup group = ParamGroup::Model;
    bool frozen = false;

    void zero_grad() noexcept { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

    Tape* tape() const noexcept { return tape_; }
    std::size_t index() const noexcept { return index_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t index_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Leaf bound to a parameter. Frozen parameters behave as constants.
    Var param(Parameter& p);

    /// Accumulates d(loss)/d(parameter) into every non-frozen bound parameter.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }
    const Tensor& value(std::size_t index) const { return nodes_.at(index).value; }
    bool requires_grad(std::size_t index) const { return nodes_[index].requires_grad; }
    const char* op_name(std::size_t index) const { return nodes_[index].op; }

    // Used by op implementations.
    Var push(const char* op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward);
    const Tensor& grad_of(std::size_t index) const { return nodes_[index].grad; }
    /// Gradient slot of a node, allocated on first use; nullptr when the
    /// node does not require a gradient.
    Tensor* grad_slot(std::size_t index);
    [[noreturn]] void shape_error(const char* op, const std::string& detail) const;

    // Discrete-decision bookkeeping, consumed by the finite-difference audit.
    void set_track_kinks(bool on) noexcept { track_kinks_ = on; }
    bool track_kinks() const noexcept { return track_kinks_; }
    void note_routing(std::span<const std::size_t> selected) noexcept;
    void note_tie() noexcept { ++ties_; }
    void note_kink_bit(bool bit) noexcept;
    std::uint64_t routing_signature() const noexcept { return routing_sig_; }
    std::uint64_t kink_signature() const noexcept { return kink_sig_; }
    std::size_t tie_count() const noexcept { return ties_; }

private:
    struct Node {
        const char* op;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::vector<std::size_t> parents;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;
    bool track_kinks_ = false;
    std::uint64_t routing_sig_ = 1469598103934665603ull;
    std::uint64_t kink_sig_ = 1469598103934665603ull;
    std::size_t ties_ = 0;
};

/// Differentiable primitives. All operands must live on the same tape.
namespace ad {

Var matmul(Var a, Var b);
/// x * W + b with b a 1 x out row broadcast over rows.
Var affine(Var x, Var w, Var b);
Var add_row(Var x, Var row);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Elementwise product with a constant tensor (no gradient to the constant).
Var mul_const(Var a, const Tensor& c);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var relu(Var a);
Var log1p(Var a);
Var sqrt(Var a);
/// |a| with subgradient 0 at a == 0.
Var abs(Var a);
/// max(a, floor) elementwise; gradient passes only where a > floor.
Var floor_max(Var a, double floor);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var transpose(Var a);
Var sum(Var a);
Var mean(Var a);
/// Column means: rows x cols -> 1 x cols.
Var mean_rows(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var a, std::span<const std::size_t> rows);
/// acc with src rows added at the given row positions (indices unique).
Var index_add_rows(Var acc, Var src, std::span<const std::size_t> rows);
/// Row i of x multiplied by w(i, 0).
Var scale_rows(Var x, Var w);
/// out(i, 0) = a(i, cols[i]).
Var pick_cols(Var a, std::span<const std::size_t> cols);

}  // namespace ad

/// Numerically stable row-wise softmax on plain tensors.
Tensor softmax_rows(const Tensor& logits);

}  // namespace merit
