#include "merit/autodiff.hpp"

#include "merit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace merit {

Parameter::Parameter(std::string name_, Tensor value_, ParamGroup group_, bool frozen_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape(), 0.0), group(group_), frozen(frozen_)
{
}

const Tensor& Var::value() const
{
    if (!tape_)
        throw Error("use of an unbound Var");
    return tape_->value(index_);
}

Var Tape::constant(Tensor value)
{
    return push("constant", std::move(value), {}, nullptr);
}

Var Tape::param(Parameter& p)
{
    Var v = push("param", p.value, {}, nullptr);
    nodes_.back().param = &p;
    nodes_.back().requires_grad = !p.frozen;
    return v;
}

Var Tape::push(const char* op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward)
{
    if (backward_done_)
        throw Error("tape already differentiated; start a new tape for another forward pass");
    Node node;
    node.op = op;
    node.value = std::move(value);
    node.requires_grad = false;
    for (auto p : parents)
        node.requires_grad = node.requires_grad || nodes_[p].requires_grad;
    node.parents = std::move(parents);
    if (node.requires_grad)
        node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_slot(std::size_t index)
{
    Node& n = nodes_[index];
    if (!n.requires_grad)
        return nullptr;
    if (n.grad.empty())
        n.grad = Tensor(n.value.shape(), 0.0);
    return &n.grad;
}

void Tape::shape_error(const char* op, const std::string& detail) const
{
    throw ShapeError(std::string("op '") + op + "' at node #" + std::to_string(nodes_.size()) + ": " + detail);
}

void Tape::backward(Var loss)
{
    if (nodes_.empty() || loss.tape() != this || loss.index() >= nodes_.size())
        throw Error("backward called before a forward pass was recorded on this tape");
    if (backward_done_)
        throw Error("backward already executed on this tape");
    const Tensor& out = nodes_[loss.index()].value;
    if (out.size() != 1)
        throw Error("backward requires a scalar output, got " + shape_string(out.shape()));
    backward_done_ = true;
    if (!nodes_[loss.index()].requires_grad)
        return;
    grad_slot(loss.index())->fill(1.0);
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty())
            continue;
        if (n.param) {
            Tensor& g = n.param->grad;
            if (g.shape() != n.value.shape())
                g = Tensor(n.value.shape(), 0.0);
            for (std::size_t k = 0; k < g.size(); ++k)
                g[k] += n.grad[k];
        } else if (n.backward) {
            n.backward(*this, i);
        }
    }
}

namespace {

inline void mix(std::uint64_t& h, std::uint64_t v) noexcept
{
    h ^= v;
    h *= 1099511628211ull;
}

}  // namespace

void Tape::note_routing(std::span<const std::size_t> selected) noexcept
{
    for (auto s : selected)
        mix(routing_sig_, s + 1);
    mix(routing_sig_, 0xffu);
}

void Tape::note_kink_bit(bool bit) noexcept
{
    mix(kink_sig_, bit ? 2u : 3u);
}

namespace ad {

namespace {

Tape& same_tape(const char* op, std::initializer_list<Var> vars)
{
    Tape* t = nullptr;
    for (const Var& v : vars) {
        if (!v.valid())
            throw Error(std::string("op '") + op + "': unbound operand");
        if (t && v.tape() != t)
            throw Error(std::string("op '") + op + "': operands live on different tapes");
        t = v.tape();
    }
    return *t;
}

void require_same_shape(Tape& t, const char* op, const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape())
        t.shape_error(op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// dst += src^T-free helpers used by matmul-like backward passes.
void acc_a_bt(Tensor& dst, const Tensor& g, const Tensor& b)
{
    // dst(i, p) += sum_j g(i, j) * b(p, j)
    const std::size_t m = g.rows(), n = g.cols(), k = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        const double* gi = &g.at(i, 0);
        double* di = &dst.at(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = &b.at(p, 0);
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                s += gi[j] * bp[j];
            di[p] += s;
        }
    }
}

void acc_at_b(Tensor& dst, const Tensor& a, const Tensor& g)
{
    // dst(p, j) += sum_i a(i, p) * g(i, j)
    const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* gi = &g.at(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const double s = a.at(i, p);
            if (s == 0.0)
                continue;
            double* dp = &dst.at(p, 0);
            for (std::size_t j = 0; j < n; ++j)
                dp[j] += s * gi[j];
        }
    }
}

template <typename F>
Var unary(const char* op, Var a, F&& f, Tape::BackwardFn backward)
{
    Tape& t = same_tape(op, {a});
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = f(x[i]);
    return t.push(op, std::move(y), {a.index()}, std::move(backward));
}

}  // namespace

Var matmul(Var a, Var b)
{
    Tape& t = same_tape("matmul", {a, b});
    if (a.cols() != b.rows())
        t.shape_error("matmul", shape_string(a.shape()) + " x " + shape_string(b.shape()));
    const std::size_t ia = a.index(), ib = b.index();
    return t.push("matmul", merit::matmul(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            acc_a_bt(*ga, g, tp.value(ib));
        if (Tensor* gb = tp.grad_slot(ib))
            acc_at_b(*gb, tp.value(ia), g);
    });
}

Var affine(Var x, Var w, Var b)
{
    Tape& t = same_tape("affine", {x, w, b});
    if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols())
        t.shape_error("affine", "x " + shape_string(x.shape()) + ", W " + shape_string(w.shape()) + ", b " +
                                    shape_string(b.shape()));
    Tensor y = merit::matmul(x.value(), w.value());
    const Tensor& bias = b.value();
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j)
            y.at(i, j) += bias[j];
    const std::size_t ix = x.index(), iw = w.index(), ibias = b.index();
    return t.push("affine", std::move(y), {ix, iw, ibias}, [ix, iw, ibias](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* gx = tp.grad_slot(ix))
            acc_a_bt(*gx, g, tp.value(iw));
        if (Tensor* gw = tp.grad_slot(iw))
            acc_at_b(*gw, tp.value(ix), g);
        if (Tensor* gb = tp.grad_slot(ibias))
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    (*gb)[j] += g.at(i, j);
    });
}

Var add_row(Var x, Var row)
{
    Tape& t = same_tape("add_row", {x, row});
    if (row.rows() != 1 || row.cols() != x.cols())
        t.shape_error("add_row", shape_string(x.shape()) + " + " + shape_string(row.shape()));
    Tensor y = x.value();
    const Tensor& r = row.value();
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j)
            y.at(i, j) += r[j];
    const std::size_t ix = x.index(), ir = row.index();
    return t.push("add_row", std::move(y), {ix, ir}, [ix, ir](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* gx = tp.grad_slot(ix))
            for (std::size_t k = 0; k < g.size(); ++k)
                (*gx)[k] += g[k];
        if (Tensor* gr = tp.grad_slot(ir))
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    (*gr)[j] += g.at(i, j);
    });
}

Var add(Var a, Var b)
{
    Tape& t = same_tape("add", {a, b});
    require_same_shape(t, "add", a.value(), b.value());
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t k = 0; k < y.size(); ++k)
        y[k] += bv[k];
    const std::size_t ia = a.index(), ib = b.index();
    return t.push("add", std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        for (auto idx : {ia, ib})
            if (Tensor* gp = tp.grad_slot(idx))
                for (std::size_t k = 0; k < g.size(); ++k)
                    (*gp)[k] += g[k];
    });
}

Var sub(Var a, Var b)
{
    Tape& t = same_tape("sub", {a, b});
    require_same_shape(t, "sub", a.value(), b.value());
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t k = 0; k < y.size(); ++k)
        y[k] -= bv[k];
    const std::size_t ia = a.index(), ib = b.index();
    return t.push("sub", std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t k = 0; k < g.size(); ++k)
                (*ga)[k] += g[k];
        if (Tensor* gb = tp.grad_slot(ib))
            for (std::size_t k = 0; k < g.size(); ++k)
                (*gb)[k] -= g[k];
    });
}

Var mul(Var a, Var b)
{
    Tape& t = same_tape("mul", {a, b});
    require_same_shape(t, "mul", a.value(), b.value());
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t k = 0; k < y.size(); ++k)
        y[k] *= bv[k];
    const std::size_t ia = a.index(), ib = b.index();
    return t.push("mul", std::move(y), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia)) {
            const Tensor& bv = tp.value(ib);
            for (std::size_t k = 0; k < g.size(); ++k)
                (*ga)[k] += g[k] * bv[k];
        }
        if (Tensor* gb = tp.grad_slot(ib)) {
            const Tensor& av = tp.value(ia);
            for (std::size_t k = 0; k < g.size(); ++k)
                (*gb)[k] += g[k] * av[k];
        }
    });
}

Var mul_const(Var a, const Tensor& c)
{
    Tape& t = same_tape("mul_const", {a});
    require_same_shape(t, "mul_const", a.value(), c);
    Tensor y = a.value();
    for (std::size_t k = 0; k < y.size(); ++k)
        y[k] *= c[k];
    const std::size_t ia = a.index();
    return t.push("mul_const", std::move(y), {ia}, [ia, c](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t k = 0; k < g.size(); ++k)
                (*ga)[k] += g[k] * c[k];
    });
}

Var scale(Var a, double c)
{
    const std::size_t ia = a.index();
    return unary("scale", a, [c](double x) { return c * x; }, [ia, c](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t k = 0; k < g.size(); ++k)
                (*ga)[k] += c * g[k];
    });
}

Var add_scalar(Var a, double c)
{
    const std::size_t ia = a.index();
    return unary("add_scalar", a, [c](double x) { return x + c; }, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t k = 0; k < g.size(); ++k)
                (*ga)[k] += g[k];
    });
}

Var relu(Var a)
{
    Tape& t = same_tape("relu", {a});
    if (t.track_kinks())
        for (double v : a.value().data())
            t.note_kink_bit(v > 0.0);
    const std::size_t ia = a.index();
    return unary("relu", a, [](double x) { return x <= 0.0 ? 0.0 : x; }, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia)) {
            const Tensor& x = tp.value(ia);
            for (std::size_t k = 0; k < g.size(); ++k)
                if (!(x[k] <= 0.0))
                    (*ga)[k] += g[k];
        }
    });
}

Var log1p(Var a)
{
    Tape& t = same_tape("log1p", {a});
    for (double v : a.value().data())
        if (!(v > -1.0))
            t.shape_error("log1p", "argument must exceed -1");
    const std::size_t ia = a.index();
    return unary("log1p", a, [](double x) { return std::log1p(x); }, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia)) {
            const Tensor& x = tp.value(ia);
            for (std::size_t k = 0; k < g.size(); ++k)
                (*ga)[k] += g[k] / (1.0 + x[k]);
        }
    });
}

Var sqrt(Var a)
{
    Tape& t = same_tape("sqrt", {a});
    for (double v : a.value().data())
        if (v < 0.0)
            t.shape_error("sqrt", "negative argument");
    const std::size_t ia = a.index();
    return unary("sqrt", a, [](double x) { return std::sqrt(x); }, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia)) {
            const Tensor& y = tp.value(self);
            for (std::size_t k = 0; k < g.size(); ++k)
                (*ga)[k] += g[k] / (2.0 * y[k]);
        }
    });
}

Var abs(Var a)
{
    Tape& t = same_tape("abs", {a});
    if (t.track_kinks())
        for (double v : a.value().data())
            t.note_kink_bit(v > 0.0);
    const std::size_t ia = a.index();
    return unary("abs", a, [](double x) { return std::fabs(x); }, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia)) {
            const Tensor& x = tp.value(ia);
            for (std::size_t k = 0; k < g.size(); ++k)
                if (x[k] > 0.0)
                    (*ga)[k] += g[k];
                else if (x[k] < 0.0)
                    (*ga)[k] -= g[k];
        }
    });
}

Var floor_max(Var a, double floor)
{
    Tape& t = same_tape("floor_max", {a});
    if (t.track_kinks())
        for (double v : a.value().data())
            t.note_kink_bit(v > floor);
    const std::size_t ia = a.index();
    return unary("floor_max", a, [floor](double x) { return x > floor ? x : floor; },
                 [ia, floor](Tape& tp, std::size_t self) {
                     const Tensor& g = tp.grad_of(self);
                     if (Tensor* ga = tp.grad_slot(ia)) {
                         const Tensor& x = tp.value(ia);
                         for (std::size_t k = 0; k < g.size(); ++k)
                             if (x[k] > floor)
                                 (*ga)[k] += g[k];
                     }
                 });
}

Var softmax_rows(Var a)
{
    Tape& t = same_tape("softmax_rows", {a});
    const std::size_t ia = a.index();
    return t.push("softmax_rows", merit::softmax_rows(a.value()), {ia}, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        Tensor* ga = tp.grad_slot(ia);
        if (!ga)
            return;
        const Tensor& y = tp.value(self);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j)
                dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j)
                ga->at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var log_softmax_rows(Var a)
{
    Tape& t = same_tape("log_softmax_rows", {a});
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = x.at(i, 0);
        for (std::size_t j = 1; j < x.cols(); ++j)
            mx = std::max(mx, x.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j)
            s += std::exp(x.at(i, j) - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < x.cols(); ++j)
            y.at(i, j) = x.at(i, j) - lse;
    }
    const std::size_t ia = a.index();
    return t.push("log_softmax_rows", std::move(y), {ia}, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        Tensor* ga = tp.grad_slot(ia);
        if (!ga)
            return;
        const Tensor& y = tp.value(self);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double gs = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j)
                gs += g.at(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j)
                ga->at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gs;
        }
    });
}

Var transpose(Var a)
{
    Tape& t = same_tape("transpose", {a});
    const std::size_t ia = a.index();
    return t.push("transpose", merit::transpose(a.value()), {ia}, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    ga->at(j, i) += g.at(i, j);
    });
}

Var sum(Var a)
{
    Tape& t = same_tape("sum", {a});
    double s = 0.0;
    for (double v : a.value().data())
        s += v;
    const std::size_t ia = a.index();
    return t.push("sum", Tensor::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
        const double g = tp.grad_of(self)[0];
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t k = 0; k < ga->size(); ++k)
                (*ga)[k] += g;
    });
}

Var mean(Var a)
{
    Tape& t = same_tape("mean", {a});
    double s = 0.0;
    for (double v : a.value().data())
        s += v;
    const double n = static_cast<double>(a.value().size());
    const std::size_t ia = a.index();
    return t.push("mean", Tensor::scalar(s / n), {ia}, [ia, n](Tape& tp, std::size_t self) {
        const double g = tp.grad_of(self)[0] / n;
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t k = 0; k < ga->size(); ++k)
                (*ga)[k] += g;
    });
}

Var mean_rows(Var a)
{
    Tape& t = same_tape("mean_rows", {a});
    const Tensor& x = a.value();
    Tensor y = Tensor::matrix(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j)
            y[j] += x.at(i, j);
    const double n = static_cast<double>(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j)
        y[j] /= n;
    const std::size_t ia = a.index();
    return t.push("mean_rows", std::move(y), {ia}, [ia, n](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t i = 0; i < ga->rows(); ++i)
                for (std::size_t j = 0; j < ga->cols(); ++j)
                    ga->at(i, j) += g[j] / n;
    });
}

Var concat_cols(std::span<const Var> parts)
{
    if (parts.empty())
        throw ShapeError("op 'concat_cols': no operands");
    Tape& t = *parts.front().tape();
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    std::vector<std::size_t> parents;
    std::vector<std::size_t> offsets;
    for (const Var& p : parts) {
        if (p.tape() != &t)
            throw Error("op 'concat_cols': operands live on different tapes");
        if (p.rows() != rows)
            t.shape_error("concat_cols", "row count " + std::to_string(p.rows()) + " vs " + std::to_string(rows));
        offsets.push_back(cols);
        cols += p.cols();
        parents.push_back(p.index());
    }
    Tensor y = Tensor::matrix(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(v.row_span(i).begin(), v.row_span(i).end(), &y.at(i, offsets[k]));
    }
    auto ps = parents;
    return t.push("concat_cols", std::move(y), std::move(parents), [ps, offsets](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        for (std::size_t k = 0; k < ps.size(); ++k)
            if (Tensor* gp = tp.grad_slot(ps[k]))
                for (std::size_t i = 0; i < gp->rows(); ++i)
                    for (std::size_t j = 0; j < gp->cols(); ++j)
                        gp->at(i, j) += g.at(i, offsets[k] + j);
    });
}

Var concat_rows(std::span<const Var> parts)
{
    if (parts.empty())
        throw ShapeError("op 'concat_rows': no operands");
    Tape& t = *parts.front().tape();
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    std::vector<std::size_t> parents;
    std::vector<std::size_t> offsets;
    for (const Var& p : parts) {
        if (p.tape() != &t)
            throw Error("op 'concat_rows': operands live on different tapes");
        if (p.cols() != cols)
            t.shape_error("concat_rows", "column count " + std::to_string(p.cols()) + " vs " + std::to_string(cols));
        offsets.push_back(rows);
        rows += p.rows();
        parents.push_back(p.index());
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const Var& p : parts)
        data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    auto ps = parents;
    return t.push("concat_rows", Tensor({rows, cols}, std::move(data)), std::move(parents),
                  [ps, offsets, cols](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.grad_of(self);
                      for (std::size_t k = 0; k < ps.size(); ++k)
                          if (Tensor* gp = tp.grad_slot(ps[k])) {
                              const double* src = &g[offsets[k] * cols];
                              for (std::size_t q = 0; q < gp->size(); ++q)
                                  (*gp)[q] += src[q];
                          }
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end)
{
    Tape& t = same_tape("slice_rows", {a});
    if (begin >= end || end > a.rows())
        t.shape_error("slice_rows", "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                                        shape_string(a.shape()));
    const std::size_t cols = a.cols();
    const Tensor& x = a.value();
    std::vector<double> data(x.data().begin() + begin * cols, x.data().begin() + end * cols);
    const std::size_t ia = a.index();
    return t.push("slice_rows", Tensor({end - begin, cols}, std::move(data)), {ia},
                  [ia, begin, cols](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.grad_of(self);
                      if (Tensor* ga = tp.grad_slot(ia))
                          for (std::size_t q = 0; q < g.size(); ++q)
                              (*ga)[begin * cols + q] += g[q];
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end)
{
    Tape& t = same_tape("slice_cols", {a});
    if (begin >= end || end > a.cols())
        t.shape_error("slice_cols", "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                                        shape_string(a.shape()));
    const Tensor& x = a.value();
    Tensor y = Tensor::matrix(x.rows(), end - begin);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = begin; j < end; ++j)
            y.at(i, j - begin) = x.at(i, j);
    const std::size_t ia = a.index();
    return t.push("slice_cols", std::move(y), {ia}, [ia, begin](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    ga->at(i, begin + j) += g.at(i, j);
    });
}

Var gather_rows(Var a, std::span<const std::size_t> rows)
{
    Tape& t = same_tape("gather_rows", {a});
    if (rows.empty())
        t.shape_error("gather_rows", "empty row set");
    const Tensor& x = a.value();
    const std::size_t cols = x.cols();
    Tensor y = Tensor::matrix(rows.size(), cols);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= x.rows())
            t.shape_error("gather_rows", "row " + std::to_string(rows[k]) + " out of " + shape_string(x.shape()));
        std::copy(x.row_span(rows[k]).begin(), x.row_span(rows[k]).end(), &y.at(k, 0));
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    const std::size_t ia = a.index();
    return t.push("gather_rows", std::move(y), {ia}, [ia, idx](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t k = 0; k < idx.size(); ++k)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    ga->at(idx[k], j) += g.at(k, j);
    });
}

Var index_add_rows(Var acc, Var src, std::span<const std::size_t> rows)
{
    Tape& t = same_tape("index_add_rows", {acc, src});
    if (src.cols() != acc.cols() || src.rows() != rows.size())
        t.shape_error("index_add_rows", shape_string(src.shape()) + " into " + shape_string(acc.shape()) + " at " +
                                            std::to_string(rows.size()) + " rows");
    Tensor y = acc.value();
    const Tensor& s = src.value();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= y.rows())
            t.shape_error("index_add_rows", "row " + std::to_string(rows[k]) + " out of range");
        for (std::size_t j = 0; j < y.cols(); ++j)
            y.at(rows[k], j) += s.at(k, j);
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    const std::size_t iacc = acc.index(), isrc = src.index();
    return t.push("index_add_rows", std::move(y), {iacc, isrc}, [iacc, isrc, idx](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(iacc))
            for (std::size_t q = 0; q < g.size(); ++q)
                (*ga)[q] += g[q];
        if (Tensor* gs = tp.grad_slot(isrc))
            for (std::size_t k = 0; k < idx.size(); ++k)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    gs->at(k, j) += g.at(idx[k], j);
    });
}

Var scale_rows(Var x, Var w)
{
    Tape& t = same_tape("scale_rows", {x, w});
    if (w.cols() != 1 || w.rows() != x.rows())
        t.shape_error("scale_rows", shape_string(x.shape()) + " by " + shape_string(w.shape()));
    Tensor y = x.value();
    const Tensor& wv = w.value();
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j)
            y.at(i, j) = wv[i] * y.at(i, j);
    const std::size_t ix = x.index(), iw = w.index();
    return t.push("scale_rows", std::move(y), {ix, iw}, [ix, iw](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* gx = tp.grad_slot(ix)) {
            const Tensor& wv = tp.value(iw);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    gx->at(i, j) += wv[i] * g.at(i, j);
        }
        if (Tensor* gw = tp.grad_slot(iw)) {
            const Tensor& xv = tp.value(ix);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < g.cols(); ++j)
                    s += g.at(i, j) * xv.at(i, j);
                (*gw)[i] += s;
            }
        }
    });
}

Var pick_cols(Var a, std::span<const std::size_t> cols)
{
    Tape& t = same_tape("pick_cols", {a});
    if (cols.size() != a.rows())
        t.shape_error("pick_cols", std::to_string(cols.size()) + " indices for " + shape_string(a.shape()));
    Tensor y = Tensor::matrix(a.rows(), 1);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] >= a.cols())
            t.shape_error("pick_cols", "column " + std::to_string(cols[i]) + " out of range");
        y[i] = a.value().at(i, cols[i]);
    }
    std::vector<std::size_t> idx(cols.begin(), cols.end());
    const std::size_t ia = a.index();
    return t.push("pick_cols", std::move(y), {ia}, [ia, idx](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        if (Tensor* ga = tp.grad_slot(ia))
            for (std::size_t i = 0; i < idx.size(); ++i)
                ga->at(i, idx[i]) += g[i];
    });
}

}  // namespace ad

Tensor softmax_rows(const Tensor& logits)
{
    Tensor y(logits.shape());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j)
            mx = std::max(mx, logits.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            y.at(i, j) = std::exp(logits.at(i, j) - mx);
            s += y.at(i, j);
        }
        for (std::size_t j = 0; j < logits.cols(); ++j)
            y.at(i, j) /= s;
    }
    return y;
}

}  // namespace merit
