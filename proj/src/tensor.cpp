#include "merit/tensor.hpp"

#include "merit/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace merit {

std::string shape_string(const Shape& shape)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_volume(const Shape& shape)
{
    std::size_t volume = 1;
    for (auto extent : shape)
        volume *= extent;
    return volume;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape))
{
    for (auto extent : shape_)
        if (extent == 0)
            throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
    data_.assign(shape_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    for (auto extent : shape_)
        if (extent == 0)
            throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
    if (shape_volume(shape_) != data_.size())
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill)
{
    return Tensor({rows, cols}, fill);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows)
{
    const std::size_t n_rows = rows.size();
    const std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(n_rows * n_cols);
    for (const auto& r : rows) {
        if (r.size() != n_cols)
            throw ShapeError("ragged initializer for tensor");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({n_rows, n_cols}, std::move(data));
}

Tensor Tensor::row(std::span<const double> values)
{
    return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::scalar(double value)
{
    return Tensor({1, 1}, std::vector<double>{value});
}

std::size_t Tensor::rows() const noexcept
{
    if (shape_.size() < 2)
        return shape_.empty() ? 0 : 1;
    return shape_volume(shape_) / shape_.back();
}

std::size_t Tensor::cols() const noexcept
{
    return shape_.empty() ? 0 : shape_.back();
}

double Tensor::item() const
{
    if (data_.size() != 1)
        throw ShapeError("item() requires a single-element tensor, got " + shape_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept
{
    std::fill(data_.begin(), data_.end(), value);
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* out = &c.at(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const double s = a.at(i, p);
            const double* brow = &b.at(p, 0);
            for (std::size_t j = 0; j < n; ++j)
                out[j] += s * brow[j];
        }
    }
    return c;
}

Tensor transpose(const Tensor& a)
{
    Tensor t = Tensor::matrix(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            t.at(j, i) = a.at(i, j);
    return t;
}

}  // namespace merit
