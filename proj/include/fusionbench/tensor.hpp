#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fusionbench/errors.hpp"

namespace fusionbench {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Dense n-dimensional array, row-major, with an optional same-sized
// gradient buffer. The engine's single value type.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {
        check_shape();
    }

    Tensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != shape_numel(shape_))
            throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    Tensor(Shape shape, T fill)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
        check_shape();
    }

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    bool has_grad() const { return !grad_.empty(); }
    std::vector<T>& grad() {
        if (grad_.empty()) grad_.assign(data_.size(), T(0));
        return grad_;
    }
    const std::vector<T>& grad() const { return grad_; }
    void zero_grad() { grad_.assign(data_.size(), T(0)); }
    void drop_grad() { grad_.clear(); }

    // Same data, new shape; element count must match.
    Tensor reshaped(Shape new_shape) const {
        if (shape_numel(new_shape) != data_.size())
            throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " +
                             shape_str(new_shape));
        Tensor out;
        out.shape_ = std::move(new_shape);
        out.data_ = data_;
        return out;
    }

    bool contains_nan() const {
        for (T v : data_)
            if (std::isnan(static_cast<double>(v))) return true;
        return false;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

private:
    void check_shape() const {
        for (std::size_t d : shape_)
            if (d == 0) throw ShapeError("tensor: zero dimension in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
    std::vector<T> grad_;
};

}  // namespace fusionbench
