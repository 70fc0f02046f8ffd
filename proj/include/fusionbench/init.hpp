#pragma once

#include <cmath>

#include "fusionbench/rng.hpp"
#include "fusionbench/tensor.hpp"

namespace fusionbench {

// Fan counts: dense kernels are [in,out]; conv kernels [kh,kw,C,F] use the
// receptive-field convention fan_in = kh*kw*C, fan_out = kh*kw*F.
inline std::pair<std::size_t, std::size_t> fan_in_out(const Shape& shape) {
    if (shape.size() == 0) return {1, 1};
    if (shape.size() == 1) return {shape[0], shape[0]};
    if (shape.size() == 2) return {shape[0], shape[1]};
    std::size_t receptive = 1;
    for (std::size_t i = 0; i + 2 < shape.size(); ++i) receptive *= shape[i];
    return {receptive * shape[shape.size() - 2], receptive * shape[shape.size() - 1]};
}

// Glorot/Xavier uniform: values in +-sqrt(6/(fan_in+fan_out)).
template <typename T>
Tensor<T> glorot_init(const Shape& shape, Rng& rng) {
    if (shape.empty()) throw ShapeError("glorot_init: empty shape");
    auto [fan_in, fan_out] = fan_in_out(shape);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>((2.0 * rng.next_double() - 1.0) * limit);
    return t;
}

template <typename T>
Tensor<T> glorot_init(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    return glorot_init<T>(shape, rng);
}

}  // namespace fusionbench
