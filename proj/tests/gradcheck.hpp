#pragma once

// Central finite-difference oracle for gradient checks. Independent of the
// tape's backward path: perturbed losses are computed by fresh forward
// passes only.

#include <cmath>
#include <functional>
#include <vector>

#include "fusionbench/autograd.hpp"
#include "fusionbench/rng.hpp"
#include "fusionbench/tensor.hpp"

namespace fusionbench::testing {

using BuildFn =
    std::function<Val<double>(Tape<double>&, const std::vector<Val<double>>&)>;

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
    Tensor<double> t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = lo + (hi - lo) * rng.next_double();
    return t;
}

// Max relative error between tape gradients and central finite differences
// (h = 1e-5) of the scalar projection sum(c * f(inputs)), taken w.r.t.
// inputs[wrt].
inline double gradcheck_max_rel_error(const BuildFn& f, std::vector<Tensor<double>> inputs,
                                      std::size_t wrt, Rng& rng, double h = 1e-5) {
    // One forward to learn the output shape, then a fixed random projection.
    Tensor<double> proj;
    {
        Tape<double> tape;
        std::vector<Val<double>> leaves;
        for (const auto& in : inputs) leaves.push_back(tape.leaf(in, false));
        Val<double> out = f(tape, leaves);
        proj = random_tensor(out.value().shape(), rng);
    }

    auto project = [&](const std::vector<Tensor<double>>& ins) {
        Tape<double> tape;
        std::vector<Val<double>> leaves;
        for (const auto& in : ins) leaves.push_back(tape.leaf(in, false));
        Val<double> out = f(tape, leaves);
        const Tensor<double>& v = out.value();
        double s = 0.0;
        for (std::size_t i = 0; i < v.numel(); ++i) s += proj[i] * v[i];
        return s;
    };

    // Analytic gradient via the tape.
    std::vector<double> analytic;
    {
        Tape<double> tape;
        std::vector<Val<double>> leaves;
        for (std::size_t i = 0; i < inputs.size(); ++i)
            leaves.push_back(tape.leaf(inputs[i], i == wrt));
        Val<double> out = f(tape, leaves);
        Val<double> loss = tape.sum(tape.mul(out, tape.leaf(proj)));
        tape.backward(loss);
        analytic = leaves[wrt].grad();
    }

    double max_rel = 0.0;
    for (std::size_t j = 0; j < inputs[wrt].numel(); ++j) {
        const double orig = inputs[wrt][j];
        inputs[wrt][j] = orig + h;
        const double lp = project(inputs);
        inputs[wrt][j] = orig - h;
        const double lm = project(inputs);
        inputs[wrt][j] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[j]), 1e-6});
        max_rel = std::max(max_rel, std::abs(fd - analytic[j]) / denom);
    }
    return max_rel;
}

}  // namespace fusionbench::testing
