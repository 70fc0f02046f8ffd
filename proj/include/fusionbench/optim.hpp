#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fusionbench/errors.hpp"
#include "fusionbench/params.hpp"
#include "fusionbench/tensor.hpp"

namespace fusionbench {

enum class OptimizerKind { SGD, Adam };

struct OptimizerSpec {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 0.001;  // SGD default is 0.01; see make_sgd/make_adam
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static OptimizerSpec sgd(double lr = 0.01) { return {OptimizerKind::SGD, lr, 0, 0, 0}; }
    static OptimizerSpec adam(double lr = 0.001) {
        return {OptimizerKind::Adam, lr, 0.9, 0.999, 1e-8};
    }
};

// Optimizer state per spec'd update rules. Adam keeps first/second moment
// buffers per parameter name; SGD keeps none.
template <typename T>
class Optimizer {
public:
    explicit Optimizer(OptimizerSpec spec) : spec_(spec) {
        if (spec_.learning_rate <= 0)
            throw DataError("optimizer: learning rate must be positive");
        if (spec_.kind == OptimizerKind::Adam &&
            (spec_.beta1 <= 0 || spec_.beta1 >= 1 || spec_.beta2 <= 0 || spec_.beta2 >= 1))
            throw DataError("optimizer: Adam betas must lie in (0,1)");
    }

    const OptimizerSpec& spec() const { return spec_; }
    std::uint64_t step_count() const { return step_count_; }

    void zero_grad(std::vector<Parameter<T>>& params) {
        for (auto& p : params) p.value.zero_grad();
    }

    // One update over every trainable parameter with a populated gradient.
    void step(std::vector<Parameter<T>>& params) {
        ++step_count_;
        for (auto& p : params) {
            if (!p.trainable || !p.value.has_grad()) continue;
            const std::vector<T>& g = p.value.grad();
            for (T gv : g)
                if (std::isnan(static_cast<double>(gv)))
                    throw NumericError("optimizer: NaN gradient in parameter " + p.name);
            std::vector<T>& w = p.value.data();
            if (spec_.kind == OptimizerKind::SGD) {
                const T lr = static_cast<T>(spec_.learning_rate);
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
            } else {
                adam_update(p.name, w, g);
            }
        }
    }

private:
    void adam_update(const std::string& name, std::vector<T>& w, const std::vector<T>& g) {
        auto& m = moment1_[name];
        auto& v = moment2_[name];
        if (m.size() != w.size()) m.assign(w.size(), T(0));
        if (v.size() != w.size()) v.assign(w.size(), T(0));
        const T b1 = static_cast<T>(spec_.beta1), b2 = static_cast<T>(spec_.beta2);
        const double t = static_cast<double>(step_count_);
        const T corr1 = static_cast<T>(1.0 - std::pow(spec_.beta1, t));
        const T corr2 = static_cast<T>(1.0 - std::pow(spec_.beta2, t));
        const T lr = static_cast<T>(spec_.learning_rate);
        const T eps = static_cast<T>(spec_.epsilon);
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / corr1;
            const T vhat = v[i] / corr2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }

    OptimizerSpec spec_;
    std::map<std::string, std::vector<T>> moment1_, moment2_;
    std::uint64_t step_count_ = 0;
};

}  // namespace fusionbench
