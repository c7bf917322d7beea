#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fasw/autograd.hpp"
#include "fasw/nn.hpp"
#include "fasw/tensor.hpp"

namespace fasw::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.values()) v = u(rng);
    return t;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Compares analytic gradients of `loss` w.r.t. every entry of `params`
// against central differences. The relative error of each entry is
// |a - n| / max(1e-3, |a| + |n|) so entries with a vanishing gradient are
// judged on absolute error.
inline GradCheck check_gradients(const std::function<ad::Var()>& loss, const std::vector<ad::Var>& params,
                                 double h = 1e-6) {
    for (auto p : params) p.zero_grad();
    ad::backward(loss());
    std::vector<Tensor> analytic;
    for (const auto& p : params) analytic.push_back(p.grad());

    GradCheck out;
    for (std::size_t k = 0; k < params.size(); ++k) {
        ad::Var p = params[k];
        Tensor& value = p.mutable_value();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + h;
            double up;
            {
                ad::NoGradGuard g;
                up = loss().item();
            }
            value[i] = saved - h;
            double down;
            {
                ad::NoGradGuard g;
                down = loss().item();
            }
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k][i];
            const double rel = std::fabs(a - numeric) / std::max(1e-3, std::fabs(a) + std::fabs(numeric));
            out.max_rel_error = std::max(out.max_rel_error, rel);
            ++out.checked;
        }
    }
    return out;
}

inline std::vector<ad::Var> vars_of(const nn::ParamSet& set) {
    std::vector<ad::Var> out;
    for (const auto& [_, v] : set.entries()) out.push_back(v);
    return out;
}

}  // namespace fasw::testing
