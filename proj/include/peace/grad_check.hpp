#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "peace/rng.hpp"
#include "peace/tensor.hpp"

namespace peace {

// Max over sampled coordinates of |analytic - central_difference| / max(1e-8, |central_difference|).
// f must rebuild its graph from the current parameter data on every call.
inline double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                         double eps, std::size_t max_coords_per_param = 24,
                         std::uint64_t seed = 17) {
    check(eps >= 1e-6 && eps <= 1e-3, "grad_check: eps out of range");
    for (auto p : params) p.zero_grad();
    Tensor loss = f();
    check(std::isfinite(loss.item()), "grad_check: non-finite forward value");
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.push_back(const_cast<Tensor&>(p).grad());

    Rng rng(seed);
    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        const std::size_t n = p.data().size();
        std::vector<std::size_t> coords;
        if (n <= max_coords_per_param) {
            for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (std::size_t i = 0; i < max_coords_per_param; ++i)
                coords.push_back(static_cast<std::size_t>(rng.uniform_int(n)));
        }
        for (std::size_t ci : coords) {
            const double saved = p.data()[ci];
            double fp, fm;
            {
                NoGradGuard ng;
                p.data()[ci] = saved + eps;
                fp = f().item();
                p.data()[ci] = saved - eps;
                fm = f().item();
                p.data()[ci] = saved;
            }
            const double central = (fp - fm) / (2.0 * eps);
            const double rel = std::abs(analytic[pi][ci] - central) / std::max(1e-8, std::abs(central));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace peace
