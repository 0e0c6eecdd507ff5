#pragma once

// Shared test helpers: finite-difference gradient oracle and friends.
// Everything here is independent of the autodiff path it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rtb/params.hpp"
#include "rtb/rng.hpp"

namespace testsupport {

inline double rel_error(double a, double b) {
    const double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
    return std::fabs(a - b) / scale;
}

struct GradCheckResult {
    // Max relative error over coordinates whose gradient magnitude clears the
    // absolute floor; below that floor central differences are roundoff noise
    // and the absolute deviation is what gets checked.
    double max_rel_error = 0.0;
    std::string worst_coord;
    std::size_t checked = 0;
    std::size_t failures = 0;  // |a-b| > atol + rtol * max(|a|, |b|)

    bool ok(double rtol = 1e-4) const { return failures == 0 && max_rel_error < rtol; }
};

// Central finite differences (h = 1e-5) on `loss_value` versus the analytic
// gradients already accumulated in `params` by the caller. Checks `coords`
// random coordinates drawn across all parameters.
inline GradCheckResult gradient_check(
    rtb::nn::ParamSet& params,
    const std::function<double()>& loss_value,
    std::size_t coords,
    rtb::Rng& rng,
    double h = 1e-5,
    double rtol = 1e-4,
    double atol = 1e-7) {
    struct Coord {
        std::string path;
        std::size_t idx;
    };
    std::vector<Coord> all;
    params.for_each([&](const std::string& path, rtb::nn::Tensor& v, rtb::nn::Tensor&) {
        for (std::size_t i = 0; i < v.size(); ++i) all.push_back({path, i});
    });

    GradCheckResult res;
    for (std::size_t k = 0; k < coords && !all.empty(); ++k) {
        const Coord& c = all[static_cast<std::size_t>(rng.uniform_int(all.size()))];
        double& w = params.value(c.path)[c.idx];
        const double saved = w;
        w = saved + h;
        const double up = loss_value();
        w = saved - h;
        const double down = loss_value();
        w = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = params.grad(c.path)[c.idx];
        const double mag = std::max(std::fabs(analytic), std::fabs(numeric));
        const double diff = std::fabs(analytic - numeric);
        if (diff > atol + rtol * mag) ++res.failures;
        if (mag > atol / rtol) {  // relative error is meaningful here
            const double err = diff / mag;
            if (err > res.max_rel_error) {
                res.max_rel_error = err;
                res.worst_coord = c.path + "[" + std::to_string(c.idx) + "]";
            }
        }
        ++res.checked;
    }
    return res;
}

}  // namespace testsupport
