#pragma once

// Central finite-difference oracle used by the gradient tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "infmem/autodiff.hpp"

namespace infmem::testing {

struct GradCheckResult {
    bool ok = true;
    double worst_rel = 0.0;
    std::size_t checked = 0;
    std::string report;
};

inline bool grad_close(double analytic, double numeric, double rel_tol, double abs_tol) {
    const double diff = std::abs(analytic - numeric);
    return diff <= abs_tol || diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

// Compares backward() of loss_fn() against central differences for every entry of every
// named leaf. loss_fn must rebuild its graph from the leaves on every call.
inline GradCheckResult check_gradients(const std::function<Var()>& loss_fn,
                                       std::vector<std::pair<std::string, Var>> leaves, double h = 1e-5,
                                       double rel_tol = 1e-4, double abs_tol = 1e-7) {
    for (auto& [name, v] : leaves) {
        v.zero_grad();
    }
    backward(loss_fn());
    GradCheckResult res;
    std::ostringstream os;
    for (auto& [name, v] : leaves) {
        const Tensor analytic = v.grad().size() ? v.grad() : Tensor(v.shape(), 0.0);
        Tensor& x = v.mutable_value();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double saved = x[i];
            x[i] = saved + h;
            const double up = loss_fn().value().item();
            x[i] = saved - h;
            const double down = loss_fn().value().item();
            x[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            ++res.checked;
            const double diff = std::abs(analytic[i] - numeric);
            const double denom = std::max(std::abs(analytic[i]), std::abs(numeric));
            if (denom > abs_tol) {
                res.worst_rel = std::max(res.worst_rel, diff / denom);
            }
            if (!grad_close(analytic[i], numeric, rel_tol, abs_tol)) {
                res.ok = false;
                os << name << "[" << i << "]: analytic " << analytic[i] << " numeric " << numeric << "\n";
            }
        }
    }
    res.report = os.str();
    return res;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

}  // namespace infmem::testing
