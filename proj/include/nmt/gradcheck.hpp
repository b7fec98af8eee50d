#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nmt/autodiff.hpp"

namespace nmt {

// The loss builder produced different values on two identical evaluations.
class DeterminismError : public Error {
public:
    using Error::Error;
};

struct GradCheckEntry {
    std::string name;
    std::size_t size = 0;
    // max over elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    double max_rel_error = 0.0;
    // The element that produced max_rel_error.
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    double max_rel_error() const;
    const GradCheckEntry& worst() const;
};

using LossBuilder = std::function<Var(Graph&)>;

// three_point: (f(x+h) - f(x-h)) / 2h
// five_point:  (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h
// ridders:     central differences at h, h/1.4, h/1.4^2, ... combined by polynomial
//              extrapolation to h -> 0 (Ridders' method); eps is the initial step.
enum class Stencil { three_point, five_point, ridders };

// Compares reverse-mode gradients against central finite differences with step eps.
// `build` must be a deterministic function of the parameter values.
GradCheckReport check_gradients(const LossBuilder& build, const std::vector<Parameter*>& params,
                                double eps = 1e-5, Stencil stencil = Stencil::three_point);

}  // namespace nmt
