#include "nmt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace nmt {

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
}

const GradCheckEntry& GradCheckReport::worst() const {
    if (entries.empty()) throw Error("gradient check report is empty");
    return *std::max_element(entries.begin(), entries.end(),
                             [](const auto& a, const auto& b) { return a.max_rel_error < b.max_rel_error; });
}

namespace {

double eval_loss(const LossBuilder& build) {
    Graph g(false);
    Var loss = build(g);
    const Tensor& v = loss.value();
    if (v.size() != 1) throw ShapeError("check_gradients: loss must be a scalar, got " + shape_str(v.shape()));
    return v[0];
}

template <class F>
double ridders(F&& f, double x, double h) {
    constexpr int kTab = 10;
    constexpr double kCon = 1.4, kCon2 = kCon * kCon, kSafe = 2.0;
    double a[kTab][kTab];
    double err = std::numeric_limits<double>::max();
    double hh = h;
    a[0][0] = (f(x + hh) - f(x - hh)) / (2.0 * hh);
    double ans = a[0][0];
    for (int i = 1; i < kTab; ++i) {
        hh /= kCon;
        a[0][i] = (f(x + hh) - f(x - hh)) / (2.0 * hh);
        double fac = kCon2;
        for (int j = 1; j <= i; ++j) {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= kCon2;
            const double errt = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
            if (errt <= err) {
                err = errt;
                ans = a[j][i];
            }
        }
        if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
    }
    return ans;
}

}  // namespace

GradCheckReport check_gradients(const LossBuilder& build, const std::vector<Parameter*>& params, double eps,
                                Stencil stencil) {
    if (!(eps > 0.0)) throw Error("check_gradients: eps must be > 0");
    const double first = eval_loss(build);
    const double second = eval_loss(build);
    if (first != second && !(std::isnan(first) && std::isnan(second)))
        throw DeterminismError("check_gradients: two forward passes disagree (" + std::to_string(first) +
                               " vs " + std::to_string(second) + "); freeze random masks");

    std::unordered_set<const Parameter*> seen;
    for (Parameter* p : params) p->zero_grad();
    {
        Graph g;
        Var loss = build(g);
        g.backward(loss);
    }

    GradCheckReport report;
    for (Parameter* p : params) {
        if (!seen.insert(p).second) continue;
        GradCheckEntry entry{p->name, p->value.size()};
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value[i];
            auto at = [&](double x) {
                p->value[i] = x;
                return eval_loss(build);
            };
            double numeric;
            if (stencil == Stencil::three_point) {
                const double up = orig + eps;
                const double down = orig - eps;
                // Divide by the step actually taken in floating point.
                numeric = (at(up) - at(down)) / (up - down);
            } else if (stencil == Stencil::ridders) {
                numeric = ridders(at, orig, eps);
            } else {
                const double f2 = at(orig + 2 * eps), f1 = at(orig + eps);
                const double b1 = at(orig - eps), b2 = at(orig - 2 * eps);
                numeric = (8.0 * (f1 - b1) - (f2 - b2)) / (12.0 * eps);
            }
            p->value[i] = orig;
            const double analytic = p->grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > entry.max_rel_error || i == 0) {
                entry.max_rel_error = rel;
                entry.worst_index = i;
                entry.worst_analytic = analytic;
                entry.worst_numeric = numeric;
            }
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace nmt
