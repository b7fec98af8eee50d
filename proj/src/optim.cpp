#include "nmt/optim.hpp"

#include <cmath>

#include "nmt/ops.hpp"

namespace nmt {

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "rmsprop") return OptimizerKind::rmsprop;
    if (name == "adadelta") return OptimizerKind::adadelta;
    if (name == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + name + "' (expected sgd, rmsprop, adadelta, adam)");
}

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::rmsprop: return "rmsprop";
        case OptimizerKind::adadelta: return "adadelta";
        case OptimizerKind::adam: return "adam";
    }
    return "?";
}

double default_lrate(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd: return 0.01;
        case OptimizerKind::rmsprop: return 0.001;
        case OptimizerKind::adadelta: return 1.0;
        case OptimizerKind::adam: return 0.001;
    }
    return 0.001;
}

OptimizerOptions OptimizerOptions::defaults(OptimizerKind kind) {
    OptimizerOptions o;
    o.kind = kind;
    o.lrate = default_lrate(kind);
    return o;
}

std::vector<std::string> Optimizer::slot_names() const {
    switch (options_.kind) {
        case OptimizerKind::sgd: return {};
        case OptimizerKind::rmsprop: return {"rmsprop.acc"};
        case OptimizerKind::adadelta: return {"adadelta.acc_grad", "adadelta.acc_delta"};
        case OptimizerKind::adam: return {"adam.m", "adam.v"};
    }
    return {};
}

Optimizer::Optimizer(OptimizerOptions options, const ParameterSet& params) : options_(options) {
    if (!(options_.lrate > 0.0)) throw ConfigError("learning rate must be > 0");
    const auto n_slots = slot_names().size();
    for (const Parameter* p : params.list()) slots_[p->name] = std::vector<Tensor>(n_slots, Tensor(p->value.shape()));
}

void Optimizer::step(ParameterSet& params) {
    ++steps_;
    const double lr = options_.lrate;
    const double t = static_cast<double>(steps_);
    for (Parameter* p : params.list()) {
        auto it = slots_.find(p->name);
        if (it == slots_.end()) throw ConfigError("optimizer has no state for parameter '" + p->name + "'");
        auto& slots = it->second;
        auto& theta = p->value.storage();
        const auto& grad = p->grad.storage();
        const std::size_t n = theta.size();
        bool finite = true;

        switch (options_.kind) {
            case OptimizerKind::sgd:
                for (std::size_t i = 0; i < n; ++i) {
                    theta[i] -= lr * grad[i];
                    finite = finite && std::isfinite(theta[i]);
                }
                break;
            case OptimizerKind::rmsprop: {
                auto& acc = slots[0].storage();
                const double rho = options_.rho, eps = options_.eps;
                for (std::size_t i = 0; i < n; ++i) {
                    acc[i] = rho * acc[i] + (1.0 - rho) * grad[i] * grad[i];
                    theta[i] -= lr * grad[i] / std::sqrt(acc[i] + eps);
                    finite = finite && std::isfinite(theta[i]);
                }
                break;
            }
            case OptimizerKind::adadelta: {
                auto& acc_g = slots[0].storage();
                auto& acc_d = slots[1].storage();
                const double rho = options_.rho, eps = options_.eps;
                for (std::size_t i = 0; i < n; ++i) {
                    acc_g[i] = rho * acc_g[i] + (1.0 - rho) * grad[i] * grad[i];
                    const double delta = -std::sqrt(acc_d[i] + eps) / std::sqrt(acc_g[i] + eps) * grad[i];
                    acc_d[i] = rho * acc_d[i] + (1.0 - rho) * delta * delta;
                    theta[i] += lr * delta;
                    finite = finite && std::isfinite(theta[i]);
                }
                break;
            }
            case OptimizerKind::adam: {
                auto& m = slots[0].storage();
                auto& v = slots[1].storage();
                const double b1 = options_.beta1, b2 = options_.beta2, eps = options_.adam_eps;
                const double c1 = 1.0 - std::pow(b1, t);
                const double c2 = 1.0 - std::pow(b2, t);
                for (std::size_t i = 0; i < n; ++i) {
                    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                    const double m_hat = m[i] / c1;
                    const double v_hat = v[i] / c2;
                    theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
                    finite = finite && std::isfinite(theta[i]);
                }
                break;
            }
        }
        if (!finite) throw NumericError("optimizer produced a non-finite value for parameter '" + p->name + "'");
    }
}

std::map<std::string, Tensor> Optimizer::state() const {
    std::map<std::string, Tensor> out;
    const auto names = slot_names();
    for (const auto& [param, slots] : slots_)
        for (std::size_t k = 0; k < names.size(); ++k) out.emplace(names[k] + "/" + param, slots[k]);
    return out;
}

void Optimizer::load_state(std::uint64_t steps, const std::map<std::string, Tensor>& state) {
    const auto names = slot_names();
    for (auto& [param, slots] : slots_) {
        for (std::size_t k = 0; k < names.size(); ++k) {
            auto it = state.find(names[k] + "/" + param);
            if (it == state.end()) throw DataError("optimizer state is missing slot '" + names[k] + "/" + param + "'");
            if (it->second.shape() != slots[k].shape())
                throw DataError("optimizer slot '" + it->first + "' has shape " + shape_str(it->second.shape()) +
                                ", expected " + shape_str(slots[k].shape()));
            slots[k] = it->second;
        }
    }
    steps_ = steps;
}

double global_grad_norm(const std::vector<Parameter*>& params) {
    double sq = 0.0;
    for (const Parameter* p : params)
        for (double g : p->grad.values()) sq += g * g;
    return std::sqrt(sq);
}

double clip_gradients(const std::vector<Parameter*>& params, double threshold) {
    if (!(threshold > 0.0)) throw ConfigError("gradient clipping threshold must be > 0");
    for (const Parameter* p : params)
        for (double g : p->grad.values())
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p->name + "'");
    const double norm = global_grad_norm(params);
    if (norm > threshold) {
        const double s = threshold / norm;
        for (Parameter* p : params) p->grad.scale_(s);
    }
    return norm;
}

double gradient_noise_variance(std::uint64_t t, double eta, double gamma) {
    return eta / std::pow(1.0 + static_cast<double>(t), gamma);
}

void add_gradient_noise(const std::vector<Parameter*>& params, OptimizerKind kind, std::uint64_t t, double eta,
                        double gamma, Rng& rng) {
    if (kind != OptimizerKind::adam)
        throw ConfigError("gradient noise is only supported with the adam optimizer, not " + to_string(kind));
    if (eta == 0.0) return;
    const double sigma = std::sqrt(gradient_noise_variance(t, eta, gamma));
    for (Parameter* p : params)
        for (auto& g : p->grad.values()) g += rng.normal(0.0, sigma);
}

Var l2_penalty(Graph& g, ParameterSet& params, double decay_c) {
    if (decay_c < 0.0) throw ConfigError("decay_c must be >= 0");
    Var total = g.constant(Tensor::scalar(0.0));
    if (decay_c == 0.0) return total;
    for (Parameter* p : params.list()) {
        if (p->kind != ParamKind::weight) continue;
        Var w = g.param(*p);
        total = ops::add(total, ops::sum(ops::mul(w, w)));
    }
    return ops::scale(total, decay_c);
}

double l2_penalty_value(const ParameterSet& params, double decay_c) {
    if (decay_c < 0.0) throw ConfigError("decay_c must be >= 0");
    double total = 0.0;
    for (const Parameter* p : params.list()) {
        if (p->kind != ParamKind::weight) continue;
        for (double v : p->value.values()) total += v * v;
    }
    return decay_c * total;
}

}  // namespace nmt
