#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nmt/autodiff.hpp"
#include "nmt/random.hpp"

namespace nmt {

enum class OptimizerKind { sgd, rmsprop, adadelta, adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);
double default_lrate(OptimizerKind kind);

struct OptimizerOptions {
    OptimizerKind kind = OptimizerKind::adam;
    double lrate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double rho = 0.95;
    double eps = 1e-6;  // rmsprop / adadelta

    static OptimizerOptions defaults(OptimizerKind kind);
};

// Per-parameter slot state plus a global step counter. Slots are keyed by parameter name so
// they can be written into and restored from snapshots.
class Optimizer {
public:
    Optimizer(OptimizerOptions options, const ParameterSet& params);

    // Applies one update using each parameter's grad. Throws NumericError on a non-finite update.
    void step(ParameterSet& params);

    std::uint64_t steps() const { return steps_; }
    const OptimizerOptions& options() const { return options_; }

    // Slots flattened as "<slot>/<param name>" -> tensor.
    std::map<std::string, Tensor> state() const;
    void load_state(std::uint64_t steps, const std::map<std::string, Tensor>& state);

private:
    std::vector<std::string> slot_names() const;

    OptimizerOptions options_;
    std::uint64_t steps_ = 0;
    std::map<std::string, std::vector<Tensor>> slots_;
};

// L2 norm over the concatenation of all gradients.
double global_grad_norm(const std::vector<Parameter*>& params);

// Scales all gradients by c/g when the joint norm g exceeds c. Returns g. Throws
// NumericError naming the first parameter with a non-finite gradient.
double clip_gradients(const std::vector<Parameter*>& params, double threshold);

// sigma_t^2 = eta / (1 + t)^gamma
double gradient_noise_variance(std::uint64_t t, double eta, double gamma);
// Adds N(0, sigma_t^2) to every gradient element. Only defined for adam.
void add_gradient_noise(const std::vector<Parameter*>& params, OptimizerKind kind, std::uint64_t t, double eta,
                        double gamma, Rng& rng);

// decay_c * sum of squares over weight parameters (biases and gains excluded).
Var l2_penalty(Graph& g, ParameterSet& params, double decay_c);
double l2_penalty_value(const ParameterSet& params, double decay_c);

}  // namespace nmt
