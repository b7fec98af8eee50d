#include <cmath>

#include "doctest.h"
#include "nmt/optim.hpp"
#include "nmt/ops.hpp"
#include "toy.hpp"

using namespace nmt;

namespace {

// f(theta) = ||theta||^2, gradient 2 theta.
void quadratic_grad(ParameterSet& set) {
    for (Parameter* p : set.list())
        for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] = 2.0 * p->value[i];
}

double sq_norm(const ParameterSet& set) {
    double s = 0;
    for (const Parameter* p : set.list())
        for (double v : p->value.values()) s += v * v;
    return s;
}

}  // namespace

TEST_CASE("clipping scales by c/g only above the threshold") {
    ParameterSet set;
    Parameter& a = set.add("a", Tensor({2}));
    Parameter& b = set.add("out.b", Tensor({1}));
    a.grad = Tensor({2}, {6.0, 0.0});
    b.grad = Tensor({1}, {8.0});
    CHECK(clip_gradients(set.list(), 5.0) == doctest::Approx(10.0));
    CHECK(a.grad[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(b.grad[0] == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(global_grad_norm(set.list()) <= 5.0 + 1e-9);

    a.grad = Tensor({2}, {0.6, 1.2});
    b.grad = Tensor({1}, {2.6832815729997477});
    const Tensor before = a.grad;
    clip_gradients(set.list(), 5.0);
    CHECK(a.grad == before);

    b.grad[0] = std::nan("");
    try {
        clip_gradients(set.list(), 5.0);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("out.b") != std::string::npos);
    }
}

TEST_CASE("adam first steps") {
    ParameterSet set;
    Parameter& p = set.add("p", Tensor({3}, {0.5, -0.2, 1.0}));
    Optimizer opt(OptimizerOptions::defaults(OptimizerKind::adam), set);
    const Tensor start = p.value;
    p.grad.fill(0.0);
    opt.step(set);
    CHECK(p.value == start);

    ParameterSet set2;
    Parameter& q = set2.add("q", Tensor({3}, {0.5, -0.2, 1.0}));
    auto o = OptimizerOptions::defaults(OptimizerKind::adam);
    o.lrate = 0.01;
    Optimizer opt2(o, set2);
    q.grad = Tensor({3}, {3.0, -0.5, 1e-3});
    const Tensor q0 = q.value;
    opt2.step(set2);
    for (std::size_t i = 0; i < 3; ++i) {
        const double g = std::abs(q.grad[i]);
        CHECK(std::abs(q0[i] - q.value[i]) == doctest::Approx(0.01 * g / (g + 1e-8)).epsilon(1e-9));
        CHECK((q0[i] - q.value[i]) * q.grad[i] > 0);
    }
}

TEST_CASE("adam minimizes theta squared at the reference learning rate") {
    ParameterSet set;
    Parameter& p = set.add("p", Tensor({1}, 1.0));
    auto o = OptimizerOptions::defaults(OptimizerKind::adam);
    o.lrate = 0.0004;
    Optimizer opt(o, set);
    std::size_t steps = 0;
    while (std::abs(p.value[0]) >= 1e-3 && steps < 20000) {
        quadratic_grad(set);
        opt.step(set);
        ++steps;
    }
    CHECK(std::abs(p.value[0]) < 1e-3);
    CHECK(steps <= 20000);
}

TEST_CASE("every optimizer decreases a quadratic") {
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::rmsprop, OptimizerKind::adadelta, OptimizerKind::adam}) {
        CAPTURE(to_string(kind));
        ParameterSet set;
        Rng rng(3);
        set.add("w", toy::random_tensor(rng, {4, 3}));
        set.add("b", toy::random_tensor(rng, {3}), ParamKind::bias);
        auto o = OptimizerOptions::defaults(kind);
        if (kind == OptimizerKind::sgd || kind == OptimizerKind::adam) o.lrate = 1e-2;
        Optimizer opt(o, set);
        double prev = sq_norm(set);
        for (int i = 0; i < 100; ++i) {
            quadratic_grad(set);
            opt.step(set);
            const double now = sq_norm(set);
            CHECK(now < prev);
            prev = now;
        }
    }
}

TEST_CASE("optimizer updates are deterministic and state roundtrips") {
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::rmsprop, OptimizerKind::adadelta, OptimizerKind::adam}) {
        CAPTURE(to_string(kind));
        Rng rng(4);
        const Tensor w0 = toy::random_tensor(rng, {3, 3});
        ParameterSet a, b;
        a.add("w", w0);
        b.add("w", w0);
        Optimizer oa(OptimizerOptions::defaults(kind), a);
        for (int i = 0; i < 5; ++i) {
            quadratic_grad(a);
            oa.step(a);
        }
        // Carry the state over to a fresh optimizer mid-run.
        b.get("w").value = a.get("w").value;
        Optimizer ob(OptimizerOptions::defaults(kind), b);
        ob.load_state(oa.steps(), oa.state());
        CHECK(ob.state() == oa.state());
        for (int i = 0; i < 5; ++i) {
            quadratic_grad(a);
            oa.step(a);
            quadratic_grad(b);
            ob.step(b);
        }
        CHECK(a.get("w").value == b.get("w").value);
        CHECK(oa.steps() == 10);
        CHECK(ob.steps() == 10);
    }
}

TEST_CASE("non-finite updates raise NumericError") {
    ParameterSet set;
    Parameter& p = set.add("p", Tensor({1}, 1.0));
    Optimizer opt(OptimizerOptions::defaults(OptimizerKind::sgd), set);
    p.grad[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(opt.step(set), NumericError);
}

TEST_CASE("gradient noise") {
    CHECK(gradient_noise_variance(1, 0.01, 0.55) > gradient_noise_variance(100, 0.01, 0.55));
    CHECK(gradient_noise_variance(0, 0.01, 0.55) == doctest::Approx(0.01));

    ParameterSet set;
    Parameter& p = set.add("p", Tensor({1000, 1000}));
    Rng rng(5);
    add_gradient_noise(set.list(), OptimizerKind::adam, 3, 0.0, 0.55, rng);
    for (double g : p.grad.values()) CHECK(g == 0.0);

    add_gradient_noise(set.list(), OptimizerKind::adam, 10, 0.01, 0.55, rng);
    double mean = 0, var = 0;
    for (double g : p.grad.values()) mean += g;
    mean /= 1e6;
    for (double g : p.grad.values()) var += (g - mean) * (g - mean);
    var /= 1e6 - 1;
    CHECK(var == doctest::Approx(0.01 / std::pow(11.0, 0.55)).epsilon(0.05));

    CHECK_THROWS_AS(add_gradient_noise(set.list(), OptimizerKind::sgd, 1, 0.01, 0.55, rng), ConfigError);
}

TEST_CASE("l2 penalty covers weights only") {
    ParameterSet set;
    set.add("w", Tensor({2, 2}, 1.0));
    set.add("b", Tensor({2}, 3.0), ParamKind::bias);
    set.add("g", Tensor({2}, 3.0), ParamKind::gain);
    CHECK(l2_penalty_value(set, 1e-5) == doctest::Approx(4e-5).epsilon(1e-12));
    CHECK(l2_penalty_value(set, 0.0) == 0.0);
    Graph g;
    Var pen = l2_penalty(g, set, 1e-5);
    CHECK(pen.value()[0] == doctest::Approx(4e-5).epsilon(1e-12));
    g.backward(pen);
    for (double v : set.get("w").grad.values()) CHECK(v == doctest::Approx(2e-5).epsilon(1e-12));
    for (double v : set.get("b").grad.values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(l2_penalty_value(set, -1.0), ConfigError);
}

TEST_CASE("optimizer names and defaults") {
    CHECK(parse_optimizer("adadelta") == OptimizerKind::adadelta);
    CHECK_THROWS_AS(parse_optimizer("lion"), ConfigError);
    const auto a = OptimizerOptions::defaults(OptimizerKind::adam);
    CHECK(a.beta1 == 0.9);
    CHECK(a.beta2 == 0.999);
    CHECK(a.adam_eps == 1e-8);
    const auto r = OptimizerOptions::defaults(OptimizerKind::rmsprop);
    CHECK(r.rho == 0.95);
    CHECK(r.eps == 1e-6);
}
