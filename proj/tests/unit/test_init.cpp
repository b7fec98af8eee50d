#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "nmt/init.hpp"
#include "nmt/model.hpp"
#include "toy.hpp"

using namespace nmt;

namespace {

double sample_variance(const Tensor& t) {
    double mean = 0;
    for (double v : t.values()) mean += v;
    mean /= static_cast<double>(t.size());
    double var = 0;
    for (double v : t.values()) var += (v - mean) * (v - mean);
    return var / static_cast<double>(t.size() - 1);
}

Eigen::MatrixXd as_matrix(const Tensor& t) {
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.at(i, j);
    return m;
}

}  // namespace

TEST_CASE("rng is reproducible and splittable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42);
    CHECK(c.split(1).next_u64() != c.split(2).next_u64());
    CHECK(c.counter() == 0);
    Rng resumed(42, a.counter());
    CHECK(resumed.next_u64() == a.next_u64());
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("orthogonal init is orthonormal") {
    Rng rng(1);
    const Tensor q = init_weight(InitMethod::orthogonal, {4, 4}, rng);
    const Eigen::MatrixXd Q = as_matrix(q);
    CHECK((Q.transpose() * Q - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
    const auto sv = Eigen::JacobiSVD<Eigen::MatrixXd>(Q).singularValues();
    for (Eigen::Index i = 0; i < sv.size(); ++i) CHECK(std::abs(sv(i) - 1.0) < 1e-8);

    // Tall: orthonormal columns. Wide: orthonormal rows.
    const Eigen::MatrixXd T = as_matrix(init_weight(InitMethod::orthogonal, {6, 3}, rng));
    CHECK((T.transpose() * T - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd W = as_matrix(init_weight(InitMethod::orthogonal, {3, 6}, rng));
    CHECK((W * W.transpose() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);

    CHECK_THROWS_AS(init_weight(InitMethod::orthogonal, {4}, rng), Error);
}

TEST_CASE("xavier and he sample variances") {
    Rng rng(7);
    const Tensor x = init_weight(InitMethod::xavier, {100, 100}, rng);
    CHECK(sample_variance(x) == doctest::Approx(0.01).epsilon(0.2));
    const double bound = std::sqrt(6.0 / 200.0);
    for (double v : x.values()) CHECK(std::abs(v) <= bound);

    const Tensor h = init_weight(InitMethod::he, {100, 50}, rng);
    CHECK(sample_variance(h) == doctest::Approx(0.02).epsilon(0.2));

    const Tensor n = init_weight(InitMethod::normal, {100, 100}, rng);
    CHECK(std::sqrt(sample_variance(n)) == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("init is a pure function of method, shape and seed") {
    for (auto m : {InitMethod::xavier, InitMethod::he, InitMethod::orthogonal, InitMethod::normal}) {
        Rng a(9), b(9);
        CHECK(init_weight(m, {5, 7}, a) == init_weight(m, {5, 7}, b));
    }
}

TEST_CASE("zero extents and unknown names are rejected") {
    Rng rng(1);
    CHECK_THROWS(init_weight(InitMethod::xavier, {0, 3}, rng));
    CHECK(parse_init_method("he") == InitMethod::he);
    CHECK_THROWS_AS(parse_init_method("glorot"), ConfigError);
}

TEST_CASE("model biases start at exactly zero and gains at one") {
    ModelOptions o;
    o.embedding_dim = 4;
    o.rnn_dim = 5;
    o.layer_norm = true;
    for (auto wi : {InitMethod::xavier, InitMethod::he, InitMethod::normal}) {
        o.weight_init = wi;
        NmtModel m(o, toy::vocab(8), toy::vocab(9), 3);
        for (const Parameter* p : m.params().list()) {
            if (p->kind == ParamKind::bias)
                for (double v : p->value.values()) CHECK(v == 0.0);
            if (p->kind == ParamKind::gain)
                for (double v : p->value.values()) CHECK(v == 1.0);
        }
    }
}

TEST_CASE("recurrent matrices default to orthogonal") {
    ModelOptions o;
    o.embedding_dim = 4;
    o.rnn_dim = 5;
    NmtModel m(o, toy::vocab(8), toy::vocab(9), 3);
    const Eigen::MatrixXd U = as_matrix(m.params().get("enc.fwd.U").value);
    CHECK((U.transpose() * U - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);

    o.recurrent_init = InitMethod::normal;
    NmtModel n(o, toy::vocab(8), toy::vocab(9), 3);
    const Eigen::MatrixXd V = as_matrix(n.params().get("enc.fwd.U").value);
    CHECK((V.transpose() * V - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() > 0.5);
}
