#include "nmt/init.hpp"

#include <Eigen/QR>
#include <cmath>

namespace nmt {

InitMethod parse_init_method(const std::string& name) {
    if (name == "xavier") return InitMethod::xavier;
    if (name == "he") return InitMethod::he;
    if (name == "orthogonal") return InitMethod::orthogonal;
    if (name == "normal") return InitMethod::normal;
    throw ConfigError("unknown weight initialization '" + name + "' (expected xavier, he, orthogonal, normal)");
}

std::string to_string(InitMethod m) {
    switch (m) {
        case InitMethod::xavier: return "xavier";
        case InitMethod::he: return "he";
        case InitMethod::orthogonal: return "orthogonal";
        case InitMethod::normal: return "normal";
    }
    return "?";
}

namespace {

Tensor orthogonal(const Shape& shape, Rng& rng) {
    if (shape.size() != 2) throw ShapeError("orthogonal init requires a rank-2 shape, got " + shape_str(shape));
    const auto rows = static_cast<Eigen::Index>(shape[0]);
    const auto cols = static_cast<Eigen::Index>(shape[1]);
    const Eigen::Index tall = std::max(rows, cols), narrow = std::min(rows, cols);

    Eigen::MatrixXd draw(tall, narrow);
    for (Eigen::Index i = 0; i < tall; ++i)
        for (Eigen::Index j = 0; j < narrow; ++j) draw(i, j) = rng.normal();

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(draw);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, narrow);
    // Fix column signs so the result is unique given the draw.
    const Eigen::MatrixXd r = qr.matrixQR().topRows(narrow).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < narrow; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;

    Tensor out(shape);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = rows >= cols ? q(i, j) : q(j, i);
    return out;
}

}  // namespace

Tensor init_weight(InitMethod method, const Shape& shape, Rng& rng) {
    if (shape.empty()) throw ShapeError("init_weight: empty shape");
    for (auto d : shape)
        if (d == 0) throw ShapeError("init_weight: zero extent in " + shape_str(shape));

    if (method == InitMethod::orthogonal) return orthogonal(shape, rng);

    const double fan_in = static_cast<double>(shape[0]);
    const double fan_out = static_cast<double>(shape.size() > 1 ? shape[1] : shape[0]);
    Tensor out(shape);
    switch (method) {
        case InitMethod::xavier: {
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            for (auto& v : out.values()) v = rng.uniform(-bound, bound);
            break;
        }
        case InitMethod::he: {
            const double std = std::sqrt(2.0 / fan_in);
            for (auto& v : out.values()) v = rng.normal(0.0, std);
            break;
        }
        case InitMethod::normal:
            for (auto& v : out.values()) v = rng.normal(0.0, 0.01);
            break;
        case InitMethod::orthogonal:
            break;
    }
    return out;
}

}  // namespace nmt
