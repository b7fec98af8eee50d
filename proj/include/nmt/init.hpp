#pragma once

#include <string>

#include "nmt/random.hpp"
#include "nmt/tensor.hpp"

namespace nmt {

enum class InitMethod { xavier, he, orthogonal, normal };

InitMethod parse_init_method(const std::string& name);
std::string to_string(InitMethod m);

// fan_in = shape[0], fan_out = shape[1] (fan_out = fan_in for rank 1).
//   xavier      uniform(+-sqrt(6 / (fan_in + fan_out)))
//   he          normal(0, sqrt(2 / fan_in))
//   orthogonal  orthonormal columns (tall) or rows (wide) from the QR of a normal draw
//   normal      normal(0, 0.01)
Tensor init_weight(InitMethod method, const Shape& shape, Rng& rng);

}  // namespace nmt
