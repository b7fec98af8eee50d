#pragma once

#include <stdexcept>
#include <string>

namespace nmt {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not conform to an op's rule.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent experiment / model options.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Corpus, vocabulary or file-format problems.
class DataError : public Error {
public:
    using Error::Error;
};

// Numerical failures: non-finite losses, gradients or updates.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace nmt
