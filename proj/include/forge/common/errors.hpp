#pragma once

#include <stdexcept>
#include <string>

namespace forge {

class ForgeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or reply text.
class ParseError : public ForgeError {
public:
    using ForgeError::ForgeError;
};

/// Input parsed but violates an invariant.
class ValidationError : public ForgeError {
public:
    using ForgeError::ForgeError;
};

/// A pluggable backend (judge, generator, embedder, stylizer) failed.
class BackendError : public ForgeError {
public:
    using ForgeError::ForgeError;
};

/// Numerical state became non-finite during training or sampling.
class NumericError : public ForgeError {
public:
    using ForgeError::ForgeError;
};

} // namespace forge
