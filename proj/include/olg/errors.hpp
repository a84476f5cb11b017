#pragma once

#include <stdexcept>
#include <string>

namespace olg {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Diverged or non-finite numerics (bad network, failed factorization).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing or mismatched upstream artifact.
class ProvenanceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace olg
