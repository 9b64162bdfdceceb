#pragma once

#include <stdexcept>
#include <string>

namespace clcrec {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// missing features, empty corpora, impossible sampling requests
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse: shape mismatches, out-of-range indices
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// non-finite loss, snapshot/config mismatch
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArtifactMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace clcrec
