#pragma once

#include <stdexcept>
#include <string>

namespace sco {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Top-k spectrum of the collision-probability estimate is not invertible;
// re-run with larger R_init / s_oracle.
struct DegenerateSpectrum : Error {
    using Error::Error;
};

// Similarity graph did not split into exactly k components.
struct ConstructFailed : Error {
    explicit ConstructFailed(int components, int k)
        : Error("similarity graph has " + std::to_string(components) + " components, expected " +
                std::to_string(k)),
          components(components) {}
    int components;
};

// Analytic threshold formula produced theta <= 0 for these parameters.
struct NonpositiveTheta : Error {
    using Error::Error;
};

// Query issued against an absent or failed preprocessing result.
struct PreprocessingFailed : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace sco
