#pragma once

#include <stdexcept>
#include <string>

namespace spider {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Closed forms (and everything built on them) exist only for n in {0, 1, 2}.
class UnsupportedN : public Error {
public:
    explicit UnsupportedN(int n)
        : Error("unsupported: open problem (no closed form is known for n = " +
                std::to_string(n) + ")"),
          n_(n) {}
    int n() const noexcept { return n_; }

private:
    int n_;
};

/// An evaluation point or state outside the domain 0 <= x <= s_r.
class DomainViolation : public Error {
public:
    using Error::Error;
};

/// Record vector length, rib index or rule dimension inconsistent with n.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Too many simulated paths reached max_steps before the rule fired.
class ExcessiveCensoring : public Error {
public:
    ExcessiveCensoring(double fraction, double threshold)
        : Error("excessive censoring: fraction " + std::to_string(fraction) +
                " exceeds threshold " + std::to_string(threshold)),
          fraction_(fraction) {}
    double fraction() const noexcept { return fraction_; }

private:
    double fraction_;
};

class NonConvergence : public Error {
public:
    using Error::Error;
};

/// The S_max truncation face measurably contaminates a dynamic-programming solution.
class TruncationError : public Error {
public:
    using Error::Error;
};

}  // namespace spider
