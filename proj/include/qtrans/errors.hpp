#pragma once

#include <stdexcept>
#include <string>

namespace qtrans {

/// Base class for all numerical-contract violations raised by this library.
/// Plain input mistakes (bad sizes, bad parameters) use std::invalid_argument
/// or std::out_of_range instead.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// An eigenvalue vector left the open positive cone.
class ConeViolation : public NumericError {
public:
    explicit ConeViolation(const std::string& what) : NumericError(what) {}
};

/// A matrix argument is not positive definite (ellipticity lost).
class NotAdmissible : public NumericError {
public:
    explicit NotAdmissible(const std::string& what) : NumericError(what) {}
};

/// A Newton iteration failed to reach its tolerance within the cap.
class NoConvergence : public NumericError {
public:
    explicit NoConvergence(const std::string& what) : NumericError(what) {}
};

/// The mixed second-derivative matrix of the cost is numerically singular.
class SingularJacobian : public NumericError {
public:
    explicit SingularJacobian(const std::string& what) : NumericError(what) {}
};

/// The modified Hessian w is singular where its inverse is required.
class SingularW : public NumericError {
public:
    explicit SingularW(const std::string& what) : NumericError(what) {}
};

/// A pair of direction vectors violates the required orthogonality.
class NotOrthogonal : public NumericError {
public:
    explicit NotOrthogonal(const std::string& what) : NumericError(what) {}
};

/// A sampling operation received an empty sample set.
class EmptySampleSet : public NumericError {
public:
    explicit EmptySampleSet(const std::string& what) : NumericError(what) {}
};

/// Damped Newton could not find an acceptable step.
class LineSearchStall : public NumericError {
public:
    explicit LineSearchStall(const std::string& what) : NumericError(what) {}
};

/// Newton exceeded its iteration budget.
class MaxIterations : public NumericError {
public:
    explicit MaxIterations(const std::string& what) : NumericError(what) {}
};

/// The homotopy step size fell below its floor.
class ContinuationStall : public NumericError {
public:
    explicit ContinuationStall(const std::string& what) : NumericError(what) {}
};

} // namespace qtrans
