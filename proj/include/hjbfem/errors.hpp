#ifndef HJBFEM_ERRORS_HPP
#define HJBFEM_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hjbfem {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input parameters, inconsistent sizes, or mismatched objects.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Artificial diffusion cannot restore monotonicity (mesh not strictly acute).
class MonotonicityError : public Error {
public:
    using Error::Error;
};

/// Assembled operators fail the monotonicity certificate for the chosen step.
class CertificationError : public Error {
public:
    using Error::Error;
};

/// Policy iteration hit its iteration cap.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string &what, std::vector<double> residuals)
        : Error(what), residuals_(std::move(residuals)) {}

    const std::vector<double> &residuals() const { return residuals_; }

private:
    std::vector<double> residuals_;
};

/// A system that should be a non-singular M-matrix could not be factorized.
class MMatrixError : public Error {
public:
    using Error::Error;
};

/// Linear solve finished without meeting its residual contract.
class LinearSolverError : public Error {
public:
    LinearSolverError(const std::string &what, double residual)
        : Error(what), residual_(residual) {}

    double residual() const { return residual_; }

private:
    double residual_;
};

/// Point evaluation outside of the mesh or time horizon.
class QueryError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace hjbfem

#endif
