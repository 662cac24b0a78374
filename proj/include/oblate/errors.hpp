#pragma once

#include <stdexcept>
#include <string>

namespace oblate {

// Common base so callers can catch everything the library throws with one
// handler while still discriminating on the concrete type when they care.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Point is (numerically) on the focal ring, where the two spheroidal roots
// collide and the chart degenerates.
struct FocalRingSingularity : Error {
    explicit FocalRingSingularity(const std::string& what) : Error(what) {}
};

// Operation needs the azimuthal direction but the point sits on the symmetry
// axis where that direction is undefined.
struct AxisSingularity : Error {
    explicit AxisSingularity(const std::string& what) : Error(what) {}
};

// A separated-motion evaluation was requested at a coordinate value where the
// radicand is negative beyond tolerance: classically inaccessible.
struct ForbiddenRegion : Error {
    explicit ForbiddenRegion(const std::string& what) : Error(what) {}
};

// A trajectory ran into a potential singularity (e.g. the attracting ring)
// and the integrator cannot continue meaningfully.
struct SingularityApproach : Error {
    explicit SingularityApproach(const std::string& what) : Error(what) {}
};

// Adaptive ODE stepping failed: step size underflow or step budget exhausted.
struct StepFailure : Error {
    explicit StepFailure(const std::string& what) : Error(what) {}
};

// Adaptive quadrature failed to reach the requested tolerance.
struct QuadratureFailure : Error {
    explicit QuadratureFailure(const std::string& what) : Error(what) {}
};

// A series recurrence hit a vanishing leading coefficient where a nonzero one
// was required (degenerate exponent configuration).
struct RecurrenceBreakdown : Error {
    explicit RecurrenceBreakdown(const std::string& what) : Error(what) {}
};

// An iterative solver (eigenvalue truncation growth, root polishing) did not
// converge within its budget.
struct NoConvergence : Error {
    explicit NoConvergence(const std::string& what) : Error(what) {}
};

}  // namespace oblate
