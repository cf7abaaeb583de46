#pragma once

#include <Eigen/Dense>
#include <optional>

#include "epimpc/netmodel.hpp"

namespace epimpc {

/// The 2n x 2n Metzler matrix governing the infected subsystem, together
/// with the (s, q, beta) triple it was built from.
struct InfectedMatrix {
    Eigen::MatrixXd m;
    Eigen::Index n = 0;
    Eigen::VectorXd s;
    ControlVector control;
    TransmissionRate beta;
};

struct SpectralResult {
    double lambda_max = 0.0;                 ///< spectral abscissa, 1/day
    std::optional<Eigen::VectorXd> left_vec; ///< positive, 1-norm normalized
    int iterations = 0;
};

/// Optional warm start for repeated nearby eigenproblems. Holds the right
/// and left iterates of the previous solve.
struct SpectralWarmStart {
    Eigen::VectorXd right;
    Eigen::VectorXd left;
};

/// Assembles M(s, q | beta) blockwise:
///   [ b^a diag(s) A - (eps + r^a) I - diag(q^a)   b^s diag(s) A            ]
///   [ eps I                                       -(r^s I + diag(q^s))     ]
InfectedMatrix build_infected_matrix(const Eigen::VectorXd& s,
                                     const ControlVector& control,
                                     const TransmissionRate& beta,
                                     const NetworkModel& model);

/// Spectral abscissa via shifted power iteration on M + cI with
/// c = max_i |M_ii| + 1. Left eigenvector is populated when M is
/// irreducible. Throws NumericalError on non-convergence.
SpectralResult spectral_abscissa(const InfectedMatrix& m,
                                 SpectralWarmStart* warm = nullptr);

/// Abscissa of a raw Metzler matrix (used internally and by certificates).
SpectralResult metzler_abscissa(const Eigen::MatrixXd& m,
                                SpectralWarmStart* warm = nullptr);

/// Strictly positive left Perron vector, 1-norm normalized. Throws
/// ContractError when the matrix is reducible.
Eigen::VectorXd perron_left_vector(const InfectedMatrix& m);

/// Entrywise a <= b + 1e-12.
bool matrix_leq(const InfectedMatrix& a, const InfectedMatrix& b);

}  // namespace epimpc
