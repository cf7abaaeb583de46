#include "epimpc/spectral.hpp"

#include <cmath>
#include <limits>

namespace epimpc {

namespace {

constexpr int kMaxIterations = 100000;
constexpr double kRayleighTol = 1e-10;

bool is_metzler(const Eigen::MatrixXd& m) {
    const Eigen::Index n = m.rows();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && m(i, j) < 0) return false;
    return true;
}

}  // namespace

InfectedMatrix build_infected_matrix(const Eigen::VectorXd& s,
                                     const ControlVector& control,
                                     const TransmissionRate& beta,
                                     const NetworkModel& model) {
    if (s.size() != model.n) throw ContractError("build_infected_matrix: s dimension");
    check_dimensions(control, model);
    const Eigen::Index n = model.n;
    const EpiParams& p = model.params;

    Eigen::MatrixXd scaled = s.asDiagonal() * model.flow;
    InfectedMatrix out;
    out.m.resize(2 * n, 2 * n);
    out.m.topLeftCorner(n, n) = beta.beta_a * scaled;
    out.m.topLeftCorner(n, n).diagonal() -=
        (Eigen::VectorXd::Constant(n, p.eps + p.r_a) + control.qa);
    out.m.topRightCorner(n, n) = beta.beta_s * scaled;
    out.m.bottomLeftCorner(n, n) = p.eps * Eigen::MatrixXd::Identity(n, n);
    out.m.bottomRightCorner(n, n) =
        (-(Eigen::VectorXd::Constant(n, p.r_s) + control.qs)).asDiagonal();
    out.n = n;
    out.s = s;
    out.control = control;
    out.beta = beta;
    return out;
}

SpectralResult metzler_abscissa(const Eigen::MatrixXd& m, SpectralWarmStart* warm) {
    if (m.rows() != m.cols() || m.rows() == 0)
        throw ContractError("metzler_abscissa: matrix must be square");
    if (!is_metzler(m)) throw ContractError("metzler_abscissa: matrix is not Metzler");

    const Eigen::Index dim = m.rows();
    const double shift = m.diagonal().cwiseAbs().maxCoeff() + 1.0;
    Eigen::MatrixXd b = m;
    b.diagonal().array() += shift;
    const double b_norm = b.lpNorm<Eigen::Infinity>();
    const double residual_tol = 1e-7 * std::max(b_norm, 1.0);

    Eigen::VectorXd u, v;
    if (warm && warm->right.size() == dim && warm->left.size() == dim &&
        (warm->right.array() > 0).all() && (warm->left.array() > 0).all()) {
        u = warm->right;
        v = warm->left;
    } else {
        u = Eigen::VectorXd::Constant(dim, 1.0 / static_cast<double>(dim));
        v = u;
    }

    double lambda_prev = std::numeric_limits<double>::quiet_NaN();
    double rho = 0.0;
    int it = 0;
    for (; it < kMaxIterations; ++it) {
        Eigen::VectorXd bu = b * u;
        Eigen::VectorXd btv = b.transpose() * v;
        double su = bu.lpNorm<1>();
        double sv = btv.lpNorm<1>();
        if (!(su > 0) || !(sv > 0))
            throw NumericalError("power iteration collapsed to zero vector");
        u = bu / su;
        v = btv / sv;
        double vu = v.dot(u);
        if (!(vu > 0))
            throw NumericalError("power iteration: left/right iterates orthogonal");
        rho = v.dot(b * u) / vu;

        if (it >= 2 && std::abs(rho - lambda_prev) < kRayleighTol) {
            double res_r = (b * u - rho * u).lpNorm<Eigen::Infinity>();
            double res_l = (b.transpose() * v - rho * v).lpNorm<Eigen::Infinity>();
            if (res_r <= residual_tol && res_l <= residual_tol) break;
        }
        lambda_prev = rho;
    }
    if (it == kMaxIterations)
        throw NumericalError("power iteration did not converge within 100000 iterations");

    if (warm) {
        warm->right = u;
        warm->left = v;
    }

    SpectralResult result;
    result.lambda_max = rho - shift;
    result.iterations = it + 1;
    if ((v.array() > 0).all() && strongly_connected(m)) {
        result.left_vec = v / v.lpNorm<1>();
    }
    return result;
}

SpectralResult spectral_abscissa(const InfectedMatrix& m, SpectralWarmStart* warm) {
    return metzler_abscissa(m.m, warm);
}

Eigen::VectorXd perron_left_vector(const InfectedMatrix& m) {
    if (!strongly_connected(m.m))
        throw ContractError(
            "perron_left_vector: matrix is reducible; irreducibility required");
    SpectralResult r = metzler_abscissa(m.m);
    if (!r.left_vec)
        throw NumericalError("perron_left_vector: left eigenvector unavailable");
    return *r.left_vec;
}

bool matrix_leq(const InfectedMatrix& a, const InfectedMatrix& b) {
    if (a.m.rows() != b.m.rows() || a.m.cols() != b.m.cols())
        throw ContractError("matrix_leq: dimension mismatch");
    return ((a.m - b.m).array() <= 1e-12).all();
}

}  // namespace epimpc
