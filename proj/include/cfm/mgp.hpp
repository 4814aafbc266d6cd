#pragma once
// Multiplicative gamma process shrinkage on factor loadings.
//
//   lambda_jh ~ N(0, 1 / (theta_jh iota_h)),  theta_jh ~ Gamma(nu/2, nu/2),
//   iota_h = prod_{l<=h} delta_l,  delta_1 ~ Gamma(a1, 1),  delta_l ~ Gamma(a2, 1).
//
// Gamma parameters are (shape, rate) throughout.

#include "cfm/linalg.hpp"
#include "cfm/random.hpp"
#include "cfm/state.hpp"

namespace cfm {

inline Matrix update_local_precisions(const Matrix& loadings, const Vector& iota, double nu, Engine& eng) {
    Matrix theta(loadings.rows(), loadings.cols());
    const double shape = 0.5 * (nu + 1.0);
    for (Index j = 0; j < loadings.rows(); ++j)
        for (Index h = 0; h < loadings.cols(); ++h) {
            const double l = loadings(j, h);
            theta(j, h) = gamma_rate(eng, shape, 0.5 * (nu + iota[h] * l * l));
        }
    return theta;
}

struct GlobalShrinkage {
    Vector delta;
    Vector iota;
};

// Sequential update of delta_1..delta_J; iota is recomputed exactly after each step.
inline GlobalShrinkage update_global_increments(const Matrix& loadings, const Matrix& theta, const Vector& delta,
                                                double a1, double a2, Engine& eng) {
    const Index q = loadings.rows();
    const Index J = loadings.cols();
    // Column sums of theta * lambda^2.
    const Vector weighted = (theta.array() * loadings.array().square()).colwise().sum().transpose();
    GlobalShrinkage out{delta, cumulative_products(delta)};
    for (Index l = 0; l < J; ++l) {
        // iota_h with delta_l factored out, for h >= l.
        double rate = 1.0;
        double partial = 1.0;
        for (Index h = 0; h < J; ++h) {
            if (h != l) partial *= out.delta[h];
            if (h >= l) rate += 0.5 * partial * weighted[h];
        }
        const double shape = (l == 0 ? a1 : a2) + 0.5 * static_cast<double>(q) * static_cast<double>(J - l);
        out.delta[l] = gamma_rate(eng, shape, rate);
        out.iota = cumulative_products(out.delta);
    }
    return out;
}

// Row-wise Gaussian update of the loadings.
//
// `resid` holds y - mu - B x for the arm's factual units (m x q), `scores` the
// matching factor scores (m x J).
inline Matrix update_loadings(const Matrix& resid, const Matrix& scores, const Vector& psi, const Matrix& theta,
                              const Vector& iota, Engine& eng) {
    const Index q = resid.cols();
    const Index J = scores.cols();
    const Matrix gram = scores.transpose() * scores;
    const Matrix cross = scores.transpose() * resid;  // J x q
    Matrix loadings(q, J);
    Matrix prec(J, J);
    for (Index j = 0; j < q; ++j) {
        prec = gram / psi[j];
        prec.diagonal() += (theta.row(j).transpose().array() * iota.array()).matrix();
        const Vector lin = cross.col(j) / psi[j];
        loadings.row(j) = draw_gaussian_canonical(prec, lin, eng).transpose();
    }
    return loadings;
}

// psi_j ~ InvGamma(a + m/2, b + sum_i e_ij^2 / 2) from full residuals e = y - mu - B x - Lambda l.
inline Vector update_idiosyncratic(const Matrix& resid, double a_psi, double b_psi, Engine& eng) {
    Vector psi(resid.cols());
    const double shape = a_psi + 0.5 * static_cast<double>(resid.rows());
    for (Index j = 0; j < resid.cols(); ++j) psi[j] = inv_gamma(eng, shape, b_psi + 0.5 * resid.col(j).squaredNorm());
    return psi;
}

}  // namespace cfm
