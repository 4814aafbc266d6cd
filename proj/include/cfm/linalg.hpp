#pragma once

#include "cfm/errors.hpp"
#include "cfm/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace cfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::MatrixXi;
using Index = Eigen::Index;

// Draw from N(Q^{-1} b, Q^{-1}) given a symmetric positive-definite precision Q.
inline Vector draw_gaussian_canonical(const Matrix& precision, const Vector& linear, Engine& eng) {
    Eigen::LLT<Matrix> llt(precision);
    if (llt.info() != Eigen::Success) throw ValidationError("posterior precision is not positive definite");
    Vector mean = llt.solve(linear);
    Vector z(linear.size());
    for (Index k = 0; k < z.size(); ++k) z[k] = std_normal(eng);
    // L^T u = z gives u with covariance (L L^T)^{-1}.
    mean += llt.matrixU().solve(z);
    return mean;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace cfm
