#pragma once

// Zero-forcing joint transmission over the 2x2 network channel.

#include "fjt/channel.hpp"
#include "fjt/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <utility>

namespace fjt {

struct PrecodingMatrix {
    /// w(k, i): weight of BS k for user i's stream.
    Eigen::Matrix2cd entries = Eigen::Matrix2cd::Identity();

    complex_gain operator()(int bs, int user) const { return entries(bs, user); }
};

/// W = H^-1 by the adjugate formula.
inline PrecodingMatrix zf_weights(const ChannelMatrix& h) {
    const Eigen::Matrix2cd& m = h.entries;
    if (is_singular(m)) throw singular_channel_error("zf_weights: channel matrix is singular");
    const complex_gain det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    PrecodingMatrix w;
    w.entries << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    w.entries /= det;
    return w;
}

/// (k, i) -> |w_ki|^2, the power BS k spends per unit of user i's power.
inline Eigen::Matrix2d row_powers(const PrecodingMatrix& w) {
    return w.entries.cwiseAbs2();
}

inline double zf_rate(double power, double noise) {
    if (!(power >= 0.0)) throw domain_error("zf_rate: negative power");
    if (!(noise > 0.0)) throw domain_error("zf_rate: noise must be positive");
    return std::log2(1.0 + power / noise);
}

/// Eigenvalues of H H^H in descending order, from its trace and determinant.
inline std::pair<double, double> gram_eigenvalues(const ChannelMatrix& h) {
    const double trace = h.entries.squaredNorm();
    const complex_gain d = h.entries(0, 0) * h.entries(1, 1) - h.entries(0, 1) * h.entries(1, 0);
    const double det = std::norm(d);
    const double half = 0.5 * trace;
    const double disc = std::max(0.0, half * half - det);
    const double rho1 = half + std::sqrt(disc);
    const double rho2 = rho1 > 0.0 ? det / rho1 : 0.0;
    return {rho1, rho2};
}

} // namespace fjt
