#include "expode/phi.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace expode {
namespace {

constexpr double kSeriesRadius = 0.5;

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i)
        f *= i;
    return f;
}

// Truncated Taylor series phi_k(w) = sum_j w^j / (j+k)!, valid without
// cancellation for |w| <= kSeriesRadius.
template <typename S>
S phi_series(int k, S w) {
    S term = S(1.0) / factorial(k);
    S sum = term;
    for (int j = 1; j <= 24; ++j) {
        term *= w / double(j + k);
        sum += term;
    }
    return sum;
}

// phi values via scaling and squaring of the augmented companion matrix
//   M = [ z  e_1^T ]
//       [ 0    J   ]
// with J the nilpotent shift. The first row of exp(M) is
// (e^z, phi_1(z), .., phi_p(z)); scaling the off-diagonal block by c
// multiplies entry (0,k) by c^k, so repeated squaring recovers phi at the
// full argument. All entries stay positive for real z, so the squaring
// introduces no cancellation.
template <typename S>
std::vector<S> phi_squaring(int p, S z) {
    int s = 0;
    double az = std::abs(z);
    while (az > kSeriesRadius) {
        az *= 0.5;
        ++s;
    }
    const S w = z / double(1 << s);

    const int n = p + 1;
    std::vector<S> x(static_cast<size_t>(n) * n, S(0.0));
    auto at = [&](int i, int j) -> S& { return x[static_cast<size_t>(i) * n + j]; };

    at(0, 0) = phi_series(0, w);
    for (int k = 1; k <= p; ++k)
        at(0, k) = phi_series(k, w);
    for (int i = 1; i <= p; ++i)
        for (int j = i; j <= p; ++j)
            at(i, j) = S(1.0 / factorial(j - i));

    // Square the (upper triangular) matrix s times; entries below the
    // diagonal are never read.
    std::vector<S> y(x.size(), S(0.0));
    for (int q = 0; q < s; ++q) {
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                S acc(0.0);
                for (int m = i; m <= j; ++m)
                    acc += x[static_cast<size_t>(i) * n + m] * x[static_cast<size_t>(m) * n + j];
                y[static_cast<size_t>(i) * n + j] = acc;
            }
        x.swap(y);
    }

    std::vector<S> res(p + 1);
    res[0] = at(0, 0);
    for (int k = 1; k <= p; ++k)
        res[k] = at(0, k) / std::pow(2.0, double(s) * k);
    return res;
}

template <typename S>
std::vector<S> phi_all_impl(int kmax, S z) {
    if (kmax < 0 || kmax > kMaxPhiIndex)
        throw std::out_of_range("phi: index out of range [0, 8]");
    if (std::abs(z) <= kSeriesRadius) {
        std::vector<S> res(kmax + 1);
        for (int k = 0; k <= kmax; ++k)
            res[k] = phi_series(k, z);
        return res;
    }
    return phi_squaring(kmax, z);
}

template <typename S>
S phi_combo_impl(std::span<const double> coeffs,
                 std::span<const PhiDescriptor> funs, S z) {
    if (coeffs.size() != funs.size())
        throw std::invalid_argument("phi_combo: coefficient/function length mismatch");
    S sum(0.0);
    for (size_t i = 0; i < coeffs.size(); ++i) {
        if (coeffs[i] == 0.0)
            continue;
        sum += coeffs[i] * phi(funs[i].index, funs[i].scale * z);
    }
    return sum;
}

} // namespace

std::vector<double> phi_all(int kmax, double z) { return phi_all_impl(kmax, z); }

std::vector<std::complex<double>> phi_all(int kmax, std::complex<double> z) {
    return phi_all_impl(kmax, z);
}

double phi(int k, double z) { return phi_all_impl(k, z)[k]; }

std::complex<double> phi(int k, std::complex<double> z) {
    return phi_all_impl(k, z)[k];
}

std::vector<double> gamma_phi_coefficients(int j) {
    if (j < 0 || j > kMaxGammaOrder)
        throw std::out_of_range("gamma_weight: order out of range [0, 6]");
    // Rising factorial theta (theta+1) .. (theta+j-1) expanded in monomials:
    // unsigned Stirling numbers of the first kind.
    std::array<std::int64_t, kMaxGammaOrder + 1> stirling{};
    stirling[0] = 1;
    for (int row = 1; row <= j; ++row)
        for (int m = row; m >= 0; --m)
            stirling[m] = (m > 0 ? stirling[m - 1] : 0) + (row - 1) * stirling[m];
    // integral_0^1 e^{(1-theta) z} theta^m dtheta = m! phi_{m+1}(z)
    std::vector<double> coeff(j + 1);
    const double jfact = factorial(j);
    for (int m = 0; m <= j; ++m)
        coeff[m] = double(stirling[m]) * factorial(m) / jfact;
    return coeff;
}

namespace {
template <typename S>
S gamma_weight_impl(int j, S z) {
    const auto coeff = gamma_phi_coefficients(j);
    const auto phis = phi_all(j + 1, z);
    S sum(0.0);
    for (int m = 0; m <= j; ++m)
        sum += coeff[m] * phis[m + 1];
    return sum;
}
} // namespace

double gamma_weight(int j, double z) { return gamma_weight_impl(j, z); }

std::complex<double> gamma_weight(int j, std::complex<double> z) {
    return gamma_weight_impl(j, z);
}

double phi_combo(std::span<const double> coeffs,
                 std::span<const PhiDescriptor> funs, double z) {
    return phi_combo_impl(coeffs, funs, z);
}

std::complex<double> phi_combo(std::span<const double> coeffs,
                               std::span<const PhiDescriptor> funs,
                               std::complex<double> z) {
    return phi_combo_impl(coeffs, funs, z);
}

} // namespace expode
