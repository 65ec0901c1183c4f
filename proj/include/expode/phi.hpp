#pragma once

#include <complex>
#include <span>
#include <vector>

namespace expode {

// Largest phi index supported by the kernel. The bundled schemes use up to
// phi_4; the rest is headroom for user-defined schemes.
inline constexpr int kMaxPhiIndex = 8;

// Largest exponential-Adams weight order supported.
inline constexpr int kMaxGammaOrder = 6;

/// phi_0(z) = e^z, phi_{k+1}(z) = (phi_k(z) - 1/k!) / z, phi_k(0) = 1/k!.
/// Returns phi_0(z) .. phi_kmax(z).
std::vector<double> phi_all(int kmax, double z);
std::vector<std::complex<double>> phi_all(int kmax, std::complex<double> z);

double phi(int k, double z);
std::complex<double> phi(int k, std::complex<double> z);

/// Expansion of the exponential-Adams weight gamma_j over the phi family:
/// gamma_j(z) = sum_m coeff[m] * phi_{m+1}(z), m = 0..j.
std::vector<double> gamma_phi_coefficients(int j);

double gamma_weight(int j, double z);
std::complex<double> gamma_weight(int j, std::complex<double> z);

/// Scalar matrix-function descriptor: phi_{index} evaluated at scale * z.
struct PhiDescriptor {
    int index = 1;
    double scale = 1.0;

    friend bool operator==(const PhiDescriptor&, const PhiDescriptor&) = default;
};

/// sum_i coeffs[i] * phi_{funs[i].index}(funs[i].scale * z).
double phi_combo(std::span<const double> coeffs,
                 std::span<const PhiDescriptor> funs, double z);
std::complex<double> phi_combo(std::span<const double> coeffs,
                               std::span<const PhiDescriptor> funs,
                               std::complex<double> z);

} // namespace expode
