#pragma once

#include "expode/types.hpp"

#include <string>
#include <vector>

namespace expode {

/// Explicit exponential Runge-Kutta tableau. Coefficient rows weight
/// phi_1..phi_4: internal rows a[i][j] are evaluated at argument c_i*h*A,
/// weight rows b[i] at h*A. Zero-length rows mean "not used".
struct RkScheme {
    std::string name;
    int stages = 0;
    Vec c;
    std::vector<std::vector<Vec>> a; // a[i][j], 0-based stage indices
    std::vector<Vec> b;

    void check() const; // throws ValidationError
};

/// Empty scheme with s stages and all coefficients unset.
RkScheme rk_scheme(int stages);

/// Sets row a[i][j]; stages are 1-based as in the builder notation, only
/// j < i is allowed (explicit schemes), rows carry at most 4 entries.
void rk_scheme_set_a(RkScheme& sc, int i, int j, Vec row);
void rk_scheme_set_b(RkScheme& sc, int i, Vec row);

RkScheme krogstad_scheme();
RkScheme euler_scheme();

/// Bundled scheme lookup ("euler", "krogstad").
RkScheme scheme_by_name(const std::string& name);

} // namespace expode
