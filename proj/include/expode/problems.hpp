#pragma once

#include "expode/options.hpp"
#include "expode/problem.hpp"

#include <map>
#include <string>
#include <vector>

namespace expode {

/// A bundled problem together with its recommended options.
struct BundledProblem {
    OdeProblem problem;
    OptionsSet options;
};

/// Heat equation with a time-dependent source term in one dimension:
/// u_t = epsilon u_xx + gamma s(t,x) on (0,1), homogeneous Dirichlet,
/// second-order central differences on N interior points.
/// The source term is s(t,x) = cos(t) sin(pi x); with gamma = 0 the
/// initial eigenmode sin(pi x) decays with the discrete rate
/// epsilon (2/dx^2)(1 - cos(pi dx)) and exact(t) is provided.
BundledProblem heat1d(double epsilon = 0.1, double gamma = 0.1, Eigen::Index N = 100);

/// Semilinear reaction-diffusion u_t = u_xx + u^2 + f(t,x) with f
/// manufactured at the discrete level so that u*(t,x) = e^{-t} x(1-x)
/// solves the grid ODE exactly; exact(t) is exposed.
BundledProblem semi1(Eigen::Index N = 50);

/// Two-dimensional stiff linear part plus a mild nonlinearity; the
/// tutorial entry point.
BundledProblem minimal_example();

/// Factory lookup by name with "k=v" parameters (epsilon, gamma, N).
BundledProblem make_problem(const std::string& name,
                            const std::map<std::string, double>& params = {});
const std::vector<std::string>& problem_names();

} // namespace expode
