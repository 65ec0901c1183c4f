#include "expode/cli.hpp"

#include "expode/driver.hpp"
#include "expode/problems.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace expode {

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string part; std::getline(in, part, sep);)
        out.push_back(part);
    return out;
}

std::map<std::string, double> parse_params(const std::vector<std::string>& specs) {
    std::map<std::string, double> params;
    for (const std::string& spec : specs) {
        for (const std::string& kv : split(spec, ',')) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ValidationError("bad --param entry (want k=v): " + kv);
            params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        }
    }
    return params;
}

void apply_opt_flags(OptionsSet& opts, const std::vector<std::string>& flags) {
    for (const std::string& flag : flags) {
        auto eq = flag.find('=');
        if (eq == std::string::npos)
            throw ValidationError("bad --opt entry (want Name=value): " + flag);
        opts.set(flag.substr(0, eq), parse_option_text(flag.substr(eq + 1)));
    }
}

// EXPODE_LOG / EXPOKIT_LOG: comma-separated channel names routed to
// stderr; default status, statistics, warning and error.
void route_log(Logger& log) {
    static const std::map<std::string, LogChannel> names = {
        {"verbose", LogChannel::verbose},   {"status", LogChannel::status},
        {"statistics", LogChannel::statistics}, {"jacLog", LogChannel::jac},
        {"stepLog", LogChannel::step},      {"matFunLog", LogChannel::matfun},
        {"warning", LogChannel::warning},   {"error", LogChannel::error}};
    const char* env = std::getenv("EXPOKIT_LOG");
    if (!env)
        env = std::getenv("EXPODE_LOG");
    if (!env) {
        log.route(LogChannel::status, &std::cerr);
        log.route(LogChannel::statistics, &std::cerr);
        log.route(LogChannel::warning, &std::cerr);
        log.route(LogChannel::error, &std::cerr);
        return;
    }
    for (const std::string& name : split(env, ',')) {
        if (name == "all") {
            log.route_all(&std::cerr);
        } else if (name == "none") {
            // leave everything silent
        } else {
            auto it = names.find(name);
            if (it == names.end())
                throw ValidationError("unknown log channel: " + name);
            log.route(it->second, &std::cerr);
        }
    }
}

std::vector<Eigen::Index> output_selection(const OptionsSet& opts, Eigen::Index dim) {
    std::vector<Eigen::Index> sel;
    if (const OptionValue* v = opts.get("OutputSel")) {
        const Vec* idx = std::get_if<Vec>(v);
        Vec one(1);
        if (!idx) {
            if (const double* d = std::get_if<double>(v)) {
                one(0) = *d;
                idx = &one;
            }
        }
        if (idx)
            for (Eigen::Index i = 0; i < idx->size(); ++i)
                sel.push_back(Eigen::Index((*idx)(i)) - 1);
    }
    if (sel.empty())
        for (Eigen::Index i = 0; i < dim; ++i)
            sel.push_back(i);
    for (Eigen::Index i : sel)
        if (i < 0 || i >= dim)
            throw ValidationError("OutputSel index out of range");
    return sel;
}

void write_solution_csv(std::ostream& out, const Solution& sol,
                        const std::vector<Eigen::Index>& sel) {
    out << "t";
    for (size_t j = 0; j < sel.size(); ++j)
        out << ",y" << j + 1;
    out << "\n";
    for (size_t i = 0; i < sol.t.size(); ++i) {
        out << fmt17(sol.t[i]);
        for (Eigen::Index j : sel)
            out << "," << fmt17(sol.y(Eigen::Index(i), j));
        out << "\n";
    }
}

struct RunArgs {
    std::string problem;
    std::vector<std::string> params;
    std::vector<std::string> opts;
    std::string options_file;
    std::string out_path;
    std::string tspan;
};

OptionsSet build_options(const BundledProblem& bp, const RunArgs& args) {
    // the recommended options seed the set; files and flags override
    OptionsSet user;
    if (!args.options_file.empty()) {
        std::ifstream in(args.options_file);
        if (!in)
            throw ValidationError("cannot read options file: " + args.options_file);
        apply_options_text(user, in);
    }
    apply_opt_flags(user, args.opts);

    std::string integrator;
    if (const OptionValue* v = user.get("Integrator"))
        if (const std::string* s = std::get_if<std::string>(v))
            integrator = *s;
    OptionsSet opts(integrator);
    for (const auto& [k, v] : bp.options.entries())
        opts.set(k, v);
    for (const auto& [k, v] : user.entries())
        opts.set(k, v);
    return opts;
}

void apply_tspan(OdeProblem& p, const std::string& tspan) {
    if (tspan.empty())
        return;
    std::vector<std::string> parts = split(tspan, ',');
    if (parts.size() < 2 || parts.size() > 3)
        throw ValidationError("--tspan wants a,b or a,b,n");
    p.t0 = std::stod(parts[0]);
    p.t_end = std::stod(parts[1]);
    p.output_times.clear();
    if (parts.size() == 3) {
        long n = std::stol(parts[2]);
        if (n < 2)
            throw ValidationError("--tspan point count must be at least 2");
        for (long i = 0; i < n; ++i)
            p.output_times.push_back(p.t0 + (p.t_end - p.t0) * double(i) / double(n - 1));
    }
}

int cmd_run(const RunArgs& args) {
    BundledProblem bp = make_problem(args.problem, parse_params(args.params));
    apply_tspan(bp.problem, args.tspan);
    OptionsSet opts = build_options(bp, args);

    Logger log;
    route_log(log);
    Solution sol = integrate(bp.problem, opts, &log);

    std::vector<Eigen::Index> sel = output_selection(opts, bp.problem.dim);
    if (args.out_path.empty()) {
        write_solution_csv(std::cout, sol, sel);
    } else {
        std::ofstream out(args.out_path);
        if (!out)
            throw ValidationError("cannot write: " + args.out_path);
        write_solution_csv(out, sol, sel);
    }
    return 0;
}

struct ConvArgs {
    std::string problem;
    std::vector<std::string> params;
    std::vector<std::string> integrators;
    std::vector<std::string> opts;
    std::string h_list;
    std::string tol_list;
    std::string out_path;
};

bool constant_step_class(const std::string& name) {
    return name == "exprk" || name == "expmssemi" || name == "expms";
}

int cmd_convergence(const ConvArgs& args) {
    BundledProblem bp = make_problem(args.problem, parse_params(args.params));
    if (!bp.problem.exact)
        throw ValidationError("problem " + args.problem + " has no exact solution");
    if (args.h_list.empty() == args.tol_list.empty())
        throw ValidationError("give exactly one of --h-list and --tol-list");

    std::vector<double> xs;
    for (const std::string& s : split(args.h_list.empty() ? args.tol_list : args.h_list, ','))
        xs.push_back(std::stod(s));
    bool by_h = !args.h_list.empty();

    std::vector<std::string> methods = args.integrators;
    if (methods.empty())
        methods = integrator_names();

    Vec ref = bp.problem.exact(bp.problem.t_end);
    std::ostringstream table;
    table << "integrator,h_or_tol,error,steps,rhs_evals,matfun_evals\n";
    std::ostringstream slopes;

    for (const std::string& m : methods) {
        std::vector<double> lx, le;
        for (double x : xs) {
            OptionsSet opts(m);
            for (const auto& [k, v] : bp.options.entries())
                opts.set(k, v);
            // shared extra options apply where the integrator knows them
            for (const std::string& flag : args.opts) {
                auto eq = flag.find('=');
                if (eq == std::string::npos)
                    throw ValidationError("bad --opt entry (want Name=value): " + flag);
                std::string name = flag.substr(0, eq);
                if (find_option(m, name))
                    opts.set(name, parse_option_text(flag.substr(eq + 1)));
            }
            if (by_h) {
                if (constant_step_class(m)) {
                    opts.set("StepSize", x);
                } else {
                    opts.set("hConstant", true);
                    opts.set("InitialStep", x);
                }
            } else {
                if (constant_step_class(m))
                    throw ValidationError("--tol-list needs an adaptive integrator: " + m);
                opts.set("AbsTol", x);
                opts.set("RelTol", x);
            }
            Solution sol = integrate(bp.problem, opts);
            double err =
                (sol.y.row(sol.y.rows() - 1).transpose() - ref).lpNorm<Eigen::Infinity>();
            long mf = 0;
            for (const auto& [k, v] : sol.stats.matfun)
                mf += v;
            table << m << "," << fmt17(x) << "," << fmt17(err) << "," << sol.stats.n_steps
                  << "," << sol.stats.n_rhs_evals << "," << mf << "\n";
            if (err > 0.0) {
                lx.push_back(std::log(x));
                le.push_back(std::log(err));
            }
        }
        // least-squares slope of log(error) against log(h or tol)
        if (lx.size() >= 2) {
            double n = double(lx.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
            for (size_t i = 0; i < lx.size(); ++i) {
                sx += lx[i];
                sy += le[i];
                sxx += lx[i] * lx[i];
                sxy += lx[i] * le[i];
            }
            double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            slopes << "# order " << m << " " << fmt17(slope) << "\n";
        }
    }

    if (args.out_path.empty()) {
        std::cout << table.str() << slopes.str();
    } else {
        std::ofstream out(args.out_path);
        if (!out)
            throw ValidationError("cannot write: " + args.out_path);
        out << table.str() << slopes.str();
    }
    return 0;
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"expode - exponential integrators for ODE systems"};
    app.require_subcommand(1);

    RunArgs run;
    CLI::App* c_run = app.add_subcommand("run", "integrate a bundled problem");
    c_run->add_option("--problem", run.problem, "problem name")->required();
    c_run->add_option("--param", run.params, "problem parameters k=v[,k=v]");
    c_run->add_option("--opt", run.opts, "integrator option Name=value");
    c_run->add_option("--options-file", run.options_file, "options file (Name = value lines)");
    c_run->add_option("--out", run.out_path, "solution CSV path (default stdout)");
    c_run->add_option("--tspan", run.tspan, "integration interval a,b[,n]");

    std::string info_integrator, info_option;
    CLI::App* c_info = app.add_subcommand("info", "print integrator options");
    c_info->add_option("integrator", info_integrator, "integrator name")->required();
    c_info->add_option("option", info_option, "option name, or - for all descriptions");

    ConvArgs conv;
    CLI::App* c_conv = app.add_subcommand("convergence", "error vs step size study");
    c_conv->add_option("--problem", conv.problem, "problem name (needs an exact solution)")
        ->required();
    c_conv->add_option("--param", conv.params, "problem parameters k=v[,k=v]");
    c_conv->add_option("--integrator", conv.integrators, "integrators to study (default all)");
    c_conv->add_option("--opt", conv.opts, "extra option Name=value for every run");
    c_conv->add_option("--h-list", conv.h_list, "comma separated step sizes");
    c_conv->add_option("--tol-list", conv.tol_list, "comma separated tolerances");
    c_conv->add_option("--out", conv.out_path, "table path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (c_run->parsed())
            return cmd_run(run);
        if (c_info->parsed()) {
            std::cout << info(info_integrator, info_option);
            return 0;
        }
        return cmd_convergence(conv);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace expode
