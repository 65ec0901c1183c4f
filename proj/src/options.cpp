#include "expode/options.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>

namespace expode {

// ---------------------------------------------------------------------------
// OptionAlt

OptionAlt OptionAlt::scalar(Sign s, bool integer) {
    return {Kind::numeric, Shape::scalar, s, integer};
}
OptionAlt OptionAlt::vector(Sign s, bool integer) {
    return {Kind::numeric, Shape::vector, s, integer};
}
OptionAlt OptionAlt::matrix(Sign s, bool integer) {
    return {Kind::numeric, Shape::matrix, s, integer};
}
OptionAlt OptionAlt::index() { return scalar(Sign::positive, true); }
OptionAlt OptionAlt::indices() { return vector(Sign::positive, true); }
OptionAlt OptionAlt::boolean() { return {Kind::boolean, Shape::scalar, Sign::any, false}; }
OptionAlt OptionAlt::list() { return {Kind::list, Shape::scalar, Sign::any, false}; }
OptionAlt OptionAlt::text() { return {Kind::text, Shape::scalar, Sign::any, false}; }
OptionAlt OptionAlt::structure() { return {Kind::structure, Shape::scalar, Sign::any, false}; }
OptionAlt OptionAlt::function_handle() {
    return {Kind::function_handle, Shape::scalar, Sign::any, false};
}

std::string OptionAlt::display() const {
    switch (kind) {
    case Kind::boolean: return "boolean";
    case Kind::list: return "list";
    case Kind::text: return "text";
    case Kind::structure: return "struct";
    case Kind::function_handle: return "function_handle";
    case Kind::numeric: break;
    }
    std::string out;
    switch (sign) {
    case Sign::positive: out += "positive "; break;
    case Sign::non_negative: out += "non-negative "; break;
    case Sign::negative: out += "negative "; break;
    case Sign::non_positive: out += "non-positive "; break;
    case Sign::any: break;
    }
    if (integer)
        out += "integer ";
    switch (shape) {
    case Shape::scalar: out += "scalar"; break;
    case Shape::vector: out += "vector"; break;
    case Shape::matrix: out += "matrix"; break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// value checking helpers

namespace {

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

bool sign_ok(double v, OptionAlt::Sign s) {
    switch (s) {
    case OptionAlt::Sign::positive: return v > 0.0;
    case OptionAlt::Sign::non_negative: return v >= 0.0;
    case OptionAlt::Sign::negative: return v < 0.0;
    case OptionAlt::Sign::non_positive: return v <= 0.0;
    case OptionAlt::Sign::any: return true;
    }
    return true;
}

bool integer_ok(double v) { return v - std::round(v) == 0.0; }

bool numeric_matches(const OptionValue& v, const OptionAlt& alt) {
    auto component_ok = [&](double c) {
        return sign_ok(c, alt.sign) && (!alt.integer || integer_ok(c));
    };
    if (const double* d = std::get_if<double>(&v))
        return component_ok(*d);
    if (const Vec* vec = std::get_if<Vec>(&v)) {
        if (alt.shape == OptionAlt::Shape::scalar && vec->size() != 1)
            return false;
        return std::all_of(vec->data(), vec->data() + vec->size(), component_ok);
    }
    if (const Mat* m = std::get_if<Mat>(&v)) {
        if (alt.shape != OptionAlt::Shape::matrix)
            return false;
        for (Eigen::Index i = 0; i < m->size(); ++i)
            if (!component_ok(m->data()[i]))
                return false;
        return true;
    }
    return false;
}

// boolean string forms accepted for option values
std::optional<bool> parse_boolean_string(const std::string& s) {
    if (s == "on" || s == "yes" || s == "true")
        return true;
    if (s == "off" || s == "no" || s == "false")
        return false;
    return std::nullopt;
}

// Returns the normalized value (index as double) if `v` matches `alt`.
std::optional<OptionValue> try_match(const OptionValue& v, const OptionAlt& alt,
                                     const OptionDesc& desc) {
    using Kind = OptionAlt::Kind;
    switch (alt.kind) {
    case Kind::numeric:
        if (numeric_matches(v, alt))
            return v;
        return std::nullopt;
    case Kind::boolean: {
        if (const bool* b = std::get_if<bool>(&v))
            return OptionValue(double(*b));
        if (const std::string* s = std::get_if<std::string>(&v)) {
            if (auto b = parse_boolean_string(*s))
                return OptionValue(double(*b));
        }
        if (const double* d = std::get_if<double>(&v)) {
            if (*d == 0.0 || *d == 1.0)
                return OptionValue(*d);
        }
        return std::nullopt;
    }
    case Kind::list: {
        if (const std::string* s = std::get_if<std::string>(&v)) {
            for (size_t i = 0; i < desc.list_values.size(); ++i)
                if (desc.list_values[i].name == *s)
                    return OptionValue(double(i));
            return std::nullopt;
        }
        if (const double* d = std::get_if<double>(&v)) {
            if (!integer_ok(*d))
                return std::nullopt;
            // a declared numeric value wins over the plain index
            for (size_t i = 0; i < desc.list_values.size(); ++i)
                if (desc.list_values[i].numeric && *desc.list_values[i].numeric == *d)
                    return OptionValue(double(i));
            if (*d >= 0.0 && *d < double(desc.list_values.size()))
                return OptionValue(*d);
        }
        return std::nullopt;
    }
    case Kind::text:
        if (std::holds_alternative<std::string>(v))
            return v;
        return std::nullopt;
    case Kind::structure:
    case Kind::function_handle:
        if (std::holds_alternative<Handle>(v))
            return v;
        return std::nullopt;
    }
    return std::nullopt;
}

std::string describe_type(const OptionDesc& desc) {
    std::string out;
    for (size_t i = 0; i < desc.alts.size(); ++i) {
        if (i)
            out += " | ";
        out += desc.alts[i].display();
    }
    return out;
}

// Checks a raw value against an option's type union; returns the
// normalized form or throws.
OptionValue check_value(const OptionDesc& desc, const OptionValue& v) {
    for (const auto& alt : desc.alts)
        if (auto normalized = try_match(v, alt, desc))
            return *normalized;
    throw ValidationError("option " + desc.name + ": value does not match type [ " +
                          describe_type(desc) + " ]");
}

} // namespace

// ---------------------------------------------------------------------------
// info line rendering

std::string OptionDesc::info_line() const {
    std::string line = name + " - " + short_desc + " [ ";
    bool first = true;
    auto piece = [&](const std::string& s) {
        if (!first)
            line += " | ";
        line += s;
        first = false;
    };

    // normalized default index for list/boolean defaults
    std::optional<size_t> default_index;
    bool default_is_listlike = false;
    if (const double* d = std::get_if<double>(&default_value)) {
        for (const auto& alt : alts)
            if (alt.kind == OptionAlt::Kind::boolean || alt.kind == OptionAlt::Kind::list) {
                default_is_listlike = true;
                default_index = size_t(*d);
            }
    }
    if (const bool* b = std::get_if<bool>(&default_value)) {
        default_is_listlike = true;
        default_index = size_t(*b);
    }
    if (const std::string* s = std::get_if<std::string>(&default_value)) {
        for (size_t i = 0; i < list_values.size(); ++i)
            if (list_values[i].name == *s) {
                default_is_listlike = true;
                default_index = i;
            }
        if (auto bv = parse_boolean_string(*s)) {
            default_is_listlike = true;
            default_index = size_t(*bv);
        }
    }

    for (const auto& alt : alts) {
        switch (alt.kind) {
        case OptionAlt::Kind::boolean: {
            const char* names[2] = {"off", "on"};
            for (size_t i = 0; i < 2; ++i) {
                std::string val = "'" + std::string(names[i]) + "'";
                if (default_is_listlike && default_index == i)
                    val = "{" + val + "}";
                piece(val);
            }
            break;
        }
        case OptionAlt::Kind::list: {
            for (size_t i = 0; i < list_values.size(); ++i) {
                std::string val = "'" + list_values[i].name + "'";
                if (default_is_listlike && default_index == i)
                    val = "{" + val + "}";
                if (list_values[i].numeric)
                    val += " (" + format_number(*list_values[i].numeric) + ")";
                piece(val);
            }
            break;
        }
        default:
            piece(alt.display());
        }
    }

    if (!default_is_listlike) {
        if (std::holds_alternative<std::monostate>(default_value))
            line += " {auto}";
        else if (const double* d = std::get_if<double>(&default_value))
            line += " {" + format_number(*d) + "}";
        else if (const std::string* s = std::get_if<std::string>(&default_value))
            line += " {'" + *s + "'}";
    }
    line += " ]";
    return line;
}

// ---------------------------------------------------------------------------
// catalog

namespace {

OptionDesc make_opt(std::string name, std::string short_desc, std::vector<OptionAlt> alts,
                    OptionValue def, std::vector<ListValue> list_values,
                    std::vector<std::string> long_desc, std::vector<std::string> see_also = {},
                    std::string rename_to = "") {
    OptionDesc d;
    d.name = std::move(name);
    d.short_desc = std::move(short_desc);
    d.alts = std::move(alts);
    d.default_value = std::move(def);
    d.list_values = std::move(list_values);
    d.long_desc = std::move(long_desc);
    d.see_also = std::move(see_also);
    d.rename_to = std::move(rename_to);
    return d;
}

using A = OptionAlt;

std::vector<OptionDesc> common_opts() {
    std::vector<OptionDesc> o;
    o.push_back(make_opt(
        "Integrator", "Integration method to use", {A::list()}, std::string("exprb"),
        {{"exprk", {}}, {"exprb", {}}, {"expmssemi", {}}, {"expms", {}}, {"exp4", {}}},
        {"Selects the integrator the generic driver dispatches to. exprk and",
         "expmssemi solve semilinear problems y' = Ay + g(t,y) with constant",
         "steps; exprb, expms and exp4 linearize the right hand side, exprb",
         "and exp4 with adaptive time stepping."}));
    o.push_back(make_opt(
        "AbsTol", "Absolute error tolerance", {A::scalar(A::Sign::positive), A::vector(A::Sign::positive)},
        1e-06, {},
        {"Absolute error tolerance used by the step size control. A vector",
         "value sets one tolerance per solution component."},
        {"RelTol", "NormControl"}));
    o.push_back(make_opt(
        "RelTol", "Relative error tolerance", {A::scalar(A::Sign::positive)}, 1e-3, {},
        {"Relative error tolerance used by the step size control, measured",
         "against the larger magnitude of the two step endpoint values."},
        {"AbsTol", "NormControl"}));
    o.push_back(make_opt(
        "NormControl", "Control error relative to the solution norm", {A::boolean()}, false, {},
        {"When on, the error estimate is scaled by the euclidean norm of the",
         "solution instead of componentwise."},
        {"AbsTol", "RelTol"}));
    o.push_back(make_opt(
        "MatrixFunctions", "Matrix function evaluation method",
        {A::list(), A::function_handle()}, std::string("direct"),
        {{"direct", {}}, {"arnoldi", {}}},
        {"Chooses how products of phi-functions of the Jacobian or linear",
         "part with vectors are computed: directly by diagonalisation, by a",
         "Krylov subspace method, or by a user supplied evaluator that",
         "implements the matrix function protocol."},
        {"KrylovTestIndex", "MatrixFunctionStats"}));
    o.push_back(make_opt(
        "KrylovTestIndex", "Component watched for Krylov convergence", {A::index()}, 1.0, {},
        {"Index of the solution component whose successive Krylov iterates",
         "are compared when testing convergence of the Arnoldi process."},
        {"MatrixFunctions"}));
    o.push_back(make_opt(
        "NonAutonomous", "Right hand side depends on t", {A::boolean()}, false, {},
        {"Set on when the right hand side depends explicitly on time. The",
         "problem then has to provide the derivative of the right hand side",
         "with respect to t."}));
    o.push_back(make_opt(
        "Complex", "Complex-valued phase space", {A::boolean()}, false, {},
        {"Marks the problem as complex valued; norms then use the complex",
         "modulus."}));
    o.push_back(make_opt(
        "Structure", "Jacobian structure hint", {A::matrix()}, std::monostate{}, {},
        {"Structure hint for the Jacobian. Accepted and validated, but not",
         "used by the built-in evaluators."}));
    o.push_back(make_opt(
        "GFcn", "Nonlinear part g(t,y)", {A::function_handle(), A::boolean()}, false, {},
        {"Evaluation function for the nonlinearity g of a semilinear problem.",
         "When off, g is derived from the right hand side and linear part."},
        {"Semilin"}));
    o.push_back(make_opt(
        "DOGenerator", "Dense output generator", {A::function_handle(), A::boolean()}, false, {},
        {"Switches the generic hermite dense output formula on, or installs",
         "a custom generator. The hermite formula is not suitable for stiff",
         "problems; use it with care."},
        {"Refine"}));
    o.push_back(make_opt(
        "Refine", "Output refinement factor", {A::index()}, 1.0, {},
        {"Inserts Refine-1 dense output points into every accepted step of",
         "the returned solution."},
        {"DOGenerator"}));
    o.push_back(make_opt(
        "OutputFcn", "Per-step output callback", {A::function_handle(), A::boolean()}, false, {},
        {"Called after every accepted step with the step time and the",
         "solution components selected by OutputSel."},
        {"OutputSel"}));
    o.push_back(make_opt(
        "OutputSel", "Components passed to OutputFcn", {A::indices()}, std::monostate{}, {},
        {"Indices of the solution components handed to the output callback",
         "and to file emission. By default all components are selected."},
        {"OutputFcn"}));
    o.push_back(make_opt(
        "Stats", "Print integration statistics", {A::boolean()}, false, {},
        {"Prints step and evaluation counters after the integration."}));
    o.push_back(make_opt(
        "MatrixFunctionStats", "Print matrix function statistics", {A::boolean()}, false, {},
        {"Prints the statistics collected by the matrix function evaluator."},
        {"MatrixFunctions", "Stats"}));
    o.push_back(make_opt(
        "Waitbar", "Progress display", {A::boolean()}, false, {},
        {"Reports integration progress on the status log channel."}));
    o.push_back(make_opt(
        "ClearInternalData", "Drop internal run data from the result", {A::boolean()}, true, {},
        {"When off, the returned solution keeps the internal run context for",
         "inspection."}));
    return o;
}

std::vector<OptionDesc> semilin_opts() {
    std::vector<OptionDesc> o;
    o.push_back(make_opt(
        "LinOp", "Linear part of the equation", {A::function_handle(), A::matrix(), A::boolean()},
        true, {},
        {"The linear operator A of the semilinear problem, given directly as",
         "a matrix, as an evaluation function, or (when on) taken from the",
         "problem description."},
        {"LinOpV"}));
    o.push_back(make_opt(
        "LinOpV", "Linear part times vector", {A::function_handle(), A::boolean()}, false, {},
        {"Evaluation function for the product of the linear part with a",
         "vector, for matrix-free evaluators."},
        {"LinOp", "MatrixFunctions"}));
    o.push_back(make_opt(
        "LinOpStats", "Log linear part evaluations", {A::boolean()}, false, {},
        {"Routes linear part evaluation logging to the statistics channel."}));
    return o;
}

std::vector<OptionDesc> linearization_opts() {
    std::vector<OptionDesc> o;
    o.push_back(make_opt(
        "Jacobian", "Jacobian of the right hand side", {A::function_handle(), A::boolean()},
        true, {},
        {"Evaluation function for the Jacobian of the right hand side, or",
         "(when on) taken from the problem description."},
        {"JacobianV"}));
    o.push_back(make_opt(
        "JacobianV", "Jacobian times vector", {A::function_handle(), A::boolean()}, false, {},
        {"Evaluation function for the product of the Jacobian with a vector,",
         "for matrix-free evaluators such as the Krylov method."},
        {"Jacobian", "MatrixFunctions"}));
    o.push_back(make_opt(
        "GJacobian", "Jacobian of the nonlinear part", {A::function_handle(), A::boolean()},
        false, {},
        {"Evaluation function for the Jacobian of g, used together with",
         "Semilin."},
        {"GJacobianV", "Semilin"}));
    o.push_back(make_opt(
        "GJacobianV", "Jacobian of g times vector", {A::function_handle(), A::boolean()},
        false, {},
        {"Matrix-free variant of GJacobian."},
        {"GJacobian", "Semilin"}));
    o.push_back(make_opt(
        "Semilin", "Treat the problem as semilinear", {A::boolean()}, false, {},
        {"Declares the linearized problem to be semilinear; the nonlinearity",
         "is then supplied via GFcn."},
        {"GFcn"}));
    o.push_back(make_opt(
        "JacobianStats", "Log Jacobian evaluations", {A::boolean()}, false, {},
        {"Routes Jacobian evaluation logging to the statistics channel."}));
    return o;
}

std::vector<OptionDesc> const_step_opts() {
    std::vector<OptionDesc> o;
    o.push_back(make_opt(
        "StepSize", "Constant integration step size", {A::scalar(A::Sign::positive)},
        std::monostate{}, {},
        {"The constant step size used for the whole integration. Renamed to",
         "InitialStep in the integration process."},
        {"InitialStep"}, "InitialStep"));
    o.push_back(make_opt(
        "InitialStep", "Internal name of StepSize", {A::scalar(A::Sign::positive)},
        std::monostate{}, {},
        {"Internal target of the StepSize rename; setting it directly is",
         "equivalent to setting StepSize."},
        {"StepSize"}));
    return o;
}

std::vector<OptionDesc> var_step_opts() {
    std::vector<OptionDesc> o;
    o.push_back(make_opt(
        "hConstant", "Disable the step size control", {A::boolean()}, false, {},
        {"Forces a constant step size equal to InitialStep; every step is",
         "accepted."},
        {"InitialStep"}));
    o.push_back(make_opt(
        "InitialStep", "First step size to try", {A::scalar(A::Sign::positive)},
        std::monostate{}, {},
        {"Step size used for the first step. By default it is derived from",
         "the tolerances and the right hand side at the initial value."},
        {"MaxStep", "MinStep"}));
    o.push_back(make_opt(
        "MaxStep", "Upper step size bound", {A::scalar(A::Sign::positive)}, std::monostate{}, {},
        {"Largest step size the controller may propose. Defaults to the",
         "length of the integration interval."},
        {"MinStep"}));
    o.push_back(make_opt(
        "MinStep", "Lower step size bound", {A::scalar(A::Sign::positive)}, std::monostate{}, {},
        {"Smallest step size the controller may propose; the integration",
         "aborts when a smaller step would be required. Defaults to 16 times",
         "the machine precision times the interval length."},
        {"MaxStep"}));
    o.push_back(make_opt(
        "StepStats", "Log step size decisions", {A::boolean()}, false, {},
        {"Routes per-step controller decisions to the step log channel."}));
    return o;
}

std::vector<OptionDesc> exprk_opts() {
    std::vector<OptionDesc> o;
    o.push_back(make_opt(
        "Scheme", "Exponential Runge-Kutta scheme", {A::list(), A::structure()},
        std::string("krogstad"), {{"euler", {}}, {"krogstad", {}}},
        {"Selects one of the bundled exponential Runge-Kutta schemes or",
         "installs a user-built scheme table."},
        {"Parameters"}));
    o.push_back(make_opt(
        "Parameters", "Parameters for parametric schemes", {A::structure()}, std::monostate{}, {},
        {"Opaque value passed through to parametric scheme factories; the",
         "bundled schemes ignore it."},
        {"Scheme"}));
    return o;
}

std::vector<OptionDesc> exprb_opts() {
    std::vector<OptionDesc> o;
    o.push_back(make_opt(
        "Order", "Order of the Rosenbrock-type method", {A::list()}, std::string("43"),
        {{"32", 32.0}, {"43", 43.0}},
        {"Selects the scheme: exprb32 of order three with an embedded second",
         "order estimate, or exprb43 of order four with an embedded third",
         "order estimate."},
        {"ErrorEstimate"}));
    o.push_back(make_opt(
        "ErrorEstimate", "Error estimator variant", {A::list()}, std::string("embedded"),
        {{"embedded", {}}},
        {"Error estimator used for the step size control; only the embedded",
         "lower order solution is available."},
        {"Order"}));
    return o;
}

std::vector<OptionDesc> multistep_opts() {
    std::vector<OptionDesc> o;
    o.push_back(make_opt(
        "kStep", "Number of steps of the multistep method", {A::index()}, 2.0, {},
        {"Number of previous time steps used to advance the solution."},
        {"StartupSteps"}));
    o.push_back(make_opt(
        "StartupSteps", "Substeps per startup interval", {A::index()}, 10.0, {},
        {"Number of one-step substeps used to produce each of the kStep-1",
         "startup points before the multistep scheme takes over."},
        {"kStep"}));
    return o;
}

void append(std::vector<OptionDesc>& dst, std::vector<OptionDesc> src) {
    for (auto& d : src)
        dst.push_back(std::move(d));
}

void replace_option(std::vector<OptionDesc>& dst, OptionDesc d) {
    for (auto& e : dst)
        if (e.name == d.name) {
            e = std::move(d);
            return;
        }
    dst.push_back(std::move(d));
}

std::map<std::string, std::vector<OptionDesc>> build_catalogs() {
    std::map<std::string, std::vector<OptionDesc>> cat;

    {
        std::vector<OptionDesc> o = common_opts();
        append(o, semilin_opts());
        append(o, const_step_opts());
        append(o, exprk_opts());
        cat["exprk"] = std::move(o);
    }
    {
        std::vector<OptionDesc> o = common_opts();
        append(o, linearization_opts());
        append(o, var_step_opts());
        append(o, exprb_opts());
        cat["exprb"] = std::move(o);
    }
    {
        std::vector<OptionDesc> o = common_opts();
        append(o, semilin_opts());
        append(o, const_step_opts());
        append(o, multistep_opts());
        cat["expmssemi"] = std::move(o);
    }
    {
        std::vector<OptionDesc> o = common_opts();
        append(o, linearization_opts());
        append(o, const_step_opts());
        append(o, multistep_opts());
        cat["expms"] = std::move(o);
    }
    {
        std::vector<OptionDesc> o = common_opts();
        append(o, linearization_opts());
        append(o, var_step_opts());
        // exp4 has its own dense output formula and overrides DOGenerator
        replace_option(o, make_opt(
            "DOGenerator", "Dense output generator", {A::function_handle(), A::boolean()},
            true, {},
            {"exp4 provides its own dense output formula built from the inner",
             "stages of each step; it is enabled by default and overrides the",
             "generic hermite generator."},
            {"Refine"}));
        cat["exp4"] = std::move(o);
    }
    return cat;
}

const std::map<std::string, std::vector<OptionDesc>>& catalogs() {
    static const auto cat = build_catalogs();
    return cat;
}

} // namespace

const std::vector<std::string>& integrator_names() {
    static const std::vector<std::string> names = {"exprk", "exprb", "expmssemi", "expms",
                                                   "exp4"};
    return names;
}

const std::vector<OptionDesc>& option_catalog(const std::string& integrator) {
    auto it = catalogs().find(integrator);
    if (it == catalogs().end())
        throw ValidationError("unknown integrator: " + integrator);
    return it->second;
}

const OptionDesc* find_option(const std::string& integrator, const std::string& name) {
    for (const auto& d : option_catalog(integrator))
        if (d.name == name)
            return &d;
    return nullptr;
}

// ---------------------------------------------------------------------------
// OptionsSet

OptionsSet::OptionsSet(std::string integrator) : integrator_(std::move(integrator)) {
    if (!integrator_.empty())
        option_catalog(integrator_); // throws for unknown names
}

void OptionsSet::set_integrator(std::string name) {
    if (!name.empty())
        option_catalog(name);
    integrator_ = std::move(name);
}

void OptionsSet::set(const std::string& name, OptionValue value) {
    const OptionDesc* desc = nullptr;
    if (!integrator_.empty()) {
        desc = find_option(integrator_, name);
    } else {
        for (const auto& intname : integrator_names())
            if ((desc = find_option(intname, name)))
                break;
    }
    if (!desc)
        throw ValidationError("unknown option: " + name +
                              (integrator_.empty() ? "" : " (integrator " + integrator_ + ")"));
    check_value(*desc, value);
    values_[name] = std::move(value);
}

bool OptionsSet::has(const std::string& name) const { return values_.count(name) != 0; }

const OptionValue* OptionsSet::get(const std::string& name) const {
    auto it = values_.find(name);
    return it == values_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// validation

NormalizedOptions validate(const OptionsSet& opts, const std::string& integrator) {
    std::string intname = integrator.empty() ? opts.integrator() : integrator;
    if (intname.empty()) {
        // fall back to the Integrator option
        if (const OptionValue* v = opts.get("Integrator")) {
            if (const std::string* s = std::get_if<std::string>(v))
                intname = *s;
            else if (const double* d = std::get_if<double>(v))
                intname = integrator_names().at(size_t(*d));
        } else {
            intname = "exprb";
        }
    }
    const auto& catalog = option_catalog(intname);

    NormalizedOptions out;
    out.integrator = intname;

    std::string errors;
    for (const auto& desc : catalog) {
        const OptionValue* user = opts.get(desc.name);
        OptionValue value;
        try {
            if (user)
                value = check_value(desc, *user);
            else if (std::holds_alternative<std::monostate>(desc.default_value))
                value = std::monostate{};
            else
                value = check_value(desc, desc.default_value);
        } catch (const ValidationError& e) {
            errors += std::string(errors.empty() ? "" : "; ") + e.what();
            continue;
        }
        out.raw[desc.name] = value;
    }
    // reject options set for a different integrator class
    for (const auto& [name, value] : opts.entries()) {
        (void)value;
        if (!find_option(intname, name))
            errors += std::string(errors.empty() ? "" : "; ") + "option " + name +
                      " is not supported by integrator " + intname;
    }
    if (!errors.empty())
        throw ValidationError("invalid options: " + errors);

    // renames (StepSize -> InitialStep for constant-step integrators)
    for (const auto& desc : catalog) {
        if (desc.rename_to.empty())
            continue;
        auto it = out.raw.find(desc.name);
        if (it == out.raw.end())
            continue;
        if (!std::holds_alternative<std::monostate>(it->second) &&
            (!opts.has(desc.rename_to)))
            out.raw[desc.rename_to] = it->second;
        out.raw.erase(it);
    }

    out.constant_step = find_option(intname, "StepSize") != nullptr;
    if (!out.constant_step && out.raw.count("hConstant"))
        out.constant_step = std::get<double>(out.raw.at("hConstant")) != 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// NormalizedOptions accessors

bool NormalizedOptions::is_auto(const std::string& name) const {
    auto it = raw.find(name);
    if (it == raw.end())
        throw ValidationError("option not in normalized set: " + name);
    return std::holds_alternative<std::monostate>(it->second);
}

double NormalizedOptions::number(const std::string& name) const {
    auto it = raw.find(name);
    if (it == raw.end())
        throw ValidationError("option not in normalized set: " + name);
    if (const double* d = std::get_if<double>(&it->second))
        return *d;
    if (const Vec* v = std::get_if<Vec>(&it->second); v && v->size() == 1)
        return (*v)(0);
    throw ValidationError("option " + name + " is not scalar");
}

Vec NormalizedOptions::numbers(const std::string& name) const {
    auto it = raw.find(name);
    if (it == raw.end())
        throw ValidationError("option not in normalized set: " + name);
    if (const double* d = std::get_if<double>(&it->second))
        return Vec::Constant(1, *d);
    if (const Vec* v = std::get_if<Vec>(&it->second))
        return *v;
    throw ValidationError("option " + name + " is not numeric");
}

bool NormalizedOptions::flag(const std::string& name) const { return number(name) != 0.0; }

int NormalizedOptions::list_index(const std::string& name) const {
    return int(number(name));
}

double NormalizedOptions::list_numeric(const std::string& name) const {
    const OptionDesc* d = find_option(integrator, name);
    if (!d)
        throw ValidationError("unknown option: " + name);
    size_t idx = size_t(number(name));
    if (idx < d->list_values.size() && d->list_values[idx].numeric)
        return *d->list_values[idx].numeric;
    return double(idx);
}

std::string NormalizedOptions::list_name(const std::string& name) const {
    const OptionDesc* d = find_option(integrator, name);
    if (!d)
        throw ValidationError("unknown option: " + name);
    size_t idx = size_t(number(name));
    if (idx >= d->list_values.size())
        throw ValidationError("option " + name + ": index out of range");
    return d->list_values[idx].name;
}

const Handle* NormalizedOptions::handle(const std::string& name) const {
    auto it = raw.find(name);
    if (it == raw.end())
        return nullptr;
    return std::get_if<Handle>(&it->second);
}

// ---------------------------------------------------------------------------
// info

std::string info(const std::string& integrator, const std::string& opt_name) {
    const auto& catalog = option_catalog(integrator);
    std::ostringstream out;
    if (opt_name.empty()) {
        out << "Options supported by " << integrator << ":\n";
        for (const auto& d : catalog)
            out << d.info_line() << "\n";
        return out.str();
    }
    auto print_long = [&](const OptionDesc& d) {
        out << d.info_line() << "\n";
        for (const auto& line : d.long_desc)
            out << "    " << line << "\n";
        if (!d.see_also.empty()) {
            out << "    See also:";
            for (size_t i = 0; i < d.see_also.size(); ++i)
                out << (i ? ", " : " ") << d.see_also[i];
            out << "\n";
        }
    };
    if (opt_name == "-") {
        for (const auto& d : catalog) {
            print_long(d);
            out << "\n";
        }
        return out.str();
    }
    const OptionDesc* d = find_option(integrator, opt_name);
    if (!d)
        throw ValidationError("unknown option: " + opt_name + " (integrator " + integrator +
                              ")");
    print_long(*d);
    return out.str();
}

// ---------------------------------------------------------------------------
// config-file parsing

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

OptionValue parse_option_text(const std::string& raw) {
    std::string text = trim(raw);
    if (text.empty())
        throw ValidationError("empty option value");
    if (auto b = parse_boolean_string(text))
        return *b;
    if (text.front() == '[') {
        if (text.back() != ']')
            throw ValidationError("unterminated vector value: " + text);
        std::string inner = text.substr(1, text.size() - 2);
        std::vector<double> vals;
        std::istringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty())
                continue;
            size_t pos = 0;
            double v = std::stod(item, &pos);
            if (pos != item.size())
                throw ValidationError("bad vector entry: " + item);
            vals.push_back(v);
        }
        Vec v(Eigen::Index(vals.size()));
        for (size_t i = 0; i < vals.size(); ++i)
            v(Eigen::Index(i)) = vals[i];
        return v;
    }
    try {
        size_t pos = 0;
        double v = std::stod(text, &pos);
        if (pos == text.size())
            return v;
    } catch (const std::exception&) {
    }
    return text;
}

void apply_options_text(OptionsSet& opts, std::istream& in) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("options file line " + std::to_string(lineno) +
                                  ": expected Name = value");
        std::string name = trim(line.substr(0, eq));
        opts.set(name, parse_option_text(line.substr(eq + 1)));
    }
}

} // namespace expode
