#include "expode/scheme.hpp"

namespace expode {

void RkScheme::check() const {
    if (stages < 1)
        throw ValidationError("scheme: at least one stage required");
    if (c.size() != stages || int(a.size()) != stages || int(b.size()) != stages)
        throw ValidationError("scheme: table sizes do not match the stage count");
    if (c(0) != 0.0)
        throw ValidationError("scheme: c(1) must be 0");
    bool any_b = false;
    for (int i = 0; i < stages; ++i) {
        if (int(a[i].size()) != stages)
            throw ValidationError("scheme: ragged coefficient table");
        for (int j = 0; j < stages; ++j) {
            if (a[i][j].size() == 0)
                continue;
            if (j >= i)
                throw ValidationError("scheme: only explicit schemes are supported");
            if (a[i][j].size() > 4)
                throw ValidationError("scheme: coefficient rows index phi_1..phi_4 only");
        }
        if (b[i].size() > 4)
            throw ValidationError("scheme: coefficient rows index phi_1..phi_4 only");
        any_b = any_b || b[i].size() > 0;
    }
    if (!any_b)
        throw ValidationError("scheme: no weight rows set");
}

RkScheme rk_scheme(int stages) {
    if (stages < 1)
        throw ValidationError("scheme: at least one stage required");
    RkScheme sc;
    sc.stages = stages;
    sc.c = Vec::Zero(stages);
    sc.a.assign(size_t(stages), std::vector<Vec>(size_t(stages)));
    sc.b.assign(size_t(stages), Vec());
    return sc;
}

void rk_scheme_set_a(RkScheme& sc, int i, int j, Vec row) {
    if (i < 1 || i > sc.stages || j < 1 || j > sc.stages)
        throw ValidationError("scheme: stage index out of range");
    if (j >= i)
        throw ValidationError("scheme: only explicit schemes are supported");
    if (row.size() > 4)
        throw ValidationError("scheme: coefficient rows index phi_1..phi_4 only");
    sc.a[size_t(i - 1)][size_t(j - 1)] = std::move(row);
}

void rk_scheme_set_b(RkScheme& sc, int i, Vec row) {
    if (i < 1 || i > sc.stages)
        throw ValidationError("scheme: stage index out of range");
    if (row.size() > 4)
        throw ValidationError("scheme: coefficient rows index phi_1..phi_4 only");
    sc.b[size_t(i - 1)] = std::move(row);
}

namespace {

Vec row(std::initializer_list<double> v) {
    Vec r(Eigen::Index(v.size()));
    Eigen::Index i = 0;
    for (double x : v)
        r(i++) = x;
    return r;
}

} // namespace

RkScheme krogstad_scheme() {
    RkScheme sc = rk_scheme(4);
    sc.name = "krogstad";
    sc.c << 0.0, 0.5, 0.5, 1.0;
    rk_scheme_set_a(sc, 2, 1, row({0.5}));
    rk_scheme_set_a(sc, 3, 1, row({0.5, -1.0}));
    rk_scheme_set_a(sc, 3, 2, row({0.0, 1.0}));
    rk_scheme_set_a(sc, 4, 1, row({1.0, -2.0}));
    rk_scheme_set_a(sc, 4, 3, row({0.0, 2.0}));
    rk_scheme_set_b(sc, 1, row({1.0, -3.0, 4.0}));
    rk_scheme_set_b(sc, 2, row({0.0, 2.0, -4.0}));
    rk_scheme_set_b(sc, 3, row({0.0, 2.0, -4.0}));
    rk_scheme_set_b(sc, 4, row({0.0, -1.0, 4.0}));
    sc.check();
    return sc;
}

RkScheme euler_scheme() {
    RkScheme sc = rk_scheme(1);
    sc.name = "euler";
    rk_scheme_set_b(sc, 1, row({1.0}));
    sc.check();
    return sc;
}

RkScheme scheme_by_name(const std::string& name) {
    if (name == "krogstad")
        return krogstad_scheme();
    if (name == "euler")
        return euler_scheme();
    throw ValidationError("unknown scheme: " + name);
}

} // namespace expode
