#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "qaclab/green.hpp"

using namespace qaclab;

namespace {

QacSpace cone(double R, int N = 16, double inner = 1.0)
{
    ConeOptions co;
    co.inner_radius = inner;
    return build_ac_space(build_compact_base({"sphere_graph", N, 1, ""}), 1, R, co);
}

double norm(const std::vector<double>& x)
{
    double s = 0.0;
    for (double c : x)
        s += c * c;
    return std::sqrt(s);
}

// Line with a fine window times a finely capped cone over C24.
QacSpace probe_space(double R)
{
    return build_product(build_line_space(R), cone(R, 24, 0.1));
}

// (d, G) for vertices of an embedded lattice with lo <= |x| <= hi.
LineFit lattice_slope(const QacSpace& z, const GreenField& g, double lo, double hi)
{
    std::vector<double> x, y;
    for (int v = 0; v < z.size(); ++v) {
        double r = norm(z.graph.pos[v]);
        if (r >= lo && r <= hi) {
            x.push_back(r);
            y.push_back(g.values[v]);
        }
    }
    return log_log_fit(x, y);
}

}  // namespace

TEST_CASE("3D lattice Green function decays like 1/|x|", "[green]")
{
    auto z = build_lattice_space(3, 24);
    auto op = assemble(z, WeightParams(0, {}, z.dims), {}, false, Truncation::exterior);
    auto g = green_column(op, OperatorKind::plain, z.basepoint);
    REQUIRE(g.residual <= 1e-10);
    auto fit = lattice_slope(z, g, 4, 12);
    CHECK(fit.slope == Catch::Approx(-1.0).margin(0.15));

    // the flat-space normalisation 1/(4 pi |x|) on the axis
    for (int v = 0; v < z.size(); ++v) {
        const auto& p = z.graph.pos[v];
        if (p[1] == 0 && p[2] == 0 && p[0] >= 4 && p[0] <= 12)
            CHECK(4 * M_PI * p[0] * g.values[v] == Catch::Approx(1.0).margin(0.05));
    }

    // Dirichlet truncation alone bends the profile by the constant -1/(4 pi R)
    auto dir = assemble(z, WeightParams(0, {}, z.dims));
    auto gd = green_column(dir, OperatorKind::plain, z.basepoint);
    CHECK(lattice_slope(z, gd, 4, 12).slope < -1.3);
}

TEST_CASE("sparse Green solve matches a dense solve", "[green]")
{
    auto z = build_lattice_space(3, 8);
    for (auto tr : {Truncation::exterior, Truncation::dirichlet}) {
        auto op = assemble(z, WeightParams(0, {}, z.dims), {}, false, tr);
        Eigen::MatrixXd K(op.K);
        Eigen::LLT<Eigen::MatrixXd> llt(K);
        REQUIRE(llt.info() == Eigen::Success);
        Vec e = Vec::Zero(op.size());
        e[op.slot[z.basepoint]] = 1.0;
        Vec dense = llt.solve(e);
        auto g = green_column(op, OperatorKind::plain, z.basepoint);
        double worst = 0.0;
        for (int i = 0; i < op.size(); ++i)
            worst = std::max(worst, std::abs(g.values[op.interior[i]] - dense[i]) / dense.maxCoeff());
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("Green functions are symmetric and satisfy the Doob relation", "[green]")
{
    auto z = cone(32);
    for (double a : {1.5, -0.5}) {
        auto op = assemble(z, WeightParams(a, {}, z.dims));
        std::mt19937_64 gen(11);
        std::vector<int> src;
        for (int k = 0; k < 10; ++k)
            src.push_back(op.interior[gen() % op.interior.size()]);
        auto gs = green_columns(op, OperatorKind::schrodinger, src);
        auto gm = green_columns(op, OperatorKind::mu, src);
        int pairs = 0;
        double worst_sym = 0.0, worst_doob = 0.0;
        for (size_t i = 0; i < src.size(); ++i)
            for (size_t j = 0; j < src.size(); ++j) {
                if (i == j)
                    continue;
                double gij = gs[i].values[src[j]], gji = gs[j].values[src[i]];
                worst_sym = std::max(worst_sym, std::abs(gij - gji) / std::max(gij, gji));
                ++pairs;
            }
        for (size_t i = 0; i < src.size(); ++i)
            for (int v : op.interior) {
                double lhs = gs[i].values[v];
                double rhs = op.h[src[i]] * op.h[v] * gm[i].values[v];
                worst_doob = std::max(worst_doob, std::abs(lhs - rhs) / gs[i].values[src[i]]);
            }
        CHECK(pairs >= 50);
        CHECK(worst_sym <= 1e-8);
        CHECK(worst_doob <= 1e-8);
    }
}

TEST_CASE("time integral of the heat kernel reproduces the Green function", "[green]")
{
    auto z = build_lattice_space(3, 8);
    auto op = assemble(z, WeightParams(0, {}, z.dims));
    const double R = z.truncation_radius;
    auto I = heat_time_integral(op, OperatorKind::plain, z.basepoint, 4 * R * R);
    auto g = green_column(op, OperatorKind::plain, z.basepoint);
    double worst = 0.0;
    int n = 0;
    for (int v = 0; v < z.size(); ++v) {
        double r = norm(z.graph.pos[v]);
        if (r <= R / 2 && op.slot[v] >= 0) {
            worst = std::max(worst, std::abs(I[v] - g.values[v]) / g.values[v]);
            ++n;
        }
    }
    CHECK(n > 50);
    CHECK(worst <= 0.05);
}

TEST_CASE("Green functions are stable under doubling the truncation", "[green]")
{
    SECTION("lattice with the exterior closure")
    {
        auto z1 = build_lattice_space(3, 12), z2 = build_lattice_space(3, 24);
        auto g1 = green_column(assemble(z1, WeightParams(0, {}, z1.dims), {}, false, Truncation::exterior),
                               OperatorKind::plain, z1.basepoint);
        auto g2 = green_column(assemble(z2, WeightParams(0, {}, z2.dims), {}, false, Truncation::exterior),
                               OperatorKind::plain, z2.basepoint);
        double worst = 0.0;
        for (int v = 0; v < z1.size(); ++v) {
            if (norm(z1.graph.pos[v]) > 6)
                continue;
            int u = nearest_vertex(z2.graph, z1.graph.pos[v]);
            worst = std::max(worst, std::abs(g1.values[v] - g2.values[u]) / g2.values[u]);
        }
        CHECK(worst <= 0.10);
    }
    SECTION("cone product with Dirichlet truncation")
    {
        auto z1 = build_product(cone(32), cone(32)), z2 = build_product(cone(64), cone(64));
        WeightParams p1(0.0, {0.0}, z1.dims), p2(0.0, {0.0}, z2.dims);
        auto g1 = green_column(assemble(z1, p1), OperatorKind::schrodinger, z1.basepoint);
        auto g2 = green_column(assemble(z2, p2), OperatorKind::schrodinger, z2.basepoint);
        auto d1 = space_distances(z1, z1.basepoint);
        double worst = 0.0;
        for (int v = 0; v < z1.size(); ++v) {
            if (d1[v] > 4.0 || v == z1.basepoint)
                continue;
            std::vector<int> local;
            for (int k = 0; k < 2; ++k)
                local.push_back(nearest_vertex(z2.factors[k].graph, z1.factors[k].graph.pos[z1.factor_index(k, v)]));
            int u = product_vertex(z2, local);
            worst = std::max(worst, std::abs(g1.values[v] - g2.values[u]) / g2.values[u]);
        }
        CHECK(worst <= 0.10);
    }
}

TEST_CASE("Green function obeys the maximum principle", "[green]")
{
    auto z = cone(32);
    auto op = assemble(z, WeightParams(1.0, {}, z.dims));
    for (int src : {z.basepoint, op.interior[op.size() / 2]}) {
        auto g = green_column(op, OperatorKind::schrodinger, src);
        double top = 0.0;
        for (int v : op.interior) {
            CHECK(g.values[v] > 0.0);
            top = std::max(top, g.values[v]);
        }
        CHECK(top == g.values[src]);
        // harmonic away from the source
        Vec x(op.size());
        for (int i = 0; i < op.size(); ++i)
            x[i] = g.values[op.interior[i]];
        Vec r = op.K_schrodinger * x;
        r[op.slot[src]] -= 1.0;
        CHECK(r.cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("Green volume integral is exact on step profiles", "[green]")
{
    // V_z jumps by 1 at 1, 2, 3, ...; V_y jumps by 2 at 0.5, 1.5, ...
    std::vector<double> dz, mz, dy, my;
    for (int k = 1; k <= 40; ++k) {
        dz.push_back(k);
        mz.push_back(1.0);
        dy.push_back(k - 0.5);
        my.push_back(2.0);
    }
    VolumeProfile vz(dz, mz), vy(dy, my);
    const double d = 3.2, S = 30.0, growth = 3.0;
    auto I = green_integral(vz, vy, d, S, growth);
    // fine midpoint rule on the step functions plus the analytic tail
    double ref = 0.0;
    const int steps = 2000000;
    for (int i = 0; i < steps; ++i) {
        double s = d + (S - d) * (i + 0.5) / steps;
        ref += s / std::sqrt(vz(s) * vy(s)) * (S - d) / steps;
    }
    ref += S * S / ((growth - 2.0) * std::sqrt(vz(S) * vy(S)));
    CHECK(I.total() == Catch::Approx(ref).epsilon(1e-5));
    CHECK_THROWS_AS(green_integral(vz, vy, d, S, 2.0), domain_error);
}

TEST_CASE("Green function matches the volume integral", "[green]")
{
    auto z = build_product(cone(64), cone(64));
    auto op = assemble(z, WeightParams(0.0, {0.0}, z.dims));
    // the basepoint plus the best resolved vertex deep inside
    auto bd = boundary_distances(z);
    int fine = z.basepoint;
    for (int v = 0; v < z.size(); ++v)
        if (bd[v] >= 50 && resolved_radius(z, v) < resolved_radius(z, fine))
            fine = v;
    auto rep = verify_green_integral(op, {z.basepoint, fine});
    INFO(rep.note);
    CHECK(rep.verdict == Verdict::pass);
    CHECK(rep.samples.size() >= 20);

    // from the cap to far away the integral is carried by s ~ d
    auto density = measure_density(z, op.params);
    auto dist = space_distances(z, z.basepoint);
    int far = -1;
    for (int v = 0; v < z.size(); ++v)
        if (dist[v] > 8 && dist[v] < 10 && (far < 0 || bd[v] > bd[far]))
            far = v;
    REQUIRE(far >= 0);
    VolumeProfile vz(dist, density), vy(space_distances(z, far), density);
    auto I = green_integral(vz, vy, dist[far], std::min(bd[far], bd[z.basepoint]), 4.0);
    CHECK(I.near / I.total() >= 0.3);
}

TEST_CASE("unweighted Green function on a 4D product decays like d^-2", "[green]")
{
    auto z = build_product(cone(64), cone(64));
    auto op = assemble(z, WeightParams(0.0, {0.0}, z.dims));
    auto g = green_column(op, OperatorKind::schrodinger, z.basepoint);
    auto dist = space_distances(z, z.basepoint);
    std::vector<double> x, y;
    for (int v = 0; v < z.size(); ++v)
        if (dist[v] >= 2 && dist[v] <= 16) {
            x.push_back(dist[v]);
            y.push_back(g.values[v]);
        }
    CHECK(log_log_fit(x, y).slope == Catch::Approx(-2.0).margin(0.25));
}

TEST_CASE("far case with a radial weight", "[green]")
{
    auto z = cone(64);
    WeightParams p(2.0, {}, z.dims);
    auto op = assemble(z, p);
    GfeOptions o;
    auto rep = verify_gfe_cases(op, {z.basepoint}, o);
    INFO(rep.note);
    CHECK(rep.case_far.samples.size() > 100);
    CHECK(rep.case_far.verdict != Verdict::fail);
    // G / hh against d^{2 - a - n} = d^-2
    auto g = green_column(op, OperatorKind::schrodinger, z.basepoint);
    auto dist = space_distances(z, z.basepoint);
    std::vector<double> x, y;
    for (int v = 0; v < z.size(); ++v)
        if (dist[v] >= 2 && dist[v] <= 16) {
            x.push_back(dist[v]);
            y.push_back(g.values[v] / (op.h[z.basepoint] * op.h[v]));
        }
    CHECK(log_log_fit(x, y).slope == Catch::Approx(-2.0).margin(0.3));
}

TEST_CASE("remote band exponent at a probe with small w1", "[green][probe]")
{
    auto z = probe_space(64);
    WeightParams p(0.0, {1.0}, z.dims);
    auto op = assemble(z, p);
    for (double eps : {1.0 / 8, 1.0 / 16}) {
        int probe = place_probe(z, eps);
        CHECK(z.w[0][probe] == Catch::Approx(eps).epsilon(0.03));
        CHECK(resolved_radius(z, probe) <= 0.2 + 1e-9);
        GfeOptions o;
        o.c = 0.4;
        auto rep = verify_gfe_cases(op, {probe}, o);
        INFO(rep.note);
        const BandFit* remote = nullptr;
        for (const auto& f : rep.bands)
            if (f.index == 1)
                remote = &f;
        REQUIRE(remote != nullptr);
        CHECK(remote->predicted == -2.0);
        CHECK(remote->measured == Catch::Approx(-2.0).margin(0.3));
        CHECK(rep.verdict == Verdict::pass);
    }
}

TEST_CASE("Green estimate preconditions", "[green]")
{
    auto z = cone(16);
    CHECK_THROWS_AS(verify_gfe_cases(assemble(z, WeightParams(0.0, {}, z.dims)), {z.basepoint}),
                    precondition_error);
    auto zp = build_product(cone(8), cone(8));
    CHECK_THROWS_AS(verify_gfe_cases(assemble(zp, WeightParams(0.0, {-3.0}, zp.dims)), {zp.basepoint}),
                    precondition_error);
    auto op = assemble(z, WeightParams(1.0, {}, z.dims), trivial_bundle(z, 2, std::vector<double>(z.size(), 0.0)));
    CHECK_THROWS_AS(green_column(op, OperatorKind::bundle, z.basepoint), domain_error);
    CHECK_THROWS_AS(assemble(z, WeightParams(0.0, {}, z.dims), {}, false, Truncation::exterior), domain_error);
    auto zl = build_lattice_space(3, 6);
    CHECK_THROWS_AS(assemble(zl, WeightParams(1.0, {}, zl.dims), {}, false, Truncation::exterior), domain_error);
}
