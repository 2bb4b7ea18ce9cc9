#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "qaclab/schur_fredholm.hpp"

using namespace qaclab;

namespace {

QacSpace cone(double R, int N = 16)
{
    return build_ac_space(build_compact_base({"sphere_graph", N, 1, ""}), 1, R);
}

QacSpace two_ended(double R)
{
    return build_two_ended(build_compact_base({"sphere_graph", 4, 2, ""}), 2, R);
}

struct LadderHolder {
    std::vector<QacSpace> spaces;
    std::vector<OperatorBundle> ops;
    Ladder ladder;
    template <class Build>
    LadderHolder(std::vector<double> radii, Build build, double a, std::vector<double> b)
    {
        for (double R : radii)
            spaces.push_back(build(R));
        for (auto& z : spaces)
            ops.push_back(assemble(z, WeightParams(a, b, z.dims)));
        for (auto& o : ops)
            ladder.push_back(&o);
    }
};

}  // namespace

TEST_CASE("nu and the norm weight on a product of planar cones")
{
    auto z = build_product(cone(16), cone(16));
    REQUIRE(z.depth == 1);
    auto nu = nu_vector(z);
    REQUIRE(nu == std::vector<double>{2.0});
    auto W = norm_weight(z, -0.7, {0.3}, 1.0);
    for (int v : {0, 17, z.size() / 2, z.size() - 1}) {
        double expect = std::pow(z.rho[v], 0.7 - 2.0 + 1.0) * std::pow(z.w[0][v], -0.3 - 1.0 + 1.0);
        CHECK(W[v] == Catch::Approx(expect).epsilon(1e-12));
    }
    CHECK_THROWS_AS(norm_weight(z, 0.0, {}), domain_error);
}

TEST_CASE("weighted norms: constants, finiteness and growth of powers")
{
    auto z = cone(32);
    std::vector<double> one(z.size(), 1.0);
    WeightedNorm l2{-0.4, {}, NormOrder::L2};
    WeightedNorm h2{-0.4, {}, NormOrder::H2};
    CHECK(weighted_norm(z, one, h2) == Catch::Approx(weighted_norm(z, one, l2)).epsilon(1e-14));

    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> f(z.size()), twice(z.size()), zero(z.size(), 0.0);
    for (int v = 0; v < z.size(); ++v) {
        f[v] = unit(gen);
        twice[v] = 2.0 * f[v];
    }
    for (const auto& wn : {l2, h2}) {
        CHECK(weighted_norm(z, zero, wn) == 0.0);
        CHECK(weighted_norm(z, twice, wn) == Catch::Approx(2.0 * weighted_norm(z, f, wn)).epsilon(1e-12));
    }

    // rho^s has finite L2(delta) norm exactly when s < delta
    auto norm_at = [](double R, double s, double delta) {
        auto c = cone(R);
        std::vector<double> f(c.size());
        for (int v = 0; v < c.size(); ++v)
            f[v] = std::pow(c.rho[v], s);
        return weighted_norm(c, f, {delta, {}, NormOrder::L2});
    };
    const double delta = -0.5;
    double below = norm_at(256, delta - 0.5, delta) / norm_at(128, delta - 0.5, delta);
    double above = norm_at(256, delta + 0.5, delta) / norm_at(128, delta + 0.5, delta);
    CHECK(below < 1.01);
    CHECK(above == Catch::Approx(std::sqrt(2.0)).epsilon(0.05));
}

TEST_CASE("predicted windows")
{
    auto p = build_product(cone(8), cone(8));
    auto w0 = predicted_window(p, WeightParams(0, {0}, p.dims));
    CHECK(w0.delta_lo == -2.0);
    CHECK(w0.delta_hi == 0.0);
    CHECK(w0.tau_lo == std::vector<double>{0.0});
    CHECK(w0.tau_hi == std::vector<double>{0.0});
    auto w2 = predicted_window(p, WeightParams(1, {2}, p.dims));
    CHECK(w2.delta_lo == -2.5);
    CHECK(w2.delta_hi == 0.5);
    CHECK(w2.tau_lo == std::vector<double>{-1.0});
    CHECK(w2.tau_hi == std::vector<double>{1.0});
    auto l = build_lattice_space(3, 4);
    auto wl = predicted_window(l, WeightParams(0, {}, l.dims));
    CHECK(wl.delta_lo == -1.0);
    CHECK(wl.delta_hi == 0.0);
    CHECK(wl.contains(-0.5, {}));
    CHECK_FALSE(wl.contains(0.0, {}));
}

TEST_CASE("the two Schur conditions intersect to the stated window")
{
    auto p1 = build_product(cone(8, 8), cone(8, 8));
    auto p2 = build_qac({cone(8, 8), cone(8, 8), cone(8, 8)});
    REQUIRE(p2.depth == 2);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-4.0, 3.0);
    int inside = 0, outside = 0;
    for (const QacSpace* z : {&p1, &p2}) {
        for (double a : {0.0, 1.0, -1.0}) {
            for (double b1 : {0.0, 1.0, 2.5}) {
                std::vector<double> b(z->depth, 0.0);
                b[0] = b1;
                if (z->depth > 1)
                    b[1] = 0.5;
                WeightParams wp(a, b, z->dims);
                if (!fredholm_hypothesis_violation(*z, wp).empty())
                    continue;
                const auto box = predicted_window(*z, wp);
                for (int k = 0; k < 400; ++k) {
                    double delta = U(rng);
                    std::vector<double> tau(z->depth);
                    for (int i = 0; i < z->depth; ++i)
                        tau[i] = std::round(U(rng) * 4.0) / 4.0;  // hit the closed edges often
                    bool in = box.contains(delta, tau);
                    (in ? inside : outside)++;
                    INFO("a=" << a << " b1=" << b1 << " delta=" << delta << " tau1=" << tau[0]);
                    CHECK(in == schur_window_violation(*z, wp, delta, tau).empty());
                }
            }
        }
    }
    CHECK(inside > 100);
    CHECK(outside > 100);
}

TEST_CASE("hypothesis and lemma violations are named")
{
    auto p = build_product(cone(8), cone(8));
    CHECK(fredholm_hypothesis_violation(p, WeightParams(0, {0}, p.dims)).empty());
    CHECK(fredholm_hypothesis_violation(p, WeightParams(0, {-1}, p.dims)) == "|b(j)| + m_{j-1} >= 2 at j=1");
    auto l2 = build_lattice_space(2, 4);
    CHECK(fredholm_hypothesis_violation(l2, WeightParams(0, {}, l2.dims)) == "a + n > 2");
    auto l3 = build_lattice_space(3, 4);
    WeightParams p3(0, {}, l3.dims);
    CHECK(schur_lemma_violation(l3, p3, -2.5, {}).empty());
    CHECK(schur_lemma_violation(l3, p3, -3.5, {}) == "alpha >= -n - a/2");
    CHECK(schur_lemma_violation(l3, p3, -1.0, {}) == "alpha < a/2 - 2");
    CHECK(schur_lemma_violation(p, WeightParams(0, {0}, p.dims), -3.0, {-1.0}) == "beta_i <= b_i/2 - 2 on w_1 at i=1");
    CHECK(schur_window_violation(p, WeightParams(0, {0}, p.dims), -1.0, {-0.5}).rfind("forward: ", 0) == 0);
}

TEST_CASE("Schur integral against a dense oracle on a small lattice")
{
    auto z = build_lattice_space(3, 6);
    auto op = assemble(z, WeightParams(0, {}, z.dims));
    // stiffness straight from the edges
    const int n = op.size();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : z.graph.edges) {
        int i = op.slot[e.u], j = op.slot[e.v];
        if (i >= 0)
            K(i, i) += e.conductance;
        if (j >= 0)
            K(j, j) += e.conductance;
        if (i >= 0 && j >= 0) {
            K(i, j) -= e.conductance;
            K(j, i) -= e.conductance;
        }
    }
    const double alpha = -2.5;
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) {
        int v = op.interior[i];
        rhs[i] = z.graph.measure[v] * std::pow(z.rho[v], alpha);
    }
    Eigen::VectorXd I = K.llt().solve(rhs);
    double sup = 0.0;
    for (int i = 0; i < n; ++i)
        sup = std::max(sup, I[i] / std::pow(z.rho[op.interior[i]], alpha + 2.0));

    auto z2 = build_lattice_space(3, 12);
    auto op2 = assemble(z2, WeightParams(0, {}, z2.dims));
    auto r = schur_bound_check({&op, &op2}, alpha + 2.0, {});
    CHECK(r.sup_ratio[0] == Catch::Approx(sup).epsilon(1e-8));
}

TEST_CASE("Schur integral bound on the 3D lattice")
{
    LadderHolder h({8, 16, 32}, [](double R) { return build_lattice_space(3, R); }, 0, {});
    auto ok = schur_bound_check(h.ladder, -0.5, {});
    CHECK(ok.failed_condition.empty());
    CHECK(ok.verdict == Verdict::pass);
    CHECK(ok.growth.back() <= 1.25);

    auto low = schur_bound_check(h.ladder, -1.5, {});
    CHECK(low.failed_condition == "alpha >= -n - a/2");
    CHECK(low.verdict == Verdict::fail);
    CHECK(low.growth.back() >= 1.5);

    auto high = schur_bound_check(h.ladder, 1.0, {});
    CHECK(high.failed_condition == "alpha < a/2 - 2");
    CHECK(high.growth.back() >= 1.5);
}

TEST_CASE("Schur functional on a product with a potential")
{
    LadderHolder h({16, 32, 64}, [](double R) { return build_product(cone(R), cone(R)); }, 0, {2});
    auto centre = schur_functional(h.ladder, -1.0, {0.0});
    CHECK(centre.verdict == Verdict::pass);
    // at the window centre the two conjugating weights coincide
    for (size_t i = 0; i < centre.radii.size(); ++i)
        CHECK(centre.forward[i] == Catch::Approx(centre.backward[i]).epsilon(1e-6));
    auto out = schur_functional(h.ladder, 1.0, {0.0});
    CHECK(out.verdict == Verdict::fail);

    double c0 = 0.0;
    for (const auto* op : h.ladder) {
        double c = h2_bound_constant(*op, -1.0, {0.0}, 20, 5);
        CHECK(std::isfinite(c));
        if (c0 == 0.0)
            c0 = c;
        CHECK(c == Catch::Approx(c0).epsilon(0.25));
    }
}

TEST_CASE("window scan with a potential recovers the stated window")
{
    LadderHolder h({32, 64}, [](double R) { return build_product(cone(R), cone(R)); }, 0, {2});
    auto g = default_window_grid(*h.ladder[0]->space, h.ladder[0]->params);
    CHECK(g.delta_lo == -3.0);
    CHECK(g.delta_hi == 1.0);
    CHECK(g.tau_lo == -2.0);
    CHECK(g.tau_hi == 2.0);
    g.cross = true;
    auto s = window_scan(h.ladder, g);
    CHECK(s.interior_ok);
    CHECK(s.boundaries_ok);
    CHECK(std::abs(s.delta_lo + 2.0) <= 0.1);
    CHECK(std::abs(s.delta_hi) <= 0.1);
    CHECK(std::abs(s.tau_lo + 1.0) <= 0.1);
    CHECK(std::abs(s.tau_hi - 1.0) <= 0.1);
    for (const auto& p : s.points) {
        if (p.predicted_inside || p.boundary_cell)
            continue;
        INFO("delta=" << p.delta << " tau=" << p.tau1 << " growth=" << p.growth);
        CHECK(p.measured != WindowClass::bounded);
        double out = std::max({-2.0 - p.delta, p.delta, -1.0 - p.tau1, p.tau1 - 1.0});
        if (out >= 0.75)
            CHECK(p.measured == WindowClass::unbounded);
    }
    auto csv = window_csv(s);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(s.points.size()) + 1);
}

TEST_CASE("window scan on the flat 3D lattice")
{
    LadderHolder h({16, 32}, [](double R) { return build_lattice_space(3, R); }, 0, {});
    auto g = default_window_grid(*h.ladder[0]->space, h.ladder[0]->params);
    g.delta_step = 0.25;
    auto s = window_scan(h.ladder, g);
    CHECK(s.points.size() == 13);
    CHECK(s.interior_ok);
    CHECK(std::isfinite(s.delta_lo));
    CHECK(std::isfinite(s.delta_hi));
    CHECK(std::isnan(s.tau_lo));
}

TEST_CASE("window scan rejects malformed ladders")
{
    auto z = build_lattice_space(3, 4);
    auto op = assemble(z, WeightParams(0, {}, z.dims));
    auto g = default_window_grid(z, op.params);
    CHECK_THROWS_AS(window_scan({&op}, g), domain_error);
    CHECK_THROWS_AS(window_scan({&op, &op}, g), domain_error);
}

TEST_CASE("parametrix on a two-ended cone")
{
    auto z = two_ended(512);
    auto op = assemble(z, WeightParams(0, {}, z.dims));
    auto cuts = radial_cutoffs(z, 9.0, 3.0);
    REQUIRE(cuts.pieces.size() == 3);
    CHECK(cuts.lipschitz_chi > 0.0);
    CHECK(cuts.lipschitz_chi_tilde > 0.0);
    for (int v = 0; v < z.size(); ++v) {
        double s = 0.0;
        for (const auto& p : cuts.pieces) {
            s += p.chi[v];
            if (p.chi[v] > 0.0)
                CHECK(p.chi_tilde[v] == 1.0);
        }
        CHECK(s == Catch::Approx(1.0).margin(1e-12));
    }
    Parametrix P(op, cuts);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> N;
    Vec f(op.size());
    for (int i = 0; i < op.size(); ++i)
        f[i] = N(rng);
    Vec direct = P.remainder_left(f);
    Vec comm = P.remainder_left_commutator(f);
    CHECK((direct - comm).cwiseAbs().maxCoeff() <= 1e-9 * direct.cwiseAbs().maxCoeff());

    auto r = verify_parametrix(P, {54, 108, 216}, 3);
    CHECK(r.off_collar_r1 <= 1e-10);
    CHECK(r.off_support_r2 <= 1e-10);
    CHECK(r.corrected_residual <= 1e-8);
    CHECK(r.first_residual > 1e-3);
    CHECK(r.tail_decays);
    CHECK(r.verdict == Verdict::pass);
}

TEST_CASE("parametrix with a weighted measure")
{
    auto z = two_ended(256);
    auto op = assemble(z, WeightParams(1, {}, z.dims));
    Parametrix P(op, radial_cutoffs(z, 9.0, 3.0), OperatorKind::mu);
    auto r = verify_parametrix(P, {54, 108}, 8);
    CHECK(r.off_collar_r1 <= 1e-10);
    CHECK(r.corrected_residual <= 1e-8);
}

TEST_CASE("a single global piece is an exact inverse")
{
    auto z = cone(64);
    auto op = assemble(z, WeightParams(0, {}, z.dims));
    CutoffSet cs;
    CutoffPiece p;
    p.chi.assign(z.size(), 1.0);
    p.chi_tilde.assign(z.size(), 1.0);
    p.domain.assign(z.size(), 1);
    cs.pieces.push_back(p);
    Parametrix P(op, cs);
    CHECK(P.collar().size() == static_cast<size_t>(op.size()));
    CHECK(std::count(P.collar().begin(), P.collar().end(), 1) == 0);
    Vec f = Vec::Ones(op.size());
    CHECK(P.remainder_left(f).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("parametrix rejects bad cutoffs")
{
    auto z = two_ended(128);
    auto op = assemble(z, WeightParams(0, {}, z.dims));
    CHECK_THROWS_AS(Parametrix(op, radial_cutoffs(z, 9.0, 1.5)), domain_error);

    auto cuts = radial_cutoffs(z, 9.0, 3.0);
    cuts.pieces[2].domain.assign(z.size(), 1);
    CHECK_THROWS_WITH(Parametrix(op, cuts), "overlapping ends");

    auto gap = radial_cutoffs(z, 9.0, 3.0);
    gap.pieces[0].chi[0] -= 0.1;
    CHECK_THROWS_WITH(Parametrix(op, gap), "cutoffs do not sum to one");

    auto bop = assemble(z, WeightParams(0, {}, z.dims), trivial_bundle(z, 2, std::vector<double>(z.size(), 0.0)));
    CHECK_THROWS_AS(Parametrix(bop, radial_cutoffs(z, 9.0, 3.0)), domain_error);
}
