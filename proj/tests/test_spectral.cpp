#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "qaclab/measure.hpp"
#include "qaclab/spectral.hpp"

using namespace qaclab;
using Catch::Approx;

namespace {

QacSpace cone(double R, int N = 16)
{
    return build_ac_space(build_compact_base({"sphere_graph", N, 1, ""}), 1, R);
}

// e^{-2t} I_x(2t) from its power series.
double lattice_kernel_oracle(double t, int x)
{
    x = std::abs(x);
    double s = 0.0;
    for (int k = 0; k < 80; ++k)
        s += std::exp((2 * k + x) * std::log(t) - std::lgamma(k + 1.0) - std::lgamma(k + x + 1.0));
    return s * std::exp(-2.0 * t);
}

Vec random_vec(int n, unsigned seed)
{
    std::mt19937_64 gen(seed);
    Vec f(n);
    for (int i = 0; i < n; ++i)
        f[i] = static_cast<double>(gen() % 2000001) / 1e6 - 1.0;
    return f;
}

std::vector<int> interior_sample(const OperatorBundle& op, int count, unsigned seed)
{
    std::mt19937_64 gen(seed);
    std::vector<int> out;
    for (int k = 0; k < count; ++k)
        out.push_back(op.interior[gen() % op.interior.size()]);
    return out;
}

}  // namespace

TEST_CASE("unweighted Doob transform is the identity", "[spectral]")
{
    auto z = cone(16);
    WeightParams p(0.0, {}, z.dims);
    auto op = assemble(z, p);
    for (int v = 0; v < z.size(); ++v) {
        REQUIRE(op.h[v] == 1.0);
        REQUIRE(std::abs(op.V[v]) < 1e-14);
    }
    REQUIRE((op.delta_mu - op.delta_plain).norm() <= 1e-14 * op.delta_plain.norm());
    REQUIRE((op.schrodinger - op.delta_plain).norm() <= 1e-14 * op.delta_plain.norm());
}

TEST_CASE("conjugation identity holds as a matrix identity", "[spectral]")
{
    auto c = cone(16);
    auto prod = build_product(cone(8, 8), cone(8, 8));
    struct Case {
        const QacSpace* z;
        double a;
        std::vector<double> b;
    };
    std::vector<Case> cases{{&c, 1.5, {}}, {&c, -0.5, {}}, {&prod, 1.0, {-0.5}}, {&prod, 0.5, {1.0}}};
    for (const auto& cs : cases) {
        auto op = assemble(*cs.z, WeightParams(cs.a, cs.b, cs.z->dims));
        for (unsigned seed : {1u, 2u, 3u})
            REQUIRE(doob_residual(op, random_vec(op.size(), seed)) <= 1e-12);
        // V is genuinely non-trivial here
        double vmax = 0.0;
        for (double v : op.V)
            vmax = std::max(vmax, std::abs(v));
        REQUIRE(vmax > 1e-3);
    }
}

TEST_CASE("operators are self-adjoint for their measures", "[spectral]")
{
    auto z = build_product(cone(8, 8), cone(8, 8));
    auto op = assemble(z, WeightParams(1.0, {-0.5}, z.dims));
    for (const SpMat* K : {&op.K, &op.K_mu, &op.K_schrodinger})
        REQUIRE((*K - SpMat(K->transpose())).norm() <= 1e-14 * K->norm());
    // M (Delta + V) and M_mu Delta_mu are the symmetric forms
    SpMat A = op.mass.asDiagonal() * op.schrodinger;
    REQUIRE((A - SpMat(A.transpose())).norm() <= 1e-12 * A.norm());
    SpMat B = op.mass_mu.asDiagonal() * op.delta_mu;
    REQUIRE((B - SpMat(B.transpose())).norm() <= 1e-12 * B.norm());
    // Delta + V is non-negative: it is conjugate to Delta_mu
    DenseHeat dh(op, OperatorKind::schrodinger);
    REQUIRE(dh.eigenvalues()[0] > 0.0);
}

TEST_CASE("trivial bundles reproduce the scalar operators", "[spectral]")
{
    auto z = cone(12);
    WeightParams p(1.0, {}, z.dims);
    auto op0 = assemble(z, p);
    auto op1 = assemble(z, p, trivial_bundle(z, 1, std::vector<double>(z.size(), 0.0)));
    REQUIRE((op1.K_bundle - op0.K).norm() == 0.0);
    auto op2 = assemble(z, p, trivial_bundle(z, 1, op0.V));
    REQUIRE((op2.K_bundle - op0.K_schrodinger).norm() <= 1e-14 * op0.K_schrodinger.norm());
}

TEST_CASE("random rotation bundles", "[spectral]")
{
    auto z = build_lattice_space(2, 6);
    std::vector<double> zero(z.size(), 0.0);
    auto b = random_rotation_bundle(z, 3, zero, 0.1, 11);
    for (const auto& U : b.transport) {
        REQUIRE((U.transpose() * U).isIdentity(1e-12));
        REQUIRE(U.determinant() == Approx(1.0).margin(1e-12));
    }
    auto again = random_rotation_bundle(z, 3, zero, 0.1, 11);
    REQUIRE((again.transport[5] - b.transport[5]).norm() == 0.0);
    auto op = assemble(z, WeightParams(0.0, {}, z.dims), b);
    REQUIRE((op.K_connection - SpMat(op.K_connection.transpose())).norm() <= 1e-14 * op.K_connection.norm());
    // connection energy is dominated vertexwise: its spectrum sits above the scalar one
    DenseHeat conn(op, OperatorKind::bundle), scal(op, OperatorKind::plain);
    REQUIRE(conn.eigenvalues()[0] + 1e-12 >= scal.eigenvalues()[0] + 0.1);

    BundleSpec bad = b;
    bad.transport[0](0, 0) += 0.5;
    REQUIRE_THROWS_AS(assemble(z, WeightParams(0.0, {}, z.dims), bad), domain_error);
}

TEST_CASE("heat kernel of the unit lattice matches the Bessel oracle", "[spectral][heat]")
{
    auto z = build_lattice_space(1, 40);
    auto op = assemble(z, WeightParams(0.0, {}, z.dims));
    auto s = heat_column(op, OperatorKind::plain, 1.0, z.basepoint);
    REQUIRE(s.error_estimate <= 1e-4);
    int checked = 0;
    for (int v = 0; v < z.size(); ++v) {
        double x = z.graph.pos[v][0];
        if (std::abs(x) > 5.5)
            continue;
        REQUIRE(s.column[v] == Approx(lattice_kernel_oracle(1.0, static_cast<int>(std::lround(x)))).margin(1e-4));
        ++checked;
    }
    REQUIRE(checked == 11);
}

TEST_CASE("time stepping agrees with the dense exponential", "[spectral][heat]")
{
    auto z = cone(12);
    auto op = assemble(z, WeightParams(1.0, {}, z.dims));
    for (auto k : {OperatorKind::plain, OperatorKind::mu, OperatorKind::schrodinger}) {
        DenseHeat dh(op, k);
        int src = op.interior[7];
        auto snaps = heat_columns(op, k, src, {0.5, 3.0});
        for (const auto& s : snaps) {
            Eigen::MatrixXd H = dh.kernel(s.t);
            double scale = H.col(op.slot[src]).cwiseAbs().maxCoeff();
            for (int a = 0; a < op.size(); ++a)
                REQUIRE(std::abs(s.column[op.interior[a]] - H(a, op.slot[src])) <= 1e-5 * scale);
        }
    }
}

TEST_CASE("heat kernel mass, positivity and truncation", "[spectral][heat]")
{
    double prev = 0.0;
    double inner_prev = 0.0;
    for (double R : {10.0, 20.0}) {
        auto z = build_lattice_space(2, R);
        auto op = assemble(z, WeightParams(0.0, {}, z.dims));
        auto s = heat_column(op, OperatorKind::plain, 4.0, z.basepoint);
        double mass = 0.0;
        for (int v = 0; v < z.size(); ++v) {
            REQUIRE(s.column[v] >= -1e-12);
            mass += s.column[v] * z.graph.measure[v];
        }
        REQUIRE(mass <= 1.0 + 1e-9);
        REQUIRE(mass > prev);
        prev = mass;
        int x = nearest_vertex(z.graph, {2.0, 1.0});
        if (inner_prev > 0.0)
            REQUIRE(std::abs(s.column[x] - inner_prev) <= 0.1 * inner_prev);
        inner_prev = s.column[x];
    }
    REQUIRE(prev == Approx(1.0).margin(1e-3));
}

TEST_CASE("heat kernel symmetry and semigroup property", "[spectral][heat]")
{
    auto z = cone(16);
    auto op = assemble(z, WeightParams(1.0, {}, z.dims));
    auto pts = interior_sample(op, 6, 5);
    std::vector<std::vector<double>> cols;
    for (int v : pts)
        cols.push_back(heat_column(op, OperatorKind::schrodinger, 2.0, v).column);
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = 0; j < pts.size(); ++j)
            REQUIRE(std::abs(cols[j][pts[i]] - cols[i][pts[j]]) <= 1e-6 * std::max(cols[i][pts[i]], 1e-300));

    int src = pts[0];
    auto s1 = heat_column(op, OperatorKind::schrodinger, 1.0, src);
    Eigen::MatrixXd init(z.size(), 1);
    for (int v = 0; v < z.size(); ++v)
        init(v, 0) = s1.column[v];
    auto evolved = heat_evolve(op, OperatorKind::schrodinger, init, {2.0});
    auto direct = heat_column(op, OperatorKind::schrodinger, 3.0, src);
    Vec a = evolved[0].col(0);
    Vec b = Eigen::Map<const Vec>(direct.column.data(), z.size());
    REQUIRE((a - b).norm() <= 1e-4 * b.norm());
}

TEST_CASE("Schrodinger and Doob heat kernels differ by h(z)h(z')", "[spectral][heat]")
{
    auto c = cone(16);
    auto prod = build_product(cone(8, 8), cone(8, 8));
    struct Case {
        const QacSpace* z;
        WeightParams p;
        int columns;
    };
    std::vector<Case> cases{{&c, WeightParams(1.5, {}, c.dims), 12}, {&prod, WeightParams(1.0, {-0.5}, prod.dims), 8}};
    int total = 0;
    for (const auto& cs : cases) {
        auto op = assemble(*cs.z, cs.p);
        for (int src : interior_sample(op, cs.columns, 9)) {
            auto hs = heat_columns(op, OperatorKind::schrodinger, src, {0.5, 4.0});
            auto hm = heat_columns(op, OperatorKind::mu, src, {0.5, 4.0});
            for (size_t k = 0; k < hs.size(); ++k) {
                double scale = 0.0, worst = 0.0;
                for (int v : op.interior) {
                    double lhs = hs[k].column[v];
                    double rhs = op.h[v] * op.h[src] * hm[k].column[v];
                    scale = std::max(scale, std::abs(lhs));
                    worst = std::max(worst, std::abs(lhs - rhs));
                }
                REQUIRE(worst <= 1e-8 * scale);
            }
            ++total;
        }
    }
    REQUIRE(total == 20);
}

TEST_CASE("heat domination by the scalar Schrodinger kernel", "[spectral][domination]")
{
    auto z = build_lattice_space(2, 10);
    WeightParams p(1.0, {}, z.dims);
    auto scalar = assemble(z, p);

    SECTION("trivial bundle gives equality")
    {
        auto op = assemble(z, p, trivial_bundle(z, 2, scalar.V), true);
        auto rep = verify_domination(op);
        REQUIRE(rep.hypothesis_ok);
        REQUIRE(rep.checked == 100);
        REQUIRE(rep.worst_ratio == Approx(1.0).margin(1e-7));
    }
    SECTION("random rotations with a positive shift dominate strictly")
    {
        auto op = assemble(z, p, random_rotation_bundle(z, 2, scalar.V, 0.1, 3), true);
        auto rep = verify_domination(op);
        REQUIRE(rep.hypothesis_ok);
        REQUIRE(rep.dominated);
        REQUIRE(rep.worst_ratio < 1.0);
        REQUIRE(rep.trotter_errors.size() == 3);
        REQUIRE(rep.trotter_errors[0] > rep.trotter_errors[1]);
        REQUIRE(rep.trotter_ratio >= 3.0);
        REQUIRE(rep.trotter_ratio <= 6.0);
        REQUIRE(rep.verdict == Verdict::pass);
    }
    SECTION("a negative shift is a hypothesis failure")
    {
        auto b = random_rotation_bundle(z, 2, scalar.V, -0.1, 3);
        REQUIRE_THROWS_AS(assemble(z, p, b, true), precondition_error);
        auto op = assemble(z, p, b);
        auto rep = verify_domination(op);
        REQUIRE_FALSE(rep.hypothesis_ok);
        REQUIRE(rep.margin == Approx(-0.1));
        REQUIRE(rep.verdict == Verdict::fail);
    }
}

TEST_CASE("flat lattice heat kernel is Gaussian", "[spectral][gaussian]")
{
    auto z = build_lattice_space(2, 40);
    auto op = assemble(z, WeightParams(0.0, {}, z.dims));
    GaussianOptions g;
    g.times = {4, 8, 16, 32, 64};
    g.tol.min_decades = 1.0;
    auto near = {z.basepoint, nearest_vertex(z.graph, {3.0, -2.0}), nearest_vertex(z.graph, {-1.0, 4.0})};
    auto rep = verify_gaussian_bounds(op, near, g);
    REQUIRE(rep.diagonal_slope == Approx(-1.0).margin(0.2));
    REQUIRE(rep.on_diagonal.band <= std::log(10.0));
    REQUIRE(rep.c_fit.size() == 3);
    REQUIRE(rep.c_lo >= 0.05);
    REQUIRE(rep.c_hi <= 2.0);
    REQUIRE(rep.verdict == Verdict::pass);
}

TEST_CASE("heat error paths", "[spectral][heat]")
{
    auto z = build_lattice_space(1, 10);
    auto op = assemble(z, WeightParams(0.0, {}, z.dims));
    REQUIRE_THROWS_AS(heat_column(op, OperatorKind::plain, 0.0, z.basepoint), domain_error);
    int edge = -1;
    for (int v = 0; v < z.size(); ++v)
        if (z.graph.boundary[v])
            edge = v;
    REQUIRE_THROWS_AS(heat_column(op, OperatorKind::plain, 1.0, edge), domain_error);
    REQUIRE_THROWS_AS(heat_column(op, OperatorKind::bundle, 1.0, z.basepoint), domain_error);
    HeatOptions o;
    o.ratio = 1.5;
    REQUIRE_THROWS_AS(heat_column(op, OperatorKind::plain, 1.0, z.basepoint, o), domain_error);
}
