#include "qaclab/poincare.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <random>

#include "qaclab/measure.hpp"

namespace qaclab {

SpMat weighted_stiffness(const QacSpace& z, const WeightParams& p)
{
    auto omega = weight_field(z, p.a, p.b);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * z.graph.edges.size());
    for (const auto& e : z.graph.edges) {
        double c = e.conductance * std::sqrt(omega[e.u] * omega[e.v]);
        t.emplace_back(e.u, e.u, c);
        t.emplace_back(e.v, e.v, c);
        t.emplace_back(e.u, e.v, -c);
        t.emplace_back(e.v, e.u, -c);
    }
    SpMat K(z.size(), z.size());
    K.setFromTriplets(t.begin(), t.end());
    return K;
}

namespace {

using Dense = Eigen::MatrixXd;

// Induced Neumann stiffness on `set`: off-diagonals kept, diagonal rebuilt
// from the edges that stay inside.
SpMat restrict_neumann(const SpMat& K, const std::vector<int>& set, const std::vector<int>& loc)
{
    std::vector<Eigen::Triplet<double>> t;
    std::vector<double> diag(set.size(), 0.0);
    for (int j = 0; j < static_cast<int>(set.size()); ++j)
        for (SpMat::InnerIterator it(K, set[j]); it; ++it) {
            int i = it.row() < static_cast<int>(loc.size()) ? loc[it.row()] : -1;
            if (it.row() == set[j] || i < 0)
                continue;
            t.emplace_back(i, j, it.value());
            diag[j] -= it.value();
        }
    for (int j = 0; j < static_cast<int>(set.size()); ++j)
        t.emplace_back(j, j, diag[j]);
    SpMat out(set.size(), set.size());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

bool connected(const SpMat& A, const std::vector<char>& keep, int n_keep)
{
    int start = -1;
    for (int i = 0; i < A.rows() && start < 0; ++i)
        if (keep[i])
            start = i;
    if (start < 0)
        return true;
    std::vector<char> seen(A.rows(), 0);
    std::vector<int> stack{start};
    seen[start] = 1;
    int count = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (SpMat::InnerIterator it(A, u); it; ++it) {
            int v = it.row();
            if (v != u && keep[v] && !seen[v] && it.value() != 0.0) {
                seen[v] = 1;
                ++count;
                stack.push_back(v);
            }
        }
    }
    return count == n_keep;
}

double dense_gap(const SpMat& KE, const std::vector<char>& in_b, const Vec& mass)
{
    const int n = KE.rows();
    std::vector<int> B, O;
    std::vector<int> pos(n);
    for (int i = 0; i < n; ++i) {
        pos[i] = in_b[i] ? static_cast<int>(B.size()) : static_cast<int>(O.size());
        (in_b[i] ? B : O).push_back(i);
    }
    const int nb = B.size(), no = O.size();
    Dense S = Dense::Zero(nb, nb);
    std::vector<Eigen::Triplet<double>> tbo, too;
    for (int j = 0; j < n; ++j)
        for (SpMat::InnerIterator it(KE, j); it; ++it) {
            int i = it.row();
            if (in_b[i] && in_b[j])
                S(pos[i], pos[j]) = it.value();
            else if (!in_b[i] && in_b[j])
                tbo.emplace_back(pos[i], pos[j], it.value());
            else if (!in_b[i] && !in_b[j])
                too.emplace_back(pos[i], pos[j], it.value());
        }
    if (no > 0) {
        SpMat Kob(no, nb), Koo(no, no);
        Kob.setFromTriplets(tbo.begin(), tbo.end());
        Koo.setFromTriplets(too.begin(), too.end());
        Eigen::SimplicialLLT<SpMat> llt(Koo);
        if (llt.info() != Eigen::Success)
            throw numerical_error("factorisation of the collar block failed");
        const int chunk = 64;
        for (int c0 = 0; c0 < nb; c0 += chunk) {
            int w = std::min(chunk, nb - c0);
            Dense rhs = Dense(Kob.middleCols(c0, w));
            Dense X = llt.solve(rhs);
            S.middleCols(c0, w) -= Kob.transpose() * X;
        }
    }
    Vec isq(nb);
    for (int i = 0; i < nb; ++i)
        isq[i] = 1.0 / std::sqrt(mass[B[i]]);
    Dense Sh = isq.asDiagonal() * S * isq.asDiagonal();
    Sh = 0.5 * (Sh + Sh.transpose());
    Eigen::SelfAdjointEigenSolver<Dense> es(Sh, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw numerical_error("dense eigensolver failed");
    return es.eigenvalues()[1];
}

double iterative_gap(const SpMat& KE, const std::vector<char>& in_b, const Vec& mass, int& iterations)
{
    const int n = KE.rows();
    // K_E is singular on constants; every right-hand side below has zero sum,
    // so conjugate gradients stays in the range.
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg(KE);
    cg.setTolerance(1e-12);
    cg.setMaxIterations(20 * n);

    Vec mb = Vec::Zero(n);
    for (int i = 0; i < n; ++i)
        if (in_b[i])
            mb[i] = mass[i];
    const double total = mb.sum();
    int nb = 0;
    for (char c : in_b)
        nb += c;
    const int k = std::min(4, nb - 1);

    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(n));
    std::normal_distribution<double> N01;
    Dense X(n, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < n; ++i)
            X(i, j) = N01(rng);

    auto deflate = [&](auto&& y) { y.array() -= mb.dot(y) / total; };
    for (int j = 0; j < k; ++j)
        deflate(X.col(j));
    Vec theta_prev = Vec::Constant(k, 1.0);
    double prev = inf;
    for (iterations = 1; iterations <= 500; ++iterations) {
        Dense Y(n, k);
        for (int j = 0; j < k; ++j) {
            Vec rhs = mb.asDiagonal() * X.col(j);
            rhs.array() -= rhs.sum() / n;
            Vec guess = X.col(j) / theta_prev[j];
            Y.col(j) = cg.solveWithGuess(rhs, guess);
            if (cg.info() != Eigen::Success)
                throw numerical_error("conjugate gradients stalled inside the Poincare gap iteration");
            deflate(Y.col(j));
        }
        Dense A = Y.transpose() * (KE * Y);
        Dense Bm = Y.transpose() * mb.asDiagonal() * Y;
        A = 0.5 * (A + A.transpose());
        Bm = 0.5 * (Bm + Bm.transpose());
        Eigen::GeneralizedSelfAdjointEigenSolver<Dense> ges(A, Bm);
        if (ges.info() != Eigen::Success)
            throw numerical_error("Rayleigh-Ritz step failed");
        theta_prev = ges.eigenvalues().cwiseMax(1e-300);
        double theta = theta_prev[0];
        X = Y * ges.eigenvectors();
        if (std::abs(theta - prev) <= 1e-10 * std::abs(theta) && iterations >= 3)
            return theta;
        prev = theta;
    }
    throw numerical_error("subspace iteration for the Poincare gap did not converge");
}

}  // namespace

GapResult restricted_gap(const SpMat& K, const std::vector<double>& mass, const std::vector<int>& inner,
                         const std::vector<int>& enlarged, EigenRoute route)
{
    if (inner.size() < 2)
        throw domain_error("ball needs at least two vertices for a Poincare gap");
    std::vector<int> loc(K.rows(), -1);
    for (int i = 0; i < static_cast<int>(enlarged.size()); ++i)
        loc[enlarged[i]] = i;
    const int n = enlarged.size();
    std::vector<char> in_b(n, 0);
    for (int v : inner) {
        if (loc[v] < 0)
            throw domain_error("inner set must lie inside the enlarged set");
        in_b[loc[v]] = 1;
    }
    SpMat KE = restrict_neumann(K, enlarged, loc);
    if (!connected(KE, in_b, static_cast<int>(inner.size())))
        throw domain_error("ball is disconnected at this scale");
    if (!connected(KE, std::vector<char>(n, 1), n))
        throw domain_error("enlarged ball is disconnected");
    Vec m(n);
    for (int i = 0; i < n; ++i)
        m[i] = mass[enlarged[i]];

    GapResult out;
    out.route = route;
    if (route == EigenRoute::automatic)
        out.route = static_cast<int>(inner.size()) <= dense_eigen_limit && n <= 4 * dense_eigen_limit
                        ? EigenRoute::dense
                        : EigenRoute::iterative;
    if (out.route == EigenRoute::dense)
        out.lambda1 = dense_gap(KE, in_b, m);
    else
        out.lambda1 = iterative_gap(KE, in_b, m, out.iterations);
    if (!(out.lambda1 > 0.0))
        throw numerical_error("nonpositive Poincare gap on a connected ball");
    return out;
}

namespace {

bool touches_boundary(const QacSpace& z, const Ball& b)
{
    for (int v : b.members)
        if (z.graph.boundary[v])
            return true;
    return false;
}

PoincareProbe probe(const QacSpace& z, const SpMat& K, const std::vector<double>& mass, const Ball& ball,
                    const Ball& enlarged, const WeightParams& p, double delta, EigenRoute route)
{
    if (touches_boundary(z, enlarged))
        throw domain_error("enlarged ball reaches the truncation boundary");
    auto g = restricted_gap(K, mass, ball.members, enlarged.members, route);
    PoincareProbe out;
    out.ball = ball;
    out.params = p;
    out.delta = delta;
    out.lambda1 = g.lambda1;
    out.C_P = 1.0 / (g.lambda1 * ball.radius * ball.radius);
    out.enlarged_size = enlarged.members.size();
    out.route = g.route;
    return out;
}

}  // namespace

PoincareProbe poincare_constant(const QacSpace& z, const Ball& ball, const WeightParams& p, double delta,
                                EigenRoute route)
{
    if (!(delta > 0.0 && delta <= 1.0))
        throw domain_error("enlargement parameter delta must lie in (0,1]");
    if (!(ball.radius > 0.0))
        throw domain_error("Poincare probe needs a positive radius");
    auto d = space_distances(z, ball.center, ball.radius / delta);
    auto E = ball_from_distances(d, ball.center, ball.radius / delta, z.ball_context());
    return probe(z, weighted_stiffness(z, p), measure_density(z, p), ball, E, p, delta, route);
}

PiScaling verify_pi_scaling(const QacSpace& z, const WeightParams& p, const std::vector<int>& centers,
                            const PiScalingOptions& opt, const Tolerances& tol)
{
    if (auto why = cvc_violation(z, p); !why.empty())
        throw domain_error("Poincare scaling needs the volume condition: " + why);
    auto K = weighted_stiffness(z, p);
    auto mass = measure_density(z, p);
    auto bd = boundary_distances(z);
    PiScaling out;
    std::vector<Sample> s;
    std::vector<double> logr, loginv;
    for (int q : centers) {
        double hi = 0.9 * bd[q] * opt.delta;
        if (opt.remote_only)
            hi = std::min(hi, z.c * z.rho[q]);
        double lo = std::max(resolved_radius(z, q), hi * std::pow(10.0, -opt.max_decades));
        if (!(hi > lo))
            continue;
        auto d = space_distances(z, q, hi / opt.delta);
        for (int i = 0; i < opt.radii_per_center; ++i) {
            double r = lo * std::pow(hi / lo, double(i) / std::max(1, opt.radii_per_center - 1));
            auto B = ball_from_distances(d, q, r, z.ball_context());
            auto E = ball_from_distances(d, q, r / opt.delta, z.ball_context());
            if (static_cast<int>(E.members.size()) > opt.max_ball || B.members.size() < 2 ||
                touches_boundary(z, E))
                continue;
            auto pr = probe(z, K, mass, B, E, p, opt.delta, EigenRoute::automatic);
            s.push_back({r, -std::log(pr.lambda1), 2.0 * std::log(r)});
            out.sup_C_P = std::max(out.sup_C_P, pr.C_P);
            out.probes.push_back(std::move(pr));
        }
    }
    out.report = compare("poincare scaling", std::move(s), tol);
    out.gap_exponent = out.report.lhs_slope;
    return out;
}

}  // namespace qaclab
