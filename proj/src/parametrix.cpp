#include "qaclab/schur_fredholm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

namespace qaclab {

namespace {

// 0 below lo, 1 above hi, smoothstep in log(rho) between.
double radial_step(double rho, double lo, double hi)
{
    double t = std::log(rho / lo) / std::log(hi / lo);
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

double lipschitz(const WeightedGraph& g, const std::vector<double>& f)
{
    double L = 0.0;
    for (const auto& e : g.edges)
        L = std::max(L, std::abs(f[e.u] - f[e.v]) / e.length);
    return L;
}

// Vertices with a neighbour on which some cutoff takes a different value.
std::vector<char> transition_set(const WeightedGraph& g, const std::vector<std::vector<double>>& cut)
{
    std::vector<char> s(g.size(), 0);
    for (const auto& e : g.edges)
        for (const auto& c : cut)
            if (c[e.u] != c[e.v]) {
                s[e.u] = s[e.v] = 1;
                break;
            }
    return s;
}

}  // namespace

CutoffSet radial_cutoffs(const QacSpace& z, double r, double lambda)
{
    if (!(lambda > 1.0) || !(r > 0.0))
        throw domain_error("cutoffs need r > 0 and lambda > 1");
    const int N = z.size();
    int n_ends = *std::max_element(z.ends.begin(), z.ends.end());
    auto end_of = [&](int v) { return n_ends == 0 ? 1 : z.ends[v]; };
    n_ends = std::max(n_ends, 1);

    CutoffSet cs;
    CutoffPiece core;
    core.end = 0;
    core.chi.assign(N, 1.0);
    core.chi_tilde.assign(N, 0.0);
    core.domain.assign(N, 0);
    for (int v = 0; v < N; ++v) {
        core.chi_tilde[v] = 1.0 - radial_step(z.rho[v], lambda * lambda * r, lambda * lambda * lambda * r);
        core.domain[v] = z.rho[v] <= std::pow(lambda, 4) * r;
    }
    cs.pieces.push_back(core);
    for (int e = 1; e <= n_ends; ++e) {
        CutoffPiece p;
        p.end = e;
        p.chi.assign(N, 0.0);
        p.chi_tilde.assign(N, 0.0);
        p.domain.assign(N, 0);
        for (int v = 0; v < N; ++v) {
            if (end_of(v) != e)
                continue;
            p.chi[v] = radial_step(z.rho[v], r, lambda * r);
            p.chi_tilde[v] = radial_step(z.rho[v], r / (lambda * lambda), r / lambda);
            p.domain[v] = z.rho[v] >= r / (lambda * lambda * lambda);
            cs.pieces[0].chi[v] -= p.chi[v];
        }
        cs.pieces.push_back(p);
    }
    for (const auto& p : cs.pieces) {
        cs.lipschitz_chi = std::max(cs.lipschitz_chi, lipschitz(z.graph, p.chi));
        cs.lipschitz_chi_tilde = std::max(cs.lipschitz_chi_tilde, lipschitz(z.graph, p.chi_tilde));
    }
    return cs;
}

Parametrix::Parametrix(const OperatorBundle& op, CutoffSet cuts, OperatorKind which, int min_gap)
    : op_(&op), which_(which), cuts_(std::move(cuts))
{
    if (op.bundle || which == OperatorKind::bundle)
        throw domain_error("the parametrix acts on scalar functions");
    const QacSpace& z = *op.space;
    const auto& g = z.graph;
    const int N = z.size();
    if (cuts_.pieces.empty())
        throw domain_error("no cutoff pieces");
    for (const auto& p : cuts_.pieces)
        if (static_cast<int>(p.chi.size()) != N || static_cast<int>(p.chi_tilde.size()) != N ||
            static_cast<int>(p.domain.size()) != N)
            throw domain_error("cutoff sizes do not match the space");

    constexpr double eps = 1e-12;
    for (int v = 0; v < N; ++v) {
        double s = 0.0;
        for (const auto& p : cuts_.pieces) {
            if (p.chi[v] < -eps || p.chi[v] > 1.0 + eps || p.chi_tilde[v] < -eps || p.chi_tilde[v] > 1.0 + eps)
                throw domain_error("cutoffs must take values in [0, 1]");
            s += p.chi[v];
        }
        if (std::abs(s - 1.0) > 1e-10)
            throw domain_error("cutoffs do not sum to one");
    }
    for (const auto& p : cuts_.pieces) {
        // hop distance from where chi~ < 1
        std::vector<int> hop(N, -1);
        std::deque<int> queue;
        for (int v = 0; v < N; ++v)
            if (p.chi_tilde[v] < 1.0 - eps) {
                hop[v] = 0;
                queue.push_back(v);
            }
        while (!queue.empty()) {
            int u = queue.front();
            queue.pop_front();
            if (hop[u] >= min_gap)
                continue;
            auto inc = g.incident(u);
            for (int k = 0; k < inc.n; ++k)
                if (hop[inc.nb[k]] < 0) {
                    hop[inc.nb[k]] = hop[u] + 1;
                    queue.push_back(inc.nb[k]);
                }
        }
        for (int v = 0; v < N; ++v) {
            if (p.chi[v] > eps && hop[v] >= 0 && hop[v] < min_gap)
                throw domain_error("cutoff gap below " + std::to_string(min_gap) + " edges in piece " +
                                   std::to_string(p.end));
            if (p.chi_tilde[v] > eps && !p.domain[v])
                throw domain_error("cutoff support leaves its domain in piece " + std::to_string(p.end));
        }
    }
    for (size_t i = 0; i < cuts_.pieces.size(); ++i)
        for (size_t j = i + 1; j < cuts_.pieces.size(); ++j) {
            if (cuts_.pieces[i].end == 0 || cuts_.pieces[j].end == 0)
                continue;
            for (int v = 0; v < N; ++v)
                if (cuts_.pieces[i].domain[v] && cuts_.pieces[j].domain[v])
                    throw domain_error("overlapping ends");
        }

    const SpMat& K = op.stiffness_of(which_);
    const int n = op.size();
    for (const auto& p : cuts_.pieces) {
        Vec c(n), ct(n);
        std::vector<int> dom, local(n, -1);
        for (int i = 0; i < n; ++i) {
            int v = op.interior[i];
            c[i] = p.chi[v];
            ct[i] = p.chi_tilde[v];
            if (p.domain[v]) {
                local[i] = static_cast<int>(dom.size());
                dom.push_back(i);
            }
        }
        std::vector<Eigen::Triplet<double>> trip;
        for (int col = 0; col < K.outerSize(); ++col) {
            if (local[col] < 0)
                continue;
            for (SpMat::InnerIterator it(K, col); it; ++it)
                if (local[it.row()] >= 0)
                    trip.emplace_back(local[it.row()], local[col], it.value());
        }
        SpMat KD(static_cast<int>(dom.size()), static_cast<int>(dom.size()));
        KD.setFromTriplets(trip.begin(), trip.end());
        auto solver = std::make_shared<Eigen::SimplicialLDLT<SpMat>>(KD);
        if (solver->info() != Eigen::Success)
            throw numerical_error("piece factorisation failed");
        chi_.push_back(c);
        chit_.push_back(ct);
        dom_.push_back(std::move(dom));
        solvers_.push_back(solver);
    }

    std::vector<std::vector<double>> tl, l;
    for (const auto& p : cuts_.pieces) {
        tl.push_back(p.chi_tilde);
        l.push_back(p.chi);
    }
    const auto cfull = transition_set(g, tl);
    const auto sfull = transition_set(g, l);
    collar_.assign(n, 0);
    scollar_.assign(n, 0);
    for (int i = 0; i < n; ++i) {
        collar_[i] = cfull[op.interior[i]];
        scollar_[i] = sfull[op.interior[i]];
        if (collar_[i])
            collar_list_.push_back(i);
    }

    const int m = static_cast<int>(collar_list_.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
    for (int j = 0; j < m; ++j) {
        Vec e = Vec::Zero(n);
        e[collar_list_[j]] = 1.0;
        Vec r = remainder_left_commutator(e);
        for (int i = 0; i < m; ++i)
            A(i, j) -= r[collar_list_[i]];
    }
    correction_.compute(A);
}

Vec Parametrix::piece_solve(size_t k, const Vec& rhs) const
{
    const auto& dom = dom_[k];
    const Vec& mass = op_->mass_of(which_);
    Vec b(static_cast<int>(dom.size()));
    for (size_t i = 0; i < dom.size(); ++i)
        b[i] = mass[dom[i]] * rhs[dom[i]];
    Vec x = solvers_[k]->solve(b);
    Vec out = Vec::Zero(op_->size());
    for (size_t i = 0; i < dom.size(); ++i)
        out[dom[i]] = x[i];
    return out;
}

Vec Parametrix::apply(const Vec& f) const
{
    Vec u = Vec::Zero(op_->size());
    for (size_t k = 0; k < chi_.size(); ++k)
        u += chit_[k].cwiseProduct(piece_solve(k, chi_[k].cwiseProduct(f)));
    return u;
}

Vec Parametrix::apply_adjoint(const Vec& f) const
{
    Vec u = Vec::Zero(op_->size());
    for (size_t k = 0; k < chi_.size(); ++k)
        u += chi_[k].cwiseProduct(piece_solve(k, chit_[k].cwiseProduct(f)));
    return u;
}

Vec Parametrix::op(const Vec& u) const
{
    return (op_->stiffness_of(which_) * u).cwiseQuotient(op_->mass_of(which_));
}

Vec Parametrix::remainder_left(const Vec& f) const { return f - op(apply(f)); }

Vec Parametrix::remainder_left_adjoint(const Vec& f) const { return f - apply_adjoint(op(f)); }

Vec Parametrix::remainder_right(const Vec& u) const { return u - apply(op(u)); }

Vec Parametrix::remainder_left_commutator(const Vec& f) const
{
    const SpMat& K = op_->stiffness_of(which_);
    const Vec& mass = op_->mass_of(which_);
    Vec r = Vec::Zero(op_->size());
    for (size_t k = 0; k < chi_.size(); ++k) {
        Vec cf = chi_[k].cwiseProduct(f);
        if (cf.cwiseAbs().maxCoeff() == 0.0)
            continue;
        const Vec gk = piece_solve(k, cf);
        const Vec& ct = chit_[k];
        // [L, chi~] g (x) = (1/m_x) sum_y (-K_xy) (chi~(x) - chi~(y)) g(y); K is symmetric
        for (int x : collar_list_) {
            double s = 0.0;
            for (SpMat::InnerIterator it(K, x); it; ++it)
                if (it.row() != x)
                    s -= it.value() * (ct[x] - ct[it.row()]) * gk[it.row()];
            r[x] -= s / mass[x];
        }
    }
    return r;
}

Vec Parametrix::solve(const Vec& f) const
{
    const Vec r = remainder_left(f);
    Vec rc(static_cast<int>(collar_list_.size()));
    for (size_t i = 0; i < collar_list_.size(); ++i)
        rc[i] = r[collar_list_[i]];
    const Vec c = correction_.solve(rc);
    Vec g = f;
    for (size_t i = 0; i < collar_list_.size(); ++i)
        g[collar_list_[i]] += c[i];
    return apply(g);
}

ParametrixReport verify_parametrix(const Parametrix& P, const std::vector<double>& tail_radii, std::uint64_t seed,
                                   double delta)
{
    const OperatorBundle& op = P.bundle();
    const QacSpace& z = *op.space;
    const int n = op.size();
    const double dim = z.dim();
    if (std::isnan(delta))
        delta = (2.0 - dim) / 2.0;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Vec f(n);
    for (int i = 0; i < n; ++i)
        f[i] = normal(rng);

    ParametrixReport r;
    r.collar_size = static_cast<int>(std::count(P.collar().begin(), P.collar().end(), 1));
    const Vec r1 = P.remainder_left(f);
    for (int i = 0; i < n; ++i)
        if (!P.collar()[i])
            r.off_collar_r1 = std::max(r.off_collar_r1, std::abs(r1[i]));
    r.off_collar_r1 /= f.cwiseAbs().maxCoeff();
    r.first_residual = r1.norm() / f.norm();

    Vec u(n);
    for (int i = 0; i < n; ++i)
        u[i] = P.source_collar()[i] ? 0.0 : normal(rng);
    r.off_support_r2 = P.remainder_right(u).cwiseAbs().maxCoeff() / u.cwiseAbs().maxCoeff();

    const Vec sol = P.solve(f);
    r.corrected_residual = (P.op(sol) - f).norm() / f.norm();

    Vec w_in(n), w_out(n);
    for (int i = 0; i < n; ++i) {
        double rho = z.rho[op.interior[i]];
        w_in[i] = std::pow(rho, delta + dim / 2.0 - 2.0);
        w_out[i] = 1.0 / w_in[i];
    }
    const Vec sm = op.mass.cwiseSqrt();
    for (double S : tail_radii) {
        Vec mask(n);
        for (int i = 0; i < n; ++i)
            mask[i] = z.rho[op.interior[i]] > S ? 1.0 : 0.0;
        // T = M^{1/2} w_out R1 w_in mask M^{-1/2} on Euclidean vectors
        auto T = [&](const Vec& x) {
            return sm.cwiseProduct(w_out.cwiseProduct(P.remainder_left(w_in.cwiseProduct(mask).cwiseProduct(x).cwiseQuotient(sm))));
        };
        auto Tt = [&](const Vec& y) {
            return mask.cwiseProduct(w_in).cwiseProduct(P.remainder_left_adjoint(w_out.cwiseProduct(y).cwiseQuotient(sm))).cwiseProduct(sm);
        };
        Vec x = mask.normalized();
        double s = 0.0, prev = 0.0;
        for (int it = 0; it < 200; ++it) {
            Vec xt = Tt(T(x));
            s = std::sqrt(xt.norm());
            if (s == 0.0)
                break;
            x = xt / xt.norm();
            if (it > 0 && std::abs(s - prev) <= 1e-6 * s)
                break;
            prev = s;
        }
        r.tail_radii.push_back(S);
        r.tail_norms.push_back(s);
    }
    r.tail_decays = r.tail_norms.size() >= 2;
    for (size_t i = 1; i < r.tail_norms.size(); ++i)
        r.tail_decays = r.tail_decays && r.tail_norms[i] < r.tail_norms[i - 1];

    const bool ok = r.off_collar_r1 <= 1e-10 && r.off_support_r2 <= 1e-10 && r.corrected_residual <= 1e-8 &&
                    (tail_radii.size() < 2 || r.tail_decays);
    r.verdict = ok ? Verdict::pass : Verdict::fail;
    if (!ok)
        r.note = "off-collar remainder " + std::to_string(r.off_collar_r1) + ", right remainder " +
                 std::to_string(r.off_support_r2) + ", corrected residual " + std::to_string(r.corrected_residual);
    return r;
}

}  // namespace qaclab
