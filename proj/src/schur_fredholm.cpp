#include "qaclab/schur_fredholm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>

namespace qaclab {

namespace {

using CG = Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper>;
constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

void prepare(CG& cg, const SpMat& K)
{
    cg.setTolerance(1e-10);
    cg.setMaxIterations(200000);
    cg.compute(K);
}

Vec cg_solve(const CG& cg, const Vec& rhs)
{
    Vec x = cg.solve(rhs);
    if (cg.info() != Eigen::Success)
        throw numerical_error("weighted inverse: conjugate gradients did not converge");
    return x;
}

Vec restrict_to(const OperatorBundle& op, const std::vector<double>& full)
{
    Vec r(op.size());
    for (int i = 0; i < op.size(); ++i)
        r[i] = full[op.interior[i]];
    return r;
}

std::vector<double> extend(const OperatorBundle& op, const Vec& x)
{
    std::vector<double> f(op.space->size(), 0.0);
    for (int i = 0; i < op.size(); ++i)
        f[op.interior[i]] = x[i];
    return f;
}

std::string fmt(double x)
{
    std::ostringstream s;
    s << x;
    return s.str();
}

double per_doubling(double ratio, double r0, double r1) { return std::pow(ratio, std::log(2.0) / std::log(r1 / r0)); }

// Lemma inequalities with the space's own (a, b); `what` prefixes the name.
std::string lemma_check(const QacSpace& z, const WeightParams& p, double alpha, const std::vector<double>& beta,
                        const std::string& what)
{
    const double n = z.dim();
    const double a = p.a;
    const int k = z.depth;
    if (!(a + n > 2.0))
        return what + "a + n > 2";
    for (int j = 1; j <= k; ++j)
        if (p.b_sum(j) + z.fiber_dim(j - 1) < 0.0)
            return what + "|b(j)| + m_{j-1} >= 0 at j=" + std::to_string(j);
    constexpr double eps = 1e-12;
    if (alpha < -n - a / 2.0 - eps)
        return what + "alpha >= -n - a/2";
    if (!(alpha < -2.0 + a / 2.0 - eps))
        return what + "alpha < a/2 - 2";
    double beta_sum = 0.0;
    for (int j = 1; j <= k; ++j) {
        beta_sum += beta[j - 1];
        if (beta_sum < -z.fiber_dim(j - 1) - p.b_sum(j) / 2.0 - eps)
            return what + "|beta(j)| >= -m_{j-1} - |b(j)|/2 at j=" + std::to_string(j);
    }
    for (int i = 0; i < k; ++i) {
        double bound = p.b[i] / 2.0 - (i == 0 ? 2.0 : 0.0);
        if (beta[i] > bound + eps)
            return what + "beta_i <= b_i/2 - 2 on w_1 at i=" + std::to_string(i + 1);
    }
    for (int j = 1; j <= k; ++j)
        if (z.fiber_dim(j - 1) + p.b_sum(j) < 2.0)
            return what + "m_{j-1} + |b(j)| >= 2 at j=" + std::to_string(j);
    return "";
}

void check_ladder(const Ladder& ladder)
{
    if (ladder.size() < 2)
        throw domain_error("a truncation ladder needs at least two rungs");
    for (size_t i = 0; i < ladder.size(); ++i) {
        if (!ladder[i] || !ladder[i]->space)
            throw domain_error("empty rung in truncation ladder");
        if (ladder[i]->bundle)
            throw domain_error("weighted inverse checks act on scalar functions");
        if (i > 0 && !(ladder[i]->space->truncation_radius > ladder[i - 1]->space->truncation_radius))
            throw domain_error("truncation ladder must increase");
    }
}

// Chebyshev-like distance from (d, t) to the window, in grid cells; negative inside.
struct CellDistance {
    double outside = 0.0;  // > 0 outside
    double to_open = 0.0;  // inside: cells to the nearest open (delta) edge
};

CellDistance cell_distance(const WindowBox& box, const WindowGrid& g, double d, double t, bool has_tau)
{
    CellDistance c;
    double dx = std::max({box.delta_lo - d, d - box.delta_hi, 0.0}) / g.delta_step;
    double dy = has_tau ? std::max({box.tau_lo[0] - t, t - box.tau_hi[0], 0.0}) / g.tau_step : 0.0;
    c.outside = std::max(dx, dy);
    if (d <= box.delta_lo || d >= box.delta_hi)
        c.outside = std::max(c.outside, 1e-9);
    c.to_open = std::min(d - box.delta_lo, box.delta_hi - d) / g.delta_step;
    return c;
}

}  // namespace

// ------------------------------------------------------------ weighted norms

std::vector<double> nu_vector(const QacSpace& z)
{
    std::vector<double> nu(z.depth);
    for (int j = 0; j < z.depth; ++j)
        nu[j] = j == 0 ? z.fiber_dim(0) : z.fiber_dim(j) - z.fiber_dim(j - 1);
    return nu;
}

std::vector<double> norm_weight(const QacSpace& z, double delta, const std::vector<double>& tau, double shift)
{
    if (static_cast<int>(tau.size()) != z.depth)
        throw domain_error("tau needs one entry per weight function");
    const auto nu = nu_vector(z);
    const double n = z.dim();
    std::vector<double> W(z.size());
    for (int v = 0; v < z.size(); ++v) {
        double x = std::pow(z.rho[v], -delta - n / 2.0 + shift);
        for (int i = 0; i < z.depth; ++i)
            x *= std::pow(z.w[i][v], -tau[i] - nu[i] / 2.0 + (i == 0 ? shift : 0.0));
        W[v] = x;
    }
    return W;
}

double weighted_norm(const QacSpace& z, const std::vector<double>& f, const WeightedNorm& wn)
{
    if (static_cast<int>(f.size()) != z.size())
        throw domain_error("weighted norm: function size does not match the space");
    const auto& g = z.graph;
    const auto W0 = norm_weight(z, wn.delta, wn.tau, 0.0);
    double s = 0.0;
    for (int v = 0; v < z.size(); ++v)
        s += g.measure[v] * (W0[v] * f[v]) * (W0[v] * f[v]);
    if (wn.order == NormOrder::H2) {
        const auto W1 = norm_weight(z, wn.delta, wn.tau, 1.0);
        const auto W2 = norm_weight(z, wn.delta, wn.tau, 2.0);
        for (const auto& e : g.edges) {
            double d = f[e.u] - f[e.v];
            s += e.conductance * d * d * W1[e.u] * W1[e.v];
        }
        for (int v = 0; v < z.size(); ++v) {
            if (g.boundary[v])
                continue;
            auto inc = g.incident(v);
            double lap = 0.0;
            for (int k = 0; k < inc.n; ++k)
                lap += g.edges[inc.eid[k]].conductance * (f[v] - f[inc.nb[k]]);
            lap /= g.measure[v];
            s += g.measure[v] * (W2[v] * lap) * (W2[v] * lap);
        }
    }
    return std::sqrt(s);
}

// ------------------------------------------------------------ Schur test

bool WindowBox::contains(double delta, const std::vector<double>& tau) const
{
    constexpr double eps = 1e-12;
    if (!(delta > delta_lo + eps && delta < delta_hi - eps))
        return false;
    for (size_t i = 0; i < tau_lo.size(); ++i)
        if (tau[i] < tau_lo[i] - eps || tau[i] > tau_hi[i] + eps)
            return false;
    return true;
}

WindowBox predicted_window(const QacSpace& z, const WeightParams& p)
{
    const double n = z.dim();
    const auto nu = nu_vector(z);
    WindowBox b;
    b.delta_lo = 2.0 - n - p.a / 2.0;
    b.delta_hi = p.a / 2.0;
    for (int i = 0; i < z.depth; ++i) {
        b.tau_lo.push_back((i == 0 ? 2.0 : 0.0) - nu[i] - p.b[i] / 2.0);
        b.tau_hi.push_back(p.b[i] / 2.0);
    }
    return b;
}

std::string fredholm_hypothesis_violation(const QacSpace& z, const WeightParams& p)
{
    if (p.depth() != z.depth)
        throw domain_error("weight parameters do not match the space depth");
    if (!(p.a + z.dim() > 2.0))
        return "a + n > 2";
    for (int j = 1; j <= z.depth; ++j)
        if (p.b_sum(j) + z.fiber_dim(j - 1) < 2.0)
            return "|b(j)| + m_{j-1} >= 2 at j=" + std::to_string(j);
    return "";
}

std::string schur_lemma_violation(const QacSpace& z, const WeightParams& p, double alpha,
                                  const std::vector<double>& beta)
{
    if (p.depth() != z.depth || static_cast<int>(beta.size()) != z.depth)
        throw domain_error("weight parameters do not match the space depth");
    return lemma_check(z, p, alpha, beta, "");
}

std::string schur_window_violation(const QacSpace& z, const WeightParams& p, double delta,
                                   const std::vector<double>& tau)
{
    if (p.depth() != z.depth || static_cast<int>(tau.size()) != z.depth)
        throw domain_error("weight parameters do not match the space depth");
    const auto nu = nu_vector(z);
    std::string s = lemma_check(z, p, delta - 2.0, lowered(tau, 2.0), "forward: ");
    if (!s.empty())
        return s;
    std::vector<double> back(z.depth);
    for (int i = 0; i < z.depth; ++i)
        back[i] = -tau[i] - nu[i];
    return lemma_check(z, p, -delta - z.dim(), back, "backward: ");
}

SchurReport schur_bound_check(const Ladder& ladder, double delta, const std::vector<double>& tau,
                              const GrowthThresholds& th)
{
    check_ladder(ladder);
    const QacSpace& z0 = *ladder.front()->space;
    SchurReport r;
    r.alpha = delta - 2.0;
    r.beta = lowered(tau, 2.0);
    r.failed_condition = schur_lemma_violation(z0, ladder.front()->params, r.alpha, r.beta);

    for (const OperatorBundle* op : ladder) {
        const QacSpace& z = *op->space;
        const auto omega = weight_field(z, r.alpha, r.beta);
        const auto target = weight_field(z, r.alpha + 2.0, lowered(r.beta, -2.0));
        CG cg;
        prepare(cg, op->K_schrodinger);
        Vec I = cg_solve(cg, op->mass.cwiseProduct(restrict_to(*op, omega)));
        double sup = 0.0;
        for (int i = 0; i < op->size(); ++i)
            sup = std::max(sup, I[i] / target[op->interior[i]]);
        r.radii.push_back(z.truncation_radius);
        r.sup_ratio.push_back(sup);
    }
    for (size_t i = 1; i < r.radii.size(); ++i)
        r.growth.push_back(per_doubling(r.sup_ratio[i] / r.sup_ratio[i - 1], r.radii[i - 1], r.radii[i]));

    const double worst = r.growth.back();
    if (!r.failed_condition.empty()) {
        r.verdict = Verdict::fail;
        r.note = "hypothesis fails: " + r.failed_condition;
    } else if (worst <= th.bounded) {
        r.verdict = Verdict::pass;
    } else if (worst >= th.unbounded) {
        r.verdict = Verdict::fail;
        r.note = "ratio grows by " + fmt(worst) + " per doubling";
    } else {
        r.note = "ratio growth " + fmt(worst) + " per doubling is between the thresholds";
    }
    return r;
}

SchurFunctionalReport schur_functional(const Ladder& ladder, double delta, const std::vector<double>& tau,
                                       const GrowthThresholds& th)
{
    check_ladder(ladder);
    SchurFunctionalReport r;
    for (const OperatorBundle* op : ladder) {
        const QacSpace& z = *op->space;
        const Vec D1 = restrict_to(*op, norm_weight(z, delta, tau, 0.0));
        const Vec D2 = restrict_to(*op, norm_weight(z, delta - 2.0, lowered(tau, 2.0), 0.0)).cwiseInverse();
        const Vec f = restrict_to(*op, norm_weight(z, 0.0, std::vector<double>(z.depth, 0.0), 0.0));
        CG cg;
        prepare(cg, op->K_schrodinger);
        Vec fw = D1.cwiseProduct(cg_solve(cg, op->mass.cwiseProduct(D2).cwiseProduct(f))).cwiseQuotient(f);
        Vec bw = D2.cwiseProduct(cg_solve(cg, op->mass.cwiseProduct(D1).cwiseProduct(f))).cwiseQuotient(f);
        r.radii.push_back(z.truncation_radius);
        r.forward.push_back(fw.maxCoeff());
        r.backward.push_back(bw.maxCoeff());
    }
    for (size_t i = 1; i < r.radii.size(); ++i)
        r.growth.push_back(std::max(per_doubling(r.forward[i] / r.forward[i - 1], r.radii[i - 1], r.radii[i]),
                                    per_doubling(r.backward[i] / r.backward[i - 1], r.radii[i - 1], r.radii[i])));
    const double worst = r.growth.back();
    r.verdict = worst <= th.bounded ? Verdict::pass : worst >= th.unbounded ? Verdict::fail : Verdict::inconclusive;
    return r;
}

// ------------------------------------------------------------ window scan

WindowGrid default_window_grid(const QacSpace& z, const WeightParams& p)
{
    const WindowBox box = predicted_window(z, p);
    WindowGrid g;
    g.delta_lo = box.delta_lo - 1.0;
    g.delta_hi = box.delta_hi + 1.0;
    if (z.depth > 0) {
        g.tau_lo = box.tau_lo[0] - 1.0;
        g.tau_hi = box.tau_hi[0] + 1.0;
        for (int i = 1; i < z.depth; ++i)
            g.tau_pinned.push_back((box.tau_lo[i] + box.tau_hi[i]) / 2.0);
    }
    return g;
}

const char* to_string(WindowClass c)
{
    switch (c) {
    case WindowClass::bounded: return "bounded";
    case WindowClass::unbounded: return "unbounded";
    default: return "indeterminate";
    }
}

double conjugated_inverse_norm(const OperatorBundle& op, double delta, const std::vector<double>& tau, double tol,
                               int max_iter)
{
    if (op.bundle)
        throw domain_error("weighted inverse checks act on scalar functions");
    const QacSpace& z = *op.space;
    const Vec sm = op.mass.cwiseSqrt();
    const Vec A = sm.cwiseProduct(restrict_to(op, norm_weight(z, delta, tau, 0.0)));
    const Vec B = sm.cwiseProduct(restrict_to(op, norm_weight(z, delta - 2.0, lowered(tau, 2.0), 0.0)).cwiseInverse());
    CG cg;
    prepare(cg, op.K_schrodinger);
    // S = A K^{-1} B, S^T = B K^{-1} A
    Vec x = Vec::Ones(op.size()).normalized();
    double s = 0.0, prev = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vec y = A.cwiseProduct(cg_solve(cg, B.cwiseProduct(x)));
        Vec xt = B.cwiseProduct(cg_solve(cg, A.cwiseProduct(y)));
        s = std::sqrt(xt.norm());
        x = xt / xt.norm();
        if (it > 0 && std::abs(s - prev) <= tol * s)
            return s;
        prev = s;
    }
    throw numerical_error("power iteration for the weighted inverse norm did not settle");
}

WindowScan window_scan(const Ladder& ladder, const WindowGrid& grid)
{
    check_ladder(ladder);
    const QacSpace& z0 = *ladder.front()->space;
    const WeightParams& p = ladder.front()->params;
    if (!(grid.delta_step > 0.0) || (z0.depth > 0 && !(grid.tau_step > 0.0)))
        throw domain_error("window grid steps must be positive");
    if (static_cast<int>(grid.tau_pinned.size()) != std::max(z0.depth - 1, 0))
        throw domain_error("pin one tau per weight function beyond the first");
    const std::string hyp = fredholm_hypothesis_violation(z0, p);

    WindowScan s;
    s.grid = grid;
    s.predicted = predicted_window(z0, p);
    for (const OperatorBundle* op : ladder)
        s.radii.push_back(op->space->truncation_radius);
    const bool has_tau = z0.depth > 0;

    auto axis = [](double lo, double hi, double step) {
        std::vector<double> v;
        int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
        for (int i = 0; i <= n; ++i)
            v.push_back(lo + i * step);
        return v;
    };
    const auto deltas = axis(grid.delta_lo, grid.delta_hi, grid.delta_step);
    const auto taus = has_tau ? axis(grid.tau_lo, grid.tau_hi, grid.tau_step) : std::vector<double>{0.0};
    auto nearest = [](const std::vector<double>& v, double x) {
        return *std::min_element(v.begin(), v.end(),
                                 [&](double a, double b) { return std::abs(a - x) < std::abs(b - x); });
    };
    const double delta_col = nearest(deltas, (s.predicted.delta_lo + s.predicted.delta_hi) / 2.0);
    const double tau_row = has_tau ? nearest(taus, (s.predicted.tau_lo[0] + s.predicted.tau_hi[0]) / 2.0) : 0.0;

    for (double t : taus)
        for (double d : deltas) {
            if (grid.cross && d != delta_col && t != tau_row)
                continue;
            WindowPoint pt;
            pt.delta = d;
            pt.tau1 = t;
            std::vector<double> tau;
            if (has_tau) {
                tau.push_back(t);
                tau.insert(tau.end(), grid.tau_pinned.begin(), grid.tau_pinned.end());
            }
            for (const OperatorBundle* op : ladder)
                pt.norms.push_back(conjugated_inverse_norm(*op, d, tau, grid.power_tol, grid.power_max));
            const size_t m = pt.norms.size();
            pt.growth = per_doubling(pt.norms[m - 1] / pt.norms[m - 2], s.radii[m - 2], s.radii[m - 1]);
            pt.measured = pt.growth <= grid.growth.bounded     ? WindowClass::bounded
                          : pt.growth >= grid.growth.unbounded ? WindowClass::unbounded
                                                               : WindowClass::indeterminate;
            pt.predicted_inside = s.predicted.contains(d, tau);
            const CellDistance cd = cell_distance(s.predicted, grid, d, t, has_tau);
            // closed tau edges belong to the window; open delta edges do not
            pt.boundary_cell = pt.predicted_inside ? cd.to_open <= 1.0 + 1e-9 : cd.outside <= 1.0 + 1e-9;
            s.points.push_back(pt);
        }

    s.interior_ok = s.exterior_ok = true;
    int n_in = 0, n_out = 0;
    for (const auto& pt : s.points) {
        if (pt.boundary_cell)
            continue;
        if (pt.predicted_inside) {
            ++n_in;
            s.interior_ok = s.interior_ok && pt.measured == WindowClass::bounded;
        } else {
            ++n_out;
            s.exterior_ok = s.exterior_ok && pt.measured == WindowClass::unbounded;
        }
    }
    s.interior_ok = s.interior_ok && n_in > 0;
    s.exterior_ok = s.exterior_ok && n_out > 0;

    // first unbounded point past each edge along the central row and column
    auto edge = [&](bool along_delta, int side) {
        double best = nan_v, best_pos = side > 0 ? inf : -inf;
        const double lim = along_delta ? (side > 0 ? s.predicted.delta_hi : s.predicted.delta_lo)
                                       : (side > 0 ? s.predicted.tau_hi[0] : s.predicted.tau_lo[0]);
        for (const auto& pt : s.points) {
            if (along_delta ? pt.tau1 != tau_row : pt.delta != delta_col)
                continue;
            const double x = along_delta ? pt.delta : pt.tau1;
            if (pt.measured != WindowClass::unbounded || (side > 0 ? x <= lim : x >= lim))
                continue;
            if (side > 0 ? x < best_pos : x > best_pos) {
                best_pos = x;
                best = x - side * std::log2(pt.growth);
            }
        }
        return best;
    };
    s.delta_lo = edge(true, -1);
    s.delta_hi = edge(true, 1);
    s.tau_lo = has_tau ? edge(false, -1) : nan_v;
    s.tau_hi = has_tau ? edge(false, 1) : nan_v;
    auto near = [](double m, double p, double step) { return std::isfinite(m) && std::abs(m - p) <= step + 1e-9; };
    s.boundaries_ok = near(s.delta_lo, s.predicted.delta_lo, grid.delta_step) &&
                      near(s.delta_hi, s.predicted.delta_hi, grid.delta_step);
    if (has_tau)
        s.boundaries_ok = s.boundaries_ok && near(s.tau_lo, s.predicted.tau_lo[0], grid.tau_step) &&
                          near(s.tau_hi, s.predicted.tau_hi[0], grid.tau_step);

    if (!hyp.empty()) {
        s.verdict = Verdict::fail;
        s.note = "hypothesis fails: " + hyp;
    } else if (s.interior_ok && s.exterior_ok && s.boundaries_ok) {
        s.verdict = Verdict::pass;
    } else {
        s.verdict = Verdict::fail;
        std::string why;
        if (!s.interior_ok)
            why += " interior points not all bounded;";
        if (!s.exterior_ok)
            why += " exterior points not all unbounded;";
        if (!s.boundaries_ok)
            why += " measured edges off by more than one cell;";
        s.note = why.substr(1, why.size() - 2);
    }
    return s;
}

std::string window_csv(const WindowScan& s)
{
    std::ostringstream o;
    o << "delta,tau1,predicted_inside,boundary_cell,growth,class";
    for (double r : s.radii)
        o << ",norm_R" << r;
    o << "\n";
    for (const auto& p : s.points) {
        o << p.delta << "," << p.tau1 << "," << p.predicted_inside << "," << p.boundary_cell << "," << p.growth << ","
          << to_string(p.measured);
        for (double x : p.norms)
            o << "," << x;
        o << "\n";
    }
    return o.str();
}

double h2_bound_constant(const OperatorBundle& op, double delta, const std::vector<double>& tau, int samples,
                         std::uint64_t seed)
{
    if (op.bundle)
        throw domain_error("weighted inverse checks act on scalar functions");
    if (samples < 1)
        throw domain_error("need at least one sample");
    const QacSpace& z = *op.space;
    CG cg;
    prepare(cg, op.K_schrodinger);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const WeightedNorm out{delta, tau, NormOrder::H2};
    const WeightedNorm in{delta - 2.0, lowered(tau, 2.0), NormOrder::L2};
    double worst = 0.0;
    for (int k = 0; k < samples; ++k) {
        Vec f(op.size());
        for (int i = 0; i < op.size(); ++i)
            f[i] = normal(rng);
        Vec u = cg_solve(cg, op.mass.cwiseProduct(f));
        worst = std::max(worst, weighted_norm(z, extend(op, u), out) / weighted_norm(z, extend(op, f), in));
    }
    return worst;
}

}  // namespace qaclab
