#include <Eigen/IterativeLinearSolvers>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "qaclab/measure.hpp"
#include "qaclab/spectral.hpp"

namespace qaclab {

namespace {

using Dense = Eigen::MatrixXd;

struct Grid {
    std::vector<double> nodes;  // nodes[0] = 0
    std::vector<int> target;    // node index of each requested time
};

Grid time_grid(const std::vector<double>& times, const HeatOptions& opt)
{
    if (times.empty())
        throw domain_error("no heat times requested");
    if (!(opt.ratio > 1.0 && opt.ratio <= 1.3))
        throw domain_error("heat step ratio must lie in (1, 1.3]");
    if (!(opt.first_fraction > 0.0 && opt.first_fraction < 1.0))
        throw domain_error("first_fraction must lie in (0,1)");
    for (size_t i = 0; i < times.size(); ++i)
        if (!(times[i] > 0.0) || (i > 0 && times[i] < times[i - 1]))
            throw domain_error("heat times must be positive and ascending");
    Grid g;
    g.nodes = {0.0, opt.first_fraction * times[0]};
    for (double T : times) {
        double prev = g.nodes.back();
        if (T > prev) {
            int n = std::max(1, static_cast<int>(std::ceil(std::log(T / prev) / std::log(opt.ratio) - 1e-9)));
            double q = std::pow(T / prev, 1.0 / n);
            for (int k = 1; k < n; ++k)
                g.nodes.push_back(prev * std::pow(q, k));
            g.nodes.push_back(T);
        }
        g.target.push_back(static_cast<int>(g.nodes.size()) - 1);
    }
    return g;
}

// Backward Euler for M u' = -K u with s equal substeps per grid interval.
std::vector<Dense> backward_euler(const SpMat& K, const Vec& M, const Dense& u0, const Grid& grid, int s,
                                  const HeatOptions& opt)
{
    SpMat Md(M.size(), M.size());
    Md.reserve(Eigen::VectorXi::Constant(M.size(), 1));
    for (int i = 0; i < M.size(); ++i)
        Md.insert(i, i) = M[i];
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(opt.cg_tol);
    cg.setMaxIterations(opt.cg_max_iter);
    Dense u = u0;
    std::vector<Dense> out;
    size_t next = 0;
    for (size_t k = 1; k < grid.nodes.size(); ++k) {
        double tau = (grid.nodes[k] - grid.nodes[k - 1]) / s;
        SpMat A = Md + tau * K;
        cg.compute(A);
        for (int sub = 0; sub < s; ++sub)
            for (int c = 0; c < u.cols(); ++c) {
                Vec b = M.cwiseProduct(u.col(c));
                Vec x = cg.solveWithGuess(b, u.col(c));
                if (cg.info() != Eigen::Success) {
                    std::ostringstream msg;
                    msg << "heat step did not converge: tau=" << tau << " iterations=" << cg.iterations()
                        << " residual=" << cg.error();
                    throw numerical_error(msg.str());
                }
                u.col(c) = x;
            }
        while (next < grid.target.size() && grid.target[next] == static_cast<int>(k)) {
            out.push_back(u);
            ++next;
        }
    }
    return out;
}

}  // namespace

std::vector<Dense> heat_evolve(const OperatorBundle& op, OperatorKind which, const Dense& initial,
                               const std::vector<double>& times, const HeatOptions& opt, double* error_estimate,
                               int* steps)
{
    const SpMat& K = op.stiffness_of(which);
    const Vec& M = op.mass_of(which);
    const int r = which == OperatorKind::bundle ? op.rank() : 1;
    const int N = op.space->size();
    if (initial.rows() != N * r)
        throw domain_error("initial data must have one row per vertex and fiber direction");
    if (opt.levels < 1 || opt.levels > 5)
        throw domain_error("Richardson levels must be 1..5");
    Grid grid = time_grid(times, opt);

    Dense u0(op.size() * r, initial.cols());
    for (int a = 0; a < op.size(); ++a)
        u0.middleRows(a * r, r) = initial.middleRows(op.interior[a] * r, r);

    std::vector<std::vector<Dense>> prev;
    for (int l = 0; l < opt.levels; ++l) {
        std::vector<std::vector<Dense>> row(l + 1);
        row[0] = backward_euler(K, M, u0, grid, 1 << l, opt);
        for (int k = 1; k <= l; ++k) {
            double f = std::ldexp(1.0, k) - 1.0;
            row[k].resize(times.size());
            for (size_t i = 0; i < times.size(); ++i)
                row[k][i] = row[k - 1][i] + (row[k - 1][i] - prev[k - 1][i]) / f;
        }
        prev = std::move(row);
    }
    const auto& best = prev.back();
    double err = 0.0;
    if (opt.levels > 1) {
        const auto& lower = prev[prev.size() - 2];
        double peak = 0.0;
        for (const auto& b : best)
            peak = std::max(peak, b.cwiseAbs().maxCoeff());
        for (size_t i = 0; i < times.size(); ++i) {
            double scale = opt.peak_scale ? peak : best[i].cwiseAbs().maxCoeff();
            if (scale > 0.0)
                err = std::max(err, (best[i] - lower[i]).cwiseAbs().maxCoeff() / scale);
        }
    }
    if (error_estimate)
        *error_estimate = err;
    if (steps)
        *steps = static_cast<int>(grid.nodes.size()) - 1;
    if (opt.levels > 1 && err > opt.max_error) {
        std::ostringstream msg;
        msg << "heat extrapolation error " << err << " exceeds " << opt.max_error;
        throw numerical_error(msg.str());
    }

    std::vector<Dense> out;
    for (const auto& u : best) {
        Dense full = Dense::Zero(N * r, initial.cols());
        for (int a = 0; a < op.size(); ++a)
            full.middleRows(op.interior[a] * r, r) = u.middleRows(a * r, r);
        out.push_back(std::move(full));
    }
    return out;
}

std::vector<HeatKernelSnapshot> heat_columns(const OperatorBundle& op, OperatorKind which, int source,
                                             const std::vector<double>& times, const HeatOptions& opt)
{
    const int N = op.space->size();
    if (source < 0 || source >= N || op.slot[source] < 0)
        throw domain_error("heat source must be an interior vertex");
    const int r = which == OperatorKind::bundle ? op.rank() : 1;
    const double m = op.mass_of(which)[op.slot[source] * r];
    Dense init = Dense::Zero(N * r, r);
    for (int i = 0; i < r; ++i)
        init(source * r + i, i) = 1.0 / m;
    double err = 0.0;
    int steps = 0;
    auto cols = heat_evolve(op, which, init, times, opt, &err, &steps);
    std::vector<HeatKernelSnapshot> out;
    for (size_t k = 0; k < times.size(); ++k) {
        HeatKernelSnapshot s;
        s.t = times[k];
        s.source = source;
        s.which = which;
        s.rank = r;
        s.steps = steps;
        s.scheme = "backward Euler, ratio " + std::to_string(opt.ratio) + ", Richardson levels " +
                   std::to_string(opt.levels);
        s.error_estimate = err;
        s.column.resize(static_cast<size_t>(N) * r * r);
        for (int v = 0; v < N; ++v)
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < r; ++j)
                    s.column[(static_cast<size_t>(v) * r + i) * r + j] = cols[k](v * r + i, j);
        out.push_back(std::move(s));
    }
    return out;
}

HeatKernelSnapshot heat_column(const OperatorBundle& op, OperatorKind which, double t, int source,
                               const HeatOptions& opt)
{
    return heat_columns(op, which, source, {t}, opt).front();
}

GaussianReport verify_gaussian_bounds(const OperatorBundle& op, const std::vector<int>& centers,
                                      const GaussianOptions& opt)
{
    const QacSpace& z = *op.space;
    if (op.rank() != 1 && op.bundle)
        throw domain_error("Gaussian bounds are checked on the scalar operator");
    if (auto why = cvc_violation(z, op.params); !why.empty())
        throw domain_error("volume comparison condition fails: " + why);
    GaussianReport rep;
    std::vector<double> times = opt.times;
    std::sort(times.begin(), times.end());
    const double t_max = times.back();
    auto density = measure_density(z, op.params);
    auto bd = boundary_distances(z);

    std::vector<Sample> diag;
    std::vector<double> lt, lh;
    int skipped = 0;
    for (int c : centers) {
        if (op.slot[c] < 0 || bd[c] < 3.0 * std::sqrt(t_max)) {
            ++skipped;
            continue;
        }
        auto snaps = heat_columns(op, OperatorKind::mu, c, times, opt.heat);
        auto dist = space_distances(z, c);
        VolumeProfile vol(dist, density);
        const double rc = resolved_radius(z, c);
        for (const auto& s : snaps) {
            if (std::sqrt(s.t) < rc)
                continue;
            double H = s.column[c];
            double mb = vol(std::sqrt(s.t));
            diag.push_back({s.t, std::log(H), -std::log(mb)});
            lt.push_back(std::log(s.t));
            lh.push_back(std::log(H));
        }

        // off-diagonal partners spread evenly in distance
        const double d_max = std::sqrt(opt.max_scaled * t_max);
        std::vector<std::pair<double, int>> cand;
        for (int v = 0; v < z.size(); ++v)
            if (v != c && op.slot[v] >= 0 && dist[v] <= d_max && bd[v] >= std::sqrt(t_max))
                cand.push_back({dist[v], v});
        std::sort(cand.begin(), cand.end());
        const int want = 40;
        std::vector<int> partners;
        for (int k = 0; k < want && !cand.empty(); ++k) {
            int idx = static_cast<int>((static_cast<long>(k) * (cand.size() - 1)) / std::max(1, want - 1));
            if (partners.empty() || partners.back() != cand[idx].second)
                partners.push_back(cand[idx].second);
        }
        std::vector<double> xs, ys;
        for (int v : partners) {
            VolumeProfile pv(space_distances(z, v), density);
            const double rv = std::max(rc, resolved_radius(z, v));
            for (const auto& s : snaps) {
                double x = dist[v] * dist[v] / s.t;
                double H = s.column[v];
                if (x < opt.min_scaled || x > opt.max_scaled || !(H > 0.0) || std::sqrt(s.t) < rv)
                    continue;
                double r = std::sqrt(s.t);
                xs.push_back(x);
                ys.push_back(std::log(H) + 0.5 * (std::log(vol(r)) + std::log(pv(r))));
            }
        }
        if (xs.size() >= 4)
            rep.c_fit.push_back(-fit_line(xs, ys).slope);
    }
    rep.on_diagonal = compare("heat on-diagonal vs 1/muB(z, sqrt t)", std::move(diag), opt.tol);
    rep.diagonal_slope = lt.size() >= 2 ? fit_line(lt, lh).slope : 0.0;
    if (!rep.c_fit.empty()) {
        auto [lo, hi] = std::minmax_element(rep.c_fit.begin(), rep.c_fit.end());
        rep.c_lo = *lo;
        rep.c_hi = *hi;
    }
    std::ostringstream note;
    if (skipped)
        note << skipped << " centers too close to the boundary; ";
    note << rep.c_fit.size() << " off-diagonal fits";
    rep.note = note.str();
    if (rep.c_fit.empty() || rep.on_diagonal.verdict == Verdict::inconclusive)
        rep.verdict = Verdict::inconclusive;
    else
        rep.verdict = rep.on_diagonal.passed() && rep.c_lo >= opt.c_lo && rep.c_hi <= opt.c_hi ? Verdict::pass
                                                                                                : Verdict::fail;
    return rep;
}

DominationReport verify_domination(const OperatorBundle& op, const DominationOptions& opt)
{
    if (!op.bundle)
        throw domain_error("domination needs an operator with a bundle");
    DominationReport rep;
    rep.margin = domination_margin(op);
    if (rep.margin < -1e-12) {
        rep.hypothesis_ok = false;
        rep.verdict = Verdict::fail;
        rep.note = "hypothesis fails: R - V*Id has eigenvalue " + std::to_string(rep.margin);
        return rep;
    }
    const int r = op.rank();
    const int n = op.size();
    DenseHeat L(op, OperatorKind::bundle), S(op, OperatorKind::schrodinger);
    std::mt19937_64 gen(opt.seed);
    auto draw = [&](int bound) { return static_cast<int>(gen() % static_cast<std::uint64_t>(bound)); };

    std::vector<Dense> HL, HS;
    for (double t : opt.times) {
        HL.push_back(L.kernel(t));
        HS.push_back(S.kernel(t));
    }
    for (int k = 0; k < opt.samples; ++k) {
        int ti = k % static_cast<int>(opt.times.size());
        const Dense& hs = HS[ti];
        double floor = opt.negligible * hs.maxCoeff();
        int a = draw(n);
        std::vector<int> ok;
        for (int b = 0; b < n; ++b)
            if (hs(a, b) > floor)
                ok.push_back(b);
        int b = ok[draw(static_cast<int>(ok.size()))];
        Dense block = HL[ti].block(a * r, b * r, r, r);
        double norm = Eigen::JacobiSVD<Dense>(block).singularValues()[0];
        rep.worst_ratio = std::max(rep.worst_ratio, norm / hs(a, b));
        ++rep.checked;
    }
    rep.dominated = rep.checked > 0 && rep.worst_ratio <= 1.0 + opt.slack;

    // Trotter product in symmetric coordinates y = sqrt(mass) x
    const Vec& mb = op.mass_bundle;
    Vec isq = mb.cwiseSqrt().cwiseInverse();
    Dense A = isq.asDiagonal() * Dense(op.K_connection) * isq.asDiagonal();
    A = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Dense> esA(A);
    int src = op.slot[op.space->basepoint] >= 0 ? op.slot[op.space->basepoint] : 0;
    Vec y0 = Vec::Zero(n * r);
    y0[src * r] = 1.0;
    Vec exact = L.apply(opt.trotter_t, y0.cwiseProduct(isq)).cwiseQuotient(isq);
    for (int k : opt.trotter_k) {
        double s = opt.trotter_t / k;
        Dense EA = esA.eigenvectors() * (-s * esA.eigenvalues().array()).exp().matrix().asDiagonal() *
                   esA.eigenvectors().transpose();
        std::vector<Dense> EB(n);
        for (int a = 0; a < n; ++a) {
            Eigen::SelfAdjointEigenSolver<Dense> es(op.bundle->endomorphism[op.interior[a]]);
            EB[a] = es.eigenvectors() * (-s * es.eigenvalues().array()).exp().matrix().asDiagonal() *
                    es.eigenvectors().transpose();
        }
        Vec y = y0;
        for (int step = 0; step < k; ++step) {
            for (int a = 0; a < n; ++a)
                y.segment(a * r, r) = EB[a] * y.segment(a * r, r);
            y = EA * y;
        }
        rep.trotter_errors.push_back((y - exact).norm() / exact.norm());
    }
    auto at = [&](int k) {
        for (size_t i = 0; i < opt.trotter_k.size(); ++i)
            if (opt.trotter_k[i] == k)
                return rep.trotter_errors[i];
        return std::nan("");
    };
    rep.trotter_ratio = at(16) / at(64);
    rep.trotter_first_order = rep.trotter_ratio >= 3.0 && rep.trotter_ratio <= 6.0;
    std::ostringstream note;
    note << rep.checked << " samples, worst ratio " << rep.worst_ratio << ", Trotter ratio " << rep.trotter_ratio;
    rep.note = note.str();
    rep.verdict = rep.dominated && rep.trotter_first_order ? Verdict::pass : Verdict::fail;
    return rep;
}

}  // namespace qaclab
