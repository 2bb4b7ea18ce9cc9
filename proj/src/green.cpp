#include "qaclab/green.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace qaclab {

namespace {

void check_scalar(OperatorKind which)
{
    if (which == OperatorKind::bundle)
        throw domain_error("Green functions are computed for scalar operators only");
}

GreenField solve_column(const OperatorBundle& op, OperatorKind which, int source,
                        Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper>& cg, const GreenOptions& opt)
{
    const QacSpace& z = *op.space;
    if (source < 0 || source >= z.size() || op.slot[source] < 0)
        throw domain_error("Green source must be an interior vertex");
    const int n = op.size();
    Vec rhs = Vec::Zero(n);
    rhs[op.slot[source]] = 1.0;
    Vec g = cg.solve(rhs);
    if (cg.info() != Eigen::Success || !(cg.error() <= std::max(opt.cg_tol * 100.0, 1e-10)))
        throw numerical_error("Green solve did not converge (residual " + std::to_string(cg.error()) + ")");
    const double top = g.cwiseAbs().maxCoeff();
    if (g.minCoeff() < -1e-9 * top)
        throw precondition_error("Green function has negative values: the operator is not positive");

    GreenField f;
    f.source = source;
    f.which = which;
    f.truncation_radius = z.truncation_radius;
    f.values.assign(z.size(), 0.0);
    for (int i = 0; i < n; ++i)
        f.values[op.interior[i]] = std::max(g[i], 0.0);
    f.residual = cg.error();
    f.iterations = static_cast<int>(cg.iterations());
    return f;
}

// Partner vertices whose distances from the source spread evenly in log d.
std::vector<int> spread_partners(const std::vector<double>& dist, const std::vector<char>& allowed, double lo,
                                 double hi, int count)
{
    std::vector<std::pair<double, int>> cand;
    for (int v = 0; v < static_cast<int>(dist.size()); ++v)
        if (allowed[v] && dist[v] >= lo && dist[v] <= hi)
            cand.emplace_back(dist[v], v);
    std::sort(cand.begin(), cand.end());
    std::vector<int> out;
    if (cand.empty() || count <= 0)
        return out;
    const double a = std::log(cand.front().first), b = std::log(cand.back().first);
    for (int k = 0; k < count; ++k) {
        double target = count == 1 ? a : a + (b - a) * k / (count - 1);
        auto it = std::lower_bound(cand.begin(), cand.end(), std::make_pair(std::exp(target), -1));
        if (it == cand.end())
            --it;
        if (it != cand.begin() && std::exp(target) - std::prev(it)->first < it->first - std::exp(target))
            --it;
        if (out.empty() || out.back() != it->second)
            out.push_back(it->second);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Closed form with the remote bands of the source precomputed.
double closed_form(const QacSpace& z, const WeightParams& p, const std::vector<double>& h, int source, int y,
                   double d, double c, const std::vector<RadiusBand>& bands, int* band_out = nullptr)
{
    const double n = z.dim();
    const double rho = z.rho[source];
    const double hh = h[source] * h[y];
    if (band_out)
        *band_out = -1;
    if (d > c * rho)
        return hh * std::pow(d, 2.0 - p.a - n);
    if (bands.size() <= 1)
        return hh * std::pow(rho, -p.a) * std::pow(d, 2.0 - n);
    int l = static_cast<int>(bands.size()) - 1;
    for (int k = 0; k < static_cast<int>(bands.size()); ++k)
        if (d >= bands[k].lo && d <= bands[k].hi) {
            l = k;
            break;
        }
    const int j = bands[l].index;
    if (band_out)
        *band_out = l;
    const double bj = p.b_sum(j);
    double w = 1.0;
    for (int i = j; i < z.depth; ++i)
        w *= std::pow(z.w[i][source], -p.b[i]);
    return hh * std::pow(rho, -p.a + bj) * w * std::pow(d, 2.0 - n - bj);
}

std::vector<RadiusBand> bands_of(const QacSpace& z, int source, double c)
{
    RemoteChain ch = remote_chain(z, source, c);
    if (ch.length() == 0)
        return {};
    return radius_bands(z, source, ch, c);
}

std::vector<Sample> thin(std::vector<Sample> s, size_t cap)
{
    if (s.size() <= cap)
        return s;
    std::sort(s.begin(), s.end(), [](const Sample& a, const Sample& b) { return a.scale < b.scale; });
    std::vector<Sample> out;
    out.reserve(cap);
    for (size_t k = 0; k < cap; ++k)
        out.push_back(s[k * s.size() / cap]);
    return out;
}

}  // namespace

std::vector<GreenField> green_columns(const OperatorBundle& op, OperatorKind which, const std::vector<int>& sources,
                                      const GreenOptions& opt)
{
    check_scalar(which);
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(opt.cg_tol);
    cg.setMaxIterations(opt.cg_max_iter);
    cg.compute(op.stiffness_of(which));
    std::vector<GreenField> out;
    for (int s : sources)
        out.push_back(solve_column(op, which, s, cg, opt));
    return out;
}

GreenField green_column(const OperatorBundle& op, OperatorKind which, int source, const GreenOptions& opt)
{
    return green_columns(op, which, {source}, opt).front();
}

std::vector<double> heat_time_integral(const OperatorBundle& op, OperatorKind which, int source, double T,
                                       double t_first, double ratio, const HeatOptions& heat)
{
    check_scalar(which);
    if (!(T > t_first && t_first > 0.0 && ratio > 1.0))
        throw domain_error("heat_time_integral needs 0 < t_first < T and ratio > 1");
    std::vector<double> times{t_first};
    while (times.back() * ratio < T)
        times.push_back(times.back() * ratio);
    times.push_back(T);
    auto snaps = heat_columns(op, which, source, times, heat);

    const int N = op.space->size();
    std::vector<double> I(N, 0.0);
    const double m0 = op.mass_of(which)[op.slot[source]];
    for (int v = 0; v < N; ++v)
        I[v] = 0.5 * t_first * ((v == source ? 1.0 / m0 : 0.0) + snaps[0].column[v]);
    for (size_t k = 0; k + 1 < snaps.size(); ++k) {
        const double dl = std::log(times[k + 1] / times[k]);
        for (int v = 0; v < N; ++v)
            I[v] += 0.5 * dl * (times[k] * snaps[k].column[v] + times[k + 1] * snaps[k + 1].column[v]);
    }
    return I;
}

GreenIntegral green_integral(const VolumeProfile& vz, const VolumeProfile& vy, double d, double s_max,
                             double growth)
{
    if (!(growth > 2.0))
        throw domain_error("volume growth must exceed 2 for the Green integral to converge");
    if (!(d > 0.0) || !(s_max > 0.0))
        throw domain_error("green_integral needs positive d and s_max");
    const double split = 2.0 * d;
    std::vector<double> cuts{d, split, s_max};
    for (const auto* prof : {&vz, &vy})
        for (double r : prof->radii())
            if (r > d && r < s_max)
                cuts.push_back(r);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    GreenIntegral out;
    auto add = [&](double lo, double hi, double value) {
        if (hi <= split)
            out.near += value;
        else if (lo >= split)
            out.far += value;
        else
            throw domain_error("green_integral: piece straddles the split");
    };
    for (size_t k = 0; k + 1 < cuts.size(); ++k) {
        double a = cuts[k], b = cuts[k + 1];
        if (a < d || b > s_max)
            continue;
        double V = std::sqrt(vz(a) * vy(a));
        if (!(V > 0.0))
            throw domain_error("green_integral: empty ball inside the range");
        add(a, b, 0.5 * (b * b - a * a) / V);
    }
    // s^growth extension beyond s_max
    const double S = s_max;
    const double VS = std::sqrt(vz(S) * vy(S));
    auto tail = [&](double lo, double hi) {
        double g = growth;
        double F_hi = std::isinf(hi) ? 0.0 : std::pow(hi, 2.0 - g);
        return std::pow(S, g) * (std::pow(lo, 2.0 - g) - F_hi) / ((g - 2.0) * VS);
    };
    const double start = std::max(S, d);
    if (start < split) {
        out.near += tail(start, split);
        out.far += tail(split, inf);
    } else {
        out.far += tail(start, inf);
    }
    return out;
}

ComparabilityReport verify_green_integral(const OperatorBundle& op, const std::vector<int>& sources,
                                          const GreenIntegralOptions& opt)
{
    const QacSpace& z = *op.space;
    const double growth = op.params.a + z.dim();
    if (!(growth > 2.0))
        throw precondition_error("a + n > 2 fails: the Green function is not defined");
    auto density = measure_density(z, op.params);
    auto bd = boundary_distances(z);
    std::vector<char> allowed(z.size(), 0);
    for (int v = 0; v < z.size(); ++v)
        allowed[v] = op.slot[v] >= 0;

    auto fields = green_columns(op, OperatorKind::schrodinger, sources);
    std::vector<Sample> samples;
    for (size_t s = 0; s < sources.size(); ++s) {
        const int src = sources[s];
        auto dist = space_distances(z, src);
        VolumeProfile vz(dist, density);
        const double lo = resolved_radius(z, src);
        const double hi = opt.max_fraction * bd[src];
        for (int y : spread_partners(dist, allowed, lo, hi, opt.partners)) {
            if (y == src || fields[s].values[y] <= 0.0)
                continue;
            VolumeProfile vy(space_distances(z, y), density);
            const double d = dist[y];
            GreenIntegral I = green_integral(vz, vy, d, std::min(bd[src], bd[y]), growth);
            samples.push_back({d, std::log(fields[s].values[y]), std::log(op.h[src] * op.h[y] * I.total())});
        }
    }
    return compare("green_integral", samples, opt.tol);
}

double gfe_closed_form(const QacSpace& z, const WeightParams& p, const std::vector<double>& h, int source, int y,
                       double d, double c)
{
    return closed_form(z, p, h, source, y, d, c, bands_of(z, source, c));
}

GfeReport verify_gfe_cases(const OperatorBundle& op, const std::vector<int>& sources, const GfeOptions& opt)
{
    const QacSpace& z = *op.space;
    const WeightParams& p = op.params;
    const double n = z.dim();
    if (!(p.a + n > 2.0)) {
        std::ostringstream os;
        os << "a + n > 2 fails: a + n = " << p.a + n;
        throw precondition_error(os.str());
    }
    std::string cvc = cvc_violation(z, p);
    if (!cvc.empty())
        throw precondition_error(cvc);
    const double c = opt.c > 0.0 ? opt.c : z.c;
    auto bd = boundary_distances(z);
    auto fields = green_columns(op, OperatorKind::schrodinger, sources);

    std::vector<Sample> far, near, remote;
    GfeReport rep;
    for (size_t s = 0; s < sources.size(); ++s) {
        const int src = sources[s];
        const auto bands = bands_of(z, src, c);
        const auto dist = space_distances(z, src);
        const double lo = resolved_radius(z, src);
        const double hi = opt.max_fraction * bd[src];
        // band fits collect (d, log G/hh) inside their windows
        std::vector<std::vector<double>> bx(bands.size()), by(bands.size());
        std::vector<double> wlo(bands.size()), whi(bands.size());
        for (size_t l = 0; l < bands.size(); ++l) {
            whi[l] = std::min(bands[l].hi, hi);
            wlo[l] = std::max({bands[l].lo, bands[l].hi * std::pow(10.0, -opt.fit_decades), lo});
        }
        for (int y = 0; y < z.size(); ++y) {
            const double d = dist[y];
            const double G = fields[s].values[y];
            if (y == src || op.slot[y] < 0 || !(d >= lo && d <= hi) || !(G > 0.0))
                continue;
            int band = -1;
            double pred = closed_form(z, p, op.h, src, y, d, c, bands, &band);
            Sample smp{d, std::log(G), std::log(pred)};
            if (d > c * z.rho[src])
                far.push_back(smp);
            else if (bands.empty())
                near.push_back(smp);
            else
                remote.push_back(smp);
            if (band >= 0 && d >= wlo[band] && d <= whi[band]) {
                bx[band].push_back(d);
                by[band].push_back(G / (op.h[src] * op.h[y]));
            }
        }
        for (size_t l = 0; l < bands.size(); ++l) {
            BandFit f;
            f.source = src;
            f.band = static_cast<int>(l) + 1;
            f.index = bands[l].index;
            f.lo = wlo[l];
            f.hi = whi[l];
            f.predicted = 2.0 - n - p.b_sum(f.index);
            f.n = static_cast<int>(bx[l].size());
            if (f.n < opt.min_band_samples || !(f.hi > 1.5 * f.lo))
                continue;
            f.measured = log_log_fit(bx[l], by[l]).slope;
            f.passed = std::abs(f.measured - f.predicted) <= opt.exponent_tol;
            rep.bands.push_back(f);
        }
    }
    const size_t cap = 4000;
    rep.case_far = compare("gfe_far", thin(far, cap), opt.tol);
    rep.case_near = compare("gfe_near", thin(near, cap), opt.tol);
    rep.case_remote = compare("gfe_remote", thin(remote, cap), opt.tol);

    bool any_fail = false, any_pass = false;
    std::ostringstream note;
    for (const auto* r : {&rep.case_far, &rep.case_near, &rep.case_remote}) {
        any_fail = any_fail || r->verdict == Verdict::fail;
        any_pass = any_pass || r->verdict == Verdict::pass;
        note << r->name << " " << to_string(r->verdict) << " (" << r->samples.size() << " samples); ";
    }
    for (const auto& f : rep.bands) {
        any_fail = any_fail || !f.passed;
        any_pass = any_pass || f.passed;
        note << "band " << f.band << " of " << f.source << ": exponent " << f.measured << " vs " << f.predicted
             << "; ";
    }
    rep.verdict = any_fail ? Verdict::fail : (any_pass ? Verdict::pass : Verdict::inconclusive);
    rep.note = note.str();
    if (rep.note.size() >= 2)
        rep.note.resize(rep.note.size() - 2);
    return rep;
}

int place_probe(const QacSpace& z, double target_w1, double target_rho)
{
    if (z.depth < 1)
        throw domain_error("place_probe needs a space with at least one weight function");
    if (!(target_w1 > 0.0 && target_w1 <= 1.0))
        throw domain_error("target w1 must lie in (0, 1]");
    auto score = [&](int v) {
        double s = std::abs(std::log(z.w[0][v] / target_w1));
        if (target_rho > 0.0)
            s += std::abs(std::log(z.rho[v] / target_rho));
        return s;
    };
    double best = inf;
    for (int v = 0; v < z.size(); ++v)
        if (!z.graph.boundary[v])
            best = std::min(best, score(v));
    const double slack = 0.02;
    auto from_base = space_distances(z, z.basepoint);
    int pick = -1;
    double pick_res = inf, pick_dist = inf;
    for (int v = 0; v < z.size(); ++v) {
        if (z.graph.boundary[v] || score(v) > best + slack)
            continue;
        double res = resolved_radius(z, v);
        bool better = res < pick_res * (1.0 - 1e-9) ||
                      (res <= pick_res * (1.0 + 1e-9) && from_base[v] < pick_dist);
        if (pick < 0 || better) {
            pick = v;
            pick_res = res;
            pick_dist = from_base[v];
        }
    }
    if (pick < 0)
        throw domain_error("no interior vertex to place the probe at");
    return pick;
}

}  // namespace qaclab
