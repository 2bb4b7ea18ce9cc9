#include "qaclab/measure.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

namespace qaclab {

std::vector<double> measure_density(const QacSpace& z, const WeightParams& p)
{
    auto w = weight_field(z, p.a, p.b);
    for (int v = 0; v < z.size(); ++v)
        w[v] *= z.graph.measure[v];
    return w;
}

BallStats weighted_volume(const QacSpace& z, const Ball& ball, const WeightParams& p)
{
    BallStats s{ball.center, ball.radius, ball.kind, 0.0, p};
    for (int v : ball.members) {
        if (v < 0 || v >= z.size())
            throw domain_error("ball member outside the space");
        s.mu += weight_value(z, v, p.a, p.b) * z.graph.measure[v];
    }
    return s;
}

VolumeProfile::VolumeProfile(const std::vector<double>& dist, const std::vector<double>& density)
{
    std::vector<std::pair<double, double>> e;
    for (size_t v = 0; v < dist.size(); ++v)
        if (dist[v] < inf)
            e.emplace_back(dist[v], density[v]);
    std::sort(e.begin(), e.end());
    double acc = 0.0;
    for (const auto& [d, m] : e) {
        acc += m;
        if (!r_.empty() && r_.back() == d)
            cum_.back() = acc;
        else {
            r_.push_back(d);
            cum_.push_back(acc);
        }
    }
}

double VolumeProfile::operator()(double r) const
{
    auto it = std::upper_bound(r_.begin(), r_.end(), r);
    if (it == r_.begin())
        return 0.0;
    return cum_[it - r_.begin() - 1];
}

std::string cvc_violation(const QacSpace& z, const WeightParams& p)
{
    std::ostringstream os;
    if (p.depth() != z.depth)
        return "weight exponent b does not match the space depth";
    if (p.a + z.dim() < 0) {
        os << "a + n >= 0 fails: a + n = " << p.a + z.dim();
        return os.str();
    }
    for (int j = 1; j <= z.depth; ++j)
        if (p.b_sum(j) + z.fiber_dim(j - 1) < 0) {
            os << "|b(" << j << ")| + m_" << j - 1 << " >= 0 fails: value " << p.b_sum(j) + z.fiber_dim(j - 1);
            return os.str();
        }
    return {};
}

double anchored_closed_form(const QacSpace& z, const WeightParams& p, double R)
{
    double s = 1.0;
    for (int j = 1; j <= z.depth; ++j)
        s += std::pow(R, -z.fiber_dim(j - 1) - p.b_sum(j));
    return 1.0 + std::pow(R, p.a + z.dim()) * s;
}

namespace {

std::vector<double> geometric(double lo, double hi, int n)
{
    std::vector<double> out;
    if (n < 2) {
        out.push_back(lo);
        return out;
    }
    for (int i = 0; i < n; ++i)
        out.push_back(lo * std::pow(hi / lo, double(i) / (n - 1)));
    return out;
}

// radii lo..hi with ratio at most 2^{1/4}
std::vector<double> fine_radii(double lo, double hi)
{
    int n = std::max(2, static_cast<int>(std::ceil(std::log(hi / lo) / std::log(std::pow(2.0, 0.25)))) + 1);
    return geometric(lo, hi, n);
}

double min_incident_length(const WeightedGraph& g, int v)
{
    auto inc = g.incident(v);
    double m = inf;
    for (int k = 0; k < inc.n; ++k)
        m = std::min(m, g.edges[inc.eid[k]].length);
    return m;
}

using StratumKey = std::tuple<int, int, int>;

std::map<StratumKey, std::vector<int>> strata(const QacSpace& z, const std::vector<double>& bd, double max_rho)
{
    std::map<StratumKey, std::vector<int>> out;
    for (int v = 0; v < z.size(); ++v) {
        if (bd[v] <= 0.0 || z.rho[v] > max_rho)
            continue;
        int s = remote_chain(z, v, z.c).length();
        int band = static_cast<int>(std::floor(std::log2(z.rho[v])));
        out[{z.piece[v], s, band}].push_back(v);
    }
    return out;
}

std::vector<int> pick(const std::map<StratumKey, std::vector<int>>& st, int per, std::uint64_t seed, int always)
{
    std::mt19937_64 rng(seed);
    std::vector<int> out{always};
    for (const auto& [key, members] : st) {
        std::vector<int> m = members;
        int take = std::min<int>(per, static_cast<int>(m.size()));
        for (int i = 0; i < take; ++i) {
            int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(m.size() - i));
            std::swap(m[i], m[j]);
            if (m[i] != always)
                out.push_back(m[i]);
        }
    }
    return out;
}

}  // namespace

// Twice the shortest edge at v, taken in the coarsest factor for products.
double resolved_radius(const QacSpace& z, int v)
{
    if (z.distance_mode != DistanceMode::product)
        return 2.0 * min_incident_length(z.graph, v);
    double m = 0.0;
    for (int f = 0; f < static_cast<int>(z.factors.size()); ++f)
        m = std::max(m, min_incident_length(z.factors[f].graph, z.factor_index(f, v)));
    return 2.0 * m;
}

ComparabilityReport verify_anchored_volume(const QacSpace& z, const WeightParams& p, const Tolerances& tol,
                                           int n_radii)
{
    auto dens = measure_density(z, p);
    auto d = space_distances(z, z.basepoint);
    VolumeProfile prof(d, dens);
    double R_hi = boundary_distances(z)[z.basepoint];
    double R_lo = std::max(1.5, R_hi / 100.0);
    std::vector<Sample> s;
    if (R_hi > R_lo)
        for (double R : geometric(R_lo, R_hi, n_radii))
            s.push_back({R, std::log(prof(R)), std::log(anchored_closed_form(z, p, R))});
    return compare("anchored volume", std::move(s), tol);
}

std::vector<int> stratified_centers(const QacSpace& z, int per_stratum, std::uint64_t seed, double max_rho)
{
    auto bd = boundary_distances(z);
    return pick(strata(z, bd, max_rho), per_stratum, seed, z.basepoint);
}

RemoteVolumeResult verify_remote_volume(const QacSpace& z, const WeightParams& p, const std::vector<int>& points,
                                        const Tolerances& tol)
{
    RemoteVolumeResult out;
    auto dens = measure_density(z, p);
    auto bd = boundary_distances(z);
    const int n = z.dim();
    std::vector<Sample> all;
    for (int q : points) {
        auto ch = remote_chain(z, q, z.c);
        auto bands = radius_bands(z, q, ch, z.c);
        double reach = std::min(z.c * z.rho[q], bd[q]);
        VolumeProfile prof(space_distances(z, q, reach), dens);
        double rmin = resolved_radius(z, q);
        for (const auto& band : bands) {
            double lo = std::max(band.lo, rmin), hi = std::min(band.hi, reach);
            if (!(hi > lo))
                continue;
            int j = band.index;
            double pre = weight_value(z, q, p.a - p.b_sum(j), p.b_tail(j));
            std::vector<Sample> s;
            for (double r : fine_radii(lo, hi)) {
                double rhs = pre * std::pow(r, n + p.b_sum(j));
                s.push_back({r, std::log(prof(r)), std::log(rhs)});
            }
            all.insert(all.end(), s.begin(), s.end());
            std::ostringstream name;
            name << "remote volume p=" << q << " band j=" << j;
            out.per_band.push_back(compare(name.str(), std::move(s), tol));
        }
    }
    out.combined = compare("remote volume", std::move(all), tol);
    if (out.combined.samples.empty())
        out.combined.note = "no remote balls resolved at this resolution";
    return out;
}

ComparabilityReport verify_nonremote_volume(const QacSpace& z, const WeightParams& p, const std::vector<int>& points,
                                            const Tolerances& tol)
{
    if (auto why = cvc_violation(z, p); !why.empty())
        throw domain_error("non-remote volume estimate needs the volume condition: " + why);
    auto dens = measure_density(z, p);
    auto bd = boundary_distances(z);
    std::vector<Sample> s;
    for (int q : points) {
        double lo = std::max(z.c * z.rho[q], resolved_radius(z, q));
        double hi = bd[q];
        if (!(hi > lo))
            continue;
        VolumeProfile prof(space_distances(z, q, hi), dens);
        for (double r : fine_radii(lo, hi))
            s.push_back({r, std::log(prof(r)), (p.a + z.dim()) * std::log(r)});
    }
    return compare("non-remote volume", std::move(s), tol);
}

DoublingResult doubling_constant(const QacSpace& z, const WeightParams& p, int n_samples, std::uint64_t seed)
{
    auto dens = measure_density(z, p);
    auto bd = boundary_distances(z);
    auto st = strata(z, bd, inf);
    int per = std::max(1, n_samples / std::max<int>(1, static_cast<int>(st.size())));
    DoublingResult out;
    for (int q : pick(st, per, seed, z.basepoint)) {
        double rmax = 0.5 * bd[q];
        double r = resolved_radius(z, q);
        if (!(r <= rmax))
            continue;
        VolumeProfile prof(space_distances(z, q, 2.0 * rmax), dens);
        for (; r <= rmax; r *= std::sqrt(2.0)) {
            double ratio = prof(2.0 * r) / prof(r);
            ++out.balls;
            if (ratio > out.C_D) {
                out.C_D = ratio;
                out.worst_center = q;
                out.worst_radius = r;
            }
        }
    }
    return out;
}

VolumeComparison verify_volume_comparison(const QacSpace& z, const WeightParams& p, const std::vector<int>& points,
                                          const Tolerances& tol)
{
    auto dens = measure_density(z, p);
    auto bd = boundary_distances(z);
    VolumeProfile anchored(space_distances(z, z.basepoint), dens);
    VolumeComparison out;
    std::vector<Sample> s;
    for (int q : points) {
        double r = z.c * z.rho[q];
        if (z.rho[q] > bd[z.basepoint] || r > bd[q] || r < resolved_radius(z, q))
            continue;
        VolumeProfile prof(space_distances(z, q, r), dens);
        double A = anchored(z.rho[q]);
        double R = prof(r);
        s.push_back({z.rho[q], std::log(A), std::log(R)});
        if (A / R > out.C_V) {
            out.C_V = A / R;
            out.worst_center = q;
        }
    }
    out.report = compare("volume comparison", std::move(s), tol);
    return out;
}

}  // namespace qaclab
