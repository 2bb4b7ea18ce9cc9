#include "qaclab/space.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>

namespace qaclab {

int QacSpace::factor_index(int f, int v) const
{
    const auto& fac = factors[f];
    return (v / fac.stride) % fac.graph.size();
}

WeightParams::WeightParams(double a_, std::vector<double> b_, const std::vector<int>& dims)
    : a(a_), b(std::move(b_))
{
    const int k = static_cast<int>(dims.size()) - 1;
    if (static_cast<int>(b.size()) != k)
        throw domain_error("weight exponent b must have one entry per depth level");
    nu.resize(k);
    for (int j = 0; j < k; ++j)
        nu[j] = j == 0 ? dims[0] : dims[j] - dims[j - 1];
}

double WeightParams::b_sum(int l) const
{
    double s = 0.0;
    for (int i = 0; i < l && i < depth(); ++i)
        s += b[i];
    return s;
}

double WeightParams::nu_sum(int j) const
{
    double s = 0.0;
    for (int i = 0; i < j && i < depth(); ++i)
        s += nu[i];
    return s;
}

std::vector<double> WeightParams::b_head(int l) const
{
    std::vector<double> out(b.size(), 0.0);
    for (int i = 0; i < l && i < depth(); ++i)
        out[i] = b[i];
    return out;
}

std::vector<double> WeightParams::b_tail(int l) const
{
    std::vector<double> out = b;
    for (int i = 0; i < l && i < depth(); ++i)
        out[i] = 0.0;
    return out;
}

std::vector<double> lowered(const std::vector<double>& b, double s)
{
    std::vector<double> out = b;
    if (!out.empty())
        out[0] -= s;
    return out;
}

double weight_value(const QacSpace& z, int v, double a, const std::vector<double>& b)
{
    double x = std::pow(z.rho[v], a);
    for (size_t i = 0; i < b.size(); ++i)
        if (b[i] != 0.0)
            x *= std::pow(z.w[i][v], b[i]);
    return x;
}

std::vector<double> weight_field(const QacSpace& z, double a, const std::vector<double>& b)
{
    if (static_cast<int>(b.size()) > z.depth)
        throw domain_error("weight multi-index longer than the space depth");
    std::vector<double> out(z.size());
    for (int v = 0; v < z.size(); ++v)
        out[v] = weight_value(z, v, a, b);
    return out;
}

std::vector<double> doob_weight(const QacSpace& z, const WeightParams& p)
{
    std::vector<double> half(p.b.size());
    for (size_t i = 0; i < half.size(); ++i)
        half[i] = 0.5 * p.b[i];
    return weight_field(z, 0.5 * p.a, half);
}

namespace {

std::vector<double> multi_source(const WeightedGraph& g, const std::vector<int>& sources)
{
    std::vector<double> dist(g.size(), inf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (int s : sources) {
        dist[s] = 0.0;
        pq.push({0.0, s});
    }
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u])
            continue;
        auto inc = g.incident(u);
        for (int k = 0; k < inc.n; ++k) {
            double nd = d + g.edges[inc.eid[k]].length;
            if (nd < dist[inc.nb[k]]) {
                dist[inc.nb[k]] = nd;
                pq.push({nd, inc.nb[k]});
            }
        }
    }
    return dist;
}

std::vector<int> flagged(const WeightedGraph& g)
{
    std::vector<int> out;
    for (int v = 0; v < g.size(); ++v)
        if (g.boundary[v])
            out.push_back(v);
    return out;
}

double euclid(const std::vector<double>& x, const std::vector<double>& y)
{
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i)
        s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
}

}  // namespace

std::vector<double> space_distances(const QacSpace& z, int source, double cutoff)
{
    if (source < 0 || source >= z.size())
        throw domain_error("source vertex out of range");
    const int n = z.size();
    switch (z.distance_mode) {
    case DistanceMode::graph:
        return shortest_distances(z.graph, source, cutoff);
    case DistanceMode::embedded: {
        std::vector<double> d(n);
        for (int v = 0; v < n; ++v) {
            d[v] = euclid(z.graph.pos[v], z.graph.pos[source]);
            if (d[v] > cutoff)
                d[v] = inf;
        }
        return d;
    }
    case DistanceMode::product:
        break;
    }
    std::vector<std::vector<double>> fd;
    for (int f = 0; f < static_cast<int>(z.factors.size()); ++f)
        fd.push_back(shortest_distances(z.factors[f].graph, z.factor_index(f, source), cutoff));
    std::vector<double> d(n);
    for (int v = 0; v < n; ++v) {
        double s = 0.0;
        for (int f = 0; f < static_cast<int>(fd.size()) && s < inf; ++f) {
            double x = fd[f][z.factor_index(f, v)];
            s += x * x;
        }
        double r = std::sqrt(s);
        d[v] = r > cutoff ? inf : r;
    }
    return d;
}

Ball space_ball(const QacSpace& z, int center, double r)
{
    if (r < 0.0)
        throw domain_error("ball radius must be nonnegative");
    return ball_from_distances(space_distances(z, center, r), center, r, z.ball_context());
}

std::vector<double> boundary_distances(const QacSpace& z)
{
    const int n = z.size();
    if (z.distance_mode == DistanceMode::embedded) {
        std::vector<double> d(n);
        for (int v = 0; v < n; ++v) {
            double r = 0.0;
            for (double x : z.graph.pos[v])
                r += x * x;
            d[v] = std::max(0.0, z.truncation_radius - std::sqrt(r));
        }
        return d;
    }
    if (z.distance_mode == DistanceMode::graph)
        return multi_source(z.graph, flagged(z.graph));
    std::vector<std::vector<double>> fd;
    for (const auto& f : z.factors)
        fd.push_back(multi_source(f.graph, flagged(f.graph)));
    std::vector<double> d(n, inf);
    for (int v = 0; v < n; ++v)
        for (int f = 0; f < static_cast<int>(fd.size()); ++f)
            d[v] = std::min(d[v], fd[f][z.factor_index(f, v)]);
    return d;
}

double distance_to_boundary(const QacSpace& z, int v)
{
    return boundary_distances(z)[v];
}

RemoteChain remote_chain(const QacSpace& z, int p, double c)
{
    if (!(c > 0.0 && c < 1.0))
        throw domain_error("remote parameter c must lie in (0,1)");
    RemoteChain ch;
    const double thr = 1.0 - 2.0 * c;
    int top = z.depth;
    double scale = 1.0;  // w_{j_{l-1}}(p), the current fiber's relative radius
    while (top > 0) {
        int j = 0;
        for (int i = top; i >= 1; --i)
            if (z.w[i - 1][p] / scale < thr) {
                j = i;
                break;
            }
        if (j == 0)
            break;
        ch.indices.push_back(j);
        ch.projected_rho.push_back(z.w[j - 1][p] * z.rho[p]);
        scale = z.w[j - 1][p];
        top = j - 1;
    }
    return ch;
}

std::vector<RadiusBand> radius_bands(const QacSpace& z, int p, const RemoteChain& ch, double c)
{
    std::vector<RadiusBand> out;
    double upper = 1.0;
    for (int l = 0; l <= ch.length(); ++l) {
        double lower = l < ch.length() ? z.w[ch.indices[l] - 1][p] : 0.0;
        out.push_back({c * lower * z.rho[p], c * upper * z.rho[p], l < ch.length() ? ch.indices[l] : 0});
        upper = lower;
    }
    return out;
}

bool in_thickened_piece(const QacSpace& z, int q, int j, double eta)
{
    if (j >= 1 && !(z.w[j - 1][q] < 1.0))
        return false;
    for (int i = j + 1; i <= z.depth; ++i)
        if (!(z.w[i - 1][q] > 1.0 - eta))
            return false;
    return true;
}

double remote_thickening(double c)
{
    return 1.0 - weight_threshold * (1.0 - 4.0 * c);
}

int product_vertex(const QacSpace& z, const std::vector<int>& fv)
{
    if (fv.size() != z.factors.size())
        throw domain_error("one factor vertex per factor required");
    int v = 0;
    for (size_t f = 0; f < fv.size(); ++f) {
        if (fv[f] < 0 || fv[f] >= z.factors[f].graph.size())
            throw domain_error("factor vertex out of range");
        v += fv[f] * z.factors[f].stride;
    }
    return v;
}

int nearest_vertex(const WeightedGraph& g, const std::vector<double>& pos)
{
    int best = -1;
    double bd = inf;
    for (int v = 0; v < g.size(); ++v) {
        std::vector<double> q = g.pos[v];
        q.resize(pos.size(), 0.0);
        double d = euclid(q, pos);
        if (d < bd) {
            bd = d;
            best = v;
        }
    }
    return best;
}

SpaceCheck check_space(const QacSpace& z, double C)
{
    SpaceCheck out;
    const int k = z.depth;
    for (int v = 0; v < z.size(); ++v) {
        for (int i = 0; i + 1 < k; ++i)
            if (z.w[i][v] > C * z.w[i + 1][v] * (1.0 + 1e-12))
                out.monotone_chain = false;
        for (int l = 0; l < k; ++l)
            if (z.w[l][v] == 1.0)
                for (int i = l; i < k; ++i)
                    if (z.w[i][v] != 1.0)
                        out.saturation = false;
        int expect = 0;
        for (int j = k; j >= 1; --j)
            if (z.w[j - 1][v] < 1.0) {
                expect = j;
                break;
            }
        if (z.piece[v] != expect)
            out.piece_consistent = false;
        for (int i = 0; i < k; ++i)
            if (!(z.w[i][v] > 0.0 && z.w[i][v] <= 1.0))
                out.saturation = false;
        if (z.rho[v] > z.truncation_radius * (1.0 + 1e-12) + 1e-12)
            out.rho_bounded = false;
    }
    double cap_rho = z.rho[z.basepoint];
    for (int v = 0; v < z.size(); ++v)
        if (z.in_cap[v] && std::abs(z.rho[v] - cap_rho) > 1e-12)
            out.cap_normalised = false;
    out.basepoint_in_cap = z.in_cap[z.basepoint] && z.piece[z.basepoint] == 0;
    return out;
}

}  // namespace qaclab
