#include "qaclab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <queue>

namespace qaclab {

int WeightedGraph::add_vertex(std::vector<double> p, double m, bool bnd)
{
    pos.push_back(std::move(p));
    measure.push_back(m);
    boundary.push_back(bnd ? 1 : 0);
    return size() - 1;
}

int WeightedGraph::add_edge(int u, int v, double length, int tag)
{
    edges.push_back({u, v, length, 0.0});
    edge_tag.push_back(tag);
    return static_cast<int>(edges.size()) - 1;
}

void WeightedGraph::finalize()
{
    const int n = size();
    if (edge_tag.size() != edges.size())
        edge_tag.assign(edges.size(), 0);
    if (pos.size() != measure.size() || boundary.size() != measure.size())
        throw domain_error("vertex arrays have inconsistent sizes");
    for (double m : measure)
        if (!(m > 0.0))
            throw domain_error("vertex measure must be strictly positive");
    for (auto& e : edges) {
        if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n || e.u == e.v)
            throw domain_error("edge endpoint out of range or a self-loop");
        if (!(e.length > 0.0))
            throw domain_error("edge length must be strictly positive");
        if (e.conductance == 0.0)
            e.conductance = (measure[e.u] + measure[e.v]) / (2.0 * e.length * e.length);
        if (!(e.conductance > 0.0))
            throw domain_error("edge conductance must be strictly positive");
    }
    adj_offset_.assign(n + 1, 0);
    for (auto& e : edges) {
        ++adj_offset_[e.u + 1];
        ++adj_offset_[e.v + 1];
    }
    std::partial_sum(adj_offset_.begin(), adj_offset_.end(), adj_offset_.begin());
    adj_nb_.assign(adj_offset_[n], 0);
    adj_edge_.assign(adj_offset_[n], 0);
    std::vector<int> fill(adj_offset_.begin(), adj_offset_.end() - 1);
    for (int k = 0; k < static_cast<int>(edges.size()); ++k) {
        const auto& e = edges[k];
        adj_nb_[fill[e.u]] = e.v;
        adj_edge_[fill[e.u]++] = k;
        adj_nb_[fill[e.v]] = e.u;
        adj_edge_[fill[e.v]++] = k;
    }
}

double WeightedGraph::total_measure() const
{
    return std::accumulate(measure.begin(), measure.end(), 0.0);
}

GraphCheck check_graph(const WeightedGraph& g, bool per_tag)
{
    GraphCheck out;
    const int n = g.size();
    for (double m : g.measure)
        out.positive = out.positive && m > 0.0;
    for (const auto& e : g.edges)
        out.positive = out.positive && e.length > 0.0 && e.conductance > 0.0;

    std::vector<int> comp(n, -1);
    int ncomp = 0;
    std::vector<int> stack;
    for (int s = 0; s < n; ++s) {
        if (comp[s] >= 0)
            continue;
        comp[s] = ncomp;
        stack.push_back(s);
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            auto inc = g.incident(u);
            for (int k = 0; k < inc.n; ++k)
                if (comp[inc.nb[k]] < 0) {
                    comp[inc.nb[k]] = ncomp;
                    stack.push_back(inc.nb[k]);
                }
        }
        ++ncomp;
    }
    out.components = ncomp;
    out.connected = ncomp <= 1;

    for (int u = 0; u < n; ++u) {
        auto inc = g.incident(u);
        if (!per_tag) {
            double lo = inf, hi = 0.0;
            for (int k = 0; k < inc.n; ++k) {
                double l = g.edges[inc.eid[k]].length;
                lo = std::min(lo, l);
                hi = std::max(hi, l);
            }
            if (inc.n > 0)
                out.worst_length_ratio = std::max(out.worst_length_ratio, hi / lo);
            continue;
        }
        for (int k = 0; k < inc.n; ++k) {
            int tag = g.edge_tag[inc.eid[k]];
            double lo = inf, hi = 0.0;
            for (int q = 0; q < inc.n; ++q) {
                if (g.edge_tag[inc.eid[q]] != tag)
                    continue;
                double l = g.edges[inc.eid[q]].length;
                lo = std::min(lo, l);
                hi = std::max(hi, l);
            }
            out.worst_length_ratio = std::max(out.worst_length_ratio, hi / lo);
        }
    }
    return out;
}

std::vector<double> shortest_distances(const WeightedGraph& g, int source, double cutoff)
{
    if (source < 0 || source >= g.size())
        throw domain_error("source vertex out of range");
    std::vector<double> dist(g.size(), inf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[source] = 0.0;
    pq.push({0.0, source});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u])
            continue;
        auto inc = g.incident(u);
        for (int k = 0; k < inc.n; ++k) {
            double nd = d + g.edges[inc.eid[k]].length;
            int v = inc.nb[k];
            if (nd < dist[v] && nd <= cutoff) {
                dist[v] = nd;
                pq.push({nd, v});
            }
        }
    }
    return dist;
}

const char* to_string(BallKind k)
{
    switch (k) {
    case BallKind::anchored: return "anchored";
    case BallKind::remote: return "remote";
    default: return "general";
    }
}

BallKind classify_ball(int center, double r, const BallContext& ctx)
{
    if (center == ctx.basepoint)
        return BallKind::anchored;
    if (ctx.rho && r <= ctx.c * (*ctx.rho)[center])
        return BallKind::remote;
    return BallKind::general;
}

Ball ball_from_distances(const std::vector<double>& dist, int center, double r, const BallContext& ctx)
{
    if (r < 0.0)
        throw domain_error("ball radius must be nonnegative");
    Ball b;
    b.center = center;
    b.radius = r;
    for (int v = 0; v < static_cast<int>(dist.size()); ++v)
        if (dist[v] <= r)
            b.members.push_back(v);
    b.kind = classify_ball(center, r, ctx);
    return b;
}

Ball ball(const WeightedGraph& g, int center, double r, const BallContext& ctx)
{
    if (r < 0.0)
        throw domain_error("ball radius must be nonnegative");
    return ball_from_distances(shortest_distances(g, center, r), center, r, ctx);
}

SpMat stiffness(const WeightedGraph& g)
{
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * g.edges.size());
    for (const auto& e : g.edges) {
        t.emplace_back(e.u, e.u, e.conductance);
        t.emplace_back(e.v, e.v, e.conductance);
        t.emplace_back(e.u, e.v, -e.conductance);
        t.emplace_back(e.v, e.u, -e.conductance);
    }
    SpMat K(g.size(), g.size());
    K.setFromTriplets(t.begin(), t.end());
    return K;
}

SpMat graph_laplacian(const WeightedGraph& g, const std::vector<double>& measure)
{
    if (static_cast<int>(measure.size()) != g.size())
        throw domain_error("measure has the wrong length");
    for (double m : measure)
        if (!(m > 0.0))
            throw domain_error("measure must be strictly positive");
    SpMat L = stiffness(g);
    Vec inv(g.size());
    for (int i = 0; i < g.size(); ++i)
        inv[i] = 1.0 / measure[i];
    return inv.asDiagonal() * L;
}

double dirichlet_energy(const WeightedGraph& g, const Vec& f)
{
    double s = 0.0;
    for (const auto& e : g.edges) {
        double d = f[e.u] - f[e.v];
        s += e.conductance * d * d;
    }
    return s;
}

}  // namespace qaclab
