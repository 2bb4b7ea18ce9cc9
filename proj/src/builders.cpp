#include "qaclab/space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

namespace qaclab {

using nlohmann::json;

namespace {

constexpr double pi = std::numbers::pi;

double dot3(const std::array<double, 3>& a, const std::array<double, 3>& b)
{
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

std::array<double, 3> cross3(const std::array<double, 3>& a, const std::array<double, 3>& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Area of the spherical triangle with unit-vector corners.
double spherical_triangle(const std::array<double, 3>& a, const std::array<double, 3>& b,
                          const std::array<double, 3>& c)
{
    double num = std::abs(dot3(a, cross3(b, c)));
    double den = 1.0 + dot3(a, b) + dot3(b, c) + dot3(c, a);
    return 2.0 * std::atan2(num, den);
}

WeightedGraph cycle_graph(int N)
{
    WeightedGraph g;
    const double d = 2.0 * pi / N;
    for (int i = 0; i < N; ++i)
        g.add_vertex({std::cos(i * d), std::sin(i * d)}, d);
    for (int i = 0; i < N; ++i)
        g.add_edge(i, (i + 1) % N, d);
    g.finalize();
    return g;
}

// Equiangular cube-sphere: each cube face carries an N x N grid, points are
// projected radially; cell areas are split evenly among their corners.
WeightedGraph cube_sphere(int N)
{
    const int M = N + 1;
    auto on_surface = [&](int i, int j, int k) {
        return i == 0 || i == N || j == 0 || j == N || k == 0 || k == N;
    };
    std::vector<int> id(M * M * M, -1);
    auto key = [&](int i, int j, int k) { return (i * M + j) * M + k; };
    std::vector<std::array<double, 3>> pts;
    auto coord = [&](int i) { return std::tan(pi / 4.0 * (2.0 * i / N - 1.0)); };
    for (int i = 0; i <= N; ++i)
        for (int j = 0; j <= N; ++j)
            for (int k = 0; k <= N; ++k) {
                if (!on_surface(i, j, k))
                    continue;
                std::array<double, 3> p{coord(i), coord(j), coord(k)};
                double r = std::sqrt(dot3(p, p));
                for (double& x : p)
                    x /= r;
                id[key(i, j, k)] = static_cast<int>(pts.size());
                pts.push_back(p);
            }
    std::vector<double> area(pts.size(), 0.0);
    // cells: fix one axis at 0 or N, iterate the other two
    for (int axis = 0; axis < 3; ++axis)
        for (int side : {0, N})
            for (int u = 0; u < N; ++u)
                for (int v = 0; v < N; ++v) {
                    std::array<int, 4> c;
                    int q = 0;
                    for (auto [du, dv] : {std::pair{0, 0}, {1, 0}, {1, 1}, {0, 1}}) {
                        std::array<int, 3> ijk;
                        ijk[axis] = side;
                        ijk[(axis + 1) % 3] = u + du;
                        ijk[(axis + 2) % 3] = v + dv;
                        c[q++] = id[key(ijk[0], ijk[1], ijk[2])];
                    }
                    double A = spherical_triangle(pts[c[0]], pts[c[1]], pts[c[2]]) +
                               spherical_triangle(pts[c[0]], pts[c[2]], pts[c[3]]);
                    for (int x : c)
                        area[x] += A / 4.0;
                }
    WeightedGraph g;
    for (size_t v = 0; v < pts.size(); ++v)
        g.add_vertex({pts[v][0], pts[v][1], pts[v][2]}, area[v]);
    for (int i = 0; i <= N; ++i)
        for (int j = 0; j <= N; ++j)
            for (int k = 0; k <= N; ++k) {
                int a = id[key(i, j, k)];
                if (a < 0)
                    continue;
                std::array<int, 3> p{i, j, k};
                for (int ax = 0; ax < 3; ++ax) {
                    std::array<int, 3> q = p;
                    if (++q[ax] > N)
                        continue;
                    int b = id[key(q[0], q[1], q[2])];
                    if (b < 0)
                        continue;
                    bool same_face = false;
                    for (int o = 0; o < 3; ++o)
                        if (o != ax && (p[o] == 0 || p[o] == N))
                            same_face = true;
                    if (!same_face)
                        continue;
                    double cosang = std::clamp(dot3(pts[a], pts[b]), -1.0, 1.0);
                    g.add_edge(a, b, std::acos(cosang));
                }
            }
    g.finalize();
    return g;
}

WeightedGraph torus_graph(int N, int dim)
{
    if (dim < 1)
        throw domain_error("torus dimension must be at least 1");
    int total = 1;
    for (int i = 0; i < dim; ++i)
        total *= N;
    const double d = 2.0 * pi / N;
    WeightedGraph g;
    for (int v = 0; v < total; ++v) {
        std::vector<double> p(dim);
        int r = v;
        for (int i = 0; i < dim; ++i) {
            p[i] = (r % N) * d;
            r /= N;
        }
        g.add_vertex(p, std::pow(d, dim));
    }
    for (int v = 0; v < total; ++v) {
        int stride = 1;
        for (int i = 0; i < dim; ++i) {
            int coord = (v / stride) % N;
            int u = v - coord * stride + ((coord + 1) % N) * stride;
            if (N > 2 || coord == 0)
                g.add_edge(v, u, d);
            stride *= N;
        }
    }
    g.finalize();
    return g;
}

double mean_edge_length(const WeightedGraph& g)
{
    if (g.edges.empty())
        return 0.0;
    double s = 0.0;
    for (const auto& e : g.edges)
        s += e.length;
    return s / static_cast<double>(g.edges.size());
}

void depth0_metadata(QacSpace& z, int n, double R_max)
{
    z.depth = 0;
    z.dims = {n};
    z.w.clear();
    z.piece.assign(z.size(), 0);
    z.ends.assign(z.size(), 0);
    z.in_cap.resize(z.size());
    for (int v = 0; v < z.size(); ++v)
        z.in_cap[v] = z.rho[v] == 1.0;
    z.truncation_radius = R_max;
}

// Graph, measure, rho and cap of the flattened product; weights left empty.
QacSpace assemble_product(const std::vector<const QacSpace*>& fs)
{
    for (const auto* f : fs) {
        if (f->depth != 0)
            throw domain_error("product factors must have depth 0");
        if (std::abs(f->truncation_radius - fs[0]->truncation_radius) > 1e-9 * fs[0]->truncation_radius)
            throw domain_error("product factors must share the truncation radius");
    }
    QacSpace z;
    const int K = static_cast<int>(fs.size());
    long total = 1;
    for (const auto* f : fs)
        total *= f->size();
    if (total > 20'000'000)
        throw domain_error("product too large");
    const int N = static_cast<int>(total);
    z.factors.resize(K);
    int stride = 1;
    for (int f = K - 1; f >= 0; --f) {
        z.factors[f].graph = fs[f]->graph;
        z.factors[f].rho = fs[f]->rho;
        z.factors[f].dim = fs[f]->dims.back();
        z.factors[f].stride = stride;
        stride *= fs[f]->size();
    }
    auto& g = z.graph;
    g.pos.resize(N);
    g.measure.resize(N);
    g.boundary.resize(N);
    z.rho.resize(N);
    z.in_cap.resize(N);
    for (int v = 0; v < N; ++v) {
        double m = 1.0, r2 = 0.0;
        bool bnd = false, cap = true;
        std::vector<double> p;
        for (int f = 0; f < K; ++f) {
            int i = (v / z.factors[f].stride) % fs[f]->size();
            const auto& fg = fs[f]->graph;
            m *= fg.measure[i];
            r2 += fs[f]->rho[i] * fs[f]->rho[i];
            bnd = bnd || fg.boundary[i];
            cap = cap && fs[f]->in_cap[i];
            p.insert(p.end(), fg.pos[i].begin(), fg.pos[i].end());
        }
        g.pos[v] = std::move(p);
        g.measure[v] = m;
        g.boundary[v] = bnd;
        z.rho[v] = std::sqrt(r2);
        z.in_cap[v] = cap;
    }
    // factor edge (a,b) times every configuration of the other factors
    for (int f = 0; f < K; ++f) {
        const auto& fg = fs[f]->graph;
        const int sf = z.factors[f].stride;
        const int nf = fs[f]->size();
        for (int v = 0; v < N; ++v) {
            if ((v / sf) % nf != 0)
                continue;
            for (const auto& e : fg.edges) {
                int a = v + e.u * sf;
                int b = v + e.v * sf;
                double other = g.measure[a] / fg.measure[e.u];
                int k = g.add_edge(a, b, e.length, f);
                g.edges[k].conductance = e.conductance * other;
            }
        }
    }
    g.finalize();
    std::vector<int> bp(K);
    for (int f = 0; f < K; ++f)
        bp[f] = fs[f]->basepoint;
    int base = 0;
    for (int f = 0; f < K; ++f)
        base += bp[f] * z.factors[f].stride;
    z.basepoint = base;
    z.ends.assign(N, 0);
    z.truncation_radius = fs[0]->truncation_radius * std::sqrt(static_cast<double>(K));
    z.distance_mode = DistanceMode::product;
    z.c = fs[0]->c;
    z.eta = fs[0]->eta;
    return z;
}

void assign_pieces(QacSpace& z)
{
    z.piece.assign(z.size(), 0);
    for (int v = 0; v < z.size(); ++v)
        for (int j = z.depth; j >= 1; --j)
            if (z.w[j - 1][v] < 1.0) {
                z.piece[v] = j;
                break;
            }
}

// Weights of a fiber whose factor radii are r[0] <= ... <= r[K-1].
std::vector<double> fiber_weights(const std::vector<double>& r, int K)
{
    std::vector<double> w(K - 1, 1.0);
    std::vector<double> P(K + 1, 0.0);
    for (int i = 0; i < K; ++i)
        P[i + 1] = std::sqrt(P[i] * P[i] + r[i] * r[i]);
    int j = 0;
    for (int i = K - 1; i >= 1; --i)
        if (P[i] / P[K] < weight_threshold) {
            j = i;
            break;
        }
    if (j == 0)
        return w;
    w[j - 1] = P[j] / P[K];
    std::vector<double> sub = fiber_weights(r, j);
    for (int i = 1; i < j; ++i)
        w[i - 1] = w[j - 1] * sub[i - 1];
    return w;
}

WeightedGraph base_from_json(const json& j, int& cross_dim)
{
    BaseDescriptor d;
    d.type = j.value("type", "sphere_graph");
    d.resolution = j.value("resolution", 16);
    d.dimension = j.value("dimension", 1);
    if (d.type == "custom")
        d.custom_json = j.at("graph").dump();
    cross_dim = d.dimension;
    return build_compact_base(d);
}

ConeOptions cone_from_json(const json& j)
{
    ConeOptions o;
    o.h = j.value("h", 0.0);
    o.inner_radius = j.value("inner_radius", 1.0);
    return o;
}

QacSpace recipe(const json& j, double R_default)
{
    const std::string type = j.value("type", "ac");
    const double R = j.value("R_max", R_default);
    QacSpace z;
    if (type == "ac") {
        int cd = 0;
        WeightedGraph F = base_from_json(j.at("cross_section"), cd);
        z = build_ac_space(F, cd, R, cone_from_json(j));
    } else if (type == "lattice") {
        z = build_lattice_space(j.value("dim", 3), j.value("R", R), j.value("spacing", 1.0));
    } else if (type == "line") {
        LineOptions o;
        o.fine_lo = j.value("fine_lo", o.fine_lo);
        o.fine_hi = j.value("fine_hi", o.fine_hi);
        o.fine_spacing = j.value("fine_spacing", o.fine_spacing);
        o.growth = j.value("growth", o.growth);
        o.h = j.value("h", o.h);
        z = build_line_space(R, o);
    } else if (type == "product") {
        const json& fj = j.contains("factors") ? j.at("factors") : j.at("fibers");
        std::vector<QacSpace> fs;
        for (const auto& f : fj)
            fs.push_back(recipe(f, R));
        if (fs.size() == 2 && j.value("weights", "direct") == "direct")
            z = build_product(fs[0], fs[1]);
        else
            z = build_qac(fs);
    } else if (type == "two_ended") {
        int cd = 0;
        WeightedGraph F = base_from_json(j.at("cross_section"), cd);
        z = build_two_ended(F, cd, R, cone_from_json(j));
    } else {
        throw domain_error("unsupported recipe type: " + type);
    }
    if (j.contains("depth") && j.at("depth").get<int>() != z.depth)
        throw domain_error("recipe depth does not match the assembled space");
    z.c = j.value("c", z.c);
    z.eta = j.value("eta", z.eta);
    return z;
}

}  // namespace

WeightedGraph build_compact_base(const BaseDescriptor& d)
{
    if (d.type == "custom")
        return graph_from_json(d.custom_json);
    if (d.resolution < 3)
        throw domain_error("base resolution must be at least 3");
    if (d.type == "sphere_graph") {
        if (d.dimension == 0) {
            WeightedGraph g;
            g.add_vertex({-1.0}, 1.0);
            g.add_vertex({1.0}, 1.0);
            g.finalize();
            return g;
        }
        if (d.dimension == 1)
            return cycle_graph(d.resolution);
        if (d.dimension == 2)
            return cube_sphere(d.resolution);
        throw domain_error("sphere_graph supports dimensions 0, 1 and 2");
    }
    if (d.type == "torus_graph")
        return torus_graph(d.resolution, d.dimension);
    throw domain_error("unsupported base descriptor type: " + d.type);
}

QacSpace build_ac_space(const WeightedGraph& F, int cross_dim, double R_max, const ConeOptions& opt)
{
    if (R_max < 4.0)
        throw domain_error("R_max below 4 is too shallow to exhibit asymptotics");
    if (!(opt.inner_radius > 0.0 && opt.inner_radius <= 1.0))
        throw domain_error("inner radius must lie in (0,1]");
    const int n = cross_dim + 1;
    const double dtheta = mean_edge_length(F);
    const double h = opt.h > 0.0 ? opt.h : (dtheta > 0.0 ? dtheta : 0.25);
    const double r0 = opt.inner_radius;
    const int S = static_cast<int>(std::ceil(std::log(R_max / r0) / std::log1p(h)));
    const double q = std::pow(R_max / r0, 1.0 / S);
    std::vector<double> r(S + 1);
    for (int i = 0; i <= S; ++i)
        r[i] = r0 * std::pow(q, i);
    r[S] = R_max;
    const int nf = F.size();

    QacSpace z;
    auto& g = z.graph;
    const size_t pd = F.pos.empty() ? 1 : F.pos[0].size();
    g.add_vertex(std::vector<double>(pd, 0.0), F.total_measure() * std::pow(r0 / 2.0, n) / n);
    z.rho.push_back(1.0);
    for (int i = 0; i <= S; ++i) {
        double lo = i == 0 ? r0 / 2.0 : 0.5 * (r[i] + r[i - 1]);
        double hi = i == S ? r[S] : 0.5 * (r[i] + r[i + 1]);
        double shell = std::pow(r[i], n - 1) * (hi - lo);
        for (int f = 0; f < nf; ++f) {
            std::vector<double> p = F.pos[f];
            for (double& x : p)
                x *= r[i];
            g.add_vertex(p, shell * F.measure[f], i == S);
            z.rho.push_back(std::max(1.0, r[i]));
        }
    }
    auto vid = [&](int i, int f) { return 1 + i * nf + f; };
    const double ref = dtheta > 0.0 ? std::min(dtheta, q - 1.0) : q - 1.0;
    const double apex_len = std::min(r0, 3.5 * r0 * ref);
    for (int i = 0; i <= S; ++i) {
        for (const auto& e : F.edges) {
            g.add_edge(vid(i, e.u), vid(i, e.v), r[i] * e.length);
        }
        for (int f = 0; f < nf; ++f)
            if (i < S)
                g.add_edge(vid(i, f), vid(i + 1, f), r[i + 1] - r[i]);
    }
    for (int f = 0; f < nf; ++f)
        g.add_edge(0, vid(0, f), apex_len);
    g.finalize();
    z.basepoint = 0;
    z.distance_mode = DistanceMode::graph;
    depth0_metadata(z, n, R_max);
    return z;
}

QacSpace build_lattice_space(int dim, double R, double spacing)
{
    if (dim < 1 || dim > 4)
        throw domain_error("lattice dimension must be 1..4");
    if (!(R > 0.0 && spacing > 0.0))
        throw domain_error("lattice radius and spacing must be positive");
    const int M = static_cast<int>(std::floor(R / spacing));
    const int W = 2 * M + 1;
    long cells = 1;
    for (int i = 0; i < dim; ++i)
        cells *= W;
    std::vector<int> id(cells, -1);
    QacSpace z;
    auto& g = z.graph;
    std::vector<int> c(dim);
    for (long key = 0; key < cells; ++key) {
        long r = key;
        double n2 = 0.0;
        std::vector<double> p(dim);
        for (int i = 0; i < dim; ++i) {
            c[i] = static_cast<int>(r % W) - M;
            r /= W;
            p[i] = c[i] * spacing;
            n2 += p[i] * p[i];
        }
        if (std::sqrt(n2) > R + 1e-12)
            continue;
        id[key] = g.add_vertex(p, std::pow(spacing, dim));
        z.rho.push_back(std::max(1.0, std::sqrt(n2)));
    }
    for (long key = 0; key < cells; ++key) {
        int a = id[key];
        if (a < 0)
            continue;
        long stride = 1;
        int nb = 0;
        for (int i = 0; i < dim; ++i) {
            int ci = static_cast<int>((key / stride) % W);
            if (ci + 1 < W && id[key + stride] >= 0) {
                g.add_edge(a, id[key + stride], spacing);
                ++nb;
            }
            if (ci > 0 && id[key - stride] >= 0)
                ++nb;
            stride *= W;
        }
        g.boundary[a] = nb < 2 * dim;
    }
    g.finalize();
    long origin = 0, stride = 1;
    for (int i = 0; i < dim; ++i) {
        origin += M * stride;
        stride *= W;
    }
    z.basepoint = id[origin];
    z.distance_mode = DistanceMode::embedded;
    depth0_metadata(z, dim, R);
    for (int v = 0; v < z.size(); ++v) {
        double n2 = 0.0;
        for (double x : g.pos[v])
            n2 += x * x;
        z.in_cap[v] = n2 <= 1.0;
    }
    return z;
}

QacSpace build_line_space(double R_max, const LineOptions& o)
{
    if (R_max < 4.0)
        throw domain_error("R_max below 4 is too shallow to exhibit asymptotics");
    if (!(o.fine_lo < o.fine_hi && o.fine_spacing > 0.0 && o.growth >= 1.0 && o.fine_hi < R_max &&
          o.fine_lo > -R_max))
        throw domain_error("invalid line options");
    std::vector<double> xs;
    const int nfine = static_cast<int>(std::round((o.fine_hi - o.fine_lo) / o.fine_spacing));
    for (int i = 0; i <= nfine; ++i)
        xs.push_back(o.fine_lo + (o.fine_hi - o.fine_lo) * i / nfine);
    auto extend = [&](double x, double sign) {
        std::vector<double> out;
        double s = (o.fine_hi - o.fine_lo) / nfine;
        while (true) {
            s = std::min(s * o.growth, std::max(o.fine_spacing, o.h * std::max(1.0, std::abs(x))));
            double nx = x + sign * s;
            if (sign * nx >= R_max - 0.5 * s) {
                out.push_back(sign * R_max);
                break;
            }
            out.push_back(nx);
            x = nx;
        }
        return out;
    };
    auto right = extend(o.fine_hi, 1.0);
    auto left = extend(o.fine_lo, -1.0);
    std::reverse(left.begin(), left.end());
    left.insert(left.end(), xs.begin(), xs.end());
    left.insert(left.end(), right.begin(), right.end());
    xs = std::move(left);

    QacSpace z;
    auto& g = z.graph;
    const int N = static_cast<int>(xs.size());
    for (int i = 0; i < N; ++i) {
        double lo = i > 0 ? 0.5 * (xs[i] - xs[i - 1]) : 0.0;
        double hi = i + 1 < N ? 0.5 * (xs[i + 1] - xs[i]) : 0.0;
        g.add_vertex({xs[i]}, lo + hi, i == 0 || i == N - 1);
        z.rho.push_back(std::max(1.0, std::abs(xs[i])));
    }
    for (int i = 0; i + 1 < N; ++i)
        g.add_edge(i, i + 1, xs[i + 1] - xs[i]);
    g.finalize();
    z.basepoint = nearest_vertex(g, {0.0});
    z.distance_mode = DistanceMode::graph;
    depth0_metadata(z, 1, R_max);
    z.in_cap.assign(N, 0);
    for (int i = 0; i < N; ++i)
        z.in_cap[i] = std::abs(xs[i]) <= 1.0;
    if (z.rho[z.basepoint] != 1.0)
        throw domain_error("line space has no vertex in its cap");
    return z;
}

QacSpace build_product(const QacSpace& z1, const QacSpace& z2)
{
    QacSpace z = assemble_product({&z1, &z2});
    z.depth = 1;
    z.dims = {std::min(z1.dim(), z2.dim()), z1.dim() + z2.dim()};
    z.w.assign(1, std::vector<double>(z.size(), 1.0));
    for (int v = 0; v < z.size(); ++v) {
        double r1 = z1.rho[z.factor_index(0, v)];
        double r2 = z2.rho[z.factor_index(1, v)];
        double ratio = std::min(r1, r2) / z.rho[v];
        if (ratio < weight_threshold)
            z.w[0][v] = ratio;
    }
    assign_pieces(z);
    return z;
}

QacSpace build_qac(const std::vector<QacSpace>& factors)
{
    if (factors.size() < 2)
        throw domain_error("an iterated product needs at least two factors");
    std::vector<const QacSpace*> fs;
    for (const auto& f : factors)
        fs.push_back(&f);
    QacSpace z = assemble_product(fs);
    const int K = static_cast<int>(factors.size());
    z.depth = K - 1;
    std::vector<int> d;
    for (const auto& f : factors)
        d.push_back(f.dim());
    std::sort(d.begin(), d.end());
    z.dims.clear();
    int acc = 0;
    for (int j = 0; j < K; ++j) {
        acc += d[j];
        z.dims.push_back(acc);
    }
    z.w.assign(K - 1, std::vector<double>(z.size(), 1.0));
    std::vector<double> r(K);
    for (int v = 0; v < z.size(); ++v) {
        for (int f = 0; f < K; ++f)
            r[f] = factors[f].rho[z.factor_index(f, v)];
        std::sort(r.begin(), r.end());
        auto wv = fiber_weights(r, K);
        for (int i = 0; i < K - 1; ++i)
            z.w[i][v] = wv[i];
    }
    assign_pieces(z);
    return z;
}

QacSpace build_two_ended(const WeightedGraph& F, int cross_dim, double R_max, const ConeOptions& opt)
{
    QacSpace one = build_ac_space(F, cross_dim, R_max, opt);
    const int N = one.size();
    QacSpace z = one;
    auto& g = z.graph;
    // second copy of every non-apex vertex
    for (int v = 1; v < N; ++v) {
        std::vector<double> p = one.graph.pos[v];
        for (double& x : p)
            x = -x;
        g.add_vertex(p, one.graph.measure[v], one.graph.boundary[v]);
        z.rho.push_back(one.rho[v]);
    }
    auto mirror = [&](int v) { return v == 0 ? 0 : v + N - 1; };
    for (const auto& e : one.graph.edges) {
        int k = g.add_edge(mirror(e.u), mirror(e.v), e.length);
        g.edges[k].conductance = e.conductance;
    }
    g.finalize();
    depth0_metadata(z, one.dim(), R_max);
    for (int v = 1; v < z.size(); ++v)
        z.ends[v] = v < N ? 1 : 2;
    z.basepoint = 0;
    return z;
}

QacSpace build_from_recipe(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw domain_error(std::string("recipe json: ") + e.what());
    }
    try {
        return recipe(j, j.value("R_max", 32.0));
    } catch (const json::exception& e) {
        throw domain_error(std::string("recipe: ") + e.what());
    }
}

std::string space_to_json(const QacSpace& z)
{
    json j = json::parse(graph_to_json(z.graph));
    j["rho"] = z.rho;
    j["w"] = z.w;
    j["piece"] = z.piece;
    j["dims"] = z.dims;
    j["basepoint"] = z.basepoint;
    return j.dump();
}

}  // namespace qaclab
