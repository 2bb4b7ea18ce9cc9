#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <queue>
#include <random>

#include "qaclab/graph.hpp"

using namespace qaclab;
using Catch::Approx;

namespace {

WeightedGraph path(int edges)
{
    WeightedGraph g;
    for (int i = 0; i <= edges; ++i)
        g.add_vertex({double(i)}, 1.0);
    for (int i = 0; i < edges; ++i)
        g.add_edge(i, i + 1, 1.0);
    g.finalize();
    return g;
}

WeightedGraph grid(int n)
{
    WeightedGraph g;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            g.add_vertex({double(i), double(j)}, 1.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i + 1 < n)
                g.add_edge(i * n + j, (i + 1) * n + j, 1.0);
            if (j + 1 < n)
                g.add_edge(i * n + j, i * n + j + 1, 1.0);
        }
    g.finalize();
    return g;
}

WeightedGraph random_graph(int n, std::mt19937& rng)
{
    std::uniform_real_distribution<double> U(0.5, 2.0);
    WeightedGraph g;
    for (int i = 0; i < n; ++i)
        g.add_vertex({double(i)}, U(rng));
    for (int i = 1; i < n; ++i)
        g.add_edge(i, std::uniform_int_distribution<int>(0, i - 1)(rng), U(rng));
    for (int k = 0; k < n; ++k) {
        int u = std::uniform_int_distribution<int>(0, n - 1)(rng);
        int v = std::uniform_int_distribution<int>(0, n - 1)(rng);
        if (u != v)
            g.add_edge(u, v, U(rng));
    }
    g.finalize();
    return g;
}

// plain breadth-first search, unit edge lengths
std::vector<int> bfs(const WeightedGraph& g, int s)
{
    std::vector<int> d(g.size(), -1);
    std::queue<int> q;
    d[s] = 0;
    q.push(s);
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (const auto& e : g.edges) {
            int v = e.u == u ? e.v : (e.v == u ? e.u : -1);
            if (v >= 0 && d[v] < 0) {
                d[v] = d[u] + 1;
                q.push(v);
            }
        }
    }
    return d;
}

}  // namespace

TEST_CASE("path distances from an end")
{
    auto d = shortest_distances(path(3), 0);
    REQUIRE(d == std::vector<double>{0, 1, 2, 3});
}

TEST_CASE("distances are symmetric")
{
    std::mt19937 rng(7);
    auto g = random_graph(60, rng);
    std::uniform_int_distribution<int> V(0, 59);
    for (int k = 0; k < 100; ++k) {
        int u = V(rng), v = V(rng);
        CHECK(shortest_distances(g, u)[v] == Approx(shortest_distances(g, v)[u]).epsilon(1e-14));
    }
}

TEST_CASE("lattice distance matches breadth-first search")
{
    auto g = grid(50);
    auto d = shortest_distances(g, 0);
    auto ref = bfs(g, 0);
    CHECK(d[30 * 50 + 40] == 70.0);
    for (int v = 0; v < g.size(); v += 37)
        CHECK(d[v] == ref[v]);
}

TEST_CASE("distance map is 1-Lipschitz")
{
    std::mt19937 rng(11);
    auto g = random_graph(80, rng);
    std::uniform_int_distribution<int> V(0, 79);
    for (int k = 0; k < 30; ++k) {
        int u = V(rng), v = V(rng);
        auto du = shortest_distances(g, u);
        auto dv = shortest_distances(g, v);
        for (int w = 0; w < g.size(); ++w)
            CHECK(std::abs(du[w] - dv[w]) <= du[v] + 1e-12);
    }
}

TEST_CASE("unreachable vertices are infinitely far")
{
    WeightedGraph g;
    g.add_vertex({0.0}, 1.0);
    g.add_vertex({1.0}, 1.0);
    g.add_vertex({2.0}, 1.0);
    g.add_edge(0, 1, 1.0);
    g.finalize();
    CHECK(std::isinf(shortest_distances(g, 0)[2]));
    CHECK_FALSE(check_graph(g).connected);
}

TEST_CASE("balls")
{
    auto g = grid(12);
    SECTION("zero radius")
    {
        CHECK(ball(g, 5, 0.0).members == std::vector<int>{5});
    }
    SECTION("full graph")
    {
        CHECK(static_cast<int>(ball(g, 5, 100.0).members.size()) == g.size());
    }
    SECTION("nested and monotone")
    {
        std::mt19937 rng(3);
        std::uniform_real_distribution<double> R(0.0, 15.0);
        for (int k = 0; k < 20; ++k) {
            int c = std::uniform_int_distribution<int>(0, g.size() - 1)(rng);
            double r1 = R(rng), r2 = R(rng);
            if (r1 > r2)
                std::swap(r1, r2);
            auto b1 = ball(g, c, r1).members;
            auto b2 = ball(g, c, r2).members;
            CHECK(std::includes(b2.begin(), b2.end(), b1.begin(), b1.end()));
        }
    }
    SECTION("negative radius")
    {
        CHECK_THROWS_AS(ball(g, 0, -1.0), domain_error);
    }
    SECTION("kinds")
    {
        std::vector<double> rho(g.size(), 10.0);
        BallContext ctx{0, &rho, 0.125};
        CHECK(ball(g, 0, 3.0, ctx).kind == BallKind::anchored);
        CHECK(ball(g, 7, 1.0, ctx).kind == BallKind::remote);
        CHECK(ball(g, 7, 2.0, ctx).kind == BallKind::general);
    }
}

TEST_CASE("conductance convention")
{
    WeightedGraph g;
    g.add_vertex({0.0}, 2.0);
    g.add_vertex({1.0}, 4.0);
    g.add_edge(0, 1, 0.5);
    g.finalize();
    CHECK(g.edges[0].conductance == Approx(12.0));
}

TEST_CASE("invalid data is rejected")
{
    WeightedGraph g;
    g.add_vertex({0.0}, 1.0);
    g.add_vertex({1.0}, 0.0);
    CHECK_THROWS_AS(g.finalize(), domain_error);
    WeightedGraph h;
    h.add_vertex({0.0}, 1.0);
    h.add_vertex({1.0}, 1.0);
    h.add_edge(0, 1, -1.0);
    CHECK_THROWS_AS(h.finalize(), domain_error);
    auto p = path(2);
    CHECK_THROWS_AS(graph_laplacian(p, {1.0, 0.0, 1.0}), domain_error);
}

TEST_CASE("laplacian basics")
{
    auto g = path(6);
    auto L = graph_laplacian(g, g.measure);
    Vec one = Vec::Ones(g.size());
    CHECK((L * one).norm() < 1e-14);
    Vec f = Vec::Random(g.size());
    Vec Lf = L * f;
    for (int u = 1; u < 6; ++u) {
        // unit measure, length 1: conductance 1
        CHECK(Lf[u] == Approx(2 * f[u] - f[u - 1] - f[u + 1]));
    }
}

TEST_CASE("cycle spectral gap")
{
    const int n = 8;
    WeightedGraph g;
    for (int i = 0; i < n; ++i)
        g.add_vertex({double(i)}, 1.0);
    for (int i = 0; i < n; ++i)
        g.add_edge(i, (i + 1) % n, 1.0);
    g.finalize();
    Eigen::MatrixXd L = Eigen::MatrixXd(graph_laplacian(g, g.measure));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    CHECK(es.eigenvalues()[0] == Approx(0.0).margin(1e-12));
    CHECK(es.eigenvalues()[1] == Approx(2 - 2 * std::cos(2 * std::numbers::pi / n)).epsilon(1e-12));
}

TEST_CASE("dirichlet form identity")
{
    std::mt19937 rng(5);
    auto g = random_graph(70, rng);
    auto L = graph_laplacian(g, g.measure);
    Vec m = Eigen::Map<const Vec>(g.measure.data(), g.size());
    for (int k = 0; k < 5; ++k) {
        Vec f = Vec::Random(g.size());
        double lhs = f.dot(m.cwiseProduct(L * f));
        double rhs = dirichlet_energy(g, f);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * rhs);
    }
    // L self-adjoint in the measure inner product
    Vec f = Vec::Random(g.size()), h = Vec::Random(g.size());
    CHECK(f.dot(m.cwiseProduct(L * h)) == Approx(h.dot(m.cwiseProduct(L * f))).epsilon(1e-12));
}

TEST_CASE("ball volume is monotone in the radius")
{
    auto g = grid(15);
    for (int c : {0, 17, 112}) {
        auto d = shortest_distances(g, c);
        double prev = 0.0;
        for (double r = 0.0; r < 30.0; r += 0.5) {
            double vol = 0.0;
            for (int v : ball_from_distances(d, c, r).members)
                vol += g.measure[v];
            CHECK(vol >= prev);
            prev = vol;
        }
    }
}

TEST_CASE("json round trip")
{
    std::mt19937 rng(9);
    auto g = random_graph(20, rng);
    g.boundary[3] = 1;
    auto h = graph_from_json(graph_to_json(g));
    REQUIRE(h.size() == g.size());
    REQUIRE(h.edges.size() == g.edges.size());
    for (int v = 0; v < g.size(); ++v) {
        CHECK(h.measure[v] == g.measure[v]);
        CHECK(h.boundary[v] == g.boundary[v]);
    }
    for (size_t k = 0; k < g.edges.size(); ++k) {
        CHECK(h.edges[k].length == g.edges[k].length);
        CHECK(h.edges[k].conductance == g.edges[k].conductance);
    }
    CHECK_THROWS_AS(graph_from_json("{not json"), domain_error);
}

TEST_CASE("quasi-uniformity check")
{
    WeightedGraph g;
    for (int i = 0; i < 3; ++i)
        g.add_vertex({double(i)}, 1.0);
    g.add_edge(0, 1, 1.0, 0);
    g.add_edge(1, 2, 8.0, 1);
    g.finalize();
    CHECK(check_graph(g).worst_length_ratio == Approx(8.0));
    CHECK(check_graph(g, true).worst_length_ratio == Approx(1.0));
}
