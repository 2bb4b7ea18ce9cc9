#ifndef QACLAB_GRAPH_HPP
#define QACLAB_GRAPH_HPP

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

namespace qaclab {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

constexpr double inf = std::numeric_limits<double>::infinity();

struct domain_error : std::domain_error {
    using std::domain_error::domain_error;
};

// Raised when a solver or iteration cannot meet its tolerance.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Edge {
    int u = 0;
    int v = 0;
    double length = 1.0;
    double conductance = 0.0;
};

// Vertex/edge carrier for a metric-measure space. Fill the public arrays,
// then call finalize() once; after that the graph is treated as read-only.
class WeightedGraph {
public:
    std::vector<std::vector<double>> pos;
    std::vector<double> measure;
    std::vector<char> boundary;
    std::vector<Edge> edges;
    // optional per-edge tag, used by product graphs for the factor index
    std::vector<int> edge_tag;

    int add_vertex(std::vector<double> p, double m, bool bnd = false);
    int add_edge(int u, int v, double length, int tag = 0);

    // Sets conductances to (m(u)+m(v)) / (2 len^2) where none was given,
    // builds adjacency and validates positivity.
    void finalize();

    int size() const { return static_cast<int>(measure.size()); }
    int degree(int u) const { return adj_offset_[u + 1] - adj_offset_[u]; }

    // incident (neighbour, edge index) pairs of u
    struct Incident {
        const int* nb;
        const int* eid;
        int n;
    };
    Incident incident(int u) const
    {
        int o = adj_offset_[u];
        return {adj_nb_.data() + o, adj_edge_.data() + o, adj_offset_[u + 1] - o};
    }

    double total_measure() const;
    bool finalized() const { return !adj_offset_.empty(); }

private:
    std::vector<int> adj_offset_, adj_nb_, adj_edge_;
};

struct GraphCheck {
    bool connected = true;
    bool positive = true;
    double worst_length_ratio = 1.0;  // max over vertices of max/min incident length
    int components = 1;
};

// Connectivity, positivity and quasi-uniformity. With per_tag set, the
// length ratio is taken among incident edges sharing the same tag.
GraphCheck check_graph(const WeightedGraph& g, bool per_tag = false);

// Dijkstra with edge lengths; entries beyond cutoff (or unreachable) are inf.
std::vector<double> shortest_distances(const WeightedGraph& g, int source, double cutoff = inf);

enum class BallKind { anchored, remote, general };
const char* to_string(BallKind k);

struct Ball {
    int center = 0;
    double radius = 0.0;
    std::vector<int> members;  // sorted vertex ids
    BallKind kind = BallKind::general;
};

// Classification context for ball kinds; rho may be empty (then nothing is remote).
struct BallContext {
    int basepoint = -1;
    const std::vector<double>* rho = nullptr;
    double c = 0.125;
};

Ball ball(const WeightedGraph& g, int center, double r, const BallContext& ctx = {});
Ball ball_from_distances(const std::vector<double>& dist, int center, double r,
                         const BallContext& ctx = {});
BallKind classify_ball(int center, double r, const BallContext& ctx);

// Symmetric stiffness K with f^T K f = sum_edges c (f(u)-f(v))^2.
SpMat stiffness(const WeightedGraph& g);
// The positive Laplacian M^{-1} K for the given vertex measure.
SpMat graph_laplacian(const WeightedGraph& g, const std::vector<double>& measure);
// sum_edges c (f(u)-f(v))^2
double dirichlet_energy(const WeightedGraph& g, const Vec& f);

// Serialisation (deterministic ordering, shortest round-trip doubles).
std::string graph_to_json(const WeightedGraph& g);
WeightedGraph graph_from_json(const std::string& text);

}  // namespace qaclab

#endif
