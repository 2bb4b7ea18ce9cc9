#ifndef QACLAB_SPACE_HPP
#define QACLAB_SPACE_HPP

#include <string>
#include <vector>

#include "qaclab/graph.hpp"

namespace qaclab {

// How distances on a space are measured.
//   graph    - Dijkstra on the space's own graph
//   product  - l2 combination of exact Dijkstra distances in each factor
//   embedded - Euclidean distance between vertex positions (flat lattices)
enum class DistanceMode { graph, product, embedded };

struct ProductFactor {
    WeightedGraph graph;
    std::vector<double> rho;
    int dim = 0;
    int stride = 1;
};

struct QacSpace {
    WeightedGraph graph;
    int depth = 0;
    int basepoint = 0;
    std::vector<double> rho;
    // w[i][v] is the weight function w_{i+1} at vertex v
    std::vector<std::vector<double>> w;
    std::vector<int> piece;
    // (m_0, ..., m_{k-1}, n)
    std::vector<int> dims;
    std::vector<int> ends;
    std::vector<char> in_cap;
    double truncation_radius = 0.0;
    double c = 0.125;
    double eta = 0.5;
    DistanceMode distance_mode = DistanceMode::graph;
    std::vector<ProductFactor> factors;

    int size() const { return graph.size(); }
    int dim() const { return dims.back(); }
    // fiber dimension m_j, 0 <= j < depth
    int fiber_dim(int j) const { return dims[j]; }
    double weight(int i, int v) const { return w[i][v]; }
    // factor-local index of flattened product vertex v
    int factor_index(int f, int v) const;
    BallContext ball_context() const { return {basepoint, &rho, c}; }
};

struct WeightParams {
    double a = 0.0;
    std::vector<double> b;
    std::vector<double> nu;

    WeightParams() = default;
    WeightParams(double a, std::vector<double> b, const std::vector<int>& dims);

    int depth() const { return static_cast<int>(b.size()); }
    // |b(l)| = b_1 + ... + b_l, with |b(0)| = 0
    double b_sum(int l) const;
    // |nu(j)|, equal to m_{j-1}
    double nu_sum(int j) const;
    // b(l) embedded in R^k: first l entries kept, the rest zero
    std::vector<double> b_head(int l) const;
    // b - b(l): first l entries zeroed
    std::vector<double> b_tail(int l) const;
};

// Multi-index with only the w_1 entry lowered by s.
std::vector<double> lowered(const std::vector<double>& b, double s);

// rho^a * prod_i w_i^{b_i} at v.
double weight_value(const QacSpace& z, int v, double a, const std::vector<double>& b);
std::vector<double> weight_field(const QacSpace& z, double a, const std::vector<double>& b);
// Doob weight rho^{a/2} w^{b/2}.
std::vector<double> doob_weight(const QacSpace& z, const WeightParams& p);

// Distances from source in the space's metric; entries beyond cutoff are inf.
std::vector<double> space_distances(const QacSpace& z, int source, double cutoff = inf);
Ball space_ball(const QacSpace& z, int center, double r);
// Smallest distance from v to a boundary-flagged vertex.
double distance_to_boundary(const QacSpace& z, int v);
std::vector<double> boundary_distances(const QacSpace& z);

struct RemoteChain {
    std::vector<int> indices;           // j_1 > ... > j_s (1-based weight indices)
    std::vector<double> projected_rho;  // rho_{j_l - 1}(z_{j_l - 1}) = w_{j_l} rho
    int length() const { return static_cast<int>(indices.size()); }
};

RemoteChain remote_chain(const QacSpace& z, int p, double c);

// Radius band l in 1..s+1 of the chain: [c w_{j_l} rho, c w_{j_{l-1}} rho]
// with w_{j_0} = 1 and w_{j_{s+1}} = 0.
struct RadiusBand {
    double lo = 0.0;
    double hi = 0.0;
    int index = 0;  // j_l, or 0 for the innermost band
};
std::vector<RadiusBand> radius_bands(const QacSpace& z, int p, const RemoteChain& ch, double c);

// Thickened piece Z_(j)(eta): w_j < 1 and w_i > 1 - eta for all i > j.
bool in_thickened_piece(const QacSpace& z, int q, int j, double eta);
// Thickening that contains every maximal remote ball for remote parameter c.
// The weights here are a factor 1/weight_threshold away from smooth ones,
// which widens the usual 4c margin accordingly.
double remote_thickening(double c);

// ---------------------------------------------------------------- builders

struct BaseDescriptor {
    std::string type = "sphere_graph";  // sphere_graph | torus_graph | custom
    int resolution = 16;
    int dimension = 1;
    std::string custom_json;
};

WeightedGraph build_compact_base(const BaseDescriptor& d);

struct ConeOptions {
    double h = 0.0;             // relative shell gap; 0 picks the mean angular spacing
    double inner_radius = 1.0;  // radius of the innermost shell
};

QacSpace build_ac_space(const WeightedGraph& cross_section, int cross_dim, double R_max,
                        const ConeOptions& opt = {});

// Z^dim points with |x| <= R, unit spacing scaled by `spacing`.
QacSpace build_lattice_space(int dim, double R, double spacing = 1.0);

// Real line with a finely resolved window [fine_lo, fine_hi]; spacing grows by
// `growth` per step outside it, capped by h * max(1, |x|).
struct LineOptions {
    double fine_lo = 4.0;
    double fine_hi = 24.0;
    double fine_spacing = 0.1;
    double growth = 1.2;
    double h = 0.25;
};
QacSpace build_line_space(double R_max, const LineOptions& opt = {});

// Depth-1 product with the direct two-factor weight formula.
QacSpace build_product(const QacSpace& z1, const QacSpace& z2);

// Threshold below which a cumulative fiber radius ratio counts as a weight.
constexpr double weight_threshold = 0.5;

// Generic iterated product of depth-0 factors, weights by the fiber recursion.
QacSpace build_qac(const std::vector<QacSpace>& factors);

// Two cones over the same cross-section sharing their apex.
QacSpace build_two_ended(const WeightedGraph& cross_section, int cross_dim, double R_max,
                         const ConeOptions& opt = {});

// Recipe JSON -> space. Supported types: ac, lattice, line, product, two_ended.
QacSpace build_from_recipe(const std::string& recipe_json);

// Flattened product vertex from factor-local vertices.
int product_vertex(const QacSpace& z, const std::vector<int>& factor_vertices);
// Vertex whose position is closest (Euclidean) to pos.
int nearest_vertex(const WeightedGraph& g, const std::vector<double>& pos);

// Serialised graph plus {rho, w, piece, dims, basepoint}.
std::string space_to_json(const QacSpace& z);

struct SpaceCheck {
    bool monotone_chain = true;
    bool saturation = true;
    bool piece_consistent = true;
    bool cap_normalised = true;
    bool rho_bounded = true;
    bool basepoint_in_cap = true;
    bool ok() const
    {
        return monotone_chain && saturation && piece_consistent && cap_normalised &&
               rho_bounded && basepoint_in_cap;
    }
};
// Independent re-check of the QacSpace invariants; chain_constant is C in w_i <= C w_{i+1}.
SpaceCheck check_space(const QacSpace& z, double chain_constant = 1.0);

}  // namespace qaclab

#endif
