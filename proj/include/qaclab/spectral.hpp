#ifndef QACLAB_SPECTRAL_HPP
#define QACLAB_SPECTRAL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qaclab/report.hpp"
#include "qaclab/space.hpp"

namespace qaclab {

// A hypothesis of the estimate being checked does not hold for the input.
struct precondition_error : domain_error {
    using domain_error::domain_error;
};

enum class OperatorKind { plain, mu, schrodinger, bundle };
const char* to_string(OperatorKind k);

// Discrete connection on a rank-r real vector bundle. transport[e] is the
// orthogonal map U_uv taking the fiber at v = edges[e].v to the fiber at
// u = edges[e].u; the reverse direction uses its transpose.
struct BundleSpec {
    int rank = 1;
    std::vector<Eigen::MatrixXd> transport;     // one per graph edge
    std::vector<Eigen::MatrixXd> endomorphism;  // one symmetric R per vertex
};

// U = Id on every edge, R = potential * Id.
BundleSpec trivial_bundle(const QacSpace& z, int rank, const std::vector<double>& potential);
// Haar-random rotations on the edges, R = (potential + shift) * Id.
BundleSpec random_rotation_bundle(const QacSpace& z, int rank, const std::vector<double>& potential, double shift,
                                  std::uint64_t seed);

enum class Truncation {
    dirichlet,  // boundary vertices held at zero
    exterior,   // boundary vertices free, leaking into a flat exterior
};

// Leak conductance to infinity at every vertex of an embedded lattice: each
// missing outward lattice edge is put in series with the capacity of the
// exterior of the ball, where harmonic functions decay like r^{2-n}.
std::vector<double> exterior_leak(const QacSpace& z);

// All operators act on the interior (non-boundary) vertices with Dirichlet
// conditions at the boundary, or on every vertex with Truncation::exterior. Stiffness matrices are symmetric; the operator
// itself is mass^{-1} * stiffness.
struct OperatorBundle {
    const QacSpace* space = nullptr;
    WeightParams params;
    std::vector<double> h;  // rho^{a/2} w^{b/2}, every vertex
    std::vector<double> V;  // -(Delta h)/h with the full graph Laplacian
    Truncation truncation = Truncation::dirichlet;
    std::vector<int> interior;
    std::vector<int> slot;  // vertex -> interior position, -1 on the boundary

    SpMat K;  // plain stiffness
    Vec mass;
    SpMat K_schrodinger;  // K + diag(mass * V)
    SpMat K_mu;           // conductance c_uv h_u h_v, assembled independently
    Vec mass_mu;          // h^2 * mass

    SpMat delta_plain;  // mass^{-1} K
    SpMat schrodinger;  // delta_plain + V
    SpMat delta_mu;     // mass_mu^{-1} K_mu

    std::optional<BundleSpec> bundle;
    SpMat K_connection;  // block stiffness of the connection Laplacian (no R)
    SpMat K_bundle;      // K_connection + blockdiag(mass * R)
    Vec mass_bundle;     // mass repeated rank times

    int size() const { return static_cast<int>(interior.size()); }
    int rank() const { return bundle ? bundle->rank : 1; }
    const SpMat& stiffness_of(OperatorKind k) const;
    const Vec& mass_of(OperatorKind k) const;
};

// With require_domination set, a bundle whose R - V*Id fails to be positive
// semidefinite at some vertex raises precondition_error.
// Truncation::exterior needs an embedded lattice, a = 0, b = 0 and no bundle.
OperatorBundle assemble(const QacSpace& z, const WeightParams& p, std::optional<BundleSpec> bundle = {},
                        bool require_domination = false, Truncation truncation = Truncation::dirichlet);

// Smallest eigenvalue of R - V*Id over all interior vertices.
double domination_margin(const OperatorBundle& op);

// max |Delta_mu f - (h^{-1} Delta(h f) + V f)| relative to the size of the terms.
double doob_residual(const OperatorBundle& op, const Vec& f);

// ------------------------------------------------------------------- heat

struct HeatOptions {
    double ratio = 1.15;             // geometric step ratio between grid times
    int levels = 5;                  // Richardson levels: 1, 2, 4, ... substeps
    double first_fraction = 1e-3;    // first grid time relative to the earliest request
    double cg_tol = 1e-12;
    int cg_max_iter = 50000;
    double max_error = 1e-4;         // extrapolation error allowed, relative to the column max
    bool peak_scale = false;         // measure errors against the peak over all times instead
};

struct HeatKernelSnapshot {
    double t = 0.0;
    int source = 0;
    OperatorKind which = OperatorKind::plain;
    int rank = 1;
    // H(t, v, source) for every vertex v; for bundles the rank x rank block
    // of v is stored row-major at [v*rank*rank, (v+1)*rank*rank).
    std::vector<double> column;
    int steps = 0;
    std::string scheme;
    double error_estimate = 0.0;
};

// e^{-tA} applied to per-vertex initial data (full vertex indexing, one
// column per fiber direction; boundary entries are ignored).
std::vector<Eigen::MatrixXd> heat_evolve(const OperatorBundle& op, OperatorKind which, const Eigen::MatrixXd& initial,
                                         const std::vector<double>& times, const HeatOptions& opt = {},
                                         double* error_estimate = nullptr, int* steps = nullptr);

std::vector<HeatKernelSnapshot> heat_columns(const OperatorBundle& op, OperatorKind which, int source,
                                             const std::vector<double>& times, const HeatOptions& opt = {});
HeatKernelSnapshot heat_column(const OperatorBundle& op, OperatorKind which, double t, int source,
                               const HeatOptions& opt = {});

// Exact kernel through a dense eigendecomposition; for small spaces.
class DenseHeat {
public:
    DenseHeat(const OperatorBundle& op, OperatorKind which);
    // Interior-indexed kernel matrix H(t, ., .) (block form for bundles).
    Eigen::MatrixXd kernel(double t) const;
    // Column of e^{-tA} applied to interior-indexed data x (not divided by mass).
    Eigen::VectorXd apply(double t, const Eigen::VectorXd& x) const;
    const Eigen::VectorXd& eigenvalues() const { return lambda_; }

private:
    Eigen::VectorXd lambda_;
    Eigen::MatrixXd Q_;
    Eigen::VectorXd isqrt_mass_;
};

// ---------------------------------------------------------- verification

struct GaussianOptions {
    std::vector<double> times;      // on-diagonal and off-diagonal samples
    double min_scaled = 0.5;        // off-diagonal d^2/t range used in the fit
    double max_scaled = 8.0;
    double c_lo = 0.05;
    double c_hi = 2.0;
    HeatOptions heat{1.3, 3, 1e-2, 1e-10, 50000, 1e-2};
    Tolerances tol;
};

struct GaussianReport {
    ComparabilityReport on_diagonal;  // log H(t,z,z) against -log muB(z, sqrt t)
    double diagonal_slope = 0.0;      // slope of log H(t,z,z) in log t
    std::vector<double> c_fit;        // off-diagonal Gaussian constant per center
    double c_lo = 0.0;
    double c_hi = 0.0;
    Verdict verdict = Verdict::inconclusive;
    std::string note;
};

// Heat kernel of Delta_mu at the given centers against the Gaussian profile.
GaussianReport verify_gaussian_bounds(const OperatorBundle& op, const std::vector<int>& centers,
                                      const GaussianOptions& opt);

struct DominationOptions {
    std::vector<double> times{0.5, 1.0, 2.0, 4.0};
    int samples = 100;
    std::uint64_t seed = 7;
    double slack = 1e-6;
    double negligible = 1e-8;  // entries below this fraction of the scalar maximum are skipped
    std::vector<int> trotter_k{4, 16, 64};
    double trotter_t = 1.0;
};

struct DominationReport {
    bool hypothesis_ok = true;
    double margin = 0.0;  // min eigenvalue of R - V*Id
    int checked = 0;
    double worst_ratio = 0.0;  // max |H_L| / H_{Delta+V}
    bool dominated = false;
    std::vector<double> trotter_errors;
    double trotter_ratio = 0.0;  // error(k=16) / error(k=64)
    bool trotter_first_order = false;
    Verdict verdict = Verdict::inconclusive;
    std::string note;
};

// Dense check of |H_L| <= H_{Delta+V} plus the Trotter product
// (e^{-tA/k} e^{-tB/k})^k with A the connection Laplacian and B = R.
DominationReport verify_domination(const OperatorBundle& op, const DominationOptions& opt = {});

}  // namespace qaclab

#endif
