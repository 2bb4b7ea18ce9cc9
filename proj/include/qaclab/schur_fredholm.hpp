#ifndef QACLAB_SCHUR_FREDHOLM_HPP
#define QACLAB_SCHUR_FREDHOLM_HPP

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "qaclab/green.hpp"

namespace qaclab {

// ------------------------------------------------------------ weighted norms

enum class NormOrder { L2, H2 };

// L2: |rho^{-delta-n/2} w^{-tau-nu/2} f| in L^2(dV).
// H2: adds the gradient with weights shifted by (1, 1 on w_1) and the
// Laplacian with weights shifted by (2, 2 on w_1).
struct WeightedNorm {
    double delta = 0.0;
    std::vector<double> tau;
    NormOrder order = NormOrder::L2;
};

// nu_1 = m_0, nu_j = m_{j-1} - m_{j-2}.
std::vector<double> nu_vector(const QacSpace& z);

// rho^{-delta-n/2+shift} w^{-tau-nu/2} w_1^{shift} at every vertex.
std::vector<double> norm_weight(const QacSpace& z, double delta, const std::vector<double>& tau, double shift = 0.0);

double weighted_norm(const QacSpace& z, const std::vector<double>& f, const WeightedNorm& wn);

// ------------------------------------------------------------ Schur test

// delta in (lo, hi), tau_i in [tau_lo_i, tau_hi_i].
struct WindowBox {
    double delta_lo = 0.0;
    double delta_hi = 0.0;
    std::vector<double> tau_lo;
    std::vector<double> tau_hi;
    bool contains(double delta, const std::vector<double>& tau) const;
};

// The bounded window as stated for the weighted inverse.
WindowBox predicted_window(const QacSpace& z, const WeightParams& p);

// First failed inequality among the hypotheses on (a, b), "" if none.
std::string fredholm_hypothesis_violation(const QacSpace& z, const WeightParams& p);

// First failed inequality of the integral lemma for (alpha, beta), "" if none.
std::string schur_lemma_violation(const QacSpace& z, const WeightParams& p, double alpha,
                                  const std::vector<double>& beta);

// Both one-sided Schur conditions with f = rho^{-n/2} w^{-nu/2}, written as
// the lemma applied to (delta - 2, tau - 2) and to (-delta - n, -tau - nu).
// Returns the first failed inequality, "" if (delta, tau) passes both.
std::string schur_window_violation(const QacSpace& z, const WeightParams& p, double delta,
                                   const std::vector<double>& tau);

// The same spaces at increasing truncation radius.
using Ladder = std::vector<const OperatorBundle*>;

struct GrowthThresholds {
    double bounded = 1.25;   // at most this factor per doubling
    double unbounded = 1.5;  // at least this factor per doubling
};

struct SchurReport {
    double alpha = 0.0;
    std::vector<double> beta;
    std::string failed_condition;
    std::vector<double> radii;
    std::vector<double> sup_ratio;  // sup_z  int G rho^alpha w^beta  /  rho^{alpha+2} w^{beta+2}
    std::vector<double> growth;     // per doubling, between consecutive rungs; the last one decides
    Verdict verdict = Verdict::inconclusive;
    std::string note;
};

// The integral lemma at alpha = delta - 2, beta = tau - 2 on w_1.
SchurReport schur_bound_check(const Ladder& ladder, double delta, const std::vector<double>& tau,
                              const GrowthThresholds& th = {});

struct SchurFunctionalReport {
    std::vector<double> radii;
    std::vector<double> forward;   // sup_z  (K f)(z) / f(z)
    std::vector<double> backward;  // sup_z' (K^T f)(z') / f(z')
    std::vector<double> growth;    // max of both per doubling
    Verdict verdict = Verdict::inconclusive;
};

// The two one-sided Schur conditions of the conjugated kernel K with
// f = rho^{-n/2} w^{-nu/2}.
SchurFunctionalReport schur_functional(const Ladder& ladder, double delta, const std::vector<double>& tau,
                                       const GrowthThresholds& th = {});

// ------------------------------------------------------------ window scan

struct WindowGrid {
    double delta_lo = 0.0, delta_hi = 0.0, delta_step = 0.25;
    double tau_lo = 0.0, tau_hi = 0.0, tau_step = 0.25;
    std::vector<double> tau_pinned;  // tau_2..tau_k, held fixed
    bool cross = false;              // only the central row and column
    double power_tol = 1e-5;
    int power_max = 300;
    GrowthThresholds growth;
};

// [2-n-a/2-1, a/2+1] x [2-nu_1-b_1/2-1, b_1/2+1], other tau at their window centers.
WindowGrid default_window_grid(const QacSpace& z, const WeightParams& p);

enum class WindowClass { bounded, unbounded, indeterminate };
const char* to_string(WindowClass c);

struct WindowPoint {
    double delta = 0.0;
    double tau1 = 0.0;
    std::vector<double> norms;  // one per rung
    double growth = 0.0;        // between the last two rungs, per doubling
    WindowClass measured = WindowClass::indeterminate;
    bool predicted_inside = false;
    bool boundary_cell = false;  // within one grid cell of a predicted edge
};

struct WindowScan {
    std::vector<double> radii;
    WindowBox predicted;
    WindowGrid grid;
    std::vector<WindowPoint> points;
    // Edges extrapolated from the first unbounded point past each side:
    // growth R^gamma puts the edge at gamma inside that point. NaN if none.
    double delta_lo = 0.0, delta_hi = 0.0, tau_lo = 0.0, tau_hi = 0.0;
    bool interior_ok = false;   // inside, off the boundary cells: bounded
    bool exterior_ok = false;   // outside, off the boundary cells: unbounded
    bool boundaries_ok = false; // measured edges within one cell of the predicted ones
    Verdict verdict = Verdict::inconclusive;
    std::string note;
};

// L^2 -> L^2 norm of rho^{-delta-n/2} w^{-tau-nu/2} G rho^{delta-2+n/2} w^{tau+nu/2-2}
// by power iteration, for the operator G of Delta + V.
double conjugated_inverse_norm(const OperatorBundle& op, double delta, const std::vector<double>& tau,
                               double tol = 1e-5, int max_iter = 300);

WindowScan window_scan(const Ladder& ladder, const WindowGrid& grid);

std::string window_csv(const WindowScan& s);

// max over random f of |G f|_{H2(delta, tau)} / |f|_{L2(delta-2, tau-2)}.
double h2_bound_constant(const OperatorBundle& op, double delta, const std::vector<double>& tau, int samples,
                         std::uint64_t seed);

// ------------------------------------------------------------ parametrix

struct CutoffPiece {
    int end = 0;                     // 0 for the core
    std::vector<double> chi;         // partition of unity
    std::vector<double> chi_tilde;   // 1 on the support of chi
    std::vector<char> domain;        // Dirichlet domain of this piece's inverse
};

struct CutoffSet {
    std::vector<CutoffPiece> pieces;
    double lipschitz_chi = 0.0;
    double lipschitz_chi_tilde = 0.0;
};

// Radial cutoffs on a multi-end space: the end pieces switch on over
// [r, lambda r], their wider companions over [r / lambda^2, r / lambda];
// the core is the complement, widened over [lambda^2 r, lambda^3 r].
CutoffSet radial_cutoffs(const QacSpace& z, double r, double lambda = 3.0);

class Parametrix {
public:
    // Checks the partition, the plateau of chi_tilde over chi with a gap of
    // at least min_gap edges, domain containment and disjoint end domains.
    Parametrix(const OperatorBundle& op, CutoffSet cuts, OperatorKind which = OperatorKind::plain, int min_gap = 3);

    // Interior-indexed vectors throughout.
    Vec apply(const Vec& f) const;            // G~ f
    Vec apply_adjoint(const Vec& f) const;    // G~^* f in L^2(mass)
    Vec op(const Vec& u) const;               // L u
    Vec remainder_left(const Vec& f) const;   // R1 f = f - L G~ f
    Vec remainder_right(const Vec& u) const;  // R2 u = u - G~ L u
    // R1 f from the commutators: -sum [L, chi~] G_piece chi f.
    Vec remainder_left_commutator(const Vec& f) const;
    Vec remainder_left_adjoint(const Vec& f) const;
    // G~ after the finite-rank correction on the collar.
    Vec solve(const Vec& f) const;

    const std::vector<char>& collar() const { return collar_; }         // where [L, chi~] acts
    const std::vector<char>& source_collar() const { return scollar_; } // where [L, chi] reads
    const CutoffSet& cutoffs() const { return cuts_; }
    const OperatorBundle& bundle() const { return *op_; }

private:
    Vec piece_solve(size_t k, const Vec& rhs_interior) const;

    const OperatorBundle* op_;
    OperatorKind which_;
    CutoffSet cuts_;
    std::vector<std::vector<int>> dom_;  // interior positions of each domain
    std::vector<std::shared_ptr<Eigen::SimplicialLDLT<SpMat>>> solvers_;
    std::vector<Vec> chi_, chit_;        // interior-indexed
    std::vector<char> collar_, scollar_;
    std::vector<int> collar_list_;
    Eigen::PartialPivLU<Eigen::MatrixXd> correction_;  // I - R1 restricted to the collar
};

struct ParametrixReport {
    int collar_size = 0;
    double off_collar_r1 = 0.0;     // max |R1 f| off the collar, relative to |f|_inf
    double off_support_r2 = 0.0;    // max |R2 u| for u vanishing on the source collar
    double first_residual = 0.0;    // |L G~ f - f| / |f|
    double corrected_residual = 0.0;
    std::vector<double> tail_radii;
    std::vector<double> tail_norms; // weighted norm of R1 restricted to rho > S
    bool tail_decays = false;
    Verdict verdict = Verdict::inconclusive;
    std::string note;
};

// Tail norms use weights rho^{delta+n/2-2} on the input and rho^{-delta-n/2+2}
// on the output, with delta at the window centre unless given.
ParametrixReport verify_parametrix(const Parametrix& P, const std::vector<double>& tail_radii, std::uint64_t seed,
                                   double delta = std::numeric_limits<double>::quiet_NaN());

}  // namespace qaclab

#endif
