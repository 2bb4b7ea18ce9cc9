#ifndef QACLAB_GREEN_HPP
#define QACLAB_GREEN_HPP

#include <string>
#include <vector>

#include "qaclab/measure.hpp"
#include "qaclab/report.hpp"
#include "qaclab/spectral.hpp"

namespace qaclab {

struct GreenOptions {
    double cg_tol = 1e-12;
    int cg_max_iter = 200000;
};

// G(., source) for Delta, Delta_mu or Delta + V, every vertex (zero on a
// Dirichlet boundary).
struct GreenField {
    int source = 0;
    OperatorKind which = OperatorKind::plain;
    double truncation_radius = 0.0;
    std::vector<double> values;
    double residual = 0.0;  // relative residual of the linear solve
    int iterations = 0;
};

GreenField green_column(const OperatorBundle& op, OperatorKind which, int source, const GreenOptions& opt = {});
// Several sources with one factorised preconditioner.
std::vector<GreenField> green_columns(const OperatorBundle& op, OperatorKind which, const std::vector<int>& sources,
                                      const GreenOptions& opt = {});

// int_0^T H(t, ., source) dt: trapezoid in log t on the heat solver's grid,
// with the first stretch [0, t_first] from the endpoint values.
std::vector<double> heat_time_integral(const OperatorBundle& op, OperatorKind which, int source, double T,
                                       double t_first = 1e-3, double ratio = 1.15,
                                       const HeatOptions& heat = {1.15, 4, 1e-2, 1e-12, 50000, 1e-3, true});

// int_d^inf s ds / sqrt(V_z(s) V_y(s)) for two measured volume profiles.
// Exact on the step functions up to s_max; past s_max both volumes are
// extended as s^growth.
struct GreenIntegral {
    double near = 0.0;  // d <= s <= 2d
    double far = 0.0;   // s >= 2d
    double total() const { return near + far; }
};
GreenIntegral green_integral(const VolumeProfile& vz, const VolumeProfile& vy, double d, double s_max,
                             double growth);

struct GreenIntegralOptions {
    int partners = 40;           // per source, spread evenly in distance
    double max_fraction = 0.5;   // partners stay within this fraction of the boundary distance
    Tolerances tol;
};

// G_{Delta+V}(z, y) against h(z) h(y) times the volume integral above.
ComparabilityReport verify_green_integral(const OperatorBundle& op, const std::vector<int>& sources,
                                          const GreenIntegralOptions& opt = {});

struct BandFit {
    int source = 0;
    int band = 0;      // 1-based band position in the remote chain
    int index = 0;     // weight index j_l of the band, 0 for the innermost
    double lo = 0.0;   // fit window
    double hi = 0.0;
    double measured = 0.0;   // slope of log(G / h h) in log d
    double predicted = 0.0;  // 2 - n - |b(j_l)|
    int n = 0;
    bool passed = false;
};

struct GfeOptions {
    double c = 0.0;              // remote parameter; 0 takes the space's own
    double fit_decades = 0.5;    // band fits use [hi * 10^-fit_decades, hi]
    double exponent_tol = 0.3;
    int min_band_samples = 12;
    double max_fraction = 0.5;   // samples stay within this fraction of the boundary distance
    Tolerances tol;
};

struct GfeReport {
    ComparabilityReport case_far;     // d > c rho(z)
    ComparabilityReport case_near;    // d <= c rho(z), empty remote chain
    ComparabilityReport case_remote;  // d <= c rho(z) on a remote band
    std::vector<BandFit> bands;
    Verdict verdict = Verdict::inconclusive;
    std::string note;
};

// Green function of Delta + V against the three piecewise closed forms.
// Throws precondition_error unless a + n > 2 and |b(j)| + m_{j-1} >= 0.
GfeReport verify_gfe_cases(const OperatorBundle& op, const std::vector<int>& sources, const GfeOptions& opt = {});

// Closed form at (z, y) at distance d, for the given remote parameter.
double gfe_closed_form(const QacSpace& z, const WeightParams& p, const std::vector<double>& h, int source, int y,
                       double d, double c);

// Interior vertex with w_1 closest to target_w1 (and rho to target_rho when
// positive), among the finest-resolved candidates.
int place_probe(const QacSpace& z, double target_w1, double target_rho = 0.0);

}  // namespace qaclab

#endif
