#ifndef QACLAB_POINCARE_HPP
#define QACLAB_POINCARE_HPP

#include <vector>

#include "qaclab/report.hpp"
#include "qaclab/space.hpp"

namespace qaclab {

enum class EigenRoute { automatic, dense, iterative };

// Balls up to this many vertices are solved densely under EigenRoute::automatic.
constexpr int dense_eigen_limit = 2000;

// Stiffness of the weighted Dirichlet form: conductance c_uv * sqrt(omega_u omega_v)
// with omega = rho^a w^b, the form of the Doob-transformed operator.
SpMat weighted_stiffness(const QacSpace& z, const WeightParams& p);

// Smallest nonzero lambda with K_E f = lambda M_B f, where K_E is the stiffness
// K restricted to the edges inside `enlarged` and M_B the mass on `inner`
// (inner must be a subset of enlarged).
struct GapResult {
    double lambda1 = 0.0;
    EigenRoute route = EigenRoute::automatic;
    int iterations = 0;
};
GapResult restricted_gap(const SpMat& K, const std::vector<double>& mass, const std::vector<int>& inner,
                         const std::vector<int>& enlarged, EigenRoute route = EigenRoute::automatic);

struct PoincareProbe {
    Ball ball;
    WeightParams params;
    double delta = 0.5;
    double lambda1 = 0.0;
    double C_P = 0.0;  // 1 / (lambda1 r^2)
    int enlarged_size = 0;
    EigenRoute route = EigenRoute::automatic;
};

// The enlarged ball of radius r / delta must stay off the boundary.
PoincareProbe poincare_constant(const QacSpace& z, const Ball& ball, const WeightParams& p, double delta = 0.5,
                                EigenRoute route = EigenRoute::automatic);

struct PiScaling {
    ComparabilityReport report;  // log(1/lambda1) against log(r^2)
    std::vector<PoincareProbe> probes;
    double sup_C_P = 0.0;
    double gap_exponent = 0.0;  // slope of log(1/lambda1) against log r
};

struct PiScalingOptions {
    int radii_per_center = 8;
    double delta = 0.5;
    double max_decades = 1.5;  // radii span at most this far below the largest admissible one
    bool remote_only = false;  // cap radii at c rho(center)
    int max_ball = 40000;      // skip balls with more vertices
};

PiScaling verify_pi_scaling(const QacSpace& z, const WeightParams& p, const std::vector<int>& centers,
                            const PiScalingOptions& opt = {}, const Tolerances& tol = {});

}  // namespace qaclab

#endif
