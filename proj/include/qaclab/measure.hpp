#ifndef QACLAB_MEASURE_HPP
#define QACLAB_MEASURE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "qaclab/report.hpp"
#include "qaclab/space.hpp"

namespace qaclab {

struct BallStats {
    int center = 0;
    double radius = 0.0;
    BallKind kind = BallKind::general;
    double mu = 0.0;
    WeightParams params;
};

// Per-vertex weighted measure rho^a w^b * vertex_measure.
std::vector<double> measure_density(const QacSpace& z, const WeightParams& p);

// Smallest radius whose balls see past the center's immediate neighbours.
double resolved_radius(const QacSpace& z, int v);

BallStats weighted_volume(const QacSpace& z, const Ball& ball, const WeightParams& p);

// mu(B(center, r)) for every r from one distance map.
class VolumeProfile {
public:
    VolumeProfile(const std::vector<double>& dist, const std::vector<double>& density);
    double operator()(double r) const;
    // Distances at which the volume jumps; constant in between.
    const std::vector<double>& radii() const { return r_; }

private:
    std::vector<double> r_;
    std::vector<double> cum_;
};

// Empty string when the volume-comparison condition holds, otherwise the
// first violated inequality.
std::string cvc_violation(const QacSpace& z, const WeightParams& p);
inline bool cvc_holds(const QacSpace& z, const WeightParams& p) { return cvc_violation(z, p).empty(); }

// 1 + R^{a+n} (1 + sum_j R^{-m_{j-1} - |b(j)|})
double anchored_closed_form(const QacSpace& z, const WeightParams& p, double R);

ComparabilityReport verify_anchored_volume(const QacSpace& z, const WeightParams& p,
                                           const Tolerances& tol = {}, int n_radii = 12);

// Ball centers drawn per (piece, chain length, log2 rho) stratum, away from
// the boundary. The basepoint is always included.
std::vector<int> stratified_centers(const QacSpace& z, int per_stratum, std::uint64_t seed,
                                    double max_rho = inf);

struct RemoteVolumeResult {
    std::vector<ComparabilityReport> per_band;
    ComparabilityReport combined;
};

RemoteVolumeResult verify_remote_volume(const QacSpace& z, const WeightParams& p,
                                        const std::vector<int>& points, const Tolerances& tol = {});

ComparabilityReport verify_nonremote_volume(const QacSpace& z, const WeightParams& p,
                                            const std::vector<int>& points, const Tolerances& tol = {});

struct DoublingResult {
    double C_D = 0.0;
    int worst_center = -1;
    double worst_radius = 0.0;
    int balls = 0;
};

// Sampled radii run from the smallest incident edge at the center up to half
// the distance to the boundary, in steps of sqrt 2.
DoublingResult doubling_constant(const QacSpace& z, const WeightParams& p, int n_samples,
                                 std::uint64_t seed = 1);

struct VolumeComparison {
    double C_V = 0.0;
    int worst_center = -1;
    ComparabilityReport report;
};

VolumeComparison verify_volume_comparison(const QacSpace& z, const WeightParams& p,
                                          const std::vector<int>& points, const Tolerances& tol = {});

}  // namespace qaclab

#endif
