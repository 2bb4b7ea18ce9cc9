#ifndef QACLAB_REPORT_HPP
#define QACLAB_REPORT_HPP

#include <cmath>
#include <string>
#include <vector>

namespace qaclab {

enum class Verdict { pass, fail, inconclusive };
const char* to_string(Verdict v);

struct Tolerances {
    double slope = 0.25;
    double band = std::log(10.0);
    int min_samples = 8;
    double min_decades = 1.5;
};

struct Sample {
    double scale = 0.0;
    double log_lhs = 0.0;
    double log_rhs = 0.0;
};

// Numerical stand-in for "lhs and rhs are comparable up to constants":
// the log-ratio must be flat in log(scale) and confined to a band.
struct ComparabilityReport {
    std::string name;
    std::vector<Sample> samples;
    double slope = 0.0;
    double intercept = 0.0;
    double band = 0.0;
    double lhs_slope = 0.0;  // growth exponent of lhs alone
    double decades = 0.0;
    Verdict verdict = Verdict::inconclusive;
    Tolerances tol;
    std::string note;

    bool passed() const { return verdict == Verdict::pass; }
};

ComparabilityReport compare(std::string name, std::vector<Sample> samples, const Tolerances& tol = {});

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    int n = 0;
};
// Ordinary least squares y = slope * x + intercept.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Slope of log y against log x over the given points (all must be positive).
LineFit log_log_fit(const std::vector<double>& x, const std::vector<double>& y);

struct SlopeCheck {
    std::string name;
    double measured = 0.0;
    double expected = 0.0;
    double tol = 0.0;
    int n = 0;
    bool passed() const { return n >= 2 && std::abs(measured - expected) <= tol; }
};

std::string report_json(const ComparabilityReport& r);
std::string report_csv(const ComparabilityReport& r);
std::string slope_json(const SlopeCheck& s);

}  // namespace qaclab

#endif
