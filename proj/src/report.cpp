#include "qaclab/report.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qaclab/graph.hpp"

namespace qaclab {

const char* to_string(Verdict v)
{
    switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    default: return "inconclusive";
    }
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size())
        throw domain_error("fit_line: size mismatch");
    LineFit f;
    f.n = static_cast<int>(x.size());
    if (f.n < 2)
        return f;
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < f.n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= f.n;
    my /= f.n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = 0; i < f.n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0)
        return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return f;
}

LineFit log_log_fit(const std::vector<double>& x, const std::vector<double>& y)
{
    std::vector<double> lx, ly;
    for (size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0))
            throw domain_error("log_log_fit: nonpositive value");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return fit_line(lx, ly);
}

ComparabilityReport compare(std::string name, std::vector<Sample> samples, const Tolerances& tol)
{
    ComparabilityReport r;
    r.name = std::move(name);
    r.tol = tol;
    std::sort(samples.begin(), samples.end(),
              [](const Sample& a, const Sample& b) { return a.scale < b.scale; });
    r.samples = std::move(samples);
    if (r.samples.empty()) {
        r.note = "no samples";
        return r;
    }
    std::vector<double> x, y;
    for (const auto& s : r.samples) {
        x.push_back(std::log(s.scale));
        y.push_back(s.log_lhs - s.log_rhs);
    }
    auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    r.band = *hi - *lo;
    r.decades = (x.back() - x.front()) / std::log(10.0);
    auto f = fit_line(x, y);
    r.slope = f.slope;
    std::vector<double> yl;
    for (const auto& s : r.samples)
        yl.push_back(s.log_lhs);
    r.lhs_slope = fit_line(x, yl).slope;
    r.intercept = f.intercept;
    if (static_cast<int>(r.samples.size()) < tol.min_samples || r.decades < tol.min_decades) {
        r.verdict = Verdict::inconclusive;
        r.note = "insufficient samples or scale range";
        return r;
    }
    r.verdict = std::abs(r.slope) <= tol.slope && r.band <= tol.band ? Verdict::pass : Verdict::fail;
    return r;
}

std::string report_json(const ComparabilityReport& r)
{
    nlohmann::ordered_json j;
    j["name"] = r.name;
    j["verdict"] = to_string(r.verdict);
    j["slope"] = r.slope;
    j["intercept"] = r.intercept;
    j["band"] = r.band;
    j["lhs_slope"] = r.lhs_slope;
    j["decades"] = r.decades;
    j["samples"] = r.samples.size();
    j["tolerances"] = {{"slope", r.tol.slope},
                       {"band", r.tol.band},
                       {"min_samples", r.tol.min_samples},
                       {"min_decades", r.tol.min_decades}};
    if (!r.note.empty())
        j["note"] = r.note;
    return j.dump(2);
}

std::string report_csv(const ComparabilityReport& r)
{
    std::ostringstream os;
    os.precision(17);
    os << "scale,log_lhs,log_rhs\n";
    for (const auto& s : r.samples)
        os << s.scale << ',' << s.log_lhs << ',' << s.log_rhs << '\n';
    return os.str();
}

std::string slope_json(const SlopeCheck& s)
{
    nlohmann::ordered_json j;
    j["name"] = s.name;
    j["verdict"] = s.passed() ? "pass" : "fail";
    j["measured"] = s.measured;
    j["expected"] = s.expected;
    j["tolerance"] = s.tol;
    j["points"] = s.n;
    return j.dump(2);
}

}  // namespace qaclab
