#include "qaclab/manifest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "qaclab/green.hpp"
#include "qaclab/measure.hpp"
#include "qaclab/poincare.hpp"
#include "qaclab/schur_fredholm.hpp"
#include "qaclab/spectral.hpp"

namespace qaclab {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

const std::vector<std::string>& known_suites()
{
    static const std::vector<std::string> names{
        "anchored_volume", "doubling",    "poincare", "doob",   "heat_diagonal", "gaussian",   "domination",
        "green_slope",     "green_integral", "gfe",   "schur",  "window",        "parametrix",
    };
    return names;
}

namespace {

int suite_rank(const std::string& name)
{
    const auto& k = known_suites();
    auto it = std::find(k.begin(), k.end(), name);
    if (it == k.end())
        throw domain_error("unknown suite: " + name);
    return static_cast<int>(it - k.begin());
}

std::string read_file(const std::filesystem::path& p, const char* what)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw domain_error(std::string("cannot read ") + what + ": " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw domain_error("cannot write " + p.string());
    out << text;
}

std::string sha256_hex(const std::string& text)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw numerical_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

template <class T>
T opt(const json& o, const char* key, T fallback)
{
    return o.contains(key) ? o.at(key).get<T>() : fallback;
}

std::string num(double x)
{
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace

ExperimentManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw domain_error(std::string("manifest json: ") + e.what());
    }
    if (!j.is_object())
        throw domain_error("manifest must be a json object");
    static const std::set<std::string> keys{"name",  "recipe",     "params", "seed",  "truncation_levels",
                                            "suites", "tolerances", "output", "probe"};
    for (const auto& [k, v] : j.items())
        if (!keys.count(k))
            throw domain_error("unknown manifest key: " + k);

    ExperimentManifest m;
    try {
        m.name = j.value("name", m.name);
        if (!j.contains("recipe"))
            throw domain_error("manifest has no recipe");
        const json& r = j.at("recipe");
        if (r.is_string()) {
            m.recipe_path = r.get<std::string>();
            auto path = base_dir / m.recipe_path;
            try {
                m.recipe = json::parse(read_file(path, "recipe"));
            } catch (const json::exception& e) {
                throw domain_error("recipe json " + path.string() + ": " + e.what());
            }
        } else if (r.is_object()) {
            m.recipe = r;
        } else {
            throw domain_error("recipe must be a path or an object");
        }
        if (j.contains("params")) {
            const json& p = j.at("params");
            m.a = p.value("a", 0.0);
            if (p.contains("b"))
                m.b = p.at("b").get<std::vector<double>>();
        }
        m.seed = j.value("seed", m.seed);
        if (j.contains("truncation_levels"))
            m.truncation_levels = j.at("truncation_levels").get<std::vector<double>>();
        if (m.truncation_levels.empty())
            throw domain_error("truncation_levels is empty");
        for (double l : m.truncation_levels)
            if (!(l > 0.0))
                throw domain_error("truncation levels must be positive");
        std::sort(m.truncation_levels.begin(), m.truncation_levels.end());
        m.truncation_levels.erase(std::unique(m.truncation_levels.begin(), m.truncation_levels.end()),
                                  m.truncation_levels.end());

        if (!j.contains("suites") || !j.at("suites").is_array() || j.at("suites").empty())
            throw domain_error("manifest needs a nonempty suites array");
        std::set<std::string> seen;
        for (const auto& s : j.at("suites")) {
            SuiteSpec spec;
            if (s.is_string()) {
                spec.name = s.get<std::string>();
            } else {
                spec.name = s.at("name").get<std::string>();
                spec.negative_control = s.value("negative_control", false);
                if (s.contains("options"))
                    spec.options = s.at("options");
            }
            suite_rank(spec.name);
            if (!seen.insert(spec.name).second)
                throw domain_error("suite listed twice: " + spec.name);
            m.suites.push_back(std::move(spec));
        }
        std::stable_sort(m.suites.begin(), m.suites.end(),
                         [](const SuiteSpec& x, const SuiteSpec& y) { return suite_rank(x.name) < suite_rank(y.name); });

        m.tol.min_decades = 1.0;
        if (j.contains("tolerances")) {
            const json& t = j.at("tolerances");
            m.tol.slope = t.value("slope", m.tol.slope);
            m.tol.band = t.value("band", m.tol.band);
            m.tol.min_samples = t.value("min_samples", m.tol.min_samples);
            m.tol.min_decades = t.value("min_decades", m.tol.min_decades);
        }
        m.output = j.value("output", m.output.string());
        if (j.contains("probe")) {
            const json& p = j.at("probe");
            if (p.contains("w1"))
                m.probe_w1 = p.at("w1").get<double>();
            if (p.contains("rho"))
                m.probe_rho = p.at("rho").get<double>();
        }
    } catch (const json::exception& e) {
        throw domain_error(std::string("manifest: ") + e.what());
    }
    return m;
}

ExperimentManifest load_manifest(const std::filesystem::path& path)
{
    return parse_manifest(read_file(path, "manifest"), path.parent_path());
}

json manifest_json(const ExperimentManifest& m)
{
    json j;
    j["name"] = m.name;
    j["recipe"] = m.recipe;
    if (!m.recipe_path.empty())
        j["recipe_path"] = m.recipe_path;
    j["params"] = {{"a", m.a}, {"b", m.b}};
    j["seed"] = m.seed;
    j["truncation_levels"] = m.truncation_levels;
    j["suites"] = json::array();
    for (const auto& s : m.suites)
        j["suites"].push_back({{"name", s.name}, {"negative_control", s.negative_control}, {"options", s.options}});
    j["tolerances"] = {{"slope", m.tol.slope},
                       {"band", m.tol.band},
                       {"min_samples", m.tol.min_samples},
                       {"min_decades", m.tol.min_decades}};
    if (m.probe_w1 || m.probe_rho) {
        j["probe"] = json::object();
        if (m.probe_w1)
            j["probe"]["w1"] = *m.probe_w1;
        if (m.probe_rho)
            j["probe"]["rho"] = *m.probe_rho;
    }
    return j;
}

std::string manifest_hash(const ExperimentManifest& m) { return sha256_hex(manifest_json(m).dump()); }

namespace {

json scale_radii(const json& j, double factor)
{
    json r = j;
    if (r.is_object()) {
        for (auto& [k, v] : r.items()) {
            if ((k == "R_max" || k == "R") && v.is_number())
                v = v.get<double>() * factor;
            else if (v.is_object() || v.is_array())
                v = scale_radii(v, factor);
        }
    } else if (r.is_array()) {
        for (auto& v : r)
            v = scale_radii(v, factor);
    }
    return r;
}

}  // namespace

json scaled_recipe(const json& recipe, double factor)
{
    json r = scale_radii(recipe, factor);
    // nested factors inherit the top-level radius, whose builder default is 32
    if (r.is_object() && !r.contains("R_max") && !r.contains("R"))
        r["R_max"] = 32.0 * factor;
    return r;
}

namespace {

struct Outcome {
    Verdict verdict = Verdict::inconclusive;
    std::string note;
    ojson report = ojson::object();
    std::string csv;
};

bool passed(Verdict v) { return v == Verdict::pass; }

class Context {
public:
    explicit Context(const ExperimentManifest& m) : m_(m) {}

    const ExperimentManifest& manifest() const { return m_; }

    const QacSpace& space(double level)
    {
        auto it = spaces_.find(level);
        if (it == spaces_.end()) {
            auto z = std::make_unique<QacSpace>(build_from_recipe(scaled_recipe(m_.recipe, level).dump()));
            it = spaces_.emplace(level, std::move(z)).first;
        }
        return *it->second;
    }

    WeightParams params(const QacSpace& z) const { return WeightParams(m_.a, m_.b, z.dims); }

    const OperatorBundle& op(double level, Truncation t = Truncation::dirichlet)
    {
        auto key = std::make_pair(level, static_cast<int>(t));
        auto it = ops_.find(key);
        if (it == ops_.end()) {
            const auto& z = space(level);
            auto op = std::make_unique<OperatorBundle>(assemble(z, params(z), {}, false, t));
            it = ops_.emplace(key, std::move(op)).first;
        }
        return *it->second;
    }

    // Ladder suites need two rungs; a single level is paired with its double.
    std::vector<double> ladder_levels() const
    {
        auto l = m_.truncation_levels;
        if (l.size() < 2)
            l.push_back(2.0 * l.front());
        return l;
    }

    Ladder ladder(Truncation t = Truncation::dirichlet)
    {
        Ladder out;
        for (double l : ladder_levels())
            out.push_back(&op(l, t));
        return out;
    }

private:
    const ExperimentManifest& m_;
    std::map<double, std::unique_ptr<QacSpace>> spaces_;
    std::map<std::pair<double, int>, std::unique_ptr<OperatorBundle>> ops_;
};

using LevelFn = Outcome (*)(Context&, double, const json&);

// Runs fn at every truncation level; passes only if every level passes.
Outcome per_level(Context& cx, const json& o, LevelFn fn)
{
    Outcome all;
    all.verdict = Verdict::pass;
    all.report["levels"] = ojson::array();
    bool first = true;
    for (double l : cx.manifest().truncation_levels) {
        Outcome r = fn(cx, l, o);
        ojson entry = ojson::object();
        entry["level"] = l;
        entry["R_max"] = cx.space(l).truncation_radius;
        entry["verdict"] = to_string(r.verdict);
        if (!r.note.empty())
            entry["note"] = r.note;
        for (auto& [k, v] : r.report.items())
            entry[k] = v;
        all.report["levels"].push_back(entry);
        std::istringstream lines(r.csv);
        std::string line;
        bool header = true;
        while (std::getline(lines, line)) {
            if (header) {
                if (first)
                    all.csv += "level," + line + "\n";
                header = false;
                continue;
            }
            all.csv += num(l) + "," + line + "\n";
        }
        first = false;
        if (r.verdict == Verdict::fail)
            all.verdict = Verdict::fail;
        else if (r.verdict == Verdict::inconclusive && all.verdict == Verdict::pass)
            all.verdict = Verdict::inconclusive;
        if (!r.note.empty())
            all.note += (all.note.empty() ? "" : "; ") + ("level " + num(l) + ": " + r.note);
    }
    return all;
}

ojson parse_report(const ComparabilityReport& r) { return ojson::parse(report_json(r)); }

// ------------------------------------------------------------------ suites

Outcome anchored_volume(Context& cx, double level, const json& o)
{
    const auto& z = cx.space(level);
    auto p = cx.params(z);
    Outcome out;
    std::string bad = cvc_violation(z, p);
    if (!bad.empty()) {
        out.verdict = Verdict::fail;
        out.note = "volume condition violated: " + bad;
        return out;
    }
    auto r = verify_anchored_volume(z, p, cx.manifest().tol, opt(o, "radii", 12));
    double expected = p.a + z.dim();
    double tol = opt(o, "exponent_tol", 0.25);
    out.report = parse_report(r);
    out.report["expected_exponent"] = expected;
    out.csv = report_csv(r);
    out.verdict = r.passed() && std::abs(r.lhs_slope - expected) <= tol ? Verdict::pass : Verdict::fail;
    if (r.passed() && out.verdict == Verdict::fail)
        out.note = "exponent " + num(r.lhs_slope) + " off " + num(expected);
    return out;
}

Outcome doubling(Context& cx, const json& o)
{
    Outcome out;
    int samples = opt(o, "samples", 60);
    double stability = opt(o, "stability", 0.2);
    std::vector<double> cd;
    std::ostringstream csv;
    csv.precision(17);
    csv << "R_max,C_D,worst_center,worst_radius,balls\n";
    for (double l : cx.ladder_levels()) {
        const auto& z = cx.space(l);
        auto r = doubling_constant(z, cx.params(z), samples, cx.manifest().seed);
        cd.push_back(r.C_D);
        csv << z.truncation_radius << ',' << r.C_D << ',' << r.worst_center << ',' << r.worst_radius << ','
            << r.balls << '\n';
    }
    out.csv = csv.str();
    bool ok = true;
    double worst = 0.0;
    for (size_t i = 0; i < cd.size(); ++i) {
        if (!std::isfinite(cd[i]))
            ok = false;
        if (i > 0) {
            double d = std::abs(cd[i] / cd[i - 1] - 1.0);
            worst = std::max(worst, d);
            ok = ok && d <= stability;
        }
    }
    out.verdict = ok ? Verdict::pass : Verdict::fail;
    out.report["C_D"] = cd;
    out.report["worst_relative_change"] = worst;
    out.report["stability"] = stability;
    const auto& z0 = cx.space(cx.ladder_levels().front());
    std::string bad = cvc_violation(z0, cx.params(z0));
    if (!bad.empty())
        out.note = "volume condition violated: " + bad;
    return out;
}

Outcome poincare(Context& cx, double level, const json& o)
{
    const auto& z = cx.space(level);
    auto p = cx.params(z);
    std::vector<int> centers{z.basepoint};
    int per = opt(o, "per_stratum", 0);
    if (per > 0)
        centers = stratified_centers(z, per, cx.manifest().seed);
    PiScalingOptions po;
    po.radii_per_center = opt(o, "radii", po.radii_per_center);
    po.delta = opt(o, "delta", po.delta);
    po.remote_only = opt(o, "remote_only", po.remote_only);
    po.max_ball = opt(o, "max_ball", po.max_ball);
    po.max_decades = opt(o, "max_decades", po.max_decades);
    auto r = verify_pi_scaling(z, p, centers, po, cx.manifest().tol);
    double tol = opt(o, "gap_tol", 0.2);
    Outcome out;
    out.report = parse_report(r.report);
    out.report["gap_exponent"] = r.gap_exponent;
    out.report["sup_C_P"] = r.sup_C_P;
    std::ostringstream csv;
    csv.precision(17);
    csv << "center,radius,lambda1,C_P\n";
    for (const auto& pr : r.probes)
        csv << pr.ball.center << ',' << pr.ball.radius << ',' << pr.lambda1 << ',' << pr.C_P << '\n';
    out.csv = csv.str();
    out.verdict = r.report.passed() && std::abs(r.gap_exponent - 2.0) <= tol ? Verdict::pass : Verdict::fail;
    if (r.report.passed() && out.verdict == Verdict::fail)
        out.note = "gap exponent " + num(r.gap_exponent) + " off 2";
    return out;
}

Outcome doob(Context& cx, double level, const json& o)
{
    const auto& op = cx.op(level);
    std::mt19937_64 gen(cx.manifest().seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::ostringstream csv;
    csv.precision(17);
    csv << "check,index,value\n";
    double doob_worst = 0.0;
    for (int k = 0; k < opt(o, "vectors", 3); ++k) {
        Vec f(op.size());
        for (int i = 0; i < op.size(); ++i)
            f[i] = unit(gen);
        double r = doob_residual(op, f);
        doob_worst = std::max(doob_worst, r);
        csv << "conjugation," << k << ',' << r << '\n';
    }
    double heat_worst = 0.0;
    const std::vector<double> times{0.5, 4.0};
    // both kernels go through the same stepping, so a coarse scheme still compares them exactly
    HeatOptions ho;
    ho.levels = 1;
    ho.max_error = inf;
    for (int k = 0; k < opt(o, "columns", 4); ++k) {
        int src = op.interior[gen() % op.interior.size()];
        auto hs = heat_columns(op, OperatorKind::schrodinger, src, times, ho);
        auto hm = heat_columns(op, OperatorKind::mu, src, times, ho);
        double err = 0.0;
        for (size_t t = 0; t < times.size(); ++t) {
            double scale = 0.0, e = 0.0;
            for (int v : op.interior) {
                scale = std::max(scale, std::abs(hs[t].column[v]));
                e = std::max(e, std::abs(hs[t].column[v] - op.h[v] * op.h[src] * hm[t].column[v]));
            }
            err = std::max(err, e / scale);
        }
        heat_worst = std::max(heat_worst, err);
        csv << "kernel_relation," << k << ',' << err << '\n';
    }
    double dt = opt(o, "conjugation_tol", 1e-12), ht = opt(o, "kernel_tol", 1e-8);
    Outcome out;
    out.csv = csv.str();
    out.report["conjugation_residual"] = doob_worst;
    out.report["kernel_relation_error"] = heat_worst;
    out.verdict = doob_worst <= dt && heat_worst <= ht ? Verdict::pass : Verdict::fail;
    return out;
}

std::vector<double> times_from(const json& o, std::vector<double> fallback)
{
    return o.contains("times") ? o.at("times").get<std::vector<double>>() : fallback;
}

Outcome heat_diagonal(Context& cx, double level, const json& o)
{
    const auto& z = cx.space(level);
    const auto& op = cx.op(level);
    GaussianOptions go;
    go.times = times_from(o, {2, 4, 8, 16, 32});
    go.tol = cx.manifest().tol;
    auto r = verify_gaussian_bounds(op, {z.basepoint}, go);
    double expected = opt(o, "expected_slope", -(z.dim() + op.params.a) / 2.0);
    double tol = opt(o, "slope_tol", 0.2);
    Outcome out;
    out.report["diagonal_slope"] = r.diagonal_slope;
    out.report["expected_slope"] = expected;
    out.report["tolerance"] = tol;
    out.csv = report_csv(r.on_diagonal);
    out.verdict = std::abs(r.diagonal_slope - expected) <= tol ? Verdict::pass : Verdict::fail;
    return out;
}

Outcome gaussian(Context& cx, double level, const json& o)
{
    const auto& z = cx.space(level);
    const auto& op = cx.op(level);
    int want = opt(o, "centers", 6);
    double min_bd = opt(o, "min_boundary_fraction", 0.45) * z.truncation_radius;
    double max_res = opt(o, "max_resolved_radius", std::sqrt(10.0));
    auto bd = boundary_distances(z);
    std::vector<int> centers;
    for (int v : stratified_centers(z, opt(o, "per_stratum", 2), cx.manifest().seed))
        if (bd[v] >= min_bd && resolved_radius(z, v) <= max_res && static_cast<int>(centers.size()) < want)
            centers.push_back(v);
    Outcome out;
    if (centers.empty()) {
        out.verdict = Verdict::inconclusive;
        out.note = "no admissible centers";
        return out;
    }
    GaussianOptions go;
    std::vector<double> t;
    for (int i = 0; i < 8; ++i)
        t.push_back(std::pow(10.0, 2.0 * i / 7));
    go.times = times_from(o, t);
    go.tol = cx.manifest().tol;
    go.heat.max_error = opt(o, "heat_max_error", 1.0);
    auto r = verify_gaussian_bounds(op, centers, go);
    out.report = parse_report(r.on_diagonal);
    out.report["centers"] = centers;
    out.report["diagonal_slope"] = r.diagonal_slope;
    out.report["c_fit"] = r.c_fit;
    out.report["c_range"] = {r.c_lo, r.c_hi};
    out.csv = report_csv(r.on_diagonal);
    out.verdict = r.verdict;
    out.note = r.note;
    if (static_cast<int>(centers.size()) < want) {
        out.verdict = Verdict::inconclusive;
        out.note = "only " + std::to_string(centers.size()) + " admissible centers";
    }
    return out;
}

Outcome domination(Context& cx, double level, const json& o)
{
    const auto& z = cx.space(level);
    const auto& scalar = cx.op(level);
    auto bundle =
        random_rotation_bundle(z, opt(o, "rank", 2), scalar.V, opt(o, "shift", 0.1), cx.manifest().seed);
    auto op = assemble(z, scalar.params, bundle, true);
    DominationOptions d;
    d.samples = opt(o, "samples", d.samples);
    d.slack = opt(o, "slack", d.slack);
    d.seed = cx.manifest().seed;
    auto r = verify_domination(op, d);
    Outcome out;
    out.report["margin"] = r.margin;
    out.report["checked"] = r.checked;
    out.report["worst_ratio"] = r.worst_ratio;
    out.report["trotter_errors"] = r.trotter_errors;
    out.report["trotter_ratio"] = r.trotter_ratio;
    std::ostringstream csv;
    csv.precision(17);
    csv << "k,trotter_error\n";
    for (size_t i = 0; i < r.trotter_errors.size() && i < d.trotter_k.size(); ++i)
        csv << d.trotter_k[i] << ',' << r.trotter_errors[i] << '\n';
    out.csv = csv.str();
    out.verdict = r.verdict;
    out.note = r.note;
    return out;
}

bool exterior_ok(const QacSpace& z, const WeightParams& p)
{
    return z.distance_mode == DistanceMode::embedded && z.dim() > 2 && p.a == 0.0 && p.b.empty();
}

Outcome green_slope(Context& cx, double level, const json& o)
{
    const auto& z = cx.space(level);
    auto p = cx.params(z);
    std::string mode = opt<std::string>(o, "truncation", exterior_ok(z, p) ? "exterior" : "dirichlet");
    Truncation t = mode == "exterior" ? Truncation::exterior : Truncation::dirichlet;
    if (mode != "exterior" && mode != "dirichlet")
        throw domain_error("green_slope truncation must be exterior or dirichlet");
    const auto& op = cx.op(level, t);
    double R = z.truncation_radius;
    double lo = opt(o, "fit_lo", t == Truncation::exterior ? R / 6 : R / 32);
    double hi = opt(o, "fit_hi", t == Truncation::exterior ? R / 2 : R / 4);
    auto g = green_column(op, OperatorKind::schrodinger, z.basepoint);
    auto dist = space_distances(z, z.basepoint);
    std::vector<double> x, y;
    std::ostringstream csv;
    csv.precision(17);
    csv << "vertex,distance,green\n";
    for (int v = 0; v < z.size(); ++v)
        if (dist[v] >= lo && dist[v] <= hi && g.values[v] > 0.0) {
            x.push_back(dist[v]);
            y.push_back(g.values[v]);
            csv << v << ',' << dist[v] << ',' << g.values[v] << '\n';
        }
    double expected = opt(o, "expected_slope", 2.0 - z.dim());
    double tol = opt(o, "slope_tol", 0.25);
    Outcome out;
    out.csv = csv.str();
    out.report["truncation"] = mode;
    out.report["fit_window"] = {lo, hi};
    out.report["expected_slope"] = expected;
    out.report["tolerance"] = tol;
    out.report["solve_residual"] = g.residual;
    if (x.size() < 2) {
        out.verdict = Verdict::inconclusive;
        out.note = "fewer than two samples in the fit window";
        return out;
    }
    auto f = log_log_fit(x, y);
    out.report["slope"] = f.slope;
    out.report["samples"] = x.size();
    out.verdict = std::abs(f.slope - expected) <= tol ? Verdict::pass : Verdict::fail;
    return out;
}

std::vector<int> sources_for(Context& cx, const QacSpace& z, const json& o)
{
    std::vector<int> s{z.basepoint};
    int per = opt(o, "per_stratum", 0);
    if (per > 0)
        s = stratified_centers(z, per, cx.manifest().seed);
    return s;
}

Outcome green_integral(Context& cx, double level, const json& o)
{
    const auto& z = cx.space(level);
    GreenIntegralOptions gi;
    gi.partners = opt(o, "partners", gi.partners);
    gi.max_fraction = opt(o, "max_fraction", gi.max_fraction);
    gi.tol = cx.manifest().tol;
    auto r = verify_green_integral(cx.op(level), sources_for(cx, z, o), gi);
    Outcome out;
    out.report = parse_report(r);
    out.csv = report_csv(r);
    out.verdict = r.verdict;
    out.note = r.note;
    return out;
}

Outcome gfe(Context& cx, double level, const json& o)
{
    const auto& z = cx.space(level);
    auto sources = sources_for(cx, z, o);
    const auto& m = cx.manifest();
    if (m.probe_w1)
        sources = {place_probe(z, *m.probe_w1, m.probe_rho.value_or(0.0))};
    GfeOptions g;
    g.c = opt(o, "c", g.c);
    g.exponent_tol = opt(o, "exponent_tol", g.exponent_tol);
    g.fit_decades = opt(o, "fit_decades", g.fit_decades);
    g.tol = m.tol;
    auto r = verify_gfe_cases(cx.op(level), sources, g);
    Outcome out;
    out.report["sources"] = sources;
    out.report["case_far"] = parse_report(r.case_far);
    out.report["case_near"] = parse_report(r.case_near);
    out.report["case_remote"] = parse_report(r.case_remote);
    out.report["bands"] = ojson::array();
    std::ostringstream csv;
    csv.precision(17);
    csv << "source,band,index,lo,hi,measured,predicted,samples,passed\n";
    for (const auto& b : r.bands) {
        out.report["bands"].push_back({{"source", b.source},
                                       {"index", b.index},
                                       {"measured", b.measured},
                                       {"predicted", b.predicted},
                                       {"passed", b.passed}});
        csv << b.source << ',' << b.band << ',' << b.index << ',' << b.lo << ',' << b.hi << ',' << b.measured << ','
            << b.predicted << ',' << b.n << ',' << b.passed << '\n';
    }
    out.csv = csv.str();
    out.verdict = r.verdict;
    out.note = r.note;
    return out;
}

std::vector<double> tau_option(const json& o, const WindowBox& box)
{
    if (o.contains("tau"))
        return o.at("tau").get<std::vector<double>>();
    std::vector<double> t;
    for (size_t i = 0; i < box.tau_lo.size(); ++i)
        t.push_back(0.5 * (box.tau_lo[i] + box.tau_hi[i]));
    return t;
}

Outcome schur(Context& cx, const json& o)
{
    auto ladder = cx.ladder();
    const auto& z = *ladder.front()->space;
    auto box = predicted_window(z, ladder.front()->params);
    double delta = opt(o, "delta", 0.5 * (box.delta_lo + box.delta_hi));
    auto tau = tau_option(o, box);
    auto r = schur_bound_check(ladder, delta, tau);
    Outcome out;
    out.report["delta"] = delta;
    out.report["tau"] = tau;
    out.report["alpha"] = r.alpha;
    out.report["beta"] = r.beta;
    if (!r.failed_condition.empty())
        out.report["failed_condition"] = r.failed_condition;
    out.report["sup_ratio"] = r.sup_ratio;
    out.report["growth"] = r.growth;
    std::ostringstream csv;
    csv.precision(17);
    csv << "R_max,sup_ratio\n";
    for (size_t i = 0; i < r.radii.size(); ++i)
        csv << r.radii[i] << ',' << r.sup_ratio[i] << '\n';
    out.csv = csv.str();
    out.verdict = r.verdict;
    out.note = r.note;
    return out;
}

Outcome window(Context& cx, const json& o)
{
    auto ladder = cx.ladder();
    const auto& z = *ladder.front()->space;
    auto grid = default_window_grid(z, ladder.front()->params);
    grid.cross = opt(o, "cross", grid.cross);
    grid.delta_step = opt(o, "delta_step", grid.delta_step);
    grid.tau_step = opt(o, "tau_step", grid.tau_step);
    grid.power_tol = opt(o, "power_tol", grid.power_tol);
    auto s = window_scan(ladder, grid);
    Outcome out;
    out.report["predicted"] = {{"delta", {s.predicted.delta_lo, s.predicted.delta_hi}},
                               {"tau_lo", s.predicted.tau_lo},
                               {"tau_hi", s.predicted.tau_hi}};
    auto edge = [](double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); };
    out.report["measured"] = {{"delta_lo", edge(s.delta_lo)},
                              {"delta_hi", edge(s.delta_hi)},
                              {"tau_lo", edge(s.tau_lo)},
                              {"tau_hi", edge(s.tau_hi)}};
    out.report["interior_bounded"] = s.interior_ok;
    out.report["exterior_unbounded"] = s.exterior_ok;
    out.report["edges_within_cell"] = s.boundaries_ok;
    out.report["points"] = s.points.size();
    out.csv = window_csv(s);
    out.verdict = s.verdict;
    out.note = s.note;
    return out;
}

Outcome parametrix(Context& cx, double level, const json& o)
{
    const auto& z = cx.space(level);
    const auto& op = cx.op(level);
    Parametrix P(op, radial_cutoffs(z, opt(o, "r", 9.0), opt(o, "lambda", 3.0)));
    double R = z.truncation_radius;
    std::vector<double> tails{0.1 * R, 0.2 * R, 0.4 * R};
    if (o.contains("tail_radii"))
        tails = o.at("tail_radii").get<std::vector<double>>();
    auto r = verify_parametrix(P, tails, cx.manifest().seed);
    Outcome out;
    out.report["collar_size"] = r.collar_size;
    out.report["off_collar_remainder"] = r.off_collar_r1;
    out.report["off_support_right_remainder"] = r.off_support_r2;
    out.report["first_residual"] = r.first_residual;
    out.report["corrected_residual"] = r.corrected_residual;
    out.report["tail_norms"] = r.tail_norms;
    out.report["tail_decays"] = r.tail_decays;
    std::ostringstream csv;
    csv.precision(17);
    csv << "tail_radius,tail_norm\n";
    for (size_t i = 0; i < r.tail_radii.size(); ++i)
        csv << r.tail_radii[i] << ',' << r.tail_norms[i] << '\n';
    out.csv = csv.str();
    out.verdict = r.verdict;
    out.note = r.note;
    return out;
}

Outcome dispatch(Context& cx, const SuiteSpec& s)
{
    const json& o = s.options;
    const std::string& n = s.name;
    if (n == "anchored_volume")
        return per_level(cx, o, anchored_volume);
    if (n == "doubling")
        return doubling(cx, o);
    if (n == "poincare")
        return per_level(cx, o, poincare);
    if (n == "doob")
        return per_level(cx, o, doob);
    if (n == "heat_diagonal")
        return per_level(cx, o, heat_diagonal);
    if (n == "gaussian")
        return per_level(cx, o, gaussian);
    if (n == "domination")
        return per_level(cx, o, domination);
    if (n == "green_slope")
        return per_level(cx, o, green_slope);
    if (n == "green_integral")
        return per_level(cx, o, green_integral);
    if (n == "gfe")
        return per_level(cx, o, gfe);
    if (n == "schur")
        return schur(cx, o);
    if (n == "window")
        return window(cx, o);
    if (n == "parametrix")
        return per_level(cx, o, parametrix);
    throw domain_error("unknown suite: " + n);
}

}  // namespace

RunResult run_manifest(const ExperimentManifest& m, std::ostream& log)
{
    RunResult res;
    res.hash = manifest_hash(m);
    Context cx(m);
    for (double l : m.truncation_levels)
        cx.params(cx.space(l));

    // The Gaussian suite is gated on doubling and Poincare; missing ones run as dependencies.
    std::vector<std::pair<SuiteSpec, bool>> plan;
    std::set<std::string> listed;
    for (const auto& s : m.suites)
        listed.insert(s.name);
    for (const auto& s : m.suites) {
        if (s.name == "gaussian")
            for (const char* dep : {"doubling", "poincare"})
                if (!listed.count(dep)) {
                    plan.push_back({SuiteSpec{dep, false, json::object()}, true});
                    listed.insert(dep);
                }
        plan.push_back({s, false});
    }
    std::stable_sort(plan.begin(), plan.end(),
                     [](const auto& x, const auto& y) { return suite_rank(x.first.name) < suite_rank(y.first.name); });

    std::map<std::string, Verdict> verdicts;
    bool all_met = true, numerical = false;
    for (const auto& [spec, implicit] : plan) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        bool num_fail = false;
        std::string gate;
        if (spec.name == "gaussian")
            for (const char* dep : {"doubling", "poincare"})
                if (verdicts[dep] != Verdict::pass)
                    gate += std::string(gate.empty() ? "" : ", ") + dep + " " + to_string(verdicts[dep]);
        if (!gate.empty()) {
            o.verdict = Verdict::fail;
            o.note = "gated: " + gate;
        } else {
            try {
                o = dispatch(cx, spec);
            } catch (const precondition_error& e) {
                o = Outcome{};
                o.verdict = Verdict::fail;
                o.note = std::string("precondition: ") + e.what();
            } catch (const numerical_error& e) {
                o = Outcome{};
                o.verdict = Verdict::fail;
                o.note = std::string("numerical failure: ") + e.what();
                num_fail = true;
            }
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        verdicts[spec.name] = o.verdict;

        SuiteResult r;
        r.name = spec.name;
        r.negative_control = spec.negative_control;
        r.verdict = o.verdict;
        r.numerical_failure = num_fail;
        r.expectation_met = spec.negative_control ? o.verdict == Verdict::fail : passed(o.verdict);
        r.note = o.note;
        r.csv = o.csv;
        r.report["suite"] = spec.name;
        r.report["manifest_hash"] = res.hash;
        r.report["negative_control"] = spec.negative_control;
        r.report["dependency_only"] = implicit;
        r.report["verdict"] = to_string(o.verdict);
        r.report["expectation_met"] = r.expectation_met;
        if (!o.note.empty())
            r.report["note"] = o.note;
        r.report["options"] = ojson::parse(spec.options.dump());
        r.report["result"] = o.report;
        r.report["elapsed_s"] = secs;

        write_file(m.output / "reports" / (spec.name + ".json"), r.report.dump(2) + "\n");
        write_file(m.output / "data" / (spec.name + ".csv"), o.csv);
        log << (r.expectation_met ? "ok   " : "FAIL ") << spec.name << (spec.negative_control ? " (negative control)" : "")
            << (implicit ? " (dependency)" : "") << ": " << to_string(o.verdict);
        if (!o.note.empty())
            log << " - " << o.note;
        log << " [" << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << '\n';

        if (!implicit)
            all_met = all_met && r.expectation_met;
        numerical = numerical || num_fail;
        res.suites.push_back(std::move(r));
    }

    json lock = manifest_json(m);
    lock["manifest_hash"] = res.hash;
    write_file(m.output / "manifest.lock.json", lock.dump(2) + "\n");
    res.exit_code = numerical ? 3 : (all_met ? 0 : 1);
    return res;
}

}  // namespace qaclab
