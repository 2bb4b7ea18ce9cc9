#include "qaclab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qaclab {

const char* to_string(OperatorKind k)
{
    switch (k) {
    case OperatorKind::plain: return "plain";
    case OperatorKind::mu: return "mu";
    case OperatorKind::schrodinger: return "schrodinger";
    default: return "bundle";
    }
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Standard normal draws from raw 64-bit output (Box-Muller), so the stream
// does not depend on the standard library's distribution code.
class Normal {
public:
    explicit Normal(std::uint64_t seed) : gen_(seed) {}
    double operator()()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
        double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

Eigen::MatrixXd random_rotation(int r, Normal& normal)
{
    Eigen::MatrixXd G(r, r);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
            G(i, j) = normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    Eigen::MatrixXd Q = qr.householderQ();
    Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < r; ++j)
        if (R(j, j) < 0.0)
            Q.col(j) = -Q.col(j);
    if (Q.determinant() < 0.0)
        Q.col(0) = -Q.col(0);
    return Q;
}

SpMat diagonal(const Vec& d)
{
    SpMat D(d.size(), d.size());
    D.reserve(Eigen::VectorXi::Constant(d.size(), 1));
    for (int i = 0; i < d.size(); ++i)
        D.insert(i, i) = d[i];
    D.makeCompressed();
    return D;
}

}  // namespace

BundleSpec trivial_bundle(const QacSpace& z, int rank, const std::vector<double>& potential)
{
    if (rank < 1)
        throw domain_error("bundle rank must be at least 1");
    if (static_cast<int>(potential.size()) != z.size())
        throw domain_error("potential has the wrong length");
    BundleSpec b;
    b.rank = rank;
    b.transport.assign(z.graph.edges.size(), Eigen::MatrixXd::Identity(rank, rank));
    for (int v = 0; v < z.size(); ++v)
        b.endomorphism.push_back(potential[v] * Eigen::MatrixXd::Identity(rank, rank));
    return b;
}

BundleSpec random_rotation_bundle(const QacSpace& z, int rank, const std::vector<double>& potential, double shift,
                                  std::uint64_t seed)
{
    BundleSpec b = trivial_bundle(z, rank, potential);
    Normal normal(seed);
    for (auto& U : b.transport)
        U = random_rotation(rank, normal);
    for (auto& R : b.endomorphism)
        R += shift * Eigen::MatrixXd::Identity(rank, rank);
    return b;
}

const SpMat& OperatorBundle::stiffness_of(OperatorKind k) const
{
    switch (k) {
    case OperatorKind::plain: return K;
    case OperatorKind::mu: return K_mu;
    case OperatorKind::schrodinger: return K_schrodinger;
    default:
        if (!bundle)
            throw domain_error("operator has no bundle");
        return K_bundle;
    }
}

const Vec& OperatorBundle::mass_of(OperatorKind k) const
{
    switch (k) {
    case OperatorKind::mu: return mass_mu;
    case OperatorKind::bundle:
        if (!bundle)
            throw domain_error("operator has no bundle");
        return mass_bundle;
    default: return mass;
    }
}

std::vector<double> exterior_leak(const QacSpace& z)
{
    if (z.distance_mode != DistanceMode::embedded)
        throw domain_error("exterior closure needs an embedded lattice");
    const auto& g = z.graph;
    const int N = z.size();
    const int n = z.dim();
    if (n <= 2)
        throw domain_error("exterior closure needs dimension above 2");
    std::vector<double> leak(N, 0.0);
    if (g.edges.empty())
        return leak;
    const double step = g.edges.front().length;
    const double c_edge = g.edges.front().conductance;
    const double face = std::pow(step, n - 1);
    const double R = z.truncation_radius;
    auto norm = [](const std::vector<double>& x) {
        double s = 0.0;
        for (double c : x)
            s += c * c;
        return std::sqrt(s);
    };
    for (int v = 0; v < N; ++v) {
        if (!g.boundary[v])
            continue;
        for (int d = 0; d < n; ++d)
            for (int s = -1; s <= 1; s += 2) {
                std::vector<double> q = g.pos[v];
                q[d] += s * step;
                double rq = norm(q);
                if (rq <= R + 1e-9 * step)
                    continue;
                double cosine = s * q[d] / rq;
                if (cosine <= 0.0)
                    continue;
                double c_out = (n - 2) * cosine * face / rq;
                leak[v] += 1.0 / (1.0 / c_edge + 1.0 / c_out);
            }
    }
    return leak;
}

OperatorBundle assemble(const QacSpace& z, const WeightParams& p, std::optional<BundleSpec> bundle,
                        bool require_domination, Truncation truncation)
{
    const auto& g = z.graph;
    const int N = z.size();
    OperatorBundle op;
    op.space = &z;
    op.params = p;
    op.truncation = truncation;
    std::vector<double> leak;
    if (truncation == Truncation::exterior) {
        bool flat = p.a == 0.0;
        for (double x : p.b)
            flat = flat && x == 0.0;
        if (!flat || bundle)
            throw domain_error("exterior closure is only set up for the unweighted scalar Laplacian");
        leak = exterior_leak(z);
    }
    op.h = doob_weight(z, p);
    for (double x : op.h)
        if (!(x > 0.0) || !std::isfinite(x))
            throw domain_error("Doob weight must be finite and positive");

    std::vector<double> Kh(N, 0.0);
    for (const auto& e : g.edges) {
        double d = e.conductance * (op.h[e.u] - op.h[e.v]);
        Kh[e.u] += d;
        Kh[e.v] -= d;
    }
    op.V.resize(N);
    for (int v = 0; v < N; ++v)
        op.V[v] = -Kh[v] / (g.measure[v] * op.h[v]);

    op.slot.assign(N, -1);
    for (int v = 0; v < N; ++v)
        if (!g.boundary[v] || truncation == Truncation::exterior) {
            op.slot[v] = static_cast<int>(op.interior.size());
            op.interior.push_back(v);
        }
    const int n = op.size();
    if (n == 0)
        throw domain_error("space has no interior vertices");

    op.mass.resize(n);
    op.mass_mu.resize(n);
    for (int i = 0; i < n; ++i) {
        int v = op.interior[i];
        op.mass[i] = g.measure[v];
        op.mass_mu[i] = op.h[v] * op.h[v] * g.measure[v];
    }

    Triplets tk, tmu;
    std::vector<double> dk(n, 0.0), dmu(n, 0.0);
    for (const auto& e : g.edges) {
        int a = op.slot[e.u], b = op.slot[e.v];
        double c = e.conductance;
        double cm = c * op.h[e.u] * op.h[e.v];
        if (a >= 0) {
            dk[a] += c;
            dmu[a] += cm;
        }
        if (b >= 0) {
            dk[b] += c;
            dmu[b] += cm;
        }
        if (a >= 0 && b >= 0) {
            tk.emplace_back(a, b, -c);
            tk.emplace_back(b, a, -c);
            tmu.emplace_back(a, b, -cm);
            tmu.emplace_back(b, a, -cm);
        }
    }
    for (int i = 0; i < n; ++i) {
        double l = leak.empty() ? 0.0 : leak[op.interior[i]];
        tk.emplace_back(i, i, dk[i] + l);
        tmu.emplace_back(i, i, dmu[i] + l);
    }
    op.K.resize(n, n);
    op.K.setFromTriplets(tk.begin(), tk.end());
    op.K_mu.resize(n, n);
    op.K_mu.setFromTriplets(tmu.begin(), tmu.end());

    Vec mV(n), V(n);
    for (int i = 0; i < n; ++i) {
        V[i] = op.V[op.interior[i]];
        mV[i] = op.mass[i] * V[i];
    }
    op.K_schrodinger = op.K + diagonal(mV);
    const Vec inv_mass = op.mass.cwiseInverse();
    const Vec inv_mass_mu = op.mass_mu.cwiseInverse();
    op.delta_plain = inv_mass.asDiagonal() * op.K;
    op.schrodinger = op.delta_plain + diagonal(V);
    op.delta_mu = inv_mass_mu.asDiagonal() * op.K_mu;

    if (bundle) {
        const int r = bundle->rank;
        if (r < 1 || bundle->transport.size() != g.edges.size() ||
            static_cast<int>(bundle->endomorphism.size()) != N)
            throw domain_error("bundle needs one transport per edge and one endomorphism per vertex");
        for (const auto& U : bundle->transport) {
            if (U.rows() != r || U.cols() != r)
                throw domain_error("bundle transport has the wrong shape");
            if (!(U.transpose() * U).isIdentity(1e-10))
                throw domain_error("bundle transport must be orthogonal");
        }
        for (const auto& R : bundle->endomorphism)
            if (R.rows() != r || R.cols() != r || !R.isApprox(R.transpose(), 1e-12))
                throw domain_error("bundle endomorphism must be symmetric");
        op.bundle = std::move(bundle);
        Triplets tc, tr;
        for (int k = 0; k < static_cast<int>(g.edges.size()); ++k) {
            const auto& e = g.edges[k];
            int a = op.slot[e.u], b = op.slot[e.v];
            const auto& U = op.bundle->transport[k];
            for (int i = 0; i < r; ++i) {
                if (a >= 0)
                    tc.emplace_back(a * r + i, a * r + i, e.conductance);
                if (b >= 0)
                    tc.emplace_back(b * r + i, b * r + i, e.conductance);
            }
            if (a < 0 || b < 0)
                continue;
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < r; ++j) {
                    tc.emplace_back(a * r + i, b * r + j, -e.conductance * U(i, j));
                    tc.emplace_back(b * r + j, a * r + i, -e.conductance * U(i, j));
                }
        }
        op.K_connection.resize(n * r, n * r);
        op.K_connection.setFromTriplets(tc.begin(), tc.end());
        for (int a = 0; a < n; ++a) {
            const auto& R = op.bundle->endomorphism[op.interior[a]];
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < r; ++j)
                    if (R(i, j) != 0.0)
                        tr.emplace_back(a * r + i, a * r + j, op.mass[a] * R(i, j));
        }
        SpMat MR(n * r, n * r);
        MR.setFromTriplets(tr.begin(), tr.end());
        op.K_bundle = op.K_connection + MR;
        op.mass_bundle.resize(n * r);
        for (int a = 0; a < n; ++a)
            op.mass_bundle.segment(a * r, r).setConstant(op.mass[a]);
        if (require_domination) {
            double m = domination_margin(op);
            if (m < -1e-12)
                throw precondition_error("R - V*Id is not positive semidefinite (smallest eigenvalue " +
                                         std::to_string(m) + ")");
        }
    }
    return op;
}

double domination_margin(const OperatorBundle& op)
{
    if (!op.bundle)
        throw domain_error("operator has no bundle");
    const int r = op.bundle->rank;
    double m = inf;
    for (int v : op.interior) {
        Eigen::MatrixXd B = op.bundle->endomorphism[v] - op.V[v] * Eigen::MatrixXd::Identity(r, r);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B, Eigen::EigenvaluesOnly);
        m = std::min(m, es.eigenvalues()[0]);
    }
    return m;
}

double doob_residual(const OperatorBundle& op, const Vec& f)
{
    const int n = op.size();
    if (f.size() != n)
        throw domain_error("doob_residual: f must be indexed by interior vertices");
    Vec h(n), V(n);
    for (int i = 0; i < n; ++i) {
        h[i] = op.h[op.interior[i]];
        V[i] = op.V[op.interior[i]];
    }
    Vec hf = h.cwiseProduct(f);
    Vec lhs = op.delta_mu * f;
    Vec rhs = (op.delta_plain * hf).cwiseQuotient(h) + V.cwiseProduct(f);
    SpMat absD = op.delta_plain.cwiseAbs();
    Vec scale = (absD * hf.cwiseAbs()).cwiseQuotient(h) + V.cwiseProduct(f).cwiseAbs();
    double s = scale.maxCoeff();
    if (s == 0.0)
        return 0.0;
    return (lhs - rhs).cwiseAbs().maxCoeff() / s;
}

DenseHeat::DenseHeat(const OperatorBundle& op, OperatorKind which)
{
    const SpMat& K = op.stiffness_of(which);
    const Vec& m = op.mass_of(which);
    if (K.rows() > 6000)
        throw domain_error("dense heat kernel limited to 6000 unknowns");
    isqrt_mass_ = m.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd S = isqrt_mass_.asDiagonal() * Eigen::MatrixXd(K) * isqrt_mass_.asDiagonal();
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success)
        throw numerical_error("dense eigendecomposition failed");
    lambda_ = es.eigenvalues();
    Q_ = es.eigenvectors();
}

Eigen::MatrixXd DenseHeat::kernel(double t) const
{
    Vec e = (-t * lambda_.array()).exp();
    Eigen::MatrixXd A = isqrt_mass_.asDiagonal() * Q_;
    return A * e.asDiagonal() * A.transpose();
}

Eigen::VectorXd DenseHeat::apply(double t, const Eigen::VectorXd& x) const
{
    Vec e = (-t * lambda_.array()).exp();
    Vec y = Q_.transpose() * x.cwiseQuotient(isqrt_mass_);
    return isqrt_mass_.asDiagonal() * (Q_ * e.cwiseProduct(y));
}

}  // namespace qaclab
