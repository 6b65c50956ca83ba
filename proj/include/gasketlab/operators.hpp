#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "gasketlab/common.hpp"
#include "gasketlab/gasket.hpp"
#include "gasketlab/subordinators.hpp"

namespace gasketlab {

enum class BoundaryMode { Dirichlet, Reflected };

// Which side of the functional calculus the boundary condition is applied on.
// SubordinateThenKill kills the subordinate process (delete boundary rows and
// columns of Phi(H_reflected)); KillThenSubordinate applies phi to the
// spectrum of the Dirichlet walk generator.
enum class SubordinationOrder { SubordinateThenKill, KillThenSubordinate };

struct EigenSystem {
    Eigen::VectorXd lam;  // ascending
    Eigen::MatrixXd W;    // orthonormal in the symmetric gauge
};

struct Spectrum {
    Eigen::VectorXd eigenvalues;              // ascending with multiplicity
    std::optional<Eigen::MatrixXd> vectors;   // symmetric-gauge columns
};

inline constexpr int kDenseCap = 3300;

// Walk generator H = kappa 5^n (I - P) on a gasket graph, symmetrized in the
// mass inner product as D^{1/2} H D^{-1/2}. The 5^n clock realizes the
// walk-dimension time scaling (2^n)^{d_w} = 5^n; kappa shifts absolute time
// units only and cancels in every exponent-level check.
class DiscreteGenerator {
public:
    DiscreteGenerator(const GasketGraph& g, BoundaryMode mode, double kappa = 1.0)
        : g_(&g), mode_(mode), kappa_(kappa) {
        const int V = static_cast<int>(g.vertex_count());
        vidx_.assign(V, -1);
        for (int v = 0; v < V; ++v) {
            if (mode == BoundaryMode::Dirichlet && g.is_boundary(v)) continue;
            vidx_[v] = static_cast<int>(verts_.size());
            verts_.push_back(v);
        }
        assemble();
    }

    const GasketGraph& graph() const { return *g_; }
    BoundaryMode mode() const { return mode_; }
    double kappa() const { return kappa_; }
    int dim() const { return static_cast<int>(verts_.size()); }
    double time_scale() const { return kappa_ * pow5(g_->resolution_n()); }

    const std::vector<int>& vertices() const { return verts_; }
    int index_of(int graph_vertex) const { return vidx_[graph_vertex]; }
    double mass(int mi) const { return g_->vertex_mass(verts_[mi]); }
    double sqrt_mass(int mi) const { return std::sqrt(mass(mi)); }

    const Eigen::SparseMatrix<double>& matrix() const { return H_; }

    const EigenSystem& eigensystem() const {
        std::lock_guard<std::mutex> lk(mu_);
        if (!eig_) {
            if (dim() > kDenseCap)
                throw capacity_error("generator: dimension above dense cap");
            Eigen::MatrixXd Hd(H_);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hd);
            if (es.info() != Eigen::Success)
                throw solver_error("generator: dense eigensolve failed");
            eig_ = EigenSystem{es.eigenvalues(), es.eigenvectors()};
        }
        return *eig_;
    }

    // Heat kernel g(t,x,y) with respect to the vertex masses, indexed in
    // matrix order: g = D^{-1/2} W e^{-t L} W^T D^{-1/2}.
    Eigen::MatrixXd heat_kernel(double t) const {
        if (t <= 0) throw std::invalid_argument("heat_kernel: t > 0 required");
        return kernel_of([&](double l) { return std::exp(-t * l); });
    }

    template <class F>
    Eigen::MatrixXd kernel_of(F&& f) const {
        const auto& es = eigensystem();
        Eigen::VectorXd w = es.lam.unaryExpr([&](double l) { return f(l); });
        Eigen::MatrixXd K = es.W * w.asDiagonal() * es.W.transpose();
        for (int i = 0; i < dim(); ++i) {
            K.row(i) /= sqrt_mass(i);
            K.col(i) /= sqrt_mass(i);
        }
        return K;
    }

    // Law of the embedded walk after m steps from matrix index xi: the
    // transition row of P^m, plus killed mass in Dirichlet mode.
    Eigen::VectorXd chain_row(int xi, long m) const {
        const auto& es = eigensystem();
        const double scale = time_scale();
        Eigen::VectorXd w(es.lam.size());
        for (int k = 0; k < w.size(); ++k)
            w[k] = std::pow(1.0 - es.lam[k] / scale, static_cast<double>(m));
        Eigen::VectorXd row = es.W * (w.asDiagonal() * (es.W.row(xi).transpose()));
        for (int j = 0; j < row.size(); ++j) {
            row[j] *= sqrt_mass(j) / sqrt_mass(xi);
            if (row[j] < 0) row[j] = 0;  // float dust
        }
        return row;
    }

private:
    void assemble() {
        std::vector<Eigen::Triplet<double>> trip;
        const double scale = time_scale();
        for (int mi = 0; mi < dim(); ++mi) {
            const int v = verts_[mi];
            trip.emplace_back(mi, mi, scale);
            const double dv = g_->degree(v);
            for (int w : g_->neighbors(v)) {
                int mj = vidx_[w];
                if (mj < 0) continue;  // killed neighbor
                const double dw_ = g_->degree(w);
                trip.emplace_back(mi, mj, -scale / std::sqrt(dv * dw_));
            }
        }
        H_.resize(dim(), dim());
        H_.setFromTriplets(trip.begin(), trip.end());
    }

    const GasketGraph* g_;
    BoundaryMode mode_;
    double kappa_;
    std::vector<int> verts_;
    std::vector<int> vidx_;
    Eigen::SparseMatrix<double> H_;
    mutable std::mutex mu_;
    mutable std::optional<EigenSystem> eig_;
};

// p(t,x,y) = sum_k e^{-t phi(l_k)} phi_k(x) phi_k(y); an exact identity with
// int g(u,x,y) eta_t(du) in this discrete model.
inline Eigen::MatrixXd subordinate_kernel(const DiscreteGenerator& gen,
                                          const LaplaceExponent& phi, double t) {
    if (t <= 0) throw std::invalid_argument("subordinate_kernel: t > 0 required");
    return gen.kernel_of([&](double l) { return std::exp(-t * phi(std::max(l, 0.0))); });
}

// Lowest-k eigenpairs by Lanczos with full reorthogonalization, run on
// sigma I - A so the wanted end is extremal. Apply(x, y) computes y = A x.
template <class Apply>
Spectrum lanczos_lowest(Apply&& apply, int dim, int k, double sigma,
                        double tol = 1e-9, int max_iter = 600,
                        std::uint64_t seed = 12345) {
    if (k >= dim) throw std::invalid_argument("lanczos: k must be below dim");
    const int m_max = std::min(dim, std::max(4 * k + 40, 80));
    Eigen::MatrixXd Q(dim, std::min(m_max + 1, dim));
    Eigen::VectorXd alpha(m_max), beta(m_max);
    Rng rng(seed, "lanczos");
    Eigen::VectorXd q(dim);
    for (int i = 0; i < dim; ++i) q[i] = rng.normal();
    q.normalize();
    Q.col(0) = q;
    Eigen::VectorXd Av(dim);
    int m = 0;
    double resid = 1e300;
    Eigen::VectorXd ritz;
    Eigen::MatrixXd S;
    for (int it = 0; it < m_max && it < max_iter; ++it) {
        apply(Q.col(it), Av);
        Eigen::VectorXd w = sigma * Q.col(it) - Av;  // B q
        if (it > 0) w -= beta[it - 1] * Q.col(it - 1);
        alpha[it] = Q.col(it).dot(w);
        w -= alpha[it] * Q.col(it);
        // full reorthogonalization, twice
        for (int pass = 0; pass < 2; ++pass)
            w -= Q.leftCols(it + 1) * (Q.leftCols(it + 1).transpose() * w);
        beta[it] = w.norm();
        m = it + 1;
        const bool last = (it + 1 == m_max) || beta[it] < 1e-13;
        if (m >= k + 1 && (m >= k + 2 || last)) {
            Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
            for (int i = 0; i < m; ++i) {
                T(i, i) = alpha[i];
                if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
            // largest k of B
            ritz = es.eigenvalues().tail(k).reverse();
            S = es.eigenvectors().rightCols(k).rowwise().reverse();
            resid = 0;
            for (int j = 0; j < k; ++j)
                resid = std::max(resid, std::abs(beta[m - 1] * S(m - 1, j)));
            const double scale = ritz.cwiseAbs().maxCoeff() + std::abs(sigma) + 1e-30;
            if (resid < tol * scale || last) break;
        }
        if (it + 1 < m_max) Q.col(it + 1) = w / beta[it];
    }
    if (!S.size())
        throw solver_error("lanczos: breakdown before Ritz extraction");
    {
        const double scale = ritz.cwiseAbs().maxCoeff() + std::abs(sigma) + 1e-30;
        if (resid >= tol * scale && m == m_max && m < dim)
            throw solver_error("lanczos: no convergence, residual " + std::to_string(resid));
    }
    Spectrum sp;
    sp.eigenvalues.resize(k);
    Eigen::MatrixXd vecs = Q.leftCols(m) * S;
    // lowest of A in ascending order
    sp.eigenvalues = (sigma - ritz.array()).matrix();
    sp.vectors = vecs;
    return sp;
}

// Schroedinger operator Phi(H) + V on a gasket graph. The base matrix
// Phi(H) is cached so replicate sweeps only pay for diag updates and the
// eigensolve.
class SchrodingerOperator {
public:
    SchrodingerOperator(const GasketGraph& g, const LaplaceExponent& phi,
                        BoundaryMode mode,
                        SubordinationOrder order = SubordinationOrder::SubordinateThenKill,
                        double kappa = 1.0, int dense_cap = kDenseCap)
        : g_(&g), phi_(phi), mode_(mode), order_(order), dense_cap_(dense_cap) {
        if (mode == BoundaryMode::Reflected ||
            order == SubordinationOrder::SubordinateThenKill) {
            refl_ = std::make_shared<DiscreteGenerator>(g, BoundaryMode::Reflected, kappa);
        }
        if (mode == BoundaryMode::Dirichlet) {
            diri_ = std::make_shared<DiscreteGenerator>(g, BoundaryMode::Dirichlet, kappa);
        }
        target_ = (mode == BoundaryMode::Dirichlet) ? diri_ : refl_;
        if (target_->dim() > dense_cap_)
            throw capacity_error("schrodinger: dimension " + std::to_string(target_->dim()) +
                                 " above dense cap");
        build_base();
    }

    const GasketGraph& graph() const { return *g_; }
    const LaplaceExponent& exponent() const { return phi_; }
    BoundaryMode mode() const { return mode_; }
    int dim() const { return target_->dim(); }
    const DiscreteGenerator& generator() const { return *target_; }
    const DiscreteGenerator& reflected_generator() const { return *refl_; }
    const Eigen::MatrixXd& base_matrix() const { return base_; }

    // V is given per graph vertex and must be nonnegative.
    Eigen::MatrixXd assemble(const Eigen::VectorXd& V_full) const {
        Eigen::MatrixXd A = base_;
        for (int mi = 0; mi < dim(); ++mi) {
            const double v = V_full[target_->vertices()[mi]];
            if (v < 0) throw std::invalid_argument("schrodinger: potential must be >= 0");
            A(mi, mi) += v;
        }
        return A;
    }

    Spectrum spectrum(const Eigen::VectorXd& V_full, bool with_vectors = false) const {
        Eigen::MatrixXd A = assemble(V_full);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            A, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success)
            throw solver_error("schrodinger: dense eigensolve failed");
        Spectrum sp;
        sp.eigenvalues = es.eigenvalues();
        if (with_vectors) sp.vectors = es.eigenvectors();
        return sp;
    }

    Spectrum free_spectrum(bool with_vectors = false) const {
        return spectrum(Eigen::VectorXd::Zero(g_->vertex_count()), with_vectors);
    }

    double lambda1(const Eigen::VectorXd& V_full) const {
        return spectrum(V_full).eigenvalues[0];
    }

    // Volume-normalized Laplace transform of the spectral measure,
    // (1/3^M) sum_n e^{-t lambda_n}. Requires the full spectrum.
    double trace_laplace(const Spectrum& sp, double t) const {
        if (sp.eigenvalues.size() != dim())
            throw std::invalid_argument("trace_laplace: full spectrum required");
        double s = 0;
        for (int i = 0; i < sp.eigenvalues.size(); ++i)
            s += std::exp(-t * sp.eigenvalues[i]);
        return s / static_cast<double>(ipow3(g_->scale_M()));
    }

private:
    void build_base() {
        if (order_ == SubordinationOrder::SubordinateThenKill) {
            const auto& es = refl_->eigensystem();
            Eigen::VectorXd w = es.lam.unaryExpr([&](double l) { return phi_(std::max(l, 0.0)); });
            Eigen::MatrixXd full = es.W * w.asDiagonal() * es.W.transpose();
            if (mode_ == BoundaryMode::Reflected) {
                base_ = std::move(full);
            } else {
                base_.resize(dim(), dim());
                const auto& verts = diri_->vertices();
                for (int i = 0; i < dim(); ++i)
                    for (int j = 0; j < dim(); ++j)
                        base_(i, j) = full(refl_->index_of(verts[i]), refl_->index_of(verts[j]));
            }
        } else {
            const auto& es = target_->eigensystem();
            Eigen::VectorXd w = es.lam.unaryExpr([&](double l) { return phi_(std::max(l, 0.0)); });
            base_ = es.W * w.asDiagonal() * es.W.transpose();
        }
    }

    const GasketGraph* g_;
    LaplaceExponent phi_;
    BoundaryMode mode_;
    SubordinationOrder order_;
    int dense_cap_;
    std::shared_ptr<DiscreteGenerator> refl_, diri_;
    std::shared_ptr<DiscreteGenerator> target_;
    Eigen::MatrixXd base_;
};

// Max relative deviation in g^M(t,x,y) = 2^{-Md} g^0(2^{-Md_w} t, x/2^M, y/2^M)
// over all vertex pairs, with both graphs built at matched cell resolution
// (identical combinatorics, vertex ids correspond under scaling).
inline double reflected_kernel_scaling_check(int M, int n, double t, double kappa = 1.0) {
    if (M < 0 || n < M) throw config_error("scaling check: need n >= M >= 0");
    auto gM = GasketGraph::build(M, n - M);
    auto g0 = GasketGraph::build(0, n);
    DiscreteGenerator genM(gM, BoundaryMode::Reflected, kappa);
    DiscreteGenerator gen0(g0, BoundaryMode::Reflected, kappa);
    if (genM.dim() != gen0.dim()) throw config_error("scaling check: unmatched resolutions");
    const double md = std::pow(2.0, -M * kDimension);     // 3^{-M}
    const double mdw = std::pow(2.0, -M * kWalkDimension);  // 5^{-M}
    Eigen::MatrixXd KM = genM.heat_kernel(t);
    Eigen::MatrixXd K0 = gen0.heat_kernel(mdw * t);
    double worst = 0;
    for (int i = 0; i < genM.dim(); ++i)
        for (int j = 0; j < genM.dim(); ++j)
            worst = std::max(worst, std::abs(KM(i, j) - md * K0(i, j)) / K0(i, j));
    return worst;
}

struct EigenScalingResult {
    double lhs = 0;        // lambda_1^M(phi, V)
    double rhs = 0;        // scaled lambda_1^0 comparison value at the given c
    double fitted_c = 0;   // largest c in (0,1] keeping lhs >= rhs(c)
};

// Dirichlet-form scaling comparison between G_M and G_0 on matched graphs.
// U1: equality with c = b. U2/U3: lhs >= c 2^{-M alpha1} lambda_1^0(alpha1, Vtil)
// with Vtil = (2^{M alpha1}/c) V(2^M x); reports the fitted constant.
inline EigenScalingResult eigen_scaling_check(const LaplaceExponent& phi,
                                              const Eigen::VectorXd& V_on_GM, int M,
                                              int n, double kappa = 1.0) {
    auto cert = classify(phi);
    if (cert.regime == Regime::None)
        throw std::invalid_argument("eigen scaling: regime (U1)-(U3) required");
    auto gM = GasketGraph::build(M, n - M);
    auto g0 = GasketGraph::build(0, n);
    if (V_on_GM.size() != gM.vertex_count())
        throw std::invalid_argument("eigen scaling: potential size mismatch");
    EigenScalingResult out;
    SchrodingerOperator opM(gM, phi, BoundaryMode::Reflected,
                            SubordinationOrder::SubordinateThenKill, kappa);
    out.lhs = opM.lambda1(V_on_GM);
    const double dw = kWalkDimension;
    if (cert.regime == Regime::U1) {
        const double b = phi.drift();
        auto phi0 = LaplaceExponent::pure_drift(1.0);
        SchrodingerOperator op0(g0, phi0, BoundaryMode::Reflected,
                                SubordinationOrder::SubordinateThenKill, kappa);
        Eigen::VectorXd Vtil = (std::pow(2.0, M * dw) / b) * V_on_GM;
        out.rhs = std::pow(2.0, -M * dw) * b * op0.lambda1(Vtil);
        out.fitted_c = b;
        return out;
    }
    const double a1 = cert.alpha1;
    auto phi_a1 = LaplaceExponent::stable(a1);
    SchrodingerOperator op0(g0, phi_a1, BoundaryMode::Reflected,
                            SubordinationOrder::SubordinateThenKill, kappa);
    auto rhs_at = [&](double c) {
        Eigen::VectorXd Vtil = (std::pow(2.0, M * a1) / c) * V_on_GM;
        return c * std::pow(2.0, -M * a1) * op0.lambda1(Vtil);
    };
    out.rhs = rhs_at(1.0);
    if (out.lhs >= out.rhs) {
        out.fitted_c = 1.0;
        return out;
    }
    double lo = 1e-6, hi = 1.0;
    for (int it = 0; it < 40; ++it) {
        double mid = 0.5 * (lo + hi);
        (out.lhs >= rhs_at(mid) ? lo : hi) = mid;
    }
    out.fitted_c = lo;
    return out;
}

}  // namespace gasketlab
