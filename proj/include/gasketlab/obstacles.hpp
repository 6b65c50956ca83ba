#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <map>
#include <cmath>
#include <optional>
#include <vector>

#include "gasketlab/operators.hpp"
#include "gasketlab/parallel.hpp"
#include "gasketlab/potentials.hpp"

namespace gasketlab {

// Lowest-k eigenvalues of a sparse symmetric PSD matrix by shift-invert
// Lanczos on (A + sigma I)^{-1}.
inline Spectrum lowest_eigen_sparse(const Eigen::SparseMatrix<double>& A, int k,
                                    double tol = 1e-9) {
    const int dim = static_cast<int>(A.rows());
    double diag_scale = 0;
    for (int i = 0; i < dim; ++i) diag_scale = std::max(diag_scale, A.coeff(i, i));
    const double sigma = std::max(1e-10 * diag_scale, 1e-12);
    Eigen::SparseMatrix<double> As = A;
    for (int i = 0; i < dim; ++i) As.coeffRef(i, i) += sigma;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(As);
    if (ldlt.info() != Eigen::Success)
        throw solver_error("sparse lowest: factorization failed");
    auto inv = lanczos_lowest(
        [&](const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& y) {
            y = -ldlt.solve(x);
        },
        dim, k, 0.0, tol);
    Spectrum out;
    out.eigenvalues.resize(k);
    for (int i = 0; i < k; ++i) out.eigenvalues[i] = -1.0 / inv.eigenvalues[i] - sigma;
    std::sort(out.eigenvalues.data(), out.eigenvalues.data() + k);
    return out;
}

// Enlargement-of-obstacles experiment on G_0: profile scaled to range a*eps
// with amplitude eps^{-gamma}, balls of radius b*eps around the cloud.
struct ObstacleSetup {
    int M_scale = 4;  // eps = 2^{-M_scale}
    double a = 0.25;  // base profile range; scaled range is a*eps
    int kappa = 1;    // b = 2^kappa (keeps the coarse triangles dyadic)
    double delta = 0.05;
    double K = 10.0;
    double R = 4.0;  // > 3
    double gamma = kWalkDimension;
    double nu = 1.0;  // cloud intensity is 2^{M d} nu = 3^{M_scale} nu
    double A = 1.0;   // (W4) amplitude of the base profile
    int n = 6;        // resolution; must resolve a*eps
    double r0 = 1.0;  // doubling validity radius
    std::uint64_t seed = 1;

    double b() const { return std::ldexp(1.0, kappa); }
    double eps() const { return std::ldexp(1.0, -M_scale); }
};

struct Classification {
    std::vector<bool> good;
    int n_good = 0, n_bad = 0;
    double bad_volume = 0;
    bool bad_volume_ok = true;  // union of bad balls has mass <= delta
    int scales_checked = 0;
};

struct CoarseDomains {
    std::vector<char> in_theta, in_uhat, in_uall;
    double m_theta = 0, m_uhat = 0, m_uall = 0;
    bool inclusions_ok = true;
    bool volume_gap_ok = true;  // m(Uhat) - m(U) <= delta
};

struct CompareOut {
    double lambda_b = 0, lambda_V = 0;
    double margin = 0;  // lambda_V ^ K + delta - lambda_b ^ K
    Classification cls;
    std::size_t n_points = 0;
};

class ObstacleLab {
public:
    explicit ObstacleLab(const ObstacleSetup& s)
        : s_(s),
          g_(GasketGraph::build(0, s.n)),
          metric_(g_),
          refl_(g_, BoundaryMode::Reflected) {
        if (s.a * s.eps() < g_.cell_side())
            throw config_error("obstacles: resolution too coarse for a*eps");
        if (s.R <= 3.0) throw config_error("obstacles: need R > 3");
        if (s.kappa - s.M_scale + s.n < 0)
            throw config_error("obstacles: coarse triangles below the lattice");
        wspec_ = ProfileSpec::indicator(s.A, s.a).rescaled(s.M_scale, s.gamma);
        W_.emplace(g_, metric_, wspec_);
        Cd_ = doubling_constant();
        if (s.gamma < kWalkDimension - 1e-12) {
            const auto& es = refl_.eigensystem();
            Eigen::VectorXd w = es.lam.unaryExpr([&](double l) {
                return std::pow(std::max(l, 0.0), s_.gamma / kWalkDimension);
            });
            dense_base_ = es.W * w.asDiagonal() * es.W.transpose();
        }
    }

    const GasketGraph& graph() const { return g_; }
    MetricOracle& metric() { return metric_; }
    const ObstacleSetup& setup() const { return s_; }
    double doubling() const { return Cd_; }
    int ball_hops() const {
        return static_cast<int>(std::llround(s_.b() * s_.eps() * ipow2(s_.n)));
    }

    PoissonConfiguration sample_points(std::uint64_t replicate) const {
        Rng rng(s_.seed, "obstacle-cloud", replicate);
        PoissonConfiguration c;
        c.nu = s_.nu;
        c.host_m = 0;
        const std::int64_t ncells = g_.cell_count_total();
        auto n_points =
            rng.poisson(s_.nu * static_cast<double>(ipow3(s_.M_scale)));
        for (std::uint64_t i = 0; i < n_points; ++i) {
            auto cell = static_cast<std::int64_t>(rng.below(ncells));
            c.cells.push_back(cell);
            c.anchors.push_back(g_.cell_anchor_vertex(cell));
        }
        return c;
    }

    // Good points: every ball C = B(x_i, 10 b eps R^l) with radius below r0
    // is delta/C_d covered by the union of obstacle balls. Uses truncated
    // BFS per point so large sweeps stay memory-flat.
    Classification classify(const PoissonConfiguration& cloud) const {
        Classification cls;
        const int N = static_cast<int>(cloud.anchors.size());
        cls.good.assign(N, true);
        auto union_dist = multi_source_hops(cloud.anchors);
        const int bhops = ball_hops();
        const double step = g_.cell_side();
        double max_radius = 0;
        for (int l = 0;; ++l) {
            const double radius = 10.0 * s_.b() * s_.eps() * std::pow(s_.R, l);
            if (radius >= s_.r0) break;
            max_radius = radius;
            cls.scales_checked = l + 1;
        }
        const int max_hops = static_cast<int>(std::floor(max_radius / step + 1e-9));
        std::vector<int> dist(g_.vertex_count(), -1);
        std::vector<int> touched;
        for (int i = 0; i < N; ++i) {
            if (max_hops <= 0) break;  // no scale below r0: trivially all good
            truncated_bfs(cloud.anchors[i], max_hops, dist, touched);
            for (int l = 0;; ++l) {
                const double radius = 10.0 * s_.b() * s_.eps() * std::pow(s_.R, l);
                if (radius >= s_.r0) break;
                double mC = 0, mUC = 0;
                for (int v : touched) {
                    if (dist[v] * step > radius + 1e-12) continue;
                    const double mv = g_.vertex_mass(v);
                    mC += mv;
                    if (union_dist[v] <= bhops) mUC += mv;
                }
                if (mUC < (s_.delta / Cd_) * mC - 1e-15) {
                    cls.good[i] = false;
                    break;
                }
            }
            for (int v : touched) dist[v] = -1;
            touched.clear();
        }
        for (int i = 0; i < N; ++i) (cls.good[i] ? cls.n_good : cls.n_bad)++;
        std::vector<int> bad_anchors;
        for (int i = 0; i < N; ++i)
            if (!cls.good[i]) bad_anchors.push_back(cloud.anchors[i]);
        if (!bad_anchors.empty()) {
            auto bd = multi_source_hops(bad_anchors);
            for (int v = 0; v < g_.vertex_count(); ++v)
                if (bd[v] <= bhops) cls.bad_volume += g_.vertex_mass(v);
        }
        cls.bad_volume_ok = cls.bad_volume <= s_.delta + 1e-12;
        return cls;
    }

    CoarseDomains coarse_domains(const PoissonConfiguration& cloud,
                                 const Classification& cls) const {
        CoarseDomains out;
        const int V = static_cast<int>(g_.vertex_count());
        out.in_theta.assign(V, 1);
        out.in_uhat.assign(V, 1);
        out.in_uall.assign(V, 1);
        const int bhops = ball_hops();
        std::vector<int> good_anchors;
        for (size_t i = 0; i < cloud.anchors.size(); ++i)
            if (cls.good[i]) good_anchors.push_back(cloud.anchors[i]);
        if (!good_anchors.empty()) {
            auto gd = multi_source_hops(good_anchors);
            for (int v = 0; v < V; ++v)
                if (gd[v] <= bhops) out.in_theta[v] = 0;
        }
        // coarse triangles of lattice side b*eps*2^n
        const std::int64_t side = ipow2(s_.kappa - s_.M_scale + s_.n);
        auto mark_triangles = [&](const std::vector<int>& anchors,
                                  std::vector<char>& domain) {
            for (int a : anchors) {
                auto [i, j] = g_.lattice(a);
                const std::int64_t cands[3][2] = {
                    {i - (i % side), j - (j % side)},  // containing aligned corner
                    {i - side, j},
                    {i, j - side}};
                // robust: test the three candidate triangles that could hold (i,j)
                for (auto& c : cands) {
                    std::int64_t I = c[0], J = c[1];
                    if (I < 0 || J < 0) continue;
                    I -= I % side;
                    J -= J % side;
                    if (i < I || j < J || (i - I) + (j - J) > side) continue;
                    if (g_.vertex_at(I, J) < 0) continue;
                    if (side >= 2 && g_.vertex_at(I + side / 2, J) < 0) continue;
                    for (int v = 0; v < V; ++v) {
                        auto [vi, vj] = g_.lattice(v);
                        if (vi >= I && vj >= J && (vi - I) + (vj - J) <= side)
                            domain[v] = 0;
                    }
                }
            }
        };
        std::vector<int> good_anchors2 = good_anchors, all_anchors = cloud.anchors;
        mark_triangles(good_anchors2, out.in_uhat);
        mark_triangles(all_anchors, out.in_uall);
        for (int v = 0; v < V; ++v) {
            const double mv = g_.vertex_mass(v);
            if (out.in_theta[v]) out.m_theta += mv;
            if (out.in_uhat[v]) out.m_uhat += mv;
            if (out.in_uall[v]) out.m_uall += mv;
            if (out.in_theta[v] && !out.in_uhat[v]) out.inclusions_ok = false;
            if (out.in_uall[v] && !out.in_uhat[v]) out.inclusions_ok = false;
        }
        out.volume_gap_ok = (out.m_uhat - out.m_uall) <= s_.delta + 1e-12;
        return out;
    }

    // lambda_1 of the gamma-generator killed on the good balls.
    double lambda1_killed_on_balls(const PoissonConfiguration& cloud,
                                   const Classification& cls) const {
        std::vector<int> good_anchors;
        for (size_t i = 0; i < cloud.anchors.size(); ++i)
            if (cls.good[i]) good_anchors.push_back(cloud.anchors[i]);
        std::vector<char> keep(g_.vertex_count(), 1);
        if (!good_anchors.empty()) {
            auto gd = multi_source_hops(good_anchors);
            for (int v = 0; v < g_.vertex_count(); ++v)
                if (gd[v] <= ball_hops()) keep[v] = 0;
        }
        return lambda1_restricted(keep, Eigen::VectorXd());
    }

    // Potential evaluation via truncated BFS from each anchor (the scaled
    // profile has range a*eps, a few lattice hops).
    Eigen::VectorXd potential_from_anchors(const std::vector<int>& anchors) const {
        Eigen::VectorXd V = Eigen::VectorXd::Zero(g_.vertex_count());
        const double step = g_.cell_side();
        const double range = s_.a * s_.eps();
        const int max_hops = static_cast<int>(std::floor(range / step + 1e-9));
        std::map<int, int> multiplicity;
        for (int a : anchors) ++multiplicity[a];
        std::vector<int> dist(g_.vertex_count(), -1);
        std::vector<int> touched;
        for (auto [a, count] : multiplicity) {
            truncated_bfs(a, max_hops, dist, touched);
            for (int v : touched) V[v] += count * W_->eval_at(v, a, dist[v] * step);
            for (int v : touched) dist[v] = -1;
            touched.clear();
        }
        return V;
    }

    double lambda1_with_potential(const PoissonConfiguration& cloud) const {
        Eigen::VectorXd V = potential_from_anchors(cloud.anchors);
        std::vector<char> keep(g_.vertex_count(), 1);
        return lambda1_restricted(keep, V);
    }

    void truncated_bfs(int src, int max_hops, std::vector<int>& dist,
                       std::vector<int>& touched) const {
        dist[src] = 0;
        touched.push_back(src);
        size_t head = touched.size() - 1;
        while (head < touched.size()) {
            int u = touched[head++];
            if (dist[u] >= max_hops) continue;
            for (int w : g_.neighbors(u))
                if (dist[w] < 0) {
                    dist[w] = dist[u] + 1;
                    touched.push_back(w);
                }
        }
    }

    CompareOut compare_eigenvalues(std::uint64_t replicate) const {
        auto cloud = sample_points(replicate);
        CompareOut out;
        out.n_points = cloud.anchors.size();
        out.cls = classify(cloud);
        out.lambda_b = lambda1_killed_on_balls(cloud, out.cls);
        out.lambda_V = lambda1_with_potential(cloud);
        out.margin = std::min(out.lambda_V, s_.K) + s_.delta - std::min(out.lambda_b, s_.K);
        return out;
    }

    std::vector<int> multi_source_hops(const std::vector<int>& sources) const {
        std::vector<int> dist(g_.vertex_count(), 1 << 30);
        std::deque<int> q;
        for (int s : sources)
            if (dist[s] != 0) {
                dist[s] = 0;
                q.push_back(s);
            }
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            for (int w : g_.neighbors(u))
                if (dist[w] > dist[u] + 1) {
                    dist[w] = dist[u] + 1;
                    q.push_back(w);
                }
        }
        return dist;
    }

    // Principal eigenvalue of the gamma-generator restricted to kept vertices,
    // plus an optional potential. Sparse shift-invert for the diffusion,
    // dense functional calculus for a stable index.
    double lambda1_restricted(const std::vector<char>& keep,
                              const Eigen::VectorXd& V_full) const {
        std::vector<int> sub;
        for (int mi = 0; mi < refl_.dim(); ++mi)
            if (keep[refl_.vertices()[mi]]) sub.push_back(mi);
        if (sub.empty()) return std::numeric_limits<double>::infinity();
        const int m = static_cast<int>(sub.size());
        if (s_.gamma >= kWalkDimension - 1e-12) {
            const auto& H = refl_.matrix();
            std::vector<Eigen::Triplet<double>> trip;
            std::vector<int> inv(refl_.dim(), -1);
            for (int i = 0; i < m; ++i) inv[sub[i]] = i;
            for (int k = 0; k < H.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator it(H, k); it; ++it) {
                    int i = inv[it.row()], j = inv[it.col()];
                    if (i >= 0 && j >= 0) trip.emplace_back(i, j, it.value());
                }
            Eigen::SparseMatrix<double> A(m, m);
            A.setFromTriplets(trip.begin(), trip.end());
            if (V_full.size())
                for (int i = 0; i < m; ++i)
                    A.coeffRef(i, i) += V_full[refl_.vertices()[sub[i]]];
            if (m <= 400) {  // tiny blocks go dense
                Eigen::MatrixXd Ad(A);
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ad);
                return es.eigenvalues()[0];
            }
            return lowest_eigen_sparse(A, 1).eigenvalues[0];
        }
        Eigen::MatrixXd Ad(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) Ad(i, j) = dense_base_(sub[i], sub[j]);
        if (V_full.size())
            for (int i = 0; i < m; ++i) Ad(i, i) += V_full[refl_.vertices()[sub[i]]];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ad);
        if (es.info() != Eigen::Success) throw solver_error("obstacles: eigensolve failed");
        return es.eigenvalues()[0];
    }

    const BoundProfile& profile() const { return *W_; }
    const DiscreteGenerator& generator() const { return refl_; }
    const Eigen::MatrixXd& dense_base() const { return dense_base_; }

private:
    double doubling_constant() const {
        Rng rng(s_.seed, "doubling");
        double cd = 1.0;
        const double step = g_.cell_side();
        for (int it = 0; it < 40; ++it) {
            int x = static_cast<int>(rng.below(g_.vertex_count()));
            const auto& hops = metric_.hops_from(x);
            for (double r = 4 * step; r < s_.r0; r *= 2) {
                double m1 = 0, m3 = 0;
                for (int v = 0; v < g_.vertex_count(); ++v) {
                    double dist = hops[v] * step;
                    if (dist <= r + 1e-12) m1 += g_.vertex_mass(v);
                    if (dist <= r / 3.0 + 1e-12) m3 += g_.vertex_mass(v);
                }
                if (m3 > 0) cd = std::max(cd, m1 / m3);
            }
        }
        return cd;
    }

    ObstacleSetup s_;
    GasketGraph g_;
    mutable MetricOracle metric_;
    DiscreteGenerator refl_;
    ProfileSpec wspec_ = ProfileSpec::indicator(1.0, 0.25);
    std::optional<BoundProfile> W_;
    Eigen::MatrixXd dense_base_;
    double Cd_ = 1.0;
};

// Empirical report on the assumptions (P1)-(P6). The recipe constants tau_0
// and c_1 come from measured displacement and near-diagonal kernel constants,
// and depend on (a, A, b, gamma) only; the sweep checks they do not drift
// with eps.
struct ProbeReport {
    double c0 = 0;        // (P1) sup_x p(1,x,x)
    double c_disp = 0;    // displacement constant of the exit-time bound
    double c_near = 0;    // near-diagonal kernel lower constant
    double tau0 = 0;
    double c1 = 0;        // from the (P3) recipe
    double p2_max = 0;    // max sampled escape probability
    double p3_max_expected = 1.0;
    double p3_margin = 0;  // 1 - max expectation, the eps-stable constant
    bool p3_ok = false;    // expectation <= 1 - 2 c1
    double p4_phi_min = 0;
    double p5_c2 = 0;
    double p6_kappa = 0;  // overshoot tail exponent (0 for the diffusion)
    double p6_c3 = 0;
    double CKdelta = 0;
    // jump case: c3/(R^kappa - 1) <= C(K,delta)^{-1}/8. The comparison only
    // needs SOME sufficiently large R; R_needed reports that scale.
    bool r_condition_ok = true;
    double R_needed = 3.0;
    int m0 = 0;
    double D = 0;
};

namespace detail {

// Survival of the process killed outside the kept set by time s, from each
// kept vertex (mass-weighted row sums of the restricted semigroup).
inline Eigen::VectorXd killed_survival(const Eigen::MatrixXd& base,
                                       const std::vector<int>& sub,
                                       const DiscreteGenerator& gen, double s) {
    const int m = static_cast<int>(sub.size());
    Eigen::MatrixXd A(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) A(i, j) = base(sub[i], sub[j]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    Eigen::VectorXd em(m);
    for (int i = 0; i < m; ++i) em[i] = gen.sqrt_mass(sub[i]);
    Eigen::VectorXd coef = es.eigenvectors().transpose() * em;
    for (int i = 0; i < m; ++i) coef[i] *= std::exp(-s * es.eigenvalues()[i]);
    Eigen::VectorXd u = es.eigenvectors() * coef;
    for (int i = 0; i < m; ++i) u[i] /= gen.sqrt_mass(sub[i]);
    return u;
}

}  // namespace detail

inline ProbeReport probe_assumptions(const ObstacleSetup& s, int samples = 5) {
    ObstacleLab lab(s);
    const auto& g = lab.graph();
    auto& metric = lab.metric();
    const auto& gen = lab.generator();
    const bool diffusion = s.gamma >= kWalkDimension - 1e-12;
    const double gam = s.gamma;
    const double eps = s.eps(), b = s.b(), a = s.a, A = s.A;
    const double epsg = std::pow(eps, gam);

    // dense base operator Phi_gamma(H) (the diffusion uses H itself)
    Eigen::MatrixXd base;
    if (diffusion) {
        const auto& es = gen.eigensystem();
        base = es.W * es.lam.asDiagonal() * es.W.transpose();
    } else {
        base = lab.dense_base();
    }

    ProbeReport rep;
    {
        const auto& es = gen.eigensystem();
        double sup = 0;
        for (int i = 0; i < gen.dim(); ++i) {
            double diag = 0;
            for (int k = 0; k < es.lam.size(); ++k) {
                const double l = std::max(es.lam[k], 0.0);
                const double ph = diffusion ? l : std::pow(l, gam / kWalkDimension);
                diag += std::exp(-ph) * es.W(i, k) * es.W(i, k);
            }
            sup = std::max(sup, diag / gen.mass(i));
        }
        rep.c0 = sup;
    }
    rep.CKdelta = std::exp(s.K) * (1.0 + rep.c0 * (1.0 + s.K / s.delta));

    Rng rng(s.seed, "probes");
    auto sample_vertex = [&] { return static_cast<int>(rng.below(g.vertex_count())); };
    auto ball_sub = [&](int center, double radius) {
        std::vector<int> sub;
        const auto& hops = metric.hops_from(center);
        for (int mi = 0; mi < gen.dim(); ++mi)
            if (hops[gen.vertices()[mi]] * g.cell_side() <= radius + 1e-12)
                sub.push_back(mi);
        return sub;
    };

    // displacement constant: P_x[tau_{B(x, a eps/2)} < u eps^gamma] <= c u / a^gamma
    {
        double c = 0;
        for (int it = 0; it < samples; ++it) {
            int x = sample_vertex();
            auto sub = ball_sub(x, 0.5 * a * eps);
            if (sub.size() < 2) continue;
            int xi_local = -1;
            for (size_t i = 0; i < sub.size(); ++i)
                if (gen.vertices()[sub[i]] == x) xi_local = static_cast<int>(i);
            if (xi_local < 0) continue;
            for (double u : {0.05 * std::pow(0.5 * a, gam), 0.2 * std::pow(0.5 * a, gam)}) {
                auto surv = detail::killed_survival(base, sub, gen, u * epsg);
                double pexit = 1.0 - surv[xi_local];
                c = std::max(c, pexit * std::pow(a, gam) / u);
            }
        }
        rep.c_disp = std::max(c, 1e-3);
    }

    // near-diagonal kernel constant: p(u eps^gamma, x, z) >= c a^d-normalized form
    {
        double c2 = 1e300;
        const auto& es = gen.eigensystem();
        for (int it = 0; it < samples; ++it) {
            int y = sample_vertex();
            const auto& hops = metric.hops_from(y);
            for (int z = 0; z < g.vertex_count(); z += 17) {
                double dist = hops[z] * g.cell_side();
                if (dist > (b + 0.5 * a) * eps) continue;
                const double u = 0.5 * std::pow(b + 0.5 * a, gam);
                double ker = 0;
                int yi = gen.index_of(y), zi = gen.index_of(z);
                for (int k = 0; k < es.lam.size(); ++k) {
                    const double l = std::max(es.lam[k], 0.0);
                    const double ph = diffusion ? l : std::pow(l, gam / kWalkDimension);
                    ker += std::exp(-u * epsg * ph) * es.W(yi, k) * es.W(zi, k);
                }
                ker /= gen.sqrt_mass(yi) * gen.sqrt_mass(zi);
                // scale-free comparison shape at distance <= (b + a/2) eps
                const double shape =
                    std::pow(eps, -kDimension) *
                    std::min(u / std::pow(b + 0.5 * a, kDimension + gam),
                             std::pow(u, -kDimension / gam));
                if (ker > 0 && shape > 0) c2 = std::min(c2, ker / shape);
            }
        }
        rep.c_near = (c2 < 1e300) ? c2 : 1e-3;
    }

    // recipe for tau0 and c1 (scale-free units)
    {
        const double t0p = std::pow(a, gam) / (2.0 * rep.c_disp);
        const double t0pp = std::pow(b + 0.5 * a, gam);
        const double t0ppp = std::pow(b + 0.5 * a, kDimension + gam) /
                             (std::max(rep.c_near, 1e-12) * std::pow(a, kDimension));
        double tstar = std::min({t0p, t0pp, t0ppp});
        double p = std::clamp(rep.c_near * tstar * std::pow(a, kDimension) /
                                  std::pow(b + 0.5 * a, kDimension + gam),
                              1e-6, 0.999);
        double bound = 0.5 * p * (std::exp(-A * tstar / 2.0) + 1.0) + (1.0 - p);
        rep.tau0 = 2.0 * tstar;
        rep.c1 = 0.5 * (1.0 - bound);
    }

    // (P2): escape from the big ball within tau0 eps^gamma / 2
    {
        const double radius = 10.0 * (s.R - 2.0) * b * eps;
        double worst = 0;
        for (int it = 0; it < samples; ++it) {
            int y = sample_vertex();
            auto sub = ball_sub(y, radius);
            if (static_cast<int>(sub.size()) == gen.dim()) continue;  // whole space
            const auto& hops = metric.hops_from(y);
            auto surv = detail::killed_survival(base, sub, gen, 0.5 * rep.tau0 * epsg);
            for (size_t i = 0; i < sub.size(); ++i) {
                if (hops[gen.vertices()[sub[i]]] * g.cell_side() > b * eps) continue;
                worst = std::max(worst, 1.0 - surv[i]);
            }
        }
        rep.p2_max = worst;
    }

    // (P3): Feynman-Kac expectation against one scaled obstacle. Bounded
    // from above by the ball-killed expectation plus the escape probability,
    // both computed on a local block.
    {
        double worst = 0;
        const double s_fk = 0.5 * rep.tau0 * epsg;
        for (int it = 0; it < samples; ++it) {
            int y = sample_vertex();
            const double rho = std::min(8.0 * b * eps, 0.9);
            auto sub = ball_sub(y, rho);
            const int m = static_cast<int>(sub.size());
            Eigen::MatrixXd Afk(m, m), Afree(m, m);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) {
                    Afree(i, j) = base(sub[i], sub[j]);
                    Afk(i, j) = Afree(i, j);
                }
            const auto& hops = metric.hops_from(y);
            for (int i = 0; i < m; ++i) {
                const int v = gen.vertices()[sub[i]];
                Afk(i, i) += lab.profile().eval_at(v, y, hops[v] * g.cell_side());
            }
            auto expm_rowsum = [&](const Eigen::MatrixXd& A) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
                Eigen::VectorXd em(m);
                for (int i = 0; i < m; ++i) em[i] = gen.sqrt_mass(sub[i]);
                Eigen::VectorXd coef = es.eigenvectors().transpose() * em;
                for (int i = 0; i < m; ++i) coef[i] *= std::exp(-s_fk * es.eigenvalues()[i]);
                Eigen::VectorXd u = es.eigenvectors() * coef;
                for (int i = 0; i < m; ++i) u[i] /= gen.sqrt_mass(sub[i]);
                return u;
            };
            auto ufk = expm_rowsum(Afk);
            auto ufree = expm_rowsum(Afree);
            for (int i = 0; i < m; ++i) {
                if (hops[gen.vertices()[sub[i]]] * g.cell_side() > b * eps) continue;
                const double escape = std::max(0.0, 1.0 - ufree[i]);
                worst = std::max(worst, ufk[i] + escape);
            }
        }
        rep.p3_max_expected = worst;
        rep.p3_margin = 1.0 - worst;
        rep.p3_ok = worst <= 1.0 - 2.0 * rep.c1 + 1e-9;
    }

    // (P4): hitting a small ball quickly from moderate distance
    {
        double phimin = 1e300;
        for (int it = 0; it < samples; ++it) {
            int y = sample_vertex();
            auto inside = ball_sub(y, b * eps);
            std::vector<char> mark(gen.dim(), 0);
            for (int i : inside) mark[i] = 1;
            std::vector<int> sub;
            for (int mi = 0; mi < gen.dim(); ++mi)
                if (!mark[mi]) sub.push_back(mi);
            auto surv = detail::killed_survival(base, sub, gen, 0.5 * rep.tau0 * epsg);
            const auto& hops = metric.hops_from(y);
            for (size_t i = 0; i < sub.size(); ++i) {
                double dist = hops[gen.vertices()[sub[i]]] * g.cell_side();
                if (dist > 2.0 * b * eps && dist <= 4.0 * b * eps)
                    phimin = std::min(phimin, 1.0 - surv[i]);
            }
        }
        rep.p4_phi_min = (phimin < 1e300) ? phimin : 0.0;
    }

    // (P5): hitting a dense compact set before leaving the R-fold ball,
    // via the harmonic system of the uniformized chain
    {
        double c2min = 1e300;
        for (int it = 0; it < samples; ++it) {
            int y = sample_vertex();
            const double beta = std::min(10.0 * b * eps, s.r0 / s.R);
            // target: the concentric ball holding at least delta/C_d of the mass
            const auto& hops = metric.hops_from(y);
            double mfull = 0;
            for (int v = 0; v < g.vertex_count(); ++v)
                if (hops[v] * g.cell_side() <= beta) mfull += g.vertex_mass(v);
            double q = beta;
            for (double cand = beta / 8; cand <= beta; cand *= 2) {
                double mc = 0;
                for (int v = 0; v < g.vertex_count(); ++v)
                    if (hops[v] * g.cell_side() <= cand) mc += g.vertex_mass(v);
                if (mc >= (s.delta / lab.doubling()) * mfull) {
                    q = cand;
                    break;
                }
            }
            // states: E (absorb win), outside B(y, R beta) (absorb lose)
            std::vector<int> interior;
            std::vector<char> target(gen.dim(), 0), outside(gen.dim(), 0);
            for (int mi = 0; mi < gen.dim(); ++mi) {
                double dist = hops[gen.vertices()[mi]] * g.cell_side();
                if (dist <= q + 1e-12) target[mi] = 1;
                else if (dist > s.R * beta) outside[mi] = 1;
                else interior.push_back(mi);
            }
            if (interior.empty()) continue;
            const int m = static_cast<int>(interior.size());
            // uniformized chain in the walk gauge
            double Lam = 0;
            for (int i = 0; i < gen.dim(); ++i) Lam = std::max(Lam, base(i, i));
            Eigen::MatrixXd Pm(m, m);
            Eigen::VectorXd hitr = Eigen::VectorXd::Zero(m);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < m; ++j) {
                    double val = (i == j ? 1.0 : 0.0) - base(interior[i], interior[j]) / Lam;
                    // walk gauge: D^{-1/2} T D^{1/2}
                    val *= gen.sqrt_mass(interior[j]) / gen.sqrt_mass(interior[i]);
                    Pm(i, j) = val;
                }
                for (int mj = 0; mj < gen.dim(); ++mj) {
                    if (!target[mj]) continue;
                    double val = (interior[i] == mj ? 1.0 : 0.0) - base(interior[i], mj) / Lam;
                    val *= gen.sqrt_mass(mj) / gen.sqrt_mass(interior[i]);
                    hitr[i] += val;
                }
            }
            Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(m, m) - Pm;
            Eigen::VectorXd h = sys.partialPivLu().solve(hitr);
            for (int i = 0; i < m; ++i) {
                double dist = hops[gen.vertices()[interior[i]]] * g.cell_side();
                if (dist <= beta) c2min = std::min(c2min, h[i]);
            }
        }
        rep.p5_c2 = (c2min < 1e300) ? std::clamp(c2min, 0.0, 1.0) : 0.0;
    }

    // (P6): overshoot of the exit position (jump case only). The probe radii
    // sit near the lattice scale so the target shells stay inside G_0.
    if (!diffusion) {
        std::vector<double> lx, ly;
        double c3 = 0;
        for (int it = 0; it < samples; ++it) {
            int y = sample_vertex();
            const double r = 2.0 * g.cell_side();
            auto sub = ball_sub(y, r);
            if (sub.size() < 3 || static_cast<int>(sub.size()) == gen.dim()) continue;
            const int m = static_cast<int>(sub.size());
            double Lam = 0;
            for (int i = 0; i < gen.dim(); ++i) Lam = std::max(Lam, base(i, i));
            Eigen::MatrixXd Pm(m, m);
            std::vector<char> inside(gen.dim(), 0);
            for (int i : sub) inside[i] = 1;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) {
                    double val = (i == j ? 1.0 : 0.0) - base(sub[i], sub[j]) / Lam;
                    val *= gen.sqrt_mass(sub[j]) / gen.sqrt_mass(sub[i]);
                    Pm(i, j) = val;
                }
            // exit mass beyond distance AR: h_A = (I-Q)^{-1} (row mass to far set)
            const auto& hops = metric.hops_from(y);
            int xi_local = -1;
            for (int i = 0; i < m; ++i)
                if (gen.vertices()[sub[i]] == y) xi_local = i;
            if (xi_local < 0) continue;
            Eigen::FullPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(m, m) - Pm);
            for (double Ar : {6.0 * r, 10.0 * r, 16.0 * r}) {
                if (Ar > 0.7) continue;
                Eigen::VectorXd far = Eigen::VectorXd::Zero(m);
                for (int i = 0; i < m; ++i) {
                    for (int mj = 0; mj < gen.dim(); ++mj) {
                        if (inside[mj]) continue;
                        if (hops[gen.vertices()[mj]] * g.cell_side() <= Ar) continue;
                        double val = -base(sub[i], mj) / Lam;
                        val *= gen.sqrt_mass(mj) / gen.sqrt_mass(sub[i]);
                        far[i] += val;
                    }
                }
                Eigen::VectorXd h = lu.solve(far);
                double pov = std::max(h[xi_local], 1e-300);
                lx.push_back(std::log(r / Ar));
                ly.push_back(std::log(pov));
                c3 = std::max(c3, pov / std::pow(r / Ar, 1.0));
            }
        }
        if (lx.size() >= 2) {
            double mx = 0, my = 0;
            for (size_t i = 0; i < lx.size(); ++i) { mx += lx[i]; my += ly[i]; }
            mx /= lx.size();
            my /= ly.size();
            double num = 0, den = 0;
            for (size_t i = 0; i < lx.size(); ++i) {
                num += (lx[i] - mx) * (ly[i] - my);
                den += (lx[i] - mx) * (lx[i] - mx);
            }
            rep.p6_kappa = num / den;
            double worst = 0;
            for (size_t i = 0; i < lx.size(); ++i)
                worst = std::max(worst, std::exp(ly[i] - rep.p6_kappa * lx[i]));
            rep.p6_c3 = worst;
            rep.R_needed = std::max(
                3.0 + 1e-6,
                std::pow(1.0 + 8.0 * rep.p6_c3 * rep.CKdelta, 1.0 / rep.p6_kappa));
            rep.r_condition_ok = s.R >= rep.R_needed;
        }
    }

    // m0 and D, logged for sanity
    {
        const double target = 0.125 / rep.CKdelta;
        const double q = std::clamp(1.0 - rep.c1 * rep.p5_c2, 1e-9, 1.0 - 1e-12);
        if (diffusion) {
            rep.m0 = static_cast<int>(std::ceil(std::log(target) / std::log(q)));
        } else {
            double m0r = std::exp2(std::log(target) / std::log(q));
            rep.m0 = static_cast<int>(std::ceil(std::max(1.0, m0r)));
        }
        rep.m0 = std::max(rep.m0, 1);
        rep.D = 10.0 * s.b() * std::pow(s.R, std::min(rep.m0, 40));
    }
    return rep;
}

struct SweepResult {
    int configs = 0;
    int margin_ok = 0;
    int bad_volume_ok = 0;
    double ok_fraction = 0;
    std::vector<CompareOut> rows;
};

inline SweepResult obstacle_sweep(const ObstacleSetup& setup, int configs,
                                  int threads = 0) {
    ObstacleLab lab(setup);
    SweepResult out;
    out.configs = configs;
    out.rows.resize(configs);
    parallel_for(configs, threads, [&](int c) {
        out.rows[c] = lab.compare_eigenvalues(static_cast<std::uint64_t>(c));
    });
    for (const auto& r : out.rows) {
        if (r.margin >= -1e-12) ++out.margin_ok;
        if (r.cls.bad_volume_ok) ++out.bad_volume_ok;
    }
    out.ok_fraction = double(out.margin_ok) / configs;
    return out;
}

}  // namespace gasketlab
