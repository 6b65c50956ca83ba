#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "gasketlab/common.hpp"
#include "gasketlab/gasket.hpp"
#include "gasketlab/rng.hpp"

namespace gasketlab {

struct DecayData {
    double theta = 0;
    double K = 0;
};

struct W4Data {
    double a0 = 0;
    double A = 0;
};

struct IndicatorSpec {
    double A = 1.0;
    double a0 = 0.25;
};

// W(d) = min(cap, K d^{-d-theta}); infinite range.
struct PolynomialSpec {
    double K = 1.0;
    double theta = 1.0;
    double cap = 64.0;
};

// Nonincreasing table over distances k*step; zero beyond the last entry.
struct TabulatedSpec {
    double step = 0.25;
    std::vector<double> values;
};

// W(x,y) = psi(pi_{M0}(y)) when x and y share a natural cell of size 2^{M0}.
// psi(z) = A + B * pos_x(z) / 2^{M0}, a bounded L^1 profile on G_{M0}.
struct CellSpec {
    int M0 = 0;
    double A = 1.0;
    double B = 0.0;
};

// Dyadic-shell profile: W = a_m on D_m(x) \ D_{m-1}(x), built from natural
// cells around the special vertex p_x.
struct DyadicSpec {
    std::vector<double> a;  // a_0 .. a_{cutoff}; zero beyond
};

class ProfileSpec {
public:
    using Variant = std::variant<IndicatorSpec, PolynomialSpec, TabulatedSpec,
                                 CellSpec, DyadicSpec>;

    static ProfileSpec indicator(double A, double a0) {
        ProfileSpec p;
        p.v_ = IndicatorSpec{A, a0};
        p.w4_ = W4Data{a0, A};
        p.decay_ = DecayData{0.0, 0.0};  // finite range: K = 0 for any theta
        return p;
    }

    static ProfileSpec polynomial(double K, double theta, double cap = 64.0) {
        ProfileSpec p;
        p.v_ = PolynomialSpec{K, theta, cap};
        double a0 = std::pow(K / cap, 1.0 / (kDimension + theta));  // cap kicks in below
        p.w4_ = W4Data{std::max(a0, 1e-3), std::min(cap, K * std::pow(std::max(a0, 1e-3), -kDimension - theta))};
        p.decay_ = DecayData{theta, K};
        return p;
    }

    static ProfileSpec tabulated(double step, std::vector<double> values) {
        if (values.empty()) throw config_error("profile: empty table");
        for (size_t i = 0; i + 1 < values.size(); ++i)
            if (values[i + 1] > values[i] + 1e-12)
                throw config_error("profile: table must be nonincreasing");
        ProfileSpec p;
        double A = values.back() > 0 ? values.back() : values.front();
        p.w4_ = W4Data{step * values.size(), A};
        p.v_ = TabulatedSpec{step, std::move(values)};
        p.decay_ = DecayData{0.0, 0.0};
        return p;
    }

    static ProfileSpec cell(int M0, double A, double B = 0.0) {
        ProfileSpec p;
        p.v_ = CellSpec{M0, A, B};
        // no (W4) claim: W vanishes across cell boundaries at any distance
        return p;
    }

    static ProfileSpec dyadic(std::vector<double> a) {
        if (a.empty()) throw config_error("profile: dyadic needs a_0");
        for (size_t i = 0; i + 1 < a.size(); ++i)
            if (a[i + 1] > a[i] + 1e-12) throw config_error("profile: a_n must be nonincreasing");
        ProfileSpec p;
        if (a[0] > 0) p.w4_ = W4Data{1.0, (a.size() > 1 && a[1] > 0) ? a[1] : a[0]};
        p.v_ = DyadicSpec{std::move(a)};
        return p;
    }

    // geometric-dyadic preset a_m = K 2^{-m(d+theta)}; satisfies the
    // summability condition sum_M sum_{n>M/4} 2^{nd} a_n < infinity
    static ProfileSpec dyadic_polynomial(double K, double theta, int cutoff) {
        std::vector<double> a(cutoff + 1);
        for (int m = 0; m <= cutoff; ++m)
            a[m] = K * std::pow(2.0, -m * (kDimension + theta));
        auto p = dyadic(std::move(a));
        p.decay_ = DecayData{theta, K};
        return p;
    }

    const Variant& variant() const { return v_; }
    std::optional<DecayData> decay() const { return decay_; }
    std::optional<W4Data> w4() const { return w4_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }

    ProfileSpec short_range(double a) const {
        ProfileSpec p = *this;
        p.hi_ = std::min(p.hi_, a);
        return p;
    }
    ProfileSpec long_range(double a) const {
        ProfileSpec p = *this;
        p.lo_ = std::max(p.lo_, a);
        return p;
    }

    bool distance_kind() const {
        return std::holds_alternative<IndicatorSpec>(v_) ||
               std::holds_alternative<PolynomialSpec>(v_) ||
               std::holds_alternative<TabulatedSpec>(v_);
    }

    // W_M(x,y) = 2^{M gamma} W(2^M x, 2^M y) for distance profiles.
    ProfileSpec rescaled(int M, double gamma) const {
        if (!distance_kind())
            throw config_error("profile: rescaling needs a distance profile");
        const double amp = std::pow(2.0, M * gamma);
        const double shrink = std::pow(2.0, -M);
        ProfileSpec p = *this;
        p.lo_ = lo_ * shrink;
        p.hi_ = hi_ == kInf ? kInf : hi_ * shrink;
        if (auto* ind = std::get_if<IndicatorSpec>(&p.v_)) {
            ind->A *= amp;
            ind->a0 *= shrink;
            if (p.w4_) p.w4_ = W4Data{ind->a0, ind->A};
        } else if (auto* pol = std::get_if<PolynomialSpec>(&p.v_)) {
            pol->K *= amp * std::pow(shrink, kDimension + pol->theta);
            pol->cap *= amp;
            if (p.w4_) p.w4_ = W4Data{p.w4_->a0 * shrink, p.w4_->A * amp};
        } else if (auto* tab = std::get_if<TabulatedSpec>(&p.v_)) {
            tab->step *= shrink;
            for (auto& x : tab->values) x *= amp;
            if (p.w4_) p.w4_ = W4Data{p.w4_->a0 * shrink, p.w4_->A * amp};
        }
        return p;
    }

    // Upper bound on the support radius (kInf when unbounded).
    double range_upper() const {
        double r = kInf;
        if (auto* ind = std::get_if<IndicatorSpec>(&v_)) r = ind->a0;
        if (auto* tab = std::get_if<TabulatedSpec>(&v_))
            r = tab->step * tab->values.size();
        if (auto* cp = std::get_if<CellSpec>(&v_)) r = 2.0 * ipow2(cp->M0);
        if (auto* dy = std::get_if<DyadicSpec>(&v_)) r = 2.0 * ipow2(int(dy->a.size()));
        return std::min(r, hi_);
    }

    static constexpr double kInf = std::numeric_limits<double>::infinity();

private:
    Variant v_;
    double lo_ = 0.0;
    double hi_ = kInf;
    std::optional<DecayData> decay_;
    std::optional<W4Data> w4_;
};

// Profile bound to a graph: precomputes whatever vertex tables the variant
// needs and answers W(x,y) and whole columns W(.,y).
class BoundProfile {
public:
    BoundProfile(const GasketGraph& g, MetricOracle& metric, ProfileSpec spec)
        : g_(&g), metric_(&metric), spec_(std::move(spec)) {
        if (auto* cp = std::get_if<CellSpec>(&spec_.variant())) prepare_cell(*cp);
        if (std::holds_alternative<DyadicSpec>(spec_.variant())) prepare_dyadic();
    }

    const GasketGraph& graph() const { return *g_; }
    const ProfileSpec& spec() const { return spec_; }

    double eval(int x, int y) const {
        const double dist = metric_->hops_from(x)[y] * g_->cell_side();
        return eval_at(x, y, dist);
    }

    // W(x,y) for all x at fixed y (columns feed potential sums).
    Eigen::VectorXd column(int y) const {
        const auto& hops = metric_->hops_from(y);  // distances are symmetric
        Eigen::VectorXd col(g_->vertex_count());
        for (int x = 0; x < g_->vertex_count(); ++x)
            col[x] = eval_at(x, y, hops[x] * g_->cell_side());
        return col;
    }

    // Window convention of the short/long split: short keeps d <= a, long
    // keeps d > a, so W = W_a + W^a pointwise.
    double eval_at(int x, int y, double dist) const {
        if (dist > spec_.hi()) return 0.0;
        if (spec_.lo() > 0 && dist <= spec_.lo()) return 0.0;
        return std::visit(
            [&](const auto& s) { return eval_variant(s, x, y, dist); }, spec_.variant());
    }

private:
    double eval_variant(const IndicatorSpec& s, int, int, double dist) const {
        return dist <= s.a0 ? s.A : 0.0;
    }
    double eval_variant(const PolynomialSpec& s, int, int, double dist) const {
        if (dist <= 0) return s.cap;
        return std::min(s.cap, s.K * std::pow(dist, -kDimension - s.theta));
    }
    double eval_variant(const TabulatedSpec& s, int, int, double dist) const {
        auto k = static_cast<size_t>(std::floor(dist / s.step + 1e-9));
        return k < s.values.size() ? s.values[k] : 0.0;
    }
    double eval_variant(const CellSpec& s, int x, int y, double) const {
        if (cell_tri_[x][0] < 0 || cell_tri_[y][0] < 0) return 0.0;
        bool shared = false;
        for (int i = 0; i < 2 && !shared; ++i)
            for (int j = 0; j < 2 && !shared; ++j)
                shared = cell_tri_[x][i] >= 0 && cell_tri_[x][i] == cell_tri_[y][j];
        if (!shared) return 0.0;
        const int py = cell_proj_[y];
        return s.A + s.B * g_->pos_x(py) / double(ipow2(s.M0));
    }
    double eval_variant(const DyadicSpec& s, int x, int y, double) const {
        const int m = dyadic_shell(x, y, static_cast<int>(s.a.size()));
        return m < static_cast<int>(s.a.size()) ? s.a[m] : 0.0;
    }

    // --- cell profile tables ---
    void prepare_cell(const CellSpec& s) {
        if (s.M0 > g_->scale_M()) throw config_error("profile: M0 above host scale");
        const std::int64_t side = ipow2(s.M0 + g_->resolution_n());
        cell_tri_.assign(g_->vertex_count(), {-1, -1});
        cell_proj_.assign(g_->vertex_count(), -1);
        std::vector<std::array<std::int64_t, 2>> tris;
        collect(0, 0, g_->lattice_side(), side, tris);
        for (size_t t = 0; t < tris.size(); ++t) {
            auto [I, J] = tris[t];
            for (int v = 0; v < g_->vertex_count(); ++v) {
                auto [i, j] = g_->lattice(v);
                if (i >= I && j >= J && (i - I) + (j - J) <= side) {
                    if (cell_tri_[v][0] < 0) cell_tri_[v][0] = static_cast<int>(t);
                    else if (cell_tri_[v][0] != static_cast<int>(t) && cell_tri_[v][1] < 0)
                        cell_tri_[v][1] = static_cast<int>(t);
                }
            }
        }
        for (int v = 0; v < g_->vertex_count(); ++v)
            cell_proj_[v] = g_->project_vertex(v, s.M0);
    }

    // --- dyadic profile tables ---
    void prepare_dyadic() {
        const int n = g_->resolution_n();
        const std::int64_t unit = ipow2(n);
        px_.assign(g_->vertex_count(), -1);
        rx_.assign(g_->vertex_count(), -1);
        // scan V_0 vertices; scale(p) = max k with 2^{k+n} | coords, origin = inf
        std::vector<std::pair<int, int>> v0;  // (vertex, scale), scale=INT_MAX for origin
        for (int v = 0; v < g_->vertex_count(); ++v) {
            auto [i, j] = g_->lattice(v);
            if (i % unit || j % unit) continue;
            int k = 0;
            if (i == 0 && j == 0) k = std::numeric_limits<int>::max();
            else {
                std::int64_t s = unit * 2;
                while (k < g_->scale_M() && i % s == 0 && j % s == 0) { ++k; s *= 2; }
            }
            v0.emplace_back(v, k);
        }
        for (auto [p, k] : v0) {
            const auto& hops = metric_->hops_from(p);
            for (int v = 0; v < g_->vertex_count(); ++v) {
                if (hops[v] * g_->cell_side() > 1.0 + 1e-12) continue;
                if (px_[v] < 0 || k > rx_[v]) {
                    px_[v] = p;
                    rx_[v] = k;
                }
            }
        }
    }

    // smallest m with y in D_m(x); returns cutoff when none up to cutoff-1
    int dyadic_shell(int x, int y, int cutoff) const {
        for (int m = 0; m < cutoff; ++m) {
            if (m > g_->scale_M()) return m;  // D_m covers the whole truncation
            if (in_Dm(x, y, m)) return m;
        }
        return cutoff;
    }

    bool in_Dm(int x, int y, int m) const {
        const std::int64_t side = ipow2(m + g_->resolution_n());
        const bool origin_branch = (px_[x] >= 0 && px_[x] == g_->vertex_at(0, 0));
        if (px_[x] >= 0 && m <= rx_[x] && !origin_branch) {
            // union of the (at most two) size-2^m triangles at p_x
            auto [pi, pj] = g_->lattice(px_[x]);
            auto [yi, yj] = g_->lattice(y);
            // candidate corners: triangles having p as a corner
            const std::int64_t cands[3][2] = {
                {pi, pj}, {pi - side, pj}, {pi, pj - side}};
            for (auto& c : cands) {
                if (c[0] < 0 || c[1] < 0) continue;
                if (!triangle_exists(c[0], c[1], side)) continue;
                if (yi >= c[0] && yj >= c[1] && (yi - c[0]) + (yj - c[1]) <= side)
                    return true;
            }
            return false;
        }
        // natural cell of x
        auto [xi, xj] = g_->lattice(x);
        auto corner = natural_cell(xi, xj, side);
        auto [yi, yj] = g_->lattice(y);
        return yi >= corner[0] && yj >= corner[1] &&
               (yi - corner[0]) + (yj - corner[1]) <= side;
    }

    std::array<std::int64_t, 2> natural_cell(std::int64_t i, std::int64_t j,
                                             std::int64_t side) const {
        std::int64_t I = 0, J = 0, S = g_->lattice_side();
        while (S > side) {
            const std::int64_t H = S / 2;
            const std::int64_t u = i - I, v = j - J;
            if (u + v <= H) {
            } else if (u >= H) {
                I += H;
            } else {
                J += H;
            }
            S = H;
        }
        return {I, J};
    }

    // Aligned lattice triangles that are not gasket cells overlap a hole of
    // at least their own size, which kills the bottom-edge midpoint.
    bool triangle_exists(std::int64_t I, std::int64_t J, std::int64_t side) const {
        if (I < 0 || J < 0 || I + J + side > g_->lattice_side()) return false;
        if (g_->vertex_at(I, J) < 0) return false;
        if (side >= 2) return g_->vertex_at(I + side / 2, J) >= 0;
        const int a = g_->vertex_at(I, J), b = g_->vertex_at(I + 1, J);
        if (b < 0) return false;
        for (int u : g_->neighbors(a))
            if (u == b) return true;
        return false;
    }

    static void collect(std::int64_t I, std::int64_t J, std::int64_t S, std::int64_t s,
                        std::vector<std::array<std::int64_t, 2>>& out) {
        if (S == s) {
            out.push_back({I, J});
            return;
        }
        collect(I, J, S / 2, s, out);
        collect(I + S / 2, J, S / 2, s, out);
        collect(I, J + S / 2, S / 2, s, out);
    }

    const GasketGraph* g_;
    MetricOracle* metric_;
    ProfileSpec spec_;
    std::vector<std::array<int, 2>> cell_tri_;
    std::vector<int> cell_proj_;
    std::vector<int> px_;
    std::vector<int> rx_;
};

// Poisson cloud: N ~ Poisson(nu * 3^m) points on uniformly chosen resolution
// cells of the embedded G_m; each point is pinned to its cell's anchor vertex.
struct PoissonConfiguration {
    double nu = 0;
    int host_m = 0;
    std::uint64_t n_cells = 0;
    std::vector<std::int64_t> cells;
    std::vector<int> anchors;
};

// Resolution cells of the embedded G_m are exactly the host cell indices
// below 3^{m+n}: the leading ternary digits of such indices are zero, which
// is the origin-block descent.
inline PoissonConfiguration sample_cloud(const GasketGraph& g, int m, double nu, Rng& rng) {
    if (nu < 0) throw config_error("cloud: intensity must be >= 0");
    if (m > g.scale_M()) throw config_error("cloud: sub-scale above host");
    PoissonConfiguration c;
    c.nu = nu;
    c.host_m = m;
    const std::int64_t ncells = ipow3(m + g.resolution_n());
    c.n_cells = static_cast<std::uint64_t>(ncells);
    const auto n_points = rng.poisson(nu * static_cast<double>(ipow3(m)));
    c.cells.reserve(n_points);
    c.anchors.reserve(n_points);
    for (std::uint64_t i = 0; i < n_points; ++i) {
        const std::int64_t cell = static_cast<std::int64_t>(rng.below(ncells));
        c.cells.push_back(cell);
        c.anchors.push_back(g.cell_anchor_vertex(cell));
    }
    return c;
}

inline PoissonConfiguration sample_cloud(const GasketGraph& g, double nu, Rng& rng) {
    return sample_cloud(g, g.scale_M(), nu, rng);
}

// V(x) = sum_i W(x, p_i), an exact finite sum over the cloud.
inline Eigen::VectorXd evaluate_potential(const BoundProfile& W,
                                          const PoissonConfiguration& cloud) {
    Eigen::VectorXd V = Eigen::VectorXd::Zero(W.graph().vertex_count());
    for (int a : cloud.anchors) V += W.column(a);
    return V;
}

// Exact annealed weight E_Q exp(-sum_x ell(x) V(x)) for a fixed occupation
// vector: exp(-nu sum_cells m_c (1 - exp(-sum_x ell(x) W(x, anchor_c)))).
// The cell sum is the exact expectation for the sampled cloud law.
inline double annealed_fk_weight(const GasketGraph& g, const BoundProfile& W,
                                 double nu, const Eigen::VectorXd& ell, int m = -1) {
    if (m < 0) m = g.scale_M();
    const std::int64_t ncells = ipow3(m + g.resolution_n());
    const double cell_mass = std::pow(3.0, -g.resolution_n());
    std::vector<std::pair<int, double>> supp;
    for (int x = 0; x < ell.size(); ++x)
        if (ell[x] != 0.0) supp.emplace_back(x, ell[x]);
    double acc = 0;
    for (std::int64_t c = 0; c < ncells; ++c) {
        const int a = g.cell_anchor_vertex(c);
        double inner = 0;
        if (!supp.empty()) {
            const auto col = W.column(a);  // W(x, a) over all x
            for (auto [x, lx] : supp) inner += lx * col[x];
        }
        acc += cell_mass * (1.0 - std::exp(-inner));
    }
    return std::exp(-nu * acc);
}

// sup_x sum_{d(x,y)>a} W(x,y) m(dy), exact on the graph.
inline double s_w(const GasketGraph& g, MetricOracle& metric, const BoundProfile& W,
                  double a) {
    double best = 0;
    for (int x = 0; x < g.vertex_count(); ++x) {
        const auto& hops = metric.hops_from(x);
        double s = 0;
        for (int y = 0; y < g.vertex_count(); ++y) {
            const double dist = hops[y] * g.cell_side();
            if (dist > a) s += W.eval_at(x, y, dist) * g.vertex_mass(y);
        }
        best = std::max(best, s);
    }
    return best;
}

// inf_x sum_{d(x,y)>a} (1 - e^{-t W(x,y)}) m(dy).
inline double r_w(const GasketGraph& g, MetricOracle& metric, const BoundProfile& W,
                  double a, double t) {
    double best = std::numeric_limits<double>::infinity();
    for (int x = 0; x < g.vertex_count(); ++x) {
        const auto& hops = metric.hops_from(x);
        double s = 0;
        for (int y = 0; y < g.vertex_count(); ++y) {
            const double dist = hops[y] * g.cell_side();
            if (dist > a)
                s += (1.0 - std::exp(-t * W.eval_at(x, y, dist))) * g.vertex_mass(y);
        }
        best = std::min(best, s);
    }
    return best;
}

struct PeriodizedPotential {
    Eigen::VectorXd on_target;  // indexed by the standalone G_m graph
    bool truncated = false;
    double tail_estimate = 0.0;
};

// Rescaled periodization V*_{0,M,gamma} on G_0: draws a cloud with intensity
// 2^{Md} nu on the embedded G_0 of the host G_k and periodizes the profile
// W_M(x,y) = 2^{M gamma} W(2^M x, 2^M y). Declared below periodize.
struct PeriodizedPotential;
inline PeriodizedPotential rescaled_periodize(const GasketGraph& host, MetricOracle& metric,
                                              const ProfileSpec& base_profile, int M,
                                              double gamma, double nu, Rng& rng,
                                              const GasketGraph& target0);

// Sznitman periodization V*_m on G_m, computed in a host graph G_{m+k}:
// V*(x) = sum_points sum_{y' in pi_m^{-1}(y)} W(x, y'). The host depth k
// bounds the fiber truncation; unbounded profiles get a tail estimate.
inline PeriodizedPotential periodize(const GasketGraph& host, const BoundProfile& W,
                                     int m, const PoissonConfiguration& cloud,
                                     const GasketGraph& target) {
    if (target.scale_M() != m || target.resolution_n() != host.resolution_n())
        throw config_error("periodize: target must be G_m at the host resolution");
    PeriodizedPotential out;
    out.on_target = Eigen::VectorXd::Zero(target.vertex_count());
    Eigen::VectorXd on_host = Eigen::VectorXd::Zero(host.vertex_count());
    for (int a : cloud.anchors) {
        for (int img : host.fiber(a, m)) on_host += W.column(img);
    }
    for (int tv = 0; tv < target.vertex_count(); ++tv) {
        auto [i, j] = target.lattice(tv);
        int hv = host.vertex_at(i, j);
        out.on_target[tv] = on_host[hv];
    }
    if (W.spec().range_upper() > 2.0 * double(ipow2(host.scale_M()))) {
        out.truncated = true;
        if (auto dec = W.spec().decay(); dec && dec->theta > 0) {
            const double R = double(ipow2(host.scale_M() - 1));
            out.tail_estimate =
                4.0 * double(cloud.anchors.size()) * dec->K * std::pow(R, -dec->theta);
        } else {
            out.tail_estimate = std::numeric_limits<double>::infinity();
        }
    }
    return out;
}

inline PeriodizedPotential rescaled_periodize(const GasketGraph& host, MetricOracle& metric,
                                              const ProfileSpec& base_profile, int M,
                                              double gamma, double nu, Rng& rng,
                                              const GasketGraph& target0) {
    BoundProfile W_M(host, metric, base_profile.rescaled(M, gamma));
    auto cloud = sample_cloud(host, 0, nu * static_cast<double>(ipow3(M)), rng);
    return periodize(host, W_M, 0, cloud, target0);
}

}  // namespace gasketlab
