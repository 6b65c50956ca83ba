#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "gasketlab/ids.hpp"
#include "gasketlab/operators.hpp"
#include "gasketlab/potentials.hpp"

namespace gasketlab {

struct PathEnd {
    bool alive = true;
    int final_vertex = -1;  // graph vertex id; -1 once killed
    long steps = 0;
};

struct WalkPolicy {
    double dt = 0;              // physical tick; 0 = use 5^{-n}
    bool midpoint = false;      // occupation rule: split tick between endpoints
    long jump_threshold = 256;  // walk steps above which P^m is sampled spectrally
};

// Subordinate random walk: per physical tick of length dt the subordinator
// advances by an exact increment, and the embedded walk consumes the
// operational budget in steps of 5^{-n}. Long ticks draw the endpoint from
// the exact m-step chain law instead of stepping. The tick callback receives
// (vertex, physical weight) and realizes occupation and potential integrals
// with the left-endpoint (or midpoint) rule.
template <class TickFn>
PathEnd simulate_path(const DiscreteGenerator& gen, SubordinatorSampler& samp,
                      int x0, double horizon, const WalkPolicy& policy, Rng& walk_rng,
                      TickFn&& tick) {
    const GasketGraph& g = gen.graph();
    const double dt = policy.dt > 0 ? policy.dt : std::pow(5.0, -g.resolution_n());
    const double opscale = gen.time_scale();
    const bool dirichlet = gen.mode() == BoundaryMode::Dirichlet;

    PathEnd end;
    end.final_vertex = x0;
    if (dirichlet && gen.index_of(x0) < 0) {  // started on the boundary
        end.alive = false;
        end.final_vertex = -1;
        return end;
    }

    double op_budget = 0.0;  // operational time not yet consumed by steps
    double t_done = 0.0;
    int cur = x0;
    while (t_done < horizon - 1e-15) {
        const double step_dt = std::min(dt, horizon - t_done);
        const int pre_tick_vertex = cur;
        op_budget += samp.increment(step_dt);
        long m = static_cast<long>(std::floor(op_budget * opscale));
        op_budget -= static_cast<double>(m) / opscale;
        if (end.alive && m > 0) {
            if (m <= policy.jump_threshold) {
                for (long s = 0; s < m && end.alive; ++s) {
                    auto nb = g.neighbors(cur);
                    cur = nb[walk_rng.below(nb.size())];
                    ++end.steps;
                    if (dirichlet && gen.index_of(cur) < 0) end.alive = false;
                }
            } else {
                // exact m-step law from the spectral chain
                Eigen::VectorXd row = gen.chain_row(gen.index_of(cur), m);
                const double total = row.sum();
                const double u = walk_rng.uniform();
                end.steps += m;
                if (u > total) {
                    end.alive = false;  // killed mass of the Dirichlet chain
                } else {
                    double acc = 0;
                    int pick = gen.dim() - 1;
                    for (int i = 0; i < row.size(); ++i) {
                        acc += row[i];
                        if (u <= acc) {
                            pick = i;
                            break;
                        }
                    }
                    cur = gen.vertices()[pick];
                }
            }
        }
        if (policy.midpoint) {
            tick(pre_tick_vertex, 0.5 * step_dt);
            tick(end.alive ? cur : pre_tick_vertex, 0.5 * step_dt);
        } else {
            tick(pre_tick_vertex, step_dt);
        }
        t_done += step_dt;
        if (!end.alive) {
            end.final_vertex = -1;
            break;
        }
        end.final_vertex = cur;
    }
    // leftover fractional budget rounds the step count up to ceil(5^n S_t)
    if (end.alive && op_budget * opscale > 1e-9) {
        auto nb = g.neighbors(cur);
        cur = nb[walk_rng.below(nb.size())];
        ++end.steps;
        if (dirichlet && gen.index_of(cur) < 0) {
            end.alive = false;
            end.final_vertex = -1;
        } else {
            end.final_vertex = cur;
        }
    }
    return end;
}

struct PathSample {
    Eigen::VectorXd occupation;  // physical time per graph vertex
    PathEnd end;
};

inline PathSample sample_path(const DiscreteGenerator& gen, SubordinatorSampler& samp,
                              int x0, double horizon, const WalkPolicy& policy,
                              Rng& walk_rng) {
    PathSample ps;
    ps.occupation = Eigen::VectorXd::Zero(gen.graph().vertex_count());
    ps.end = simulate_path(gen, samp, x0, horizon, policy, walk_rng,
                           [&](int v, double w) { ps.occupation[v] += w; });
    return ps;
}

struct SurvivalEstimate {
    double mean_a = 0, se_a = 0;  // annealed weight of the sampled occupation
    double mean_b = 0, se_b = 0;  // cloud + exponential clock indicator
    int paths = 0;
};

struct SurvivalSpec {
    int M = 1;
    int n = 3;
    LaplaceExponent phi = LaplaceExponent::stable(kWalkDimension / 2);
    ProfileSpec profile = ProfileSpec::indicator(4.0, 0.25);
    double nu = 1.0;
    BoundaryMode mode = BoundaryMode::Reflected;
    std::uint64_t seed = 1;
    int replicates = 2000;
    int threads = 0;
    WalkPolicy policy{};
};

// Two estimators of E_Q E_x[exp(-int_0^t V ds)]:
//  (A) integrates the Poisson law exactly for each sampled occupation;
//  (B) draws the cloud and unit-rate exponential clocks and reports the
//      indicator that no clock fired by the horizon.
inline SurvivalEstimate fk_survival(const SurvivalSpec& spec, int x0, double t) {
    auto g = GasketGraph::build(spec.M, spec.n);
    MetricOracle metric(g);
    BoundProfile W(g, metric, spec.profile);
    DiscreteGenerator gen(g, spec.mode);
    gen.eigensystem();  // warm before the parallel section
    for (std::int64_t c = 0; c < g.cell_count_total(); ++c)
        metric.hops_from(g.cell_anchor_vertex(c));

    std::vector<double> wa(spec.replicates), wb(spec.replicates);
    parallel_for(spec.replicates, spec.threads, [&](int r) {
        SubordinatorSampler samp(spec.phi,
                                 Rng(spec.seed, "fk-subord", static_cast<std::uint64_t>(r)));
        Rng walk(spec.seed, "fk-walk", static_cast<std::uint64_t>(r));
        auto ps = sample_path(gen, samp, x0, t, spec.policy, walk);
        const bool alive = ps.end.alive;
        // (A): Rao-Blackwellized over clouds and clocks
        wa[r] = alive ? annealed_fk_weight(g, W, spec.nu, ps.occupation) : 0.0;
        // (B): explicit cloud and clocks
        Rng crng(spec.seed, "fk-cloud", static_cast<std::uint64_t>(r));
        auto cloud = sample_cloud(g, spec.nu, crng);
        bool survived = alive;
        if (alive) {
            for (int a : cloud.anchors) {
                double Ai = 0;
                const auto col = W.column(a);
                for (int v = 0; v < col.size(); ++v)
                    if (ps.occupation[v] > 0) Ai += ps.occupation[v] * col[v];
                if (crng.exponential() < Ai) {
                    survived = false;
                    break;
                }
            }
        }
        wb[r] = survived ? 1.0 : 0.0;
    });
    SurvivalEstimate est;
    est.paths = spec.replicates;
    double sa = 0, sa2 = 0, sb = 0, sb2 = 0;
    for (int r = 0; r < spec.replicates; ++r) {
        sa += wa[r];
        sa2 += wa[r] * wa[r];
        sb += wb[r];
        sb2 += wb[r] * wb[r];
    }
    est.mean_a = sa / spec.replicates;
    est.mean_b = sb / spec.replicates;
    est.se_a = std::sqrt(std::max(0.0, sa2 / spec.replicates - est.mean_a * est.mean_a) /
                         spec.replicates);
    est.se_b = std::sqrt(std::max(0.0, sb2 / spec.replicates - est.mean_b * est.mean_b) /
                         spec.replicates);
    return est;
}

struct SurvivalBoundPoint {
    double t = 0;
    bool applicable = false;
    double est_a = 0, se_a = 0, est_b = 0, se_b = 0;
    double lower_rhs = 0, upper_rhs = 0;
    int M_t = 0;
    double a = 0;
    double ground_state_ratio = 0;
};

// Survival sandwich at a point: the certificate needs x inside G_{M(t)}/2,
// the metric ball of radius 2^{M-1} around the origin corner.
inline SurvivalBoundPoint survival_bound_check(const SurvivalSpec& spec, double x_dist,
                                               int x0, double t) {
    SurvivalBoundPoint p;
    p.t = t;
    const double beta = spec.phi.beta();
    const int Mt = scale_choice(t, spec.nu, beta);
    if (Mt < 0 || x_dist > std::ldexp(1.0, Mt - 1)) return p;  // outside G_M/2
    p.applicable = true;
    p.M_t = Mt;

    auto est = fk_survival(spec, x0, t);
    p.est_a = est.mean_a;
    p.se_a = est.se_a;
    p.est_b = est.mean_b;
    p.se_b = est.se_b;

    auto g = GasketGraph::build(spec.M, spec.n);
    MetricOracle metric(g);
    BoundProfile W(g, metric, spec.profile);
    const auto dec = spec.profile.decay();
    const double theta = dec && dec->K > 0 ? dec->theta : 0.0;
    p.a = dec && dec->K > 0 ? std::pow(t, 1.0 / (kDimension + theta))
                            : spec.profile.range_upper();

    // ground-state surrogate on G_{M(t)}: min over G_M/2 of the Dirichlet
    // walk ground state divided by its max
    {
        auto gm = GasketGraph::build(std::min(Mt, spec.M), spec.n);
        DiscreteGenerator diri(gm, BoundaryMode::Dirichlet);
        const auto& es = diri.eigensystem();
        MetricOracle dmetric(gm);
        const auto& hops = dmetric.hops_from(gm.vertex_at(0, 0));
        double lo = 1e300, hi = 0;
        const double rad = std::ldexp(1.0, std::min(Mt, spec.M) - 1);
        for (int mi = 0; mi < diri.dim(); ++mi) {
            const double gs = std::abs(es.W(mi, 0)) / diri.sqrt_mass(mi);
            hi = std::max(hi, gs);
            if (hops[diri.vertices()[mi]] * gm.cell_side() <= rad) lo = std::min(lo, gs);
        }
        p.ground_state_ratio = lo / hi;
    }

    auto g0 = GasketGraph::build(0, spec.n);
    DiscreteGenerator diri0(g0, BoundaryMode::Dirichlet);
    const double lam1 = diri0.eigensystem().lam[0];
    const double lam_scaled = std::pow(2.0, -Mt * kWalkDimension) * lam1;
    const double sw = s_w(g, metric, W, p.a);
    p.lower_rhs = p.ground_state_ratio *
                  std::exp(-t * spec.phi(lam_scaled) - spec.nu * t * sw -
                           spec.nu * (std::pow(2.0, Mt * kDimension) +
                                      9.0 * std::pow(p.a, kDimension)));
    p.upper_rhs = std::exp(-spec.nu * r_w(g, metric, W, p.a, t));
    return p;
}

}  // namespace gasketlab
