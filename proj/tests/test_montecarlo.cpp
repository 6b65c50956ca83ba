#include <doctest.h>

#include <cmath>

#include "gasketlab/montecarlo.hpp"

using namespace gasketlab;

namespace {
constexpr double dw = kWalkDimension;

// Wilson-Hilferty chi-square quantile at 0.999
double chi2_q999(int k) {
    const double z = 3.0902323;
    double t = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
    return k * t * t * t;
}
}  // namespace

TEST_CASE("pure drift collapses to the plain walk with exact step count") {
    auto g = GasketGraph::build(0, 2);
    DiscreteGenerator gen(g, BoundaryMode::Reflected);
    auto phi = LaplaceExponent::pure_drift(1.0);
    for (double t : {0.5, 1.0, 2.0}) {
        SubordinatorSampler samp(phi, Rng(1, "drift-path"));
        Rng walk(2, "drift-walk");
        auto ps = sample_path(gen, samp, 0, t, {}, walk);
        CHECK(ps.end.steps == static_cast<long>(std::ceil(t * 25.0)));
        CHECK(ps.end.alive);
        CHECK(ps.occupation.sum() == doctest::Approx(t).epsilon(1e-12));
    }
}

TEST_CASE("occupation measure matches the stationary law") {
    auto g = GasketGraph::build(0, 2);
    DiscreteGenerator gen(g, BoundaryMode::Reflected);
    auto phi = LaplaceExponent::stable(dw / 2);
    const double t = 4.0;
    const int N = 3000;
    Eigen::VectorXd occ = Eigen::VectorXd::Zero(g.vertex_count());
    Eigen::VectorXd occ2 = Eigen::VectorXd::Zero(g.vertex_count());
    Rng start(3, "start");
    for (int r = 0; r < N; ++r) {
        double u = start.uniform() * g.total_mass();
        int x0 = 0;
        double acc = 0;
        for (int v = 0; v < g.vertex_count(); ++v) {
            acc += g.vertex_mass(v);
            if (u <= acc) {
                x0 = v;
                break;
            }
        }
        SubordinatorSampler samp(phi, Rng(4, "st-sub", r));
        Rng walk(5, "st-walk", r);
        auto ps = sample_path(gen, samp, x0, t, {}, walk);
        occ += ps.occupation / t;
        occ2 += (ps.occupation / t).cwiseProduct(ps.occupation / t);
    }
    for (int v = 0; v < g.vertex_count(); ++v) {
        double mean = occ[v] / N;
        double se = std::sqrt(std::max(0.0, occ2[v] / N - mean * mean) / N);
        double target = g.vertex_mass(v) / g.total_mass();
        CHECK(std::abs(mean - target) <= 3.5 * se + 1e-3);
    }
}

TEST_CASE("endpoint histogram against the subordinate kernel (chi^2)") {
    auto g = GasketGraph::build(0, 3);
    DiscreteGenerator gen(g, BoundaryMode::Reflected);
    auto phi = LaplaceExponent::stable(dw / 2);
    const double t = 1.0;
    const int x0 = g.vertex_at(4, 0);
    REQUIRE(x0 >= 0);
    auto P = subordinate_kernel(gen, phi, t);
    const int xi = gen.index_of(x0);

    const int N = 4000;
    std::vector<int> counts(g.vertex_count(), 0);
    for (int r = 0; r < N; ++r) {
        SubordinatorSampler samp(phi, Rng(7, "ker-sub", r));
        Rng walk(8, "ker-walk", r);
        auto end = simulate_path(gen, samp, x0, t, {}, walk, [](int, double) {});
        ++counts[end.final_vertex];
    }
    double chi2 = 0;
    int bins = 0;
    double small_exp = 0;
    int small_count = 0;
    for (int mi = 0; mi < gen.dim(); ++mi) {
        double p = P(xi, mi) * gen.mass(mi);
        double expct = N * p;
        int got = counts[gen.vertices()[mi]];
        if (expct < 5.0) {
            small_exp += expct;
            small_count += got;
            continue;
        }
        chi2 += (got - expct) * (got - expct) / expct;
        ++bins;
    }
    if (small_exp > 0) {
        chi2 += (small_count - small_exp) * (small_count - small_exp) / small_exp;
        ++bins;
    }
    CHECK(chi2 < chi2_q999(bins - 1));
}

TEST_CASE("clock identity on a frozen path and cloud") {
    auto g = GasketGraph::build(0, 2);
    MetricOracle metric(g);
    BoundProfile W(g, metric, ProfileSpec::indicator(0.7, 0.4));
    DiscreteGenerator gen(g, BoundaryMode::Reflected);
    auto phi = LaplaceExponent::stable(dw / 2);
    SubordinatorSampler samp(phi, Rng(10, "clock-sub"));
    Rng walk(11, "clock-walk");
    auto ps = sample_path(gen, samp, 0, 2.0, {}, walk);

    Rng crng(12, "clock-cloud");
    auto cloud = sample_cloud(g, 2.0, crng);
    REQUIRE(!cloud.anchors.empty());
    std::vector<double> A;
    for (int a : cloud.anchors) {
        const auto col = W.column(a);
        A.push_back(ps.occupation.dot(col));
    }
    double target = 0;
    for (double Ai : A) target += Ai;
    target = std::exp(-target);

    Rng clocks(13, "clock-marks");
    const int N = 100000;
    int surv = 0;
    for (int r = 0; r < N; ++r) {
        bool ok = true;
        for (double Ai : A)
            if (clocks.exponential() < Ai) { ok = false; break; }
        surv += ok;
    }
    double phat = double(surv) / N;
    double se = std::sqrt(target * (1 - target) / N);
    CHECK(std::abs(phat - target) <= 3.0 * se + 1e-9);
}

TEST_CASE("fk survival: trivial cases and estimator agreement") {
    SurvivalSpec spec;
    spec.M = 0;
    spec.n = 2;
    spec.phi = LaplaceExponent::stable(dw / 2);
    spec.profile = ProfileSpec::indicator(1.0, 0.25);
    spec.nu = 0.0;
    spec.replicates = 200;
    spec.threads = 2;
    auto est0 = fk_survival(spec, 0, 1.0);
    CHECK(est0.mean_a == doctest::Approx(1.0));
    CHECK(est0.mean_b == doctest::Approx(1.0));

    spec.nu = 1.0;
    spec.replicates = 3000;
    auto est = fk_survival(spec, 0, 4.0);
    double joint = std::sqrt(est.se_a * est.se_a + est.se_b * est.se_b);
    CHECK(std::abs(est.mean_a - est.mean_b) <= 3.0 * joint);
    CHECK(est.se_a < est.se_b);  // Rao-Blackwellization
    CHECK(est.mean_a > 0.0);
    CHECK(est.mean_a < 1.0);
}

TEST_CASE("Dirichlet survival: path simulation vs spectral row sums") {
    auto g = GasketGraph::build(0, 3);
    DiscreteGenerator diri(g, BoundaryMode::Dirichlet);
    auto phi = LaplaceExponent::stable(dw / 2);
    const int x0 = g.vertex_at(4, 4);
    REQUIRE(x0 >= 0);
    const double t = 1.0;
    auto K = diri.kernel_of([&](double l) { return std::exp(-t * phi(std::max(l, 0.0))); });
    double target = 0;
    const int xi = diri.index_of(x0);
    for (int mj = 0; mj < diri.dim(); ++mj) target += K(xi, mj) * diri.mass(mj);

    const int N = 4000;
    int alive = 0;
    for (int r = 0; r < N; ++r) {
        SubordinatorSampler samp(phi, Rng(21, "dsurv-sub", r));
        Rng walk(22, "dsurv-walk", r);
        auto end = simulate_path(diri, samp, x0, t, {}, walk, [](int, double) {});
        alive += end.alive ? 1 : 0;
    }
    double phat = double(alive) / N;
    double se = std::sqrt(target * (1 - target) / N);
    CHECK(std::abs(phat - target) <= 3.5 * se);
}

TEST_CASE("survival bounds hold at the center vertex") {
    SurvivalSpec spec;
    spec.M = 1;
    spec.n = 2;
    spec.phi = LaplaceExponent::stable(dw / 2);
    spec.profile = ProfileSpec::indicator(2.0, 0.25);
    spec.nu = 1.0;
    spec.replicates = 1500;
    spec.threads = 2;
    auto g = GasketGraph::build(spec.M, spec.n);
    const int x0 = g.vertex_at(2, 0);  // distance 0.5 from the origin corner
    REQUIRE(x0 >= 0);
    MetricOracle metric(g);
    const double xdist = metric.distance(g.vertex_at(0, 0), x0);

    for (double t : {4.0, 8.0}) {
        auto p = survival_bound_check(spec, xdist, x0, t);
        if (!p.applicable) continue;
        CHECK(p.est_a >= p.lower_rhs - 2.0 * p.se_a - 1e-9);
        CHECK(p.est_a <= p.upper_rhs + 2.0 * p.se_a + 1e-9);
        CHECK(p.ground_state_ratio > 0.0);
        CHECK(p.ground_state_ratio <= 1.0);
    }
}

TEST_CASE("exit-time floor without potential") {
    for (int M : {0, 1}) {
        auto g = GasketGraph::build(M, 3 - M);
        DiscreteGenerator diri(g, BoundaryMode::Dirichlet);
        auto phi = LaplaceExponent::stable(dw / 2);
        auto g0 = GasketGraph::build(0, 3 - M);
        DiscreteGenerator diri0(g0, BoundaryMode::Dirichlet);
        const double lam1 = diri0.eigensystem().lam[0];
        const auto& es = diri.eigensystem();
        MetricOracle metric(g);
        const auto& hops = metric.hops_from(g.vertex_at(0, 0));
        double lo = 1e300, hi = 0;
        for (int mi = 0; mi < diri.dim(); ++mi) {
            double gs = std::abs(es.W(mi, 0)) / diri.sqrt_mass(mi);
            hi = std::max(hi, gs);
            if (hops[diri.vertices()[mi]] * g.cell_side() <= std::ldexp(1.0, M - 1))
                lo = std::min(lo, gs);
        }
        const double chat = lo / hi;
        const double t = 2.0;
        auto K = diri.kernel_of([&](double l) { return std::exp(-t * phi(std::max(l, 0.0))); });
        for (int mi = 0; mi < diri.dim(); ++mi) {
            if (hops[diri.vertices()[mi]] * g.cell_side() > std::ldexp(1.0, M - 1)) continue;
            double surv = 0;
            for (int mj = 0; mj < diri.dim(); ++mj) surv += K(mi, mj) * diri.mass(mj);
            double floorv = chat * std::exp(-t * phi(std::pow(2.0, -M * dw) * lam1));
            CHECK(surv >= floorv - 1e-10);
        }
    }
}

TEST_CASE("tick-halving bias probe: occupation-integral bias below MC error") {
    // the left-endpoint tick rule has O(dt) bias in the potential integral;
    // on a fixed graph, shrinking the tick (and the midpoint variant) must
    // agree within joint Monte Carlo error
    auto run = [&](double dt, bool midpoint) {
        SurvivalSpec spec;
        spec.M = 0;
        spec.n = 3;
        spec.phi = LaplaceExponent::stable(kWalkDimension / 2);
        spec.profile = ProfileSpec::indicator(1.5, 0.3);
        spec.nu = 1.0;
        spec.seed = 71;
        spec.replicates = 1200;
        spec.threads = 2;
        spec.policy.dt = dt;
        spec.policy.midpoint = midpoint;
        return fk_survival(spec, 0, 2.0);
    };
    const double dt0 = std::pow(5.0, -3);
    auto coarse = run(dt0, false);
    auto fine = run(dt0 / 5.0, false);
    auto mid = run(dt0, true);
    double joint = std::hypot(coarse.se_a, fine.se_a);
    CHECK(std::abs(coarse.mean_a - fine.mean_a) <= 3.0 * joint + 0.01);
    double jm = std::hypot(coarse.se_a, mid.se_a);
    CHECK(std::abs(coarse.mean_a - mid.mean_a) <= 3.0 * jm + 0.01);
}
