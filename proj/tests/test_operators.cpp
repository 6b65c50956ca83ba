#include <doctest.h>

#include <cmath>

#include "gasketlab/operators.hpp"

using namespace gasketlab;

namespace {
constexpr double dw = kWalkDimension;

Eigen::VectorXd zero_potential(const GasketGraph& g) {
    return Eigen::VectorXd::Zero(g.vertex_count());
}
}  // namespace

TEST_CASE("heat kernel: conservation, killing, long-time limit") {
    auto g = GasketGraph::build(1, 2);
    DiscreteGenerator refl(g, BoundaryMode::Reflected);
    DiscreteGenerator diri(g, BoundaryMode::Dirichlet);

    auto Kr = refl.heat_kernel(1.0);
    for (int i = 0; i < refl.dim(); ++i) {
        double row = 0;
        for (int j = 0; j < refl.dim(); ++j) row += Kr(i, j) * refl.mass(j);
        CHECK(row == doctest::Approx(1.0).epsilon(1e-10));  // stochastic completeness
    }

    auto Kd = diri.heat_kernel(0.7);
    for (int i = 0; i < diri.dim(); ++i) {
        double row = 0;
        for (int j = 0; j < diri.dim(); ++j) row += Kd(i, j) * diri.mass(j);
        CHECK(row < 1.0);
        CHECK(row > 0.0);
    }

    auto Kinf = refl.heat_kernel(1000.0);
    const double unif = 1.0 / g.total_mass();
    for (int i = 0; i < refl.dim(); ++i)
        for (int j = 0; j < refl.dim(); ++j)
            CHECK(std::abs(Kinf(i, j) - unif) < 1e-6);
}

TEST_CASE("semigroup property under mass-weighted composition") {
    auto g = GasketGraph::build(0, 3);
    DiscreteGenerator gen(g, BoundaryMode::Reflected);
    Eigen::VectorXd masses(gen.dim());
    for (int i = 0; i < gen.dim(); ++i) masses[i] = gen.mass(i);
    auto K1 = gen.heat_kernel(0.4);
    auto K2 = gen.heat_kernel(0.9);
    Eigen::MatrixXd comp = K1 * masses.asDiagonal() * K2;
    Eigen::MatrixXd K12 = gen.heat_kernel(1.3);
    CHECK((comp - K12).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pure drift subordination is a time change, exactly") {
    auto g = GasketGraph::build(0, 3);
    DiscreteGenerator gen(g, BoundaryMode::Reflected);
    auto phi = LaplaceExponent::pure_drift(2.5);
    auto P = subordinate_kernel(gen, phi, 0.8);
    auto G = gen.heat_kernel(2.0);
    CHECK((P - G).cwiseAbs().maxCoeff() < 1e-12 * G.cwiseAbs().maxCoeff());
}

TEST_CASE("subordinate kernel equals Monte Carlo average over S_t") {
    auto g = GasketGraph::build(0, 2);
    DiscreteGenerator gen(g, BoundaryMode::Reflected);
    auto phi = LaplaceExponent::stable(dw / 2);
    const double t = 1.0;
    auto P = subordinate_kernel(gen, phi, t);
    const auto& es = gen.eigensystem();
    SubordinatorSampler samp(phi, Rng(17, "mc-subord"));
    const int N = 20000;
    const int xi = 0, yj = gen.dim() / 2;
    double s = 0, s2 = 0;
    for (int k = 0; k < N; ++k) {
        double u = samp.increment(t);
        double val = 0;
        for (int m = 0; m < es.lam.size(); ++m)
            val += std::exp(-u * es.lam[m]) * es.W(xi, m) * es.W(yj, m);
        val /= gen.sqrt_mass(xi) * gen.sqrt_mass(yj);
        s += val;
        s2 += val * val;
    }
    double mean = s / N, se = std::sqrt(std::max(0.0, s2 / N - mean * mean) / N);
    CHECK(std::abs(mean - P(xi, yj)) <= 3.0 * se + 1e-12);
}

TEST_CASE("on-diagonal sup is stable in M and nonincreasing in t") {
    auto phi = LaplaceExponent::stable(dw / 2);
    std::vector<double> sups;
    for (int M = 0; M <= 2; ++M) {
        auto g = GasketGraph::build(M, 4 - M);  // matched level 4
        DiscreteGenerator gen(g, BoundaryMode::Reflected);
        auto P = subordinate_kernel(gen, phi, 1.0);
        sups.push_back(P.diagonal().maxCoeff());
    }
    double lo = *std::min_element(sups.begin(), sups.end());
    double hi = *std::max_element(sups.begin(), sups.end());
    CHECK(hi / lo < 2.0);

    auto g = GasketGraph::build(1, 3);
    DiscreteGenerator gen(g, BoundaryMode::Reflected);
    double prev = 1e300;
    for (double t : {1.0, 2.0, 4.0, 8.0}) {
        double cur = subordinate_kernel(gen, phi, t).diagonal().maxCoeff();
        CHECK(cur <= prev * (1 + 1e-12));
        prev = cur;
    }
}

TEST_CASE("schrodinger spectrum: zero potential and constant shift") {
    auto g = GasketGraph::build(1, 2);
    auto phi = LaplaceExponent::stable(dw / 2);
    SchrodingerOperator op(g, phi, BoundaryMode::Reflected);
    auto sp0 = op.free_spectrum();
    CHECK(std::abs(sp0.eigenvalues[0]) < 1e-9);

    Eigen::VectorXd Vc = Eigen::VectorXd::Constant(g.vertex_count(), 0.37);
    auto spc = op.spectrum(Vc);
    for (int i = 0; i < sp0.eigenvalues.size(); ++i)
        CHECK(spc.eigenvalues[i] == doctest::Approx(sp0.eigenvalues[i] + 0.37).epsilon(1e-9));

    CHECK_THROWS_AS(op.spectrum(Eigen::VectorXd::Constant(g.vertex_count(), -1.0)),
                    std::invalid_argument);
}

TEST_CASE("Dirichlet walk eigenvalues follow spectral decimation") {
    // independent oracle: mu_n = mu_{n+1} (5 - 4 mu_{n+1}) for the (I-P) spectrum
    std::vector<double> mu;
    for (int n = 1; n <= 4; ++n) {
        auto g = GasketGraph::build(0, n);
        DiscreteGenerator gen(g, BoundaryMode::Dirichlet);
        double lam1 = gen.eigensystem().lam[0];
        mu.push_back(lam1 / pow5(n));
    }
    CHECK(mu[0] == doctest::Approx(0.5).epsilon(1e-12));
    for (size_t i = 0; i + 1 < mu.size(); ++i)
        CHECK(mu[i] == doctest::Approx(mu[i + 1] * (5.0 - 4.0 * mu[i + 1])).epsilon(1e-9));
    // renormalized eigenvalues 5^n mu_n settle within 3% between levels
    double l3 = pow5(3) * mu[2], l4 = pow5(4) * mu[3];
    CHECK(std::abs(l4 - l3) / l3 < 0.03);
}

TEST_CASE("trace limits and domination") {
    auto g = GasketGraph::build(1, 2);
    auto phi = LaplaceExponent::stable(dw / 2);
    SchrodingerOperator opR(g, phi, BoundaryMode::Reflected);
    SchrodingerOperator opD(g, phi, BoundaryMode::Dirichlet);

    auto spR = opR.free_spectrum();
    CHECK(opR.trace_laplace(spR, 1e-9) == doctest::Approx(opR.dim() / 3.0).epsilon(1e-6));
    CHECK(opR.trace_laplace(spR, 1e4) == doctest::Approx(1.0 / 3.0).epsilon(1e-8));

    auto spD = opD.free_spectrum();
    Eigen::VectorXd V(g.vertex_count());
    Rng rng(5, "pot");
    for (int i = 0; i < V.size(); ++i) V[i] = rng.uniform();
    auto spDV = opD.spectrum(V);
    for (double t : {0.25, 1.0, 4.0})
        CHECK(opD.trace_laplace(spDV, t) <= opD.trace_laplace(spD, t));
    double prev = 1e300;
    for (double t : {0.5, 1.0, 2.0, 4.0}) {
        double tr = opD.trace_laplace(spDV, t);
        CHECK(tr > 0);
        CHECK(tr < prev);
        prev = tr;
    }
}

TEST_CASE("eigenvalue interlacing under potential increase") {
    auto g = GasketGraph::build(0, 3);
    auto phi = LaplaceExponent::stable_with_drift(1.0, dw / 2);
    SchrodingerOperator op(g, phi, BoundaryMode::Dirichlet);
    Rng rng(9, "interlace");
    Eigen::VectorXd V(g.vertex_count()), Vp(g.vertex_count());
    for (int i = 0; i < V.size(); ++i) {
        V[i] = rng.uniform();
        Vp[i] = V[i] + rng.uniform();
    }
    auto s1 = op.spectrum(V), s2 = op.spectrum(Vp);
    for (int k = 0; k < s1.eigenvalues.size(); ++k)
        CHECK(s2.eigenvalues[k] >= s1.eigenvalues[k] - 1e-10);
}

TEST_CASE("reflected kernel scaling identity is exact") {
    CHECK(reflected_kernel_scaling_check(0, 3, 1.0) < 1e-12);
    CHECK(reflected_kernel_scaling_check(1, 4, 1.0) < 1e-10);
    for (double t : {0.5, 1.0, 2.0})
        CHECK(reflected_kernel_scaling_check(2, 4, t) < 1e-10);
}

TEST_CASE("eigen scaling: drift equality and stable inequality") {
    const int M = 1, n = 4;
    auto gM = GasketGraph::build(M, n - M);
    {
        auto res = eigen_scaling_check(LaplaceExponent::pure_drift(1.7),
                                       zero_potential(gM), M, n);
        CHECK(res.lhs == doctest::Approx(res.rhs).epsilon(1e-10));
    }
    {
        Eigen::VectorXd V(gM.vertex_count());
        Rng rng(3, "scalepot");
        for (int i = 0; i < V.size(); ++i) V[i] = 2.0 * rng.uniform();
        auto res = eigen_scaling_check(LaplaceExponent::pure_drift(0.8), V, M, n);
        CHECK(res.lhs == doctest::Approx(res.rhs).epsilon(1e-10));
    }
    {
        Eigen::VectorXd V(gM.vertex_count());
        Rng rng(4, "scalepot3");
        for (int i = 0; i < V.size(); ++i) V[i] = rng.uniform();
        auto res = eigen_scaling_check(LaplaceExponent::stable(dw / 2), V, M, n);
        CHECK(res.fitted_c > 0.0);
        CHECK(res.fitted_c <= 1.0);
    }
}

TEST_CASE("subordination and Dirichlet ordering") {
    auto g = GasketGraph::build(0, 3);
    auto phi = LaplaceExponent::stable(dw / 2);
    // kill-then-subordinate: lambda_1 = phi(lambda_1^{BM,D}) exactly
    SchrodingerOperator ks(g, phi, BoundaryMode::Dirichlet,
                           SubordinationOrder::KillThenSubordinate);
    DiscreteGenerator diri(g, BoundaryMode::Dirichlet);
    double lam_bm = diri.eigensystem().lam[0];
    CHECK(ks.free_spectrum().eigenvalues[0] == doctest::Approx(phi(lam_bm)).epsilon(1e-10));
    // subordinate-then-kill: the [CS] inequality lambda_1 <= phi(lambda_1^{BM,D})
    SchrodingerOperator sk(g, phi, BoundaryMode::Dirichlet,
                           SubordinationOrder::SubordinateThenKill);
    CHECK(sk.free_spectrum().eigenvalues[0] <= phi(lam_bm) + 1e-12);
}

TEST_CASE("lanczos lowest agrees with dense") {
    auto g = GasketGraph::build(1, 3);
    auto phi = LaplaceExponent::stable(dw / 2);
    SchrodingerOperator op(g, phi, BoundaryMode::Dirichlet);
    Eigen::VectorXd V(g.vertex_count());
    Rng rng(7, "lanczos-pot");
    for (int i = 0; i < V.size(); ++i) V[i] = 3.0 * rng.uniform();
    Eigen::MatrixXd A = op.assemble(V);
    auto dense = op.spectrum(V);
    auto lz = lanczos_lowest(
        [&](const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& y) { y = A * x; },
        op.dim(), 3, 0.0);
    for (int k = 0; k < 3; ++k)
        CHECK(lz.eigenvalues[k] == doctest::Approx(dense.eigenvalues[k]).epsilon(1e-7));
}

TEST_CASE("embedded chain rows") {
    auto g = GasketGraph::build(0, 2);
    DiscreteGenerator refl(g, BoundaryMode::Reflected);
    DiscreteGenerator diri(g, BoundaryMode::Dirichlet);
    for (int xi = 0; xi < refl.dim(); ++xi) {
        auto row = refl.chain_row(xi, 1);
        int v = refl.vertices()[xi];
        for (int yj = 0; yj < refl.dim(); ++yj) {
            int w = refl.vertices()[yj];
            bool adjacent = false;
            for (int u : g.neighbors(v)) adjacent |= (u == w);
            double expect = adjacent ? 1.0 / g.degree(v) : 0.0;
            CHECK(row[yj] == doctest::Approx(expect).epsilon(1e-9));
        }
        CHECK(row.sum() == doctest::Approx(1.0));
    }
    auto rowd = diri.chain_row(0, 7);
    CHECK(rowd.sum() < 1.0 + 1e-12);
    auto rowr = refl.chain_row(0, 7);
    CHECK(rowr.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("subgaussian envelope of the reflected heat kernel") {
    auto g = GasketGraph::build(0, 4);
    DiscreteGenerator gen(g, BoundaryMode::Reflected);
    MetricOracle metric(g);
    std::vector<double> xs, ys;
    for (double t : {0.01, 0.03, 0.1, 0.3}) {
        auto K = gen.heat_kernel(t);
        const auto& hops = metric.hops_from(0);
        for (int j = 0; j < gen.dim(); j += 3) {
            double dist = hops[gen.vertices()[j]] * g.cell_side();
            double xi = std::pow(dist / std::pow(t, 1.0 / dw), dw / (dw - 1.0));
            if (K(0, j) <= 0) continue;
            xs.push_back(xi);
            ys.push_back(std::log(K(0, j)) + 0.5 * kSpectralDim * std::log(t));
        }
    }
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
    mx /= xs.size();
    my /= ys.size();
    double num = 0, den = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
    }
    double slope = num / den, icpt = my - slope * mx;
    CHECK(slope < 0.0);
    double worst = 0;
    for (size_t i = 0; i < xs.size(); ++i)
        worst = std::max(worst, std::abs(ys[i] - slope * xs[i] - icpt));
    CHECK(worst < 3.0);
}
