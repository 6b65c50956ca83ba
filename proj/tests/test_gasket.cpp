#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "gasketlab/gasket.hpp"
#include "gasketlab/rng.hpp"

using namespace gasketlab;

namespace {

// Independent count oracle: V_{L+1} = 3 V_L - 3, E_{L+1} = 3 E_L from V_0=3, E_0=3.
std::pair<std::int64_t, std::int64_t> count_oracle(int level) {
    std::int64_t V = 3, E = 3;
    for (int k = 0; k < level; ++k) {
        V = 3 * V - 3;
        E = 3 * E;
    }
    return {V, E};
}

double lsq_slope(const std::vector<double>& logx, const std::vector<double>& logy) {
    double mx = 0, my = 0;
    for (size_t i = 0; i < logx.size(); ++i) { mx += logx[i]; my += logy[i]; }
    mx /= logx.size();
    my /= logy.size();
    double num = 0, den = 0;
    for (size_t i = 0; i < logx.size(); ++i) {
        num += (logx[i] - mx) * (logy[i] - my);
        den += (logx[i] - mx) * (logx[i] - mx);
    }
    return num / den;
}

}  // namespace

TEST_CASE("exact counts, degrees, masses across budgeted (M,n)") {
    for (int M = 0; M <= 2; ++M) {
        for (int n = 0; n <= 4 - M; ++n) {
            auto g = GasketGraph::build(M, n);
            auto [V, E] = count_oracle(M + n);
            CHECK(g.vertex_count() == V);
            CHECK(g.edge_count() == E);
            // mass partition: sum of incident-cell counts = 3 * #cells, exact
            CHECK(g.incident_cell_sum() == 3 * ipow3(M + n));
            CHECK(g.total_mass() == doctest::Approx(std::pow(3.0, M)).epsilon(1e-15));
            double sum = 0;
            for (int v = 0; v < g.vertex_count(); ++v) sum += g.vertex_mass(v);
            CHECK(sum == doctest::Approx(std::pow(3.0, M)).epsilon(1e-12));
            for (int v = 0; v < g.vertex_count(); ++v) {
                if (g.is_boundary(v))
                    CHECK(g.degree(v) == 2);
                else
                    CHECK(g.degree(v) == 4);
            }
        }
    }
}

TEST_CASE("single triangle and the n=2 refinement") {
    auto g0 = GasketGraph::build(0, 0);
    CHECK(g0.vertex_count() == 3);
    CHECK(g0.edge_count() == 3);
    for (int v = 0; v < 3; ++v)
        CHECK(g0.vertex_mass(v) == doctest::Approx(1.0 / 3.0));

    auto g2 = GasketGraph::build(0, 2);
    CHECK(g2.vertex_count() == 15);
    CHECK(g2.edge_count() == 27);
}

TEST_CASE("vertex masses at n=1") {
    auto g = GasketGraph::build(0, 1);
    auto corner = g.boundary()[0];
    CHECK(g.vertex_mass(corner) == doctest::Approx(1.0 / 9.0));
    auto frac = g.vertex_mass_frac(corner);
    CHECK(frac.first == 1);
    CHECK(frac.second == 9);
    int mid = g.vertex_at(1, 0);
    REQUIRE(mid >= 0);
    CHECK(g.vertex_mass(mid) == doctest::Approx(2.0 / 9.0));
}

namespace {
void collect_triangles(std::int64_t I, std::int64_t J, std::int64_t S, std::int64_t s,
                       std::vector<std::array<std::int64_t, 2>>& out) {
    if (S == s) {
        out.push_back({I, J});
        return;
    }
    collect_triangles(I, J, S / 2, s, out);
    collect_triangles(I + S / 2, J, S / 2, s, out);
    collect_triangles(I, J + S / 2, S / 2, s, out);
}
}  // namespace

TEST_CASE("labels: each size-2^k triangle carries three distinct labels") {
    auto g = GasketGraph::build(1, 2);
    for (int k = -2; k <= 1; ++k) {
        const std::int64_t s = ipow2(k + g.resolution_n());
        std::vector<std::array<std::int64_t, 2>> tris;
        collect_triangles(0, 0, g.lattice_side(), s, tris);
        CHECK(static_cast<std::int64_t>(tris.size()) == ipow3(g.scale_M() - k));
        for (auto [I, J] : tris) {
            int a = g.vertex_at(I, J), b = g.vertex_at(I + s, J), c = g.vertex_at(I, J + s);
            REQUIRE(a >= 0);
            REQUIRE(b >= 0);
            REQUIRE(c >= 0);
            std::set<int> labels{g.label(a, k), g.label(b, k), g.label(c, k)};
            CHECK(labels.size() == 3);
            CHECK(labels.count(-1) == 0);
        }
    }
}

TEST_CASE("metric: symmetry and triangle inequality on sampled triples") {
    auto g = GasketGraph::build(1, 3);
    MetricOracle d(g);
    Rng rng(11, "triples");
    const int V = static_cast<int>(g.vertex_count());
    for (int it = 0; it < 10000; ++it) {
        int x = static_cast<int>(rng.below(V));
        int y = static_cast<int>(rng.below(V));
        int z = static_cast<int>(rng.below(V));
        double dxy = d.distance(x, y);
        CHECK(dxy == doctest::Approx(d.distance(y, x)));
        CHECK(dxy <= d.distance(x, z) + d.distance(z, y) + 1e-12);
    }
}

TEST_CASE("ball measure: full coverage and d-regularity") {
    auto g = GasketGraph::build(0, 6);
    MetricOracle d(g);
    CHECK(d.ball_mass(g.boundary()[0], 2.0) == doctest::Approx(1.0));

    // fitted regularity constant over a 50-vertex sample, dyadic radii
    Rng rng(5, "dreg");
    const double dd = kDimension;
    double c_fit = 1.0;
    for (int s = 0; s < 50; ++s) {
        int x = static_cast<int>(rng.below(g.vertex_count()));
        for (double r = std::ldexp(1.0, -4); r <= 0.5; r *= 2) {
            double ratio = d.ball_mass(x, r) / std::pow(r, dd);
            c_fit = std::max({c_fit, ratio, 1.0 / ratio});
        }
    }
    CHECK(c_fit <= 4.0);

    // log-log slope within [d-0.15, d+0.15]
    int x0 = g.vertex_at(ipow2(5), 0);  // generic interior vertex
    REQUIRE(x0 >= 0);
    std::vector<double> lx, ly;
    for (double r = std::ldexp(1.0, -4); r <= 0.5; r *= 2) {
        lx.push_back(std::log(r));
        ly.push_back(std::log(d.ball_mass(x0, r)));
    }
    double slope = lsq_slope(lx, ly);
    CHECK(slope > dd - 0.15);
    CHECK(slope < dd + 0.15);
}

TEST_CASE("tail integral behaves like a^-theta within factor 4") {
    auto g = GasketGraph::build(0, 6);
    MetricOracle d(g);
    const double theta = 1.0;
    for (int src : {g.boundary()[0], g.vertex_at(ipow2(5), ipow2(4))}) {
        REQUIRE(src >= 0);
        std::vector<double> cs;
        for (double a : {0.125, 0.25, 0.5}) {
            const auto& h = d.hops_from(src);
            double t = 0;
            for (int v = 0; v < g.vertex_count(); ++v) {
                double dist = h[v] * g.cell_side();
                if (dist > a) t += std::pow(dist, -kDimension - theta) * g.vertex_mass(v);
            }
            cs.push_back(t * std::pow(a, theta));
        }
        double lo = *std::min_element(cs.begin(), cs.end());
        double hi = *std::max_element(cs.begin(), cs.end());
        CHECK(hi / lo <= 4.0);
    }
}

TEST_CASE("projection: identity on G_M, idempotent, corners by label") {
    auto g = GasketGraph::build(2, 1);  // G_2 hosting embedded G_0 and G_1
    for (int m = 0; m <= 1; ++m) {
        for (int v = 0; v < g.vertex_count(); ++v) {
            int pv = g.project_vertex(v, m);
            REQUIRE(pv >= 0);
            CHECK(g.in_subgasket(pv, m));
            // idempotence
            CHECK(g.project_vertex(pv, m) == pv);
            // identity on the embedded copy
            if (g.in_subgasket(v, m)) CHECK(pv == v);
        }
    }
    // a V_0 vertex with label a maps to corner a of G_0 = origin
    for (int v = 0; v < g.vertex_count(); ++v) {
        if (g.label(v, 0) == 0) CHECK(g.project_vertex(v, 0) == g.vertex_at(0, 0));
        if (g.label(v, 0) == 1) CHECK(g.project_vertex(v, 0) == g.vertex_at(ipow2(1), 0));
    }
}

TEST_CASE("fiber sizes: 3^k preimages for y outside V_0, brute force k<=3") {
    for (int k = 1; k <= 3; ++k) {
        auto g = GasketGraph::build(k, 1);
        int count_checked = 0;
        for (int y = 0; y < g.vertex_count() && count_checked < 8; ++y) {
            if (!g.in_subgasket(y, 0) || g.in_scale(y, 0)) continue;
            auto f = g.fiber(y, 0);
            CHECK(static_cast<std::int64_t>(f.size()) == ipow3(k));
            // brute force: every vertex projecting to y is in the fiber
            std::set<int> brute;
            for (int v = 0; v < g.vertex_count(); ++v)
                if (g.project_vertex(v, 0) == y) brute.insert(v);
            CHECK(brute == std::set<int>(f.begin(), f.end()));
            ++count_checked;
        }
        CHECK(count_checked > 0);
    }
}

TEST_CASE("fibers of projections partition the graph") {
    auto g = GasketGraph::build(2, 1);
    std::vector<int> hit(g.vertex_count(), 0);
    for (int y = 0; y < g.vertex_count(); ++y) {
        if (!g.in_subgasket(y, 0)) continue;
        for (int v : g.fiber(y, 0)) ++hit[v];
    }
    // non-V_0 vertices appear in exactly one fiber
    for (int v = 0; v < g.vertex_count(); ++v)
        if (!g.in_scale(v, 0)) CHECK(hit[v] == 1);
}

TEST_CASE("cell addresses round-trip and decode to side 2^-n cells") {
    auto g = GasketGraph::build(1, 2);
    for (std::int64_t c = 0; c < g.cell_count_total(); ++c) {
        auto a = g.cell_address(c);
        CHECK(a.triangle_copy < ipow3(1));
        CHECK(a.word.size() == 2);
        CHECK(g.cell_index(a) == c);
        CHECK(g.cell_anchor_vertex(c) >= 0);
    }
}

TEST_CASE("capacity errors") {
    CHECK_THROWS_AS(GasketGraph::build(0, 6, 100), capacity_error);
    CHECK_THROWS_AS(GasketGraph::build(-1, 0), config_error);
}

TEST_CASE("dump format") {
    auto g = GasketGraph::build(0, 1);
    std::ostringstream os;
    g.dump(os);
    std::string s = os.str();
    CHECK(s.find("v 0 0 0 1/9\n") == 0);
    size_t vlines = 0, elines = 0, blines = 0;
    std::istringstream is(s);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("v ", 0) == 0) ++vlines;
        if (line.rfind("e ", 0) == 0) ++elines;
        if (line.rfind("b ", 0) == 0) ++blines;
    }
    CHECK(vlines == 6);
    CHECK(elines == 9);
    CHECK(blines == 3);
}
