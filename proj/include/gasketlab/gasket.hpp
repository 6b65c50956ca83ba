#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <mutex>
#include <numeric>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "gasketlab/common.hpp"

namespace gasketlab {

// Address of one resolution cell: which size-1 triangle of G_M it lies in,
// then the refinement word (digits 1,2,3 for the three IFS maps) down to
// side 2^{-n}.
struct CellAddress {
    std::int64_t triangle_copy = 0;
    std::vector<std::uint8_t> word;
};

namespace detail {
inline std::uint64_t lattice_key(std::int64_t i, std::int64_t j) {
    return (static_cast<std::uint64_t>(i) << 32) ^ static_cast<std::uint64_t>(j);
}
}  // namespace detail

// Level-n graph approximation of the gasket triangle G_M (side 2^M).
//
// Vertices sit on the triangular lattice spanned by e1=(1,0), e2=(1/2,√3/2),
// in units of 2^{-n}; cells are the 3^{M+n} upward triangles of side 2^{-n}.
// Masses split each cell's measure 3^{-n} equally among its three corners,
// so the total is exactly 3^M and the simple random walk is mass-reversible.
class GasketGraph {
public:
    static constexpr std::int64_t kDefaultVertexBudget = 30000;

    static GasketGraph build(int M, int n,
                             std::int64_t vertex_budget = kDefaultVertexBudget) {
        if (M < 0 || n < 0) throw config_error("gasket: M and n must be >= 0");
        const int L = M + n;
        if (L > 17) throw capacity_error("gasket: level M+n too large");
        const std::int64_t cells = ipow3(L);
        const std::int64_t nverts = 3 * (cells + 1) / 2;
        if (nverts > vertex_budget)
            throw capacity_error("gasket: " + std::to_string(nverts) +
                                 " vertices exceed budget " + std::to_string(vertex_budget));
        GasketGraph g;
        g.M_ = M;
        g.n_ = n;
        g.side_ = ipow2(L);
        g.build_cells();
        return g;
    }

    int scale_M() const { return M_; }
    int resolution_n() const { return n_; }
    int level() const { return M_ + n_; }
    std::int64_t lattice_side() const { return side_; }
    double cell_side() const { return std::ldexp(1.0, -n_); }

    std::int64_t vertex_count() const { return static_cast<std::int64_t>(coords_.size()); }
    std::int64_t edge_count() const { return static_cast<std::int64_t>(edges_.size()); }
    std::int64_t cell_count_total() const { return ipow3(level()); }

    std::array<std::int64_t, 2> lattice(int v) const { return coords_[v]; }

    double pos_x(int v) const {
        return (coords_[v][0] + 0.5 * coords_[v][1]) * cell_side();
    }
    double pos_y(int v) const {
        return coords_[v][1] * 0.8660254037844386468 * cell_side();
    }

    int degree(int v) const { return adj_off_[v + 1] - adj_off_[v]; }
    int incident_cells(int v) const { return degree(v) / 2; }

    std::span<const int> neighbors(int v) const {
        return {adj_.data() + adj_off_[v], adj_.data() + adj_off_[v + 1]};
    }

    double vertex_mass(int v) const {
        return incident_cells(v) * std::pow(3.0, -(n_ + 1));
    }

    // Reduced fraction cells/3^{n+1}.
    std::pair<std::int64_t, std::int64_t> vertex_mass_frac(int v) const {
        std::int64_t num = incident_cells(v);
        std::int64_t den = ipow3(n_ + 1);
        while (num % 3 == 0 && den % 3 == 0) { num /= 3; den /= 3; }
        return {num, den};
    }

    // Exact in integer arithmetic: sum of incident-cell counts over vertices.
    std::int64_t incident_cell_sum() const {
        std::int64_t s = 0;
        for (int v = 0; v < vertex_count(); ++v) s += incident_cells(v);
        return s;
    }

    double total_mass() const { return static_cast<double>(ipow3(M_)); }

    const std::array<int, 3>& boundary() const { return boundary_; }

    bool is_boundary(int v) const {
        return v == boundary_[0] || v == boundary_[1] || v == boundary_[2];
    }

    int vertex_at(std::int64_t i, std::int64_t j) const {
        auto it = index_.find(detail::lattice_key(i, j));
        return it == index_.end() ? -1 : it->second;
    }

    // ---- labels -------------------------------------------------------

    // A vertex belongs to V_k (corners of size-2^k triangles) iff its lattice
    // coordinates are divisible by 2^{k+n}. Scales run from -n (every vertex)
    // up to M.
    bool in_scale(int v, int k) const {
        const std::int64_t s = ipow2(k + n_);
        return coords_[v][0] % s == 0 && coords_[v][1] % s == 0;
    }

    // Label in {0,1,2} = {a,b,c} at scale k; the permutation-word rule reduces
    // to (i - j)/2^{k+n} mod 3 on the e1,e2 lattice.
    int label(int v, int k) const {
        const std::int64_t s = ipow2(k + n_);
        const auto& c = coords_[v];
        if (c[0] % s != 0 || c[1] % s != 0) return -1;
        return static_cast<int>((((c[0] - c[1]) / s) % 3 + 3) % 3);
    }

    // ---- cells --------------------------------------------------------

    // Lattice corner of cell index c (digits most significant first;
    // digit 0 keeps the corner, 1 shifts along e1, 2 along e2).
    std::array<std::int64_t, 2> cell_corner(std::int64_t c) const {
        std::int64_t I = 0, J = 0, H = side_ / 2;
        for (int d = 0; d < level(); ++d) {
            const std::int64_t q = ipow3(level() - 1 - d);
            const int digit = static_cast<int>(c / q);
            c %= q;
            if (digit == 1) I += H;
            else if (digit == 2) J += H;
            H /= 2;
        }
        return {I, J};
    }

    int cell_anchor_vertex(std::int64_t c) const {
        auto corner = cell_corner(c);
        return vertex_at(corner[0], corner[1]);
    }

    CellAddress cell_address(std::int64_t c) const {
        CellAddress a;
        std::vector<int> digits(level());
        for (int d = level() - 1; d >= 0; --d) {
            digits[d] = static_cast<int>(c % 3);
            c /= 3;
        }
        a.triangle_copy = 0;
        for (int d = 0; d < M_; ++d) a.triangle_copy = a.triangle_copy * 3 + digits[d];
        a.word.reserve(n_);
        for (int d = M_; d < level(); ++d)
            a.word.push_back(static_cast<std::uint8_t>(digits[d] + 1));
        return a;
    }

    std::int64_t cell_index(const CellAddress& a) const {
        std::int64_t c = a.triangle_copy;
        for (auto w : a.word) c = c * 3 + (w - 1);
        return c;
    }

    // ---- projection pi_M ---------------------------------------------

    // G_m sits inside this graph as the sub-triangle at the origin corner:
    // lattice points with i + j <= 2^{m+n}.
    bool in_subgasket(int v, int m) const {
        return coords_[v][0] + coords_[v][1] <= ipow2(m + n_);
    }

    // Image of vertex v under pi_m, as a lattice point of the embedded G_m.
    // Barycentric coordinates in the containing size-2^m triangle are mapped
    // onto the like-labelled corners of G_m; V_m vertices go by label alone.
    std::array<std::int64_t, 2> project_lattice(int v, int m) const {
        if (m < 0 || m > M_) throw config_error("project: target scale out of range");
        const std::int64_t s = ipow2(m + n_);
        const auto& c = coords_[v];
        if (c[0] % s == 0 && c[1] % s == 0)
            return corner_of_label(label(v, m), s);
        auto [I, J] = containing_triangle(c[0], c[1], s);
        const std::int64_t u = c[0] - I, w = c[1] - J;
        const int l0 = static_cast<int>((((I - J) / s) % 3 + 3) % 3);
        auto Q0 = corner_of_label(l0, s);
        auto Q1 = corner_of_label((l0 + 1) % 3, s);
        auto Q2 = corner_of_label((l0 + 2) % 3, s);
        // weights: (s-u-w)/s at P0, u/s at P1, w/s at P2
        std::int64_t x = ((s - u - w) * Q0[0] + u * Q1[0] + w * Q2[0]) / s;
        std::int64_t y = ((s - u - w) * Q0[1] + u * Q1[1] + w * Q2[1]) / s;
        return {x, y};
    }

    int project_vertex(int v, int m) const {
        auto p = project_lattice(v, m);
        return vertex_at(p[0], p[1]);
    }

    // pi_m^{-1}(y) within this graph, for y a vertex of the embedded G_m.
    // One image per size-2^m triangle; coincident images deduplicated.
    std::vector<int> fiber(int y, int m) const {
        if (!in_subgasket(y, m)) throw config_error("fiber: y outside embedded G_m");
        const std::int64_t s = ipow2(m + n_);
        const auto& c = coords_[y];
        const std::int64_t p = c[0], q = c[1];
        std::vector<int> out;
        std::vector<std::array<std::int64_t, 2>> tris;
        enumerate_triangles(0, 0, side_, s, tris);
        out.reserve(tris.size());
        for (auto [I, J] : tris) {
            const int l0 = static_cast<int>((((I - J) / s) % 3 + 3) % 3);
            // G_m corners carry labels (0,0)->0, (s,0)->1, (0,s)->2, so the
            // barycentric weight attached to label l is w_by_label[l].
            std::int64_t w_by_label[3] = {s - p - q, p, q};
            // P0=(I,J) label l0 gets w_by_label[l0], P1 gets [l0+1], P2 [l0+2]
            std::int64_t xi = I + w_by_label[(l0 + 1) % 3];
            std::int64_t yj = J + w_by_label[(l0 + 2) % 3];
            int id = vertex_at(xi, yj);
            if (id >= 0 && std::find(out.begin(), out.end(), id) == out.end())
                out.push_back(id);
        }
        return out;
    }

    // ---- dump ----------------------------------------------------------

    void dump(std::ostream& os) const;

private:
    GasketGraph() = default;

    static std::array<std::int64_t, 2> corner_of_label(int l, std::int64_t s) {
        switch (l) {
            case 0: return {0, 0};
            case 1: return {s, 0};
            default: return {0, s};
        }
    }

    // Descend from the full triangle to the size-s triangle containing (i,j).
    // Only well-defined when (i,j) is not a corner of any size-s triangle,
    // which callers guarantee.
    std::pair<std::int64_t, std::int64_t> containing_triangle(std::int64_t i,
                                                              std::int64_t j,
                                                              std::int64_t s) const {
        std::int64_t I = 0, J = 0, S = side_;
        while (S > s) {
            const std::int64_t H = S / 2;
            const std::int64_t u = i - I, v = j - J;
            if (u + v <= H) {
                // corner subcell
            } else if (u >= H) {
                I += H;
            } else {
                J += H;
            }
            S = H;
        }
        return {I, J};
    }

    void enumerate_triangles(std::int64_t I, std::int64_t J, std::int64_t S,
                             std::int64_t s,
                             std::vector<std::array<std::int64_t, 2>>& out) const {
        if (S == s) {
            out.push_back({I, J});
            return;
        }
        const std::int64_t H = S / 2;
        enumerate_triangles(I, J, H, s, out);
        enumerate_triangles(I + H, J, H, s, out);
        enumerate_triangles(I, J + H, H, s, out);
    }

    int intern(std::int64_t i, std::int64_t j) {
        auto key = detail::lattice_key(i, j);
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;
        int id = static_cast<int>(coords_.size());
        coords_.push_back({i, j});
        index_.emplace(key, id);
        return id;
    }

    void build_cells() {
        struct Frame { std::int64_t I, J, S; };
        std::vector<Frame> stack{{0, 0, side_}};
        edges_.reserve(static_cast<size_t>(cell_count_total()) * 3);
        while (!stack.empty()) {
            auto [I, J, S] = stack.back();
            stack.pop_back();
            if (S == 1) {
                int a = intern(I, J);
                int b = intern(I + 1, J);
                int c = intern(I, J + 1);
                edges_.push_back({a, b});
                edges_.push_back({b, c});
                edges_.push_back({c, a});
                continue;
            }
            const std::int64_t H = S / 2;
            // Reverse push keeps the natural digit order 0,1,2 on the stack.
            stack.push_back({I, J + H, H});
            stack.push_back({I + H, J, H});
            stack.push_back({I, J, H});
        }
        const int V = static_cast<int>(coords_.size());
        adj_off_.assign(V + 1, 0);
        for (auto [a, b] : edges_) {
            ++adj_off_[a + 1];
            ++adj_off_[b + 1];
        }
        std::partial_sum(adj_off_.begin(), adj_off_.end(), adj_off_.begin());
        adj_.resize(edges_.size() * 2);
        std::vector<int> cursor(adj_off_.begin(), adj_off_.end() - 1);
        for (auto [a, b] : edges_) {
            adj_[cursor[a]++] = b;
            adj_[cursor[b]++] = a;
        }
        boundary_ = {vertex_at(0, 0), vertex_at(side_, 0), vertex_at(0, side_)};
    }

    int M_ = 0, n_ = 0;
    std::int64_t side_ = 1;
    std::vector<std::array<std::int64_t, 2>> coords_;
    std::unordered_map<std::uint64_t, int> index_;
    std::vector<std::array<int, 2>> edges_;
    std::vector<int> adj_off_;
    std::vector<int> adj_;
    std::array<int, 3> boundary_{};
};

// Graph-hop metric: d(x,y) = hops * 2^{-n}. BFS tables are cached per source
// behind a mutex so concurrent readers can share one oracle.
class MetricOracle {
public:
    explicit MetricOracle(const GasketGraph& g) : g_(&g) {}

    const std::vector<std::uint16_t>& hops_from(int src) const {
        std::lock_guard<std::mutex> lk(mu_);
        auto it = cache_.find(src);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(src, bfs(src)).first->second;
    }

    double distance(int u, int v) const {
        return hops_from(u)[v] * g_->cell_side();
    }

    double ball_mass(int center, double r) const {
        const auto& h = hops_from(center);
        const double step = g_->cell_side();
        double m = 0.0;
        for (int v = 0; v < g_->vertex_count(); ++v)
            if (h[v] * step <= r + 1e-12) m += g_->vertex_mass(v);
        return m;
    }

    const GasketGraph& graph() const { return *g_; }

private:
    std::vector<std::uint16_t> bfs(int src) const {
        constexpr std::uint16_t kInf = 0xFFFF;
        std::vector<std::uint16_t> dist(g_->vertex_count(), kInf);
        std::deque<int> q{src};
        dist[src] = 0;
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            for (int w : g_->neighbors(u)) {
                if (dist[w] == kInf) {
                    dist[w] = static_cast<std::uint16_t>(dist[u] + 1);
                    q.push_back(w);
                }
            }
        }
        return dist;
    }

    const GasketGraph* g_;
    mutable std::mutex mu_;
    mutable std::unordered_map<int, std::vector<std::uint16_t>> cache_;
};

inline void GasketGraph::dump(std::ostream& os) const {
    os.precision(17);
    for (int v = 0; v < vertex_count(); ++v) {
        auto [num, den] = vertex_mass_frac(v);
        os << "v " << v << ' ' << pos_x(v) << ' ' << pos_y(v) << ' '
           << num << '/' << den << '\n';
    }
    for (const auto& e : edges_) os << "e " << e[0] << ' ' << e[1] << '\n';
    for (int b : boundary_) os << "b " << b << '\n';
    for (int v = 0; v < vertex_count(); ++v)
        for (int k = -n_; k <= M_; ++k)
            if (int l = label(v, k); l >= 0)
                os << "l " << v << ' ' << k << ' ' << "abc"[l] << '\n';
}

}  // namespace gasketlab
