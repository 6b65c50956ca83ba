#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <vector>

namespace gasketlab {

// Adaptive Gauss-Kronrod (G7,K15) with interval bisection.
namespace gk {

inline constexpr std::array<double, 8> kNodes = {
    0.0,
    0.2077849550078984676006894037732449,
    0.4058451513773971669066064120769615,
    0.5860872354676911302941448382587296,
    0.7415311855993944398638647732807884,
    0.8648644233597690727897127886409262,
    0.9491079123427585245261896840478513,
    0.9914553711208126392068546975263285};

inline constexpr std::array<double, 8> kWeightsK = {
    0.2094821410847278280129991748917143,
    0.2044329400752988924141619992346491,
    0.1903505780647854099132564024210137,
    0.1690047266392679028265834265985503,
    0.1406532597155259187451895905102379,
    0.1047900103222501838398763225415180,
    0.0630920926299785532907006631892042,
    0.0229353220105292249637320080589695};

inline constexpr std::array<double, 4> kWeightsG = {
    0.4179591836734693877551020408163265,
    0.3818300505051189449503697754889751,
    0.2797053914892766679014677714237796,
    0.1294849661688696932706114326790820};

template <class F>
std::pair<double, double> kronrod(F&& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double resK = kWeightsK[0] * f(c);
    double resG = kWeightsG[0] * f(c);
    for (int i = 1; i < 8; ++i) {
        double fx = f(c - h * kNodes[i]) + f(c + h * kNodes[i]);
        resK += kWeightsK[i] * fx;
        if (i % 2 == 0) resG += kWeightsG[i / 2] * fx;
    }
    return {resK * h, std::abs(resK - resG) * h};
}

}  // namespace gk

// Integrate f over [a,b] to absolute tolerance; bisects worst intervals.
template <class F>
double integrate(F&& f, double a, double b, double abstol = 1e-10, int max_splits = 2000) {
    struct Piece { double a, b, val, err; };
    std::vector<Piece> pieces;
    auto [v, e] = gk::kronrod(f, a, b);
    pieces.push_back({a, b, v, e});
    double total_err = e;
    int splits = 0;
    while (total_err > abstol && splits < max_splits) {
        size_t worst = 0;
        for (size_t i = 1; i < pieces.size(); ++i)
            if (pieces[i].err > pieces[worst].err) worst = i;
        Piece p = pieces[worst];
        double mid = 0.5 * (p.a + p.b);
        auto [v1, e1] = gk::kronrod(f, p.a, mid);
        auto [v2, e2] = gk::kronrod(f, mid, p.b);
        total_err += e1 + e2 - p.err;
        pieces[worst] = {p.a, mid, v1, e1};
        pieces.push_back({mid, p.b, v2, e2});
        ++splits;
    }
    double sum = 0;
    for (const auto& p : pieces) sum += p.val;
    return sum;
}

}  // namespace gasketlab
