#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "gasketlab/common.hpp"
#include "gasketlab/quadrature.hpp"
#include "gasketlab/rng.hpp"

namespace gasketlab {

enum class Regime { U1, U2, U3, None };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::U1: return "U1";
        case Regime::U2: return "U2";
        case Regime::U3: return "U3";
        default: return "none";
    }
}

enum class PhiKind {
    PureDrift,
    StableWithDrift,
    LogStableWithDrift,
    StableMixture,
    NestedStable,
    LogCorrectedStable,
    RelativisticStable,
};

// Laplace exponent of a complete subordinator. All gamma parameters are held
// in absolute units (the scaling exponent of phi is gamma/d_w), so e.g. the
// gamma-stable exponent is phi(lambda) = lambda^{gamma/d_w}.
class LaplaceExponent {
public:
    static LaplaceExponent pure_drift(double b) {
        return {PhiKind::PureDrift, b, {}, 0.0};
    }
    static LaplaceExponent stable_with_drift(double b, double gamma) {
        check_gamma(gamma);
        return {PhiKind::StableWithDrift, b, {gamma}, 0.0};
    }
    static LaplaceExponent log_stable_with_drift(double b, double g1, double g2) {
        check_gamma(g1);
        if (g2 <= -g1 || g2 >= kWalkDimension - g1)
            throw config_error("phi: gamma2 out of (-gamma1, d_w - gamma1)");
        return {PhiKind::LogStableWithDrift, b, {g1, g2}, 0.0};
    }
    static LaplaceExponent stable_mixture(std::vector<double> gammas) {
        if (gammas.empty()) throw config_error("phi: empty mixture");
        for (double g : gammas) check_gamma(g);
        std::sort(gammas.begin(), gammas.end());
        return {PhiKind::StableMixture, 0.0, std::move(gammas), 0.0};
    }
    static LaplaceExponent stable(double gamma) { return stable_mixture({gamma}); }
    static LaplaceExponent nested_stable(double g1, double g2) {
        check_gamma(g1);
        check_gamma(g2);
        return {PhiKind::NestedStable, 0.0, {g1, g2}, 0.0};
    }
    static LaplaceExponent log_corrected_stable(double g1, double g2) {
        check_gamma(g1);
        if (g2 <= 0 || g2 >= g1) throw config_error("phi: need 0 < gamma2 < gamma1");
        return {PhiKind::LogCorrectedStable, 0.0, {g1, g2}, 0.0};
    }
    static LaplaceExponent relativistic(double alpha, double theta) {
        check_gamma(alpha);
        if (theta <= 0) throw config_error("phi: relativistic needs theta > 0");
        return {PhiKind::RelativisticStable, 0.0, {alpha}, theta};
    }

    PhiKind kind() const { return kind_; }
    double drift() const { return b_; }
    const std::vector<double>& gammas() const { return gammas_; }
    double rel_theta() const { return theta_; }

    double operator()(double lam) const {
        if (lam < 0) throw std::invalid_argument("phi: negative argument");
        return b_ * lam + psi(lam);
    }

    // Pure-jump part.
    double psi(double lam) const {
        if (lam < 0) throw std::invalid_argument("phi: negative argument");
        if (lam == 0) return 0.0;
        switch (kind_) {
            case PhiKind::PureDrift:
                return 0.0;
            case PhiKind::StableWithDrift:
                return std::pow(lam, gammas_[0] / kWalkDimension);
            case PhiKind::LogStableWithDrift:
                return std::pow(lam, gammas_[0] / kWalkDimension) *
                       std::pow(std::log1p(lam), gammas_[1] / kWalkDimension);
            case PhiKind::StableMixture: {
                double s = 0;
                for (double g : gammas_) s += std::pow(lam, g / kWalkDimension);
                return s;
            }
            case PhiKind::NestedStable:
                return std::pow(lam + std::pow(lam, gammas_[0] / kWalkDimension),
                                gammas_[1] / kWalkDimension);
            case PhiKind::LogCorrectedStable:
                return std::pow(lam, gammas_[0] / kWalkDimension) *
                       std::pow(std::log1p(lam), -gammas_[1] / kWalkDimension);
            case PhiKind::RelativisticStable: {
                const double a = gammas_[0] / kWalkDimension;
                const double m = std::pow(theta_, 1.0 / a);
                return std::pow(lam + m, a) - theta_;
            }
        }
        return 0.0;
    }

    // (L1) lower index: phi(s) <= c s^{beta/d_w} near zero.
    double beta() const {
        switch (kind_) {
            case PhiKind::PureDrift: return kWalkDimension;
            case PhiKind::StableWithDrift: return gammas_[0];
            case PhiKind::LogStableWithDrift: return gammas_[0] + gammas_[1];
            case PhiKind::StableMixture: return gammas_.front();
            case PhiKind::NestedStable: return gammas_[0] * gammas_[1] / kWalkDimension;
            case PhiKind::LogCorrectedStable: return gammas_[0] - gammas_[1];
            case PhiKind::RelativisticStable: return kWalkDimension;
        }
        return kWalkDimension;
    }

    Regime regime() const {
        switch (kind_) {
            case PhiKind::PureDrift: return Regime::U1;
            case PhiKind::StableWithDrift:
            case PhiKind::LogStableWithDrift: return Regime::U2;
            case PhiKind::StableMixture:
            case PhiKind::NestedStable:
            case PhiKind::LogCorrectedStable: return Regime::U3;
            case PhiKind::RelativisticStable: return Regime::None;
        }
        return Regime::None;
    }

    bool has_sampler() const {
        switch (kind_) {
            case PhiKind::PureDrift:
            case PhiKind::StableWithDrift:
            case PhiKind::StableMixture:
            case PhiKind::RelativisticStable: return true;
            default: return false;
        }
    }

    std::string name() const {
        auto fmt = [](double x) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%g", x);
            return std::string(buf);
        };
        switch (kind_) {
            case PhiKind::PureDrift: return "drift(b=" + fmt(b_) + ")";
            case PhiKind::StableWithDrift:
                return "stable_drift(b=" + fmt(b_) + ",g=" + fmt(gammas_[0]) + ")";
            case PhiKind::LogStableWithDrift:
                return "log_stable_drift(b=" + fmt(b_) + ",g1=" + fmt(gammas_[0]) +
                       ",g2=" + fmt(gammas_[1]) + ")";
            case PhiKind::StableMixture: {
                std::string s = "stable_mixture(";
                for (size_t i = 0; i < gammas_.size(); ++i)
                    s += (i ? "," : "") + fmt(gammas_[i]);
                return s + ")";
            }
            case PhiKind::NestedStable:
                return "nested_stable(g1=" + fmt(gammas_[0]) + ",g2=" + fmt(gammas_[1]) + ")";
            case PhiKind::LogCorrectedStable:
                return "log_corrected_stable(g1=" + fmt(gammas_[0]) + ",g2=" + fmt(gammas_[1]) + ")";
            case PhiKind::RelativisticStable:
                return "relativistic(a=" + fmt(gammas_[0]) + ",theta=" + fmt(theta_) + ")";
        }
        return "?";
    }

    // Boundary value Im psi(-x + i0), x > 0, of the analytic continuation.
    // Exists for complete Bernstein functions; used to evaluate Levy densities
    // where no closed form is available.
    double psi_cut_imag(double x) const {
        using cplx = std::complex<double>;
        const double pi = 3.14159265358979323846;
        switch (kind_) {
            case PhiKind::PureDrift:
                return 0.0;
            case PhiKind::StableWithDrift: {
                const double a = gammas_[0] / kWalkDimension;
                return std::pow(x, a) * std::sin(pi * a);
            }
            case PhiKind::StableMixture: {
                double s = 0;
                for (double g : gammas_) {
                    const double a = g / kWalkDimension;
                    s += std::pow(x, a) * std::sin(pi * a);
                }
                return s;
            }
            case PhiKind::RelativisticStable: {
                const double a = gammas_[0] / kWalkDimension;
                const double m = std::pow(theta_, 1.0 / a);
                if (x <= m) return 0.0;
                return std::pow(x - m, a) * std::sin(pi * a);
            }
            case PhiKind::NestedStable: {
                const double a1 = gammas_[0] / kWalkDimension;
                const double a2 = gammas_[1] / kWalkDimension;
                cplx inner = cplx(-x, 0.0) + std::polar(std::pow(x, a1), pi * a1);
                return std::imag(std::pow(inner, a2));
            }
            case PhiKind::LogStableWithDrift:
            case PhiKind::LogCorrectedStable: {
                const double a1 = gammas_[0] / kWalkDimension;
                const double a2 = (kind_ == PhiKind::LogCorrectedStable ? -1.0 : 1.0) *
                                  gammas_[1] / kWalkDimension;
                cplx lg = (x < 1.0) ? cplx(std::log1p(-x), 0.0)
                                    : cplx(std::log(x - 1.0), pi);
                cplx val = std::polar(std::pow(x, a1), pi * a1) * std::pow(lg, a2);
                return std::imag(val);
            }
        }
        return 0.0;
    }

private:
    LaplaceExponent(PhiKind k, double b, std::vector<double> g, double th)
        : kind_(k), b_(b), gammas_(std::move(g)), theta_(th) {}

    static void check_gamma(double g) {
        if (g <= 0 || g >= kWalkDimension)
            throw config_error("phi: gamma must lie in (0, d_w)");
    }

    PhiKind kind_;
    double b_;
    std::vector<double> gammas_;
    double theta_;
};

// Tail estimate eta_t(A, inf) <= t/(1-1/e) * int_0^{1/A} phi(l)/l dl.
inline double tail_bound(const LaplaceExponent& phi, double t, double A) {
    if (t <= 0 || A <= 0) throw std::invalid_argument("tail_bound: t,A > 0 required");
    const double up = 1.0 / A;
    double integral = phi.drift() * up;  // drift part is exact
    // Closed form for sums of pure powers, quadrature otherwise.
    if (phi.kind() == PhiKind::StableWithDrift || phi.kind() == PhiKind::StableMixture) {
        for (double g : phi.gammas()) {
            const double a = g / kWalkDimension;
            integral += std::pow(up, a) / a;
        }
    } else if (phi.kind() != PhiKind::PureDrift) {
        // log substitution; integrand psi(e^u) decays like e^{beta u / d_w}
        const double a_lo = phi.beta() / kWalkDimension;
        const double u_hi = std::log(up);
        double u_lo = u_hi;
        while (phi.psi(std::exp(u_lo)) > 1e-16 * (phi.psi(up) + 1e-300) && u_hi - u_lo < 2000)
            u_lo -= 50.0 / std::max(a_lo, 0.05);
        integral += integrate([&](double u) { return phi.psi(std::exp(u)); }, u_lo, u_hi, 1e-10);
    }
    return t / (1.0 - std::exp(-1.0)) * integral;
}

// Exact Levy density of the pure a-stable subordinator, a in (0,1).
inline double stable_levy_density(double a, double s) {
    return a / std::tgamma(1.0 - a) * std::pow(s, -1.0 - a);
}

// Levy density rho(s); closed form where the preset admits one, else the
// completely monotone representation rho(s) = (1/pi) int e^{-sx} Im psi(-x) dx.
inline double levy_density(const LaplaceExponent& phi, double s) {
    if (s <= 0) throw std::invalid_argument("levy_density: s > 0 required");
    const double pi = 3.14159265358979323846;
    switch (phi.kind()) {
        case PhiKind::PureDrift:
            return 0.0;
        case PhiKind::StableWithDrift:
            return stable_levy_density(phi.gammas()[0] / kWalkDimension, s);
        case PhiKind::StableMixture: {
            double r = 0;
            for (double g : phi.gammas()) r += stable_levy_density(g / kWalkDimension, s);
            return r;
        }
        case PhiKind::RelativisticStable: {
            const double a = phi.gammas()[0] / kWalkDimension;
            const double m = std::pow(phi.rel_theta(), 1.0 / a);
            return stable_levy_density(a, s) * std::exp(-m * s);
        }
        default: {
            // quadrature of the boundary-value formula on a log grid
            const double x_hi = std::log(60.0 / s + 60.0);
            const double x_lo = std::log(1e-10);
            return integrate(
                       [&](double u) {
                           const double x = std::exp(u);
                           return std::exp(-s * x) * phi.psi_cut_imag(x) * x;
                       },
                       x_lo, x_hi, 1e-11 * std::max(1.0, std::pow(s, -1.5))) /
                   pi;
        }
    }
}

// Weak-scaling certificate for (L1)/(U1)-(U3). Exponents come from the preset
// table; constants a1..a4 are fitted once on a grid and re-verified.
struct ScalingCertificate {
    Regime regime = Regime::None;
    double alpha1 = 0, alpha2 = 0, beta = 0, delta_upper = 0;
    double a1 = 1, a2 = 1, a3 = 1, a4 = 1, r0 = 1;
    double abar1 = 0, abar2 = 0;  // psi(l) >= abar_i l^{alpha_i/d_w} bounds
    bool consistent = true;
};

inline ScalingCertificate classify(const LaplaceExponent& phi) {
    ScalingCertificate c;
    c.regime = phi.regime();
    c.beta = phi.beta();
    switch (phi.kind()) {
        case PhiKind::PureDrift:
            c.alpha1 = c.alpha2 = c.delta_upper = kWalkDimension;
            return c;  // no jump part to verify
        case PhiKind::StableWithDrift:
            c.alpha1 = c.alpha2 = c.delta_upper = phi.gammas()[0];
            break;
        case PhiKind::LogStableWithDrift:
            c.alpha1 = phi.gammas()[0] + phi.gammas()[1];
            c.alpha2 = phi.gammas()[0];
            c.delta_upper = 0.5 * (phi.gammas()[0] + kWalkDimension);
            break;
        case PhiKind::StableMixture:
            c.alpha1 = phi.gammas().front();
            c.alpha2 = c.delta_upper = phi.gammas().back();
            break;
        case PhiKind::NestedStable:
            c.alpha1 = phi.gammas()[0] * phi.gammas()[1] / kWalkDimension;
            c.alpha2 = c.delta_upper = phi.gammas()[1];
            break;
        case PhiKind::LogCorrectedStable:
            c.alpha1 = c.alpha2 = phi.gammas()[0] - phi.gammas()[1];
            c.delta_upper = phi.gammas()[0];
            break;
        case PhiKind::RelativisticStable:
            return c;  // regime none: no scaling certificate
    }
    c.r0 = 1.0;
    const double dw = kWalkDimension;
    // calibration grid
    auto logspace = [](double lo, double hi, int k) {
        std::vector<double> v(k);
        for (int i = 0; i < k; ++i)
            v[i] = lo * std::pow(hi / lo, double(i) / (k - 1));
        return v;
    };
    auto lams_small = logspace(1e-4, 1.0, 25);
    auto rs_small = logspace(1e-4, c.r0, 25);
    auto lams_large = logspace(1.0, 1e4, 25);
    auto rs_large = logspace(c.r0, 1e4, 25);
    double a1 = 1e300, a3 = -1e300, a2 = 1e300, a4 = -1e300;
    for (double r : rs_small) {
        const double pr = phi.psi(r);
        for (double l : lams_small) {
            const double q = phi.psi(l * r) / pr;
            a1 = std::min(a1, q / std::pow(l, c.alpha1 / dw));
            a3 = std::max(a3, q / std::pow(l, c.beta / dw));
        }
    }
    for (double r : rs_large) {
        const double pr = phi.psi(r);
        for (double l : lams_large) {
            const double q = phi.psi(l * r) / pr;
            a2 = std::min(a2, q / std::pow(l, c.alpha2 / dw));
            a4 = std::max(a4, q / std::pow(l, c.delta_upper / dw));
        }
    }
    c.a1 = std::min(a1, 1.0);
    c.a2 = std::min(a2, 1.0);
    c.a3 = std::max(a3, 1.0);
    c.a4 = std::max(a4, 1.0);
    c.abar1 = c.a1 * phi.psi(c.r0) * std::pow(c.r0, -c.alpha1 / dw);
    c.abar2 = c.a2 * phi.psi(c.r0) * std::pow(c.r0, -c.alpha2 / dw);
    // verification on an offset grid
    auto vl_small = logspace(2.3e-4, 0.9, 17);
    auto vr_small = logspace(3.1e-4, 0.9 * c.r0, 17);
    auto vl_large = logspace(1.1, 7e3, 17);
    auto vr_large = logspace(1.1 * c.r0, 7e3, 17);
    const double slack = 1.0 + 1e-9;
    for (double r : vr_small)
        for (double l : vl_small) {
            const double q = phi.psi(l * r) / phi.psi(r);
            if (q * slack < c.a1 * std::pow(l, c.alpha1 / dw) ||
                q > slack * c.a3 * std::pow(l, c.beta / dw))
                c.consistent = false;
        }
    for (double r : vr_large)
        for (double l : vl_large) {
            const double q = phi.psi(l * r) / phi.psi(r);
            if (q * slack < c.a2 * std::pow(l, c.alpha2 / dw) ||
                q > slack * c.a4 * std::pow(l, c.delta_upper / dw))
                c.consistent = false;
        }
    return c;
}

// Lower envelope for the Levy density under (U2)/(U3):
// floor(s) = c * s^{-1-alpha1/d_w} (s>=1), c * s^{-1-alpha2/d_w} (s<=1),
// with c calibrated against the density on a log grid.
class LevyDensityFloor {
public:
    explicit LevyDensityFloor(const LaplaceExponent& phi)
        : phi_(phi), cert_(classify(phi)) {
        if (cert_.regime != Regime::U2 && cert_.regime != Regime::U3)
            throw std::invalid_argument("levy floor: regime (U2)/(U3) required");
        double c = 1e300;
        for (double s = 1e-3; s <= 1e3; s *= 1.6)
            c = std::min(c, levy_density(phi_, s) / shape(s));
        c_ = 0.95 * c;
    }

    double shape(double s) const {
        const double a = (s >= 1.0 ? cert_.alpha1 : cert_.alpha2) / kWalkDimension;
        return std::pow(s, -1.0 - a);
    }

    double operator()(double s) const {
        if (s <= 0) throw std::invalid_argument("levy floor: s > 0 required");
        return c_ * shape(s);
    }

    double constant() const { return c_; }
    const ScalingCertificate& certificate() const { return cert_; }

private:
    LaplaceExponent phi_;
    ScalingCertificate cert_;
    double c_;
};

// Exact-law sampler for subordinator increments. Stable components use the
// Kanter representation with self-similarity S_t = t^{1/a} S_1; the
// relativistic preset tilts the stable law by rejection in chunks so the
// acceptance rate stays bounded.
class SubordinatorSampler {
public:
    SubordinatorSampler(const LaplaceExponent& phi, Rng rng)
        : phi_(phi), rng_(std::move(rng)) {
        if (!phi.has_sampler())
            throw config_error("sampler: no exact sampler for " + phi.name());
    }

    const LaplaceExponent& exponent() const { return phi_; }

    // One-sided a-stable with Laplace transform exp(-lambda^a).
    double stable_one(double a) {
        const double u = rng_.uniform(0.0, 3.14159265358979323846);
        const double e = rng_.exponential();
        const double A = std::pow(std::sin(a * u), a / (1.0 - a)) *
                         std::sin((1.0 - a) * u) /
                         std::pow(std::sin(u), 1.0 / (1.0 - a));
        return std::pow(A / e, (1.0 - a) / a);
    }

    double increment(double t) {
        if (t <= 0) throw std::invalid_argument("sampler: t > 0 required");
        switch (phi_.kind()) {
            case PhiKind::PureDrift:
                return phi_.drift() * t;
            case PhiKind::StableWithDrift: {
                const double a = phi_.gammas()[0] / kWalkDimension;
                return phi_.drift() * t + std::pow(t, 1.0 / a) * stable_one(a);
            }
            case PhiKind::StableMixture: {
                double s = 0;
                for (double g : phi_.gammas()) {
                    const double a = g / kWalkDimension;
                    s += std::pow(t, 1.0 / a) * stable_one(a);
                }
                return s;
            }
            case PhiKind::RelativisticStable:
                return relativistic_increment(t);
            default:
                throw config_error("sampler: unsupported preset");
        }
    }

private:
    double relativistic_increment(double t) {
        const double a = phi_.gammas()[0] / kWalkDimension;
        const double m = std::pow(phi_.rel_theta(), 1.0 / a);
        // chunk so t_chunk * theta <= 1: acceptance >= e^{-1} per chunk
        const int chunks = std::max(1, static_cast<int>(std::ceil(t * phi_.rel_theta())));
        const double tc = t / chunks;
        double total = 0;
        long iters = 0;
        for (int k = 0; k < chunks; ++k) {
            for (;;) {
                if (++iters > 1000000)
                    throw solver_error("relativistic sampler: rejection cap hit");
                const double u = std::pow(tc, 1.0 / a) * stable_one(a);
                if (rng_.uniform() < std::exp(-m * u)) {
                    total += u;
                    break;
                }
            }
        }
        return total;
    }

    LaplaceExponent phi_;
    Rng rng_;
};

}  // namespace gasketlab
