#pragma once

#include "series.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace lindstedt {

using FC = Complex<BigFloat>;

struct ResidualReport {
    std::string model;
    std::string equations;  // "real" or "zw"
    int K = 0;
    std::vector<FC> c;
    std::vector<BigFloat> eps;
    std::vector<BigFloat> residual;                   // sup over the torus grid and all components
    std::vector<std::vector<BigFloat>> per_component;  // [eps][field]
    std::optional<double> slope;                       // least-squares log-log slope, at least 4 points
    std::vector<std::string> warnings;
};

// log10 of a positive big float, as a double
inline double log10_big(const BigFloat& x) { return boost::multiprecision::log10(x).convert_to<double>(); }

inline std::optional<double> loglog_slope(const std::vector<BigFloat>& xs, const std::vector<BigFloat>& ys) {
    std::vector<double> lx, ly;
    for (size_t i = 0; i < xs.size(); ++i)
        if (xs[i] > 0 && ys[i] > 0) {
            lx.push_back(log10_big(xs[i]));
            ly.push_back(log10_big(ys[i]));
        }
    if (lx.size() < 4) return std::nullopt;
    double n = static_cast<double>(lx.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline BigFloat gamma_of(const std::vector<FC>& c) {
    BigFloat g = 1;
    for (auto& z : c) g = std::max(g, abs(z));
    return g;
}

namespace detail {

inline std::vector<FC> roots_of_unity(int N) {
    std::vector<FC> r(N);
    BigFloat two_pi = boost::math::constants::two_pi<BigFloat>();
    for (int a = 0; a < N; ++a) {
        BigFloat phi = two_pi * BigFloat(a) / BigFloat(N);
        r[a] = FC(boost::multiprecision::cos(phi), boost::multiprecision::sin(phi));
    }
    return r;
}

struct NumericMode {
    Mode nu;
    BigFloat lin;  // linear operator on this mode; vanishes exactly on the unperturbed modes
    FC coeff;
};

}  // namespace detail

// Residual of the equations of motion along the truncated series, sampled on an N^d torus grid.
// Real variant: xdd + omega^2 x + f + eta x. zw variant: -i zdot - omega z - f+ - eta z and i wdot - omega w - f- - eta w,
// with the embedding's normalization when the model is an embedded real system.
template <class F>
ResidualReport residual_sweep(const Model<F>& m, const SeriesTable<F>& t, const std::vector<FC>& c, const std::vector<BigFloat>& eps_grid, int N = 64, int jobs = 1) {
    if (static_cast<int>(c.size()) != m.d()) throw std::invalid_argument("expected " + std::to_string(m.d()) + " amplitudes");
    if (N < 4) throw std::invalid_argument("torus grid too coarse");
    ResidualReport rep;
    rep.model = m.name;
    rep.equations = m.variant == Variant::real ? "real" : "zw";
    rep.K = t.K;
    rep.c = c;
    rep.eps = eps_grid;
    int d = m.d(), nf = t.nfields();
    bool real = m.variant == Variant::real;
    std::vector<BigFloat> omega(d);
    for (int j = 0; j < d; ++j) omega[j] = field_traits<F>::to_bigfloat(m.spec.omega[j]);

    // numeric modes per order and field
    std::vector<std::vector<std::vector<detail::NumericMode>>> modes(t.K + 1, std::vector<std::vector<detail::NumericMode>>(nf));
    for (int k = 0; k <= t.K; ++k)
        for (int f = 0; f < nf; ++f)
            for (auto& [nu, p] : t.x[k][f]) {
                BigFloat w = 0;
                for (int i = 0; i < d; ++i) w += BigFloat(nu[i]) * omega[i];
                int j = real ? f : f / 2;
                BigFloat lin = real ? omega[j] * omega[j] - w * w : (f % 2 == 0 ? w : -w) - omega[j];
                modes[k][f].push_back({nu, lin, p.eval(c)});
            }
    // eta^(k)_{j,sigma}
    std::vector<std::vector<std::array<FC, 2>>> eta(t.K + 1, std::vector<std::array<FC, 2>>(d));
    for (int k = 1; k <= t.K; ++k)
        for (int j = 0; j < d; ++j) {
            eta[k][j][0] = t.eta[k][j][0].eval(c);
            eta[k][j][1] = t.eta[k][j][1].eval(c);
        }
    std::vector<std::array<std::vector<ForceTerm<BigFloat>>, 2>> force(d);
    for (int j = 0; j < d; ++j)
        for (int s = 0; s < 2; ++s)
            for (auto& term : m.force.terms[j][s]) force[j][s].push_back({term.p, term.slots, convert<BigFloat>(term.coeff)});

    auto roots = detail::roots_of_unity(N);
    long points = 1;
    for (int i = 0; i < d; ++i) points *= N;

    size_t G = eps_grid.size();
    rep.residual.assign(G, BigFloat(0));
    rep.per_component.assign(G, {});
    // one grid point per task; the tables above are only read
    auto run = [&](size_t gi) {
        const BigFloat& eps = eps_grid[gi];
        std::vector<BigFloat> comp(real ? d : 2 * d, BigFloat(0));
        // powers of eps
        std::vector<BigFloat> ep(t.K + 1 + m.force.max_p() + 1);
        ep[0] = 1;
        for (size_t i = 1; i < ep.size(); ++i) ep[i] = ep[i - 1] * eps;
        std::vector<std::array<FC, 2>> eta_eps(d, {FC(0), FC(0)});
        for (int k = 1; k <= t.K; ++k)
            for (int j = 0; j < d; ++j)
                for (int s = 0; s < 2; ++s) eta_eps[j][s] += eta[k][j][s] * FC(ep[k]);

        std::vector<int> a(d, 0);
        for (long pt = 0; pt < points; ++pt) {
            long rest = pt;
            for (int i = 0; i < d; ++i) {
                a[i] = static_cast<int>(rest % N);
                rest /= N;
            }
            std::vector<FC> val(nf, FC(0)), lin(nf, FC(0));
            for (int k = 0; k <= t.K; ++k)
                for (int f = 0; f < nf; ++f)
                    for (auto& md : modes[k][f]) {
                        long ph = 0;
                        for (int i = 0; i < d; ++i) ph += static_cast<long>(md.nu[i]) * a[i];
                        ph %= N;
                        if (ph < 0) ph += N;
                        FC term = md.coeff * roots[ph] * FC(ep[k]);
                        val[f] += term;
                        lin[f] += term * FC(md.lin);
                    }
            for (int j = 0; j < d; ++j) {
                int sides = real ? 1 : 2;
                for (int s = 0; s < sides; ++s) {
                    FC f(0);
                    for (auto& term : force[j][s]) {
                        FC v = term.coeff * FC(ep[term.p]);
                        for (int q = 0; q < nf; ++q)
                            for (int e = 0; e < term.slots[q]; ++e) v *= val[q];
                        f += v;
                    }
                    FC r;
                    if (real) {
                        r = lin[j] + f + eta_eps[j][0] * val[j];
                    } else {
                        int fld = 2 * j + s;
                        FC etaterm = m.embedded_real ? eta_eps[j][s] * (val[2 * j] + val[2 * j + 1]) / FC(BigFloat(2) * omega[j]) : eta_eps[j][s] * val[fld];
                        r = lin[fld] - f - etaterm;
                    }
                    BigFloat ar = abs(r);
                    int slot = real ? j : 2 * j + s;
                    if (ar > comp[slot]) comp[slot] = ar;
                }
            }
        }
        BigFloat sup = 0;
        for (auto& x : comp) sup = std::max(sup, x);
        rep.residual[gi] = sup;
        rep.per_component[gi] = std::move(comp);
    };
    int nt = std::max(1, std::min<int>(jobs, static_cast<int>(G)));
    if (nt == 1) {
        for (size_t gi = 0; gi < G; ++gi) run(gi);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nt; ++w)
            pool.emplace_back([&, w] {
                for (size_t gi = w; gi < G; gi += nt) run(gi);
            });
        for (auto& th : pool) th.join();
    }
    BigFloat g3 = boost::multiprecision::pow(gamma_of(c), 3);
    for (auto& eps : eps_grid)
        if (boost::multiprecision::abs(eps) * g3 > BigFloat("0.01")) rep.warnings.push_back("eps=" + eps.str(6) + " outside the |eps| Gamma^3 <= 1e-2 window");
    rep.slope = loglog_slope(eps_grid, rep.residual);
    return rep;
}

// Real-variant view of an embedded zw table: x = z + w, eta from the + side.
template <class F> SeriesTable<F> real_view(const SeriesTable<F>& t) {
    if (t.variant != Variant::zw) throw std::invalid_argument("real_view expects a zw table");
    SeriesTable<F> r;
    r.variant = Variant::real;
    r.d = t.d;
    r.K = t.K;
    for (int k = 0; k <= t.K; ++k) {
        r.x.push_back(reconstruct_x(t, k));
        std::vector<std::array<CoeffPoly<F>, 2>> e;
        for (int j = 0; j < t.d; ++j) e.push_back({t.eta[k][j][0], t.eta[k][j][0]});
        r.eta.push_back(std::move(e));
    }
    return r;
}

struct GrowthReport {
    std::vector<BigFloat> a;          // a_k = max |x^(k)_{j,nu}(c)|, k = 1..K
    std::vector<double> root;         // a_k^(1/k)
    std::vector<BigFloat> gamma_ratio;  // a_k / Gamma^(3k)
};

template <class F> GrowthReport growth_diagnostics(const SeriesTable<F>& t, const std::vector<FC>& c) {
    GrowthReport rep;
    BigFloat g3 = boost::multiprecision::pow(gamma_of(c), 3), gk = 1;
    for (int k = 1; k <= t.K; ++k) {
        BigFloat a = 0;
        for (auto& field : t.x[k])
            for (auto& [nu, p] : field) a = std::max(a, abs(p.eval(c)));
        gk *= g3;
        rep.a.push_back(a);
        rep.root.push_back(a > 0 ? std::pow(10.0, log10_big(a) / k) : 0.0);
        rep.gamma_ratio.push_back(a / gk);
    }
    return rep;
}

inline std::vector<BigFloat> log_eps_grid(double from_exp, double to_exp, int points) {
    std::vector<BigFloat> g;
    for (int i = 0; i < points; ++i) {
        BigFloat e = BigFloat(from_exp) + (BigFloat(to_exp) - BigFloat(from_exp)) * BigFloat(i) / BigFloat(points - 1);
        g.push_back(boost::multiprecision::pow(BigFloat(10), e));
    }
    return g;
}

}  // namespace lindstedt
