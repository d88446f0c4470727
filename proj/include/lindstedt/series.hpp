#pragma once

#include "model.hpp"

#include <array>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace lindstedt {

struct resonance_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class F> using FourierPoly = std::map<Mode, CoeffPoly<F>>;

template <class F> void fourier_add(FourierPoly<F>& acc, const Mode& nu, const CoeffPoly<F>& p) {
    if (p.is_zero()) return;
    auto it = acc.find(nu);
    if (it == acc.end()) {
        acc.emplace(nu, p);
        return;
    }
    it->second += p;
    if (it->second.is_zero()) acc.erase(it);
}

template <class F> FourierPoly<F> fourier_mul(const FourierPoly<F>& a, const FourierPoly<F>& b) {
    FourierPoly<F> r;
    for (auto& [na, pa] : a)
        for (auto& [nb, pb] : b) fourier_add(r, na + nb, pa * pb);
    return r;
}

// Power series in eps with Fourier-polynomial coefficients, truncated at a fixed order.
template <class F> using EpsSeries = std::vector<FourierPoly<F>>;

template <class F> EpsSeries<F> eps_mul(const EpsSeries<F>& a, const EpsSeries<F>& b, int M) {
    EpsSeries<F> r(M + 1);
    for (int i = 0; i < static_cast<int>(a.size()) && i <= M; ++i)
        for (int k = 0; k < static_cast<int>(b.size()) && i + k <= M; ++k) {
            if (a[i].empty() || b[k].empty()) continue;
            for (auto& [nu, p] : fourier_mul(a[i], b[k])) fourier_add(r[i + k], nu, p);
        }
    return r;
}

template <class F> struct SeriesTable {
    Variant variant = Variant::real;
    int d = 1;
    int K = 0;
    // x[k][t]: real t = j; zw t = 2j (z_j) or 2j+1 (w_j)
    std::vector<std::vector<FourierPoly<F>>> x;
    // eta[k][j] = {eta_{j,+}, eta_{j,-}}; real variant keeps the sigma = - solve for the consistency check
    std::vector<std::vector<std::array<CoeffPoly<F>, 2>>> eta;
    std::vector<std::string> consistency_failures;

    int nfields() const { return variant == Variant::real ? d : 2 * d; }

    CoeffPoly<F> coeff(int k, int t, const Mode& nu) const {
        auto it = x[k][t].find(nu);
        return it == x[k][t].end() ? CoeffPoly<F>(d) : it->second;
    }
    const CoeffPoly<F>& eta_plus(int k, int j) const { return eta[k][j][0]; }
    const CoeffPoly<F>& eta_minus(int k, int j) const { return eta[k][j][1]; }
};

template <class F> bool denominator_vanishes(const F& den) {
    if constexpr (field_traits<F>::exact) {
        return den.is_zero();
    } else {
        return boost::multiprecision::abs(den) < boost::multiprecision::ldexp(BigFloat(1), -bigfloat_precision_bits() + 8);
    }
}

template <class F> SeriesTable<F> initial_table(const Model<F>& m) {
    SeriesTable<F> t;
    t.variant = m.variant;
    t.d = m.d();
    t.K = 0;
    int d = t.d;
    t.x.assign(1, std::vector<FourierPoly<F>>(t.nfields()));
    t.eta.assign(1, std::vector<std::array<CoeffPoly<F>, 2>>(d, {CoeffPoly<F>(d), CoeffPoly<F>(d)}));
    for (int j = 0; j < d; ++j) {
        if (t.variant == Variant::real) {
            t.x[0][j][unit(d, j, 1)] = CoeffPoly<F>::symbol(d, j, 1);
            t.x[0][j][unit(d, j, -1)] = CoeffPoly<F>::symbol(d, j, -1);
        } else {
            t.x[0][2 * j][unit(d, j, 1)] = CoeffPoly<F>::symbol(d, j, 1);
            t.x[0][2 * j + 1][unit(d, j, -1)] = CoeffPoly<F>::symbol(d, j, -1);
        }
    }
    return t;
}

// f^(k)_{j,sigma} as Fourier polynomials; sigma only matters in the zw variant.
template <class F> std::vector<std::array<FourierPoly<F>, 2>> force_at_order(const Model<F>& m, const SeriesTable<F>& t, int k) {
    int d = t.d, nf = t.nfields();
    int M = k - 1;
    // eps-series of each field, truncated to order k-1
    std::vector<EpsSeries<F>> X(nf, EpsSeries<F>(M + 1));
    for (int q = 0; q <= M; ++q)
        for (int f = 0; f < nf; ++f) X[f][q] = t.x[q][f];
    std::map<std::pair<int, int>, EpsSeries<F>> powers;
    std::function<const EpsSeries<F>&(int, int)> power = [&](int f, int n) -> const EpsSeries<F>& {
        auto key = std::make_pair(f, n);
        auto it = powers.find(key);
        if (it != powers.end()) return it->second;
        EpsSeries<F> r(M + 1);
        if (n == 0) {
            r[0][Mode(d, 0)] = CoeffPoly<F>::constant(d, Complex<F>(1));
        } else {
            r = eps_mul(power(f, n - 1), X[f], M);
        }
        return powers.emplace(key, std::move(r)).first->second;
    };

    std::vector<std::array<FourierPoly<F>, 2>> out(d);
    int sides = m.variant == Variant::real ? 1 : 2;
    for (int j = 0; j < d; ++j) {
        for (int side = 0; side < sides; ++side) {
            for (auto& term : m.force.terms[j][side]) {
                int need = k - term.p;
                if (need < 0) continue;
                EpsSeries<F> prod(M + 1);
                prod[0][Mode(d, 0)] = CoeffPoly<F>::constant(d, Complex<F>(1));
                for (int f = 0; f < nf; ++f)
                    if (term.slots[f] > 0) prod = eps_mul(prod, power(f, term.slots[f]), need);
                if (need >= static_cast<int>(prod.size())) continue;
                for (auto& [nu, p] : prod[need]) fourier_add(out[j][side], nu, p.scaled(term.coeff));
            }
        }
    }
    return out;
}

template <class F> void solve_order(const Model<F>& m, SeriesTable<F>& t, int k) {
    if (k != t.K + 1) throw std::invalid_argument("solve_order: orders must be added in sequence");
    int d = t.d;
    auto f = force_at_order(m, t, k);
    t.x.emplace_back(t.nfields());
    t.eta.emplace_back(d, std::array<CoeffPoly<F>, 2>{CoeffPoly<F>(d), CoeffPoly<F>(d)});
    t.K = k;

    auto bracket = [&](const FourierPoly<F>& fj, const Mode& nu) {
        auto it = fj.find(nu);
        return it == fj.end() ? CoeffPoly<F>(d) : it->second;
    };

    for (int j = 0; j < d; ++j) {
        Mode ep = unit(d, j, 1), em = unit(d, j, -1);
        if (t.variant == Variant::real) {
            const auto& fj = f[j][0];
            t.eta[k][j][0] = -bracket(fj, ep).divide_symbol(j, 1);
            t.eta[k][j][1] = -bracket(fj, em).divide_symbol(j, -1);
            if (t.eta[k][j][0] != t.eta[k][j][1])
                t.consistency_failures.push_back("order " + std::to_string(k) + " component " + std::to_string(j + 1));
            FourierPoly<F> rhs = fj;
            for (int kp = 1; kp < k; ++kp)
                for (auto& [nu, p] : t.x[k - kp][j]) fourier_add(rhs, nu, t.eta[kp][j][0] * p);
            for (auto& [nu, p] : rhs) {
                if (nu == ep || nu == em) continue;
                F w = m.spec.dot(nu);
                F den = w * w - m.spec.omega[j] * m.spec.omega[j];
                if (denominator_vanishes(den)) throw resonance_error("vanishing denominator at component " + std::to_string(j + 1) + ", mode " + mode_str(nu));
                fourier_add(t.x[k][j], nu, p.scaled(Complex<F>(F(1) / den)));
            }
        } else if (m.embedded_real) {
            // f+ = f- here, and z + w at +-e_j vanishes for k >= 1, so eta comes from the z equation alone
            const auto& fj = f[j][0];
            F two_w = F(2) * m.spec.omega[j];
            t.eta[k][j][0] = -bracket(fj, ep).divide_symbol(j, 1).scaled(Complex<F>(two_w));
            t.eta[k][j][1] = -bracket(f[j][1], em).divide_symbol(j, -1).scaled(Complex<F>(two_w));
            if (t.eta[k][j][0] != t.eta[k][j][1])
                t.consistency_failures.push_back("order " + std::to_string(k) + " component " + std::to_string(j + 1));
            FourierPoly<F> rhs = fj;
            for (int kp = 1; kp <= k; ++kp) {
                auto scale = Complex<F>(F(1) / two_w);
                for (auto& [nu, p] : t.x[k - kp][2 * j]) fourier_add(rhs, nu, (t.eta[kp][j][0] * p).scaled(scale));
                for (auto& [nu, p] : t.x[k - kp][2 * j + 1]) fourier_add(rhs, nu, (t.eta[kp][j][0] * p).scaled(scale));
            }
            for (int side = 0; side < 2; ++side) {
                int sigma = side == 0 ? 1 : -1;
                Mode res = side == 0 ? ep : em;
                for (auto& [nu, p] : rhs) {
                    if (nu == ep || nu == em) {
                        if (nu == res) continue;
                        // the bifurcation equation at the opposite mode already holds
                        if (!p.is_zero())
                            t.consistency_failures.push_back("order " + std::to_string(k) + " component " + std::to_string(j + 1) + " mode " + mode_str(nu));
                        continue;
                    }
                    F den = F(sigma) * m.spec.dot(nu) - m.spec.omega[j];
                    if (denominator_vanishes(den)) throw resonance_error("vanishing denominator at component " + std::to_string(j + 1) + ", mode " + mode_str(nu));
                    fourier_add(t.x[k][2 * j + side], nu, p.scaled(Complex<F>(F(1) / den)));
                }
            }
        } else {
            for (int side = 0; side < 2; ++side) {
                int sigma = side == 0 ? 1 : -1;
                const auto& fj = f[j][side];
                Mode res = side == 0 ? ep : em;
                int field = 2 * j + side;
                t.eta[k][j][side] = -bracket(fj, res).divide_symbol(j, sigma);
                FourierPoly<F> rhs = fj;
                for (int kp = 1; kp < k; ++kp)
                    for (auto& [nu, p] : t.x[k - kp][field]) fourier_add(rhs, nu, t.eta[kp][j][side] * p);
                for (auto& [nu, p] : rhs) {
                    if (nu == res) continue;
                    F den = F(sigma) * m.spec.dot(nu) - m.spec.omega[j];
                    if (denominator_vanishes(den)) throw resonance_error("vanishing denominator at component " + std::to_string(j + 1) + ", mode " + mode_str(nu));
                    fourier_add(t.x[k][field], nu, p.scaled(Complex<F>(F(1) / den)));
                }
            }
        }
    }
}

template <class F> SeriesTable<F> solve_up_to(const Model<F>& m, int K) {
    if (K < 0) throw std::invalid_argument("order must be non-negative");
    SeriesTable<F> t = initial_table(m);
    for (int k = 1; k <= K; ++k) solve_order(m, t, k);
    return t;
}

// x_{j,nu} = z_{j,nu} + w_{j,nu} for a zw table.
template <class F> std::vector<FourierPoly<F>> reconstruct_x(const SeriesTable<F>& t, int k) {
    std::vector<FourierPoly<F>> out(t.d);
    for (int j = 0; j < t.d; ++j) {
        for (auto& [nu, p] : t.x[k][2 * j]) fourier_add(out[j], nu, p);
        for (auto& [nu, p] : t.x[k][2 * j + 1]) fourier_add(out[j], nu, p);
    }
    return out;
}

}  // namespace lindstedt
