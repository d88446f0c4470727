#pragma once

#include "scalar.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace lindstedt {

// Exponents of (c1+, c1-, c2+, c2-, ...).
using Monomial = std::vector<int>;

inline int symbol_index(int j, int sigma) { return 2 * j + (sigma > 0 ? 0 : 1); }

template <class F> class CoeffPoly {
public:
    using Scalar = Complex<F>;
    using Terms = std::map<Monomial, Scalar>;

    CoeffPoly() = default;
    explicit CoeffPoly(int d) : d_(d) {}

    static CoeffPoly constant(int d, const Scalar& s) {
        CoeffPoly p(d);
        p.add_term(Monomial(2 * d, 0), s);
        return p;
    }
    // c_j^sigma, with j zero-based.
    static CoeffPoly symbol(int d, int j, int sigma) {
        Monomial m(2 * d, 0);
        m[symbol_index(j, sigma)] = 1;
        CoeffPoly p(d);
        p.add_term(m, Scalar(1));
        return p;
    }

    int dim() const { return d_; }
    const Terms& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    size_t size() const { return terms_.size(); }

    void add_term(const Monomial& m, const Scalar& s) {
        if (static_cast<int>(m.size()) != 2 * d_) throw std::invalid_argument("monomial length mismatch");
        auto it = terms_.find(m);
        if (it == terms_.end()) {
            if (!s.is_zero()) terms_.emplace(m, s);
            return;
        }
        it->second += s;
        if (it->second.is_zero()) terms_.erase(it);
    }

    Scalar coeff(const Monomial& m) const {
        auto it = terms_.find(m);
        return it == terms_.end() ? Scalar(0) : it->second;
    }

    CoeffPoly& operator+=(const CoeffPoly& o) {
        check(o);
        for (auto& [m, s] : o.terms_) add_term(m, s);
        return *this;
    }
    CoeffPoly& operator-=(const CoeffPoly& o) {
        check(o);
        for (auto& [m, s] : o.terms_) add_term(m, -s);
        return *this;
    }
    friend CoeffPoly operator+(CoeffPoly a, const CoeffPoly& b) { return a += b; }
    friend CoeffPoly operator-(CoeffPoly a, const CoeffPoly& b) { return a -= b; }
    CoeffPoly operator-() const {
        CoeffPoly r(d_);
        for (auto& [m, s] : terms_) r.terms_.emplace(m, -s);
        return r;
    }

    friend CoeffPoly operator*(const CoeffPoly& a, const CoeffPoly& b) {
        a.check(b);
        CoeffPoly r(a.d_);
        Monomial m(2 * a.d_);
        for (auto& [ma, sa] : a.terms_) {
            for (auto& [mb, sb] : b.terms_) {
                for (size_t i = 0; i < m.size(); ++i) m[i] = ma[i] + mb[i];
                r.add_term(m, sa * sb);
            }
        }
        return r;
    }
    CoeffPoly& operator*=(const CoeffPoly& o) { return *this = *this * o; }

    CoeffPoly scaled(const Scalar& s) const {
        CoeffPoly r(d_);
        if (s.is_zero()) return r;
        for (auto& [m, c] : terms_) r.add_term(m, c * s);
        return r;
    }

    // Swap c_j+ <-> c_j- and conjugate scalars.
    CoeffPoly conj() const {
        CoeffPoly r(d_);
        for (auto& [m, s] : terms_) {
            Monomial mm(m);
            for (int j = 0; j < d_; ++j) std::swap(mm[2 * j], mm[2 * j + 1]);
            r.terms_.emplace(std::move(mm), s.conj());
        }
        return r;
    }

    // Exact division by c_j^sigma; throws if some term lacks the factor.
    CoeffPoly divide_symbol(int j, int sigma) const {
        int idx = symbol_index(j, sigma);
        CoeffPoly r(d_);
        for (auto& [m, s] : terms_) {
            if (m[idx] == 0) throw std::logic_error("monomial division: factor c" + std::to_string(j + 1) + (sigma > 0 ? "+" : "-") + " missing");
            Monomial mm(m);
            --mm[idx];
            r.terms_.emplace(std::move(mm), s);
        }
        return r;
    }

    CoeffPoly multiply_symbol(int j, int sigma, int power = 1) const {
        int idx = symbol_index(j, sigma);
        CoeffPoly r(d_);
        for (auto& [m, s] : terms_) {
            Monomial mm(m);
            mm[idx] += power;
            r.terms_.emplace(std::move(mm), s);
        }
        return r;
    }

    bool divisible_by(int j, int sigma) const {
        int idx = symbol_index(j, sigma);
        for (auto& [m, s] : terms_)
            if (m[idx] == 0) return false;
        return true;
    }

    bool is_modulus_only() const {
        for (auto& [m, s] : terms_) {
            for (int j = 0; j < d_; ++j)
                if (m[2 * j] != m[2 * j + 1]) return false;
            if (!s.is_real()) return false;
        }
        return true;
    }

    int max_degree() const {
        int best = 0;
        for (auto& [m, s] : terms_) {
            int t = 0;
            for (int e : m) t += e;
            best = std::max(best, t);
        }
        return best;
    }

    // c_j- is replaced by the conjugate of c_j.
    template <class G> Complex<G> eval(const std::vector<Complex<G>>& c) const {
        if (static_cast<int>(c.size()) != d_) throw std::invalid_argument("eval: expected " + std::to_string(d_) + " amplitudes");
        Complex<G> total(0);
        for (auto& [m, s] : terms_) {
            Complex<G> v = convert<G>(s);
            for (int j = 0; j < d_; ++j) {
                for (int e = 0; e < m[2 * j]; ++e) v *= c[j];
                for (int e = 0; e < m[2 * j + 1]; ++e) v *= c[j].conj();
            }
            total += v;
        }
        return total;
    }

    friend bool operator==(const CoeffPoly& a, const CoeffPoly& b) { return a.d_ == b.d_ && a.terms_ == b.terms_; }
    friend bool operator!=(const CoeffPoly& a, const CoeffPoly& b) { return !(a == b); }

    // Numerical closeness for the big-float kernel.
    bool approx_equal(const CoeffPoly& o) const {
        CoeffPoly diff = *this - o;
        return diff.is_zero();
    }

    std::string str() const {
        if (terms_.empty()) return "0";
        std::string out;
        bool first = true;
        for (auto& [m, s] : terms_) {
            if (!first) out += " + ";
            first = false;
            out += "(" + s.str() + ")";
            std::string mono;
            for (int j = 0; j < d_; ++j) {
                for (int pm = 0; pm < 2; ++pm) {
                    int e = m[2 * j + pm];
                    if (e == 0) continue;
                    if (!mono.empty()) mono += " ";
                    mono += "c" + std::to_string(j + 1) + (pm == 0 ? "+" : "-") + "^" + std::to_string(e);
                }
            }
            if (!mono.empty()) out += " * " + mono;
        }
        return out;
    }

private:
    void check(const CoeffPoly& o) const {
        if (o.d_ != d_) throw std::invalid_argument("CoeffPoly dimension mismatch");
    }

    int d_ = 0;
    Terms terms_;
};

template <class F> CoeffPoly<F> conj(const CoeffPoly<F>& p) { return p.conj(); }

}  // namespace lindstedt
