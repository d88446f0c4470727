#pragma once

#include <boost/multiprecision/gmp.hpp>
#include <boost/multiprecision/mpfr.hpp>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lindstedt {

using Rational = boost::multiprecision::mpq_rational;
using BigInt = boost::multiprecision::mpz_int;
using BigFloat = boost::multiprecision::number<boost::multiprecision::mpfr_float_backend<0>, boost::multiprecision::et_off>;

struct field_error : std::domain_error {
    using std::domain_error::domain_error;
};

// Exact element a + b*sqrt(D) of a real quadratic field. D == 0 marks a plain rational.
class QuadNum {
public:
    QuadNum() = default;
    QuadNum(long v) : a_(v) {}
    QuadNum(const Rational& a) : a_(a) {}
    QuadNum(const Rational& a, const Rational& b, long D) : a_(a), b_(b), d_(D) { normalize(); }

    static QuadNum sqrt_of(long D) {
        if (D < 0) throw field_error("negative radicand");
        long r = static_cast<long>(std::llround(std::sqrt(static_cast<double>(D))));
        while (r * r > D) --r;
        while ((r + 1) * (r + 1) <= D) ++r;
        if (r * r == D) return QuadNum(Rational(r));
        long core = D, square = 1;
        for (long p = 2; p * p <= core; ++p) {
            while (core % (p * p) == 0) {
                core /= p * p;
                square *= p;
            }
        }
        return QuadNum(Rational(0), Rational(square), core);
    }

    const Rational& rational_part() const { return a_; }
    const Rational& surd_part() const { return b_; }
    long radicand() const { return d_; }
    bool is_rational() const { return d_ == 0; }

    friend QuadNum operator+(const QuadNum& x, const QuadNum& y) {
        long D = common(x, y);
        return QuadNum(x.a_ + y.a_, x.b_ + y.b_, D);
    }
    friend QuadNum operator-(const QuadNum& x, const QuadNum& y) {
        long D = common(x, y);
        return QuadNum(x.a_ - y.a_, x.b_ - y.b_, D);
    }
    friend QuadNum operator*(const QuadNum& x, const QuadNum& y) {
        long D = common(x, y);
        if (D == 0) return QuadNum(x.a_ * y.a_);
        return QuadNum(x.a_ * y.a_ + x.b_ * y.b_ * D, x.a_ * y.b_ + x.b_ * y.a_, D);
    }
    friend QuadNum operator/(const QuadNum& x, const QuadNum& y) { return x * y.inverse(); }
    QuadNum operator-() const { return QuadNum(-a_, -b_, d_); }

    QuadNum& operator+=(const QuadNum& y) { return *this = *this + y; }
    QuadNum& operator-=(const QuadNum& y) { return *this = *this - y; }
    QuadNum& operator*=(const QuadNum& y) { return *this = *this * y; }
    QuadNum& operator/=(const QuadNum& y) { return *this = *this / y; }

    QuadNum inverse() const {
        if (is_zero()) throw field_error("division by zero");
        if (d_ == 0) return QuadNum(Rational(1) / a_);
        Rational norm = a_ * a_ - b_ * b_ * d_;
        return QuadNum(a_ / norm, -b_ / norm, d_);
    }

    bool is_zero() const { return a_ == 0 && b_ == 0; }

    int sign() const {
        int sa = a_.sign(), sb = b_.sign();
        if (sb == 0) return sa;
        if (sa == 0 || sa == sb) return sb;
        // opposite signs: compare a^2 with b^2 D
        Rational lhs = a_ * a_, rhs = b_ * b_ * d_;
        if (lhs == rhs) return 0;
        return lhs > rhs ? sa : sb;
    }

    friend bool operator==(const QuadNum& x, const QuadNum& y) { return x.a_ == y.a_ && x.b_ == y.b_ && x.d_ == y.d_; }
    friend bool operator<(const QuadNum& x, const QuadNum& y) { return (x - y).sign() < 0; }
    friend bool operator>(const QuadNum& x, const QuadNum& y) { return y < x; }
    friend bool operator<=(const QuadNum& x, const QuadNum& y) { return !(y < x); }
    friend bool operator>=(const QuadNum& x, const QuadNum& y) { return !(x < y); }

    double to_double() const { return a_.convert_to<double>() + b_.convert_to<double>() * std::sqrt(static_cast<double>(d_)); }

    BigFloat to_bigfloat() const {
        BigFloat r(a_);
        if (d_ != 0) r += BigFloat(b_) * boost::multiprecision::sqrt(BigFloat(d_));
        return r;
    }

    std::string str() const {
        if (d_ == 0) return a_.str();
        std::ostringstream os;
        if (a_ != 0) os << a_.str() << (b_ > 0 ? " + " : " - ");
        else if (b_ < 0) os << "-";
        Rational mb = abs(b_);
        if (mb != 1) os << mb.str() << "*";
        os << "sqrt" << d_;
        return a_ != 0 ? "(" + os.str() + ")" : os.str();
    }

private:
    static long common(const QuadNum& x, const QuadNum& y) {
        if (x.d_ == 0) return y.d_;
        if (y.d_ == 0 || x.d_ == y.d_) return x.d_;
        throw field_error("mixed quadratic fields sqrt" + std::to_string(x.d_) + " and sqrt" + std::to_string(y.d_));
    }
    void normalize() {
        if (b_ == 0) d_ = 0;
        else if (d_ == 0) throw field_error("surd part without radicand");
    }

    Rational a_{0}, b_{0};
    long d_ = 0;
};

inline std::ostream& operator<<(std::ostream& os, const QuadNum& x) { return os << x.str(); }

inline QuadNum abs(const QuadNum& x) { return x.sign() < 0 ? -x : x; }

// Field-generic helpers; specialised for QuadNum (exact) and BigFloat.
template <class F> struct field_traits;

template <> struct field_traits<QuadNum> {
    static constexpr bool exact = true;
    static bool is_zero(const QuadNum& x) { return x.is_zero(); }
    static int sign(const QuadNum& x) { return x.sign(); }
    static QuadNum from_quad(const QuadNum& x) { return x; }
    static QuadNum from_rational(const Rational& x) { return QuadNum(x); }
    static BigFloat to_bigfloat(const QuadNum& x) { return x.to_bigfloat(); }
    static double to_double(const QuadNum& x) { return x.to_double(); }
    static std::string str(const QuadNum& x) { return x.str(); }
};

inline int& bigfloat_precision_bits() {
    static int bits = 256;
    return bits;
}

inline void set_bigfloat_precision(int bits) {
    if (bits < 64) throw std::invalid_argument("precision below 64 bits");
    bigfloat_precision_bits() = bits;
    BigFloat::default_precision(static_cast<unsigned>(std::ceil(bits * 0.30103)) + 1);
}

// the 256-bit default has to reach mpfr before any BigFloat is built
inline const bool bigfloat_default_applied = (set_bigfloat_precision(bigfloat_precision_bits()), true);

// |x| below this prunes to zero in the big-float kernel.
inline BigFloat& bigfloat_prune_threshold() {
    static BigFloat t = 0;
    return t;
}

inline BigFloat effective_prune_threshold() {
    if (bigfloat_prune_threshold() > 0) return bigfloat_prune_threshold();
    return boost::multiprecision::ldexp(BigFloat(1), -bigfloat_precision_bits() / 2);
}

template <> struct field_traits<BigFloat> {
    static constexpr bool exact = false;
    static bool is_zero(const BigFloat& x) { return boost::multiprecision::abs(x) < effective_prune_threshold(); }
    static int sign(const BigFloat& x) { return is_zero(x) ? 0 : (x < 0 ? -1 : 1); }
    static BigFloat from_quad(const QuadNum& x) { return x.to_bigfloat(); }
    static BigFloat from_rational(const Rational& x) { return BigFloat(x); }
    static BigFloat to_bigfloat(const BigFloat& x) { return x; }
    static double to_double(const BigFloat& x) { return x.convert_to<double>(); }
    static std::string str(const BigFloat& x) { return x.str(40, std::ios_base::scientific); }
};

template <class F> struct Complex {
    F re{0}, im{0};

    Complex() = default;
    Complex(long v) : re(v), im(0) {}
    Complex(F r) : re(std::move(r)), im(0) {}
    Complex(F r, F i) : re(std::move(r)), im(std::move(i)) {}

    friend Complex operator+(const Complex& x, const Complex& y) { return {x.re + y.re, x.im + y.im}; }
    friend Complex operator-(const Complex& x, const Complex& y) { return {x.re - y.re, x.im - y.im}; }
    friend Complex operator*(const Complex& x, const Complex& y) {
        return {x.re * y.re - x.im * y.im, x.re * y.im + x.im * y.re};
    }
    friend Complex operator/(const Complex& x, const Complex& y) {
        F n = y.re * y.re + y.im * y.im;
        if (field_traits<F>::exact && field_traits<F>::is_zero(n)) throw field_error("division by zero");
        return {(x.re * y.re + x.im * y.im) / n, (x.im * y.re - x.re * y.im) / n};
    }
    Complex operator-() const { return {-re, -im}; }
    Complex& operator+=(const Complex& y) { return *this = *this + y; }
    Complex& operator-=(const Complex& y) { return *this = *this - y; }
    Complex& operator*=(const Complex& y) { return *this = *this * y; }
    Complex& operator/=(const Complex& y) { return *this = *this / y; }

    friend bool operator==(const Complex& x, const Complex& y) { return x.re == y.re && x.im == y.im; }

    bool is_zero() const { return field_traits<F>::is_zero(re) && field_traits<F>::is_zero(im); }
    bool is_real() const { return field_traits<F>::is_zero(im); }
    Complex conj() const { return {re, -im}; }
    F norm2() const { return re * re + im * im; }

    std::string str() const {
        using T = field_traits<F>;
        if (T::is_zero(im)) return T::str(re);
        if (T::is_zero(re)) return T::str(im) + " i";
        std::string s = T::str(re);
        if (T::sign(im) < 0) return s + " - " + T::str(F(-im)) + " i";
        return s + " + " + T::str(im) + " i";
    }
};

template <class F> Complex<F> conj(const Complex<F>& z) { return z.conj(); }

template <class F> std::ostream& operator<<(std::ostream& os, const Complex<F>& z) { return os << z.str(); }

using ExactComplex = Complex<QuadNum>;
using FloatComplex = Complex<BigFloat>;

template <class G, class F> Complex<G> convert(const Complex<F>& z);

template <> inline Complex<QuadNum> convert<QuadNum, QuadNum>(const Complex<QuadNum>& z) { return z; }
template <> inline Complex<BigFloat> convert<BigFloat, QuadNum>(const Complex<QuadNum>& z) {
    return {z.re.to_bigfloat(), z.im.to_bigfloat()};
}
template <> inline Complex<BigFloat> convert<BigFloat, BigFloat>(const Complex<BigFloat>& z) { return z; }

inline BigFloat abs(const Complex<BigFloat>& z) { return boost::multiprecision::sqrt(z.norm2()); }

// Scalar strings: "3/4", "1+2i", "(1+sqrt5)/2", "0.125", "-2.5e-3", "1/3 - 2/5 i".
class ScalarParser {
public:
    explicit ScalarParser(std::string s) : s_(std::move(s)) {}

    ExactComplex parse() {
        pos_ = 0;
        ExactComplex v = expr();
        skip();
        if (pos_ != s_.size()) fail("trailing characters");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw std::invalid_argument("cannot parse scalar '" + s_ + "': " + what);
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool peek(char c) {
        skip();
        return pos_ < s_.size() && s_[pos_] == c;
    }
    bool starts_atom() {
        skip();
        if (pos_ >= s_.size()) return false;
        char c = s_[pos_];
        return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '(' || c == 'i' || c == 's';
    }

    ExactComplex expr() {
        ExactComplex v = term();
        for (;;) {
            if (peek('+')) { ++pos_; v += term(); }
            else if (peek('-')) { ++pos_; v -= term(); }
            else return v;
        }
    }
    ExactComplex term() {
        ExactComplex v = unary();
        for (;;) {
            if (peek('*')) { ++pos_; v *= unary(); }
            else if (peek('/')) {
                ++pos_;
                ExactComplex d = unary();
                if (d.is_zero()) fail("division by zero");
                v /= d;
            } else if (starts_atom()) v *= atom();
            else return v;
        }
    }
    ExactComplex unary() {
        if (peek('-')) { ++pos_; return -unary(); }
        if (peek('+')) { ++pos_; return unary(); }
        return atom();
    }
    ExactComplex atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            ExactComplex v = expr();
            if (!peek(')')) fail("missing ')'");
            ++pos_;
            return v;
        }
        if (c == 'i') { ++pos_; return ExactComplex(QuadNum(0), QuadNum(1)); }
        if (s_.compare(pos_, 4, "sqrt") == 0) {
            pos_ += 4;
            bool paren = peek('(');
            if (paren) ++pos_;
            skip();
            size_t st = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            if (st == pos_) fail("sqrt needs an integer radicand");
            long D = std::stol(s_.substr(st, pos_ - st));
            if (paren) {
                if (!peek(')')) fail("missing ')'");
                ++pos_;
            }
            return ExactComplex(QuadNum::sqrt_of(D));
        }
        return ExactComplex(QuadNum(number()));
    }
    Rational number() {
        size_t st = pos_;
        std::string digits;
        long frac = 0;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) digits += s_[pos_++];
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                digits += s_[pos_++];
                ++frac;
            }
        }
        if (digits.empty()) fail("expected a number at offset " + std::to_string(st));
        long ex = 0;
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            ++pos_;
            size_t es = pos_;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            ex = std::stol(s_.substr(es, pos_ - es));
        }
        size_t nz = digits.find_first_not_of('0');
        Rational v{BigInt(nz == std::string::npos ? std::string("0") : digits.substr(nz))};
        long p = ex - frac;
        BigInt ten = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(p < 0 ? -p : p));
        return p < 0 ? Rational(v / Rational(ten)) : Rational(v * Rational(ten));
    }

    std::string s_;
    size_t pos_ = 0;
};

inline ExactComplex parse_scalar(const std::string& s) { return ScalarParser(s).parse(); }

inline QuadNum parse_real(const std::string& s) {
    ExactComplex z = parse_scalar(s);
    if (!z.im.is_zero()) throw std::invalid_argument("expected a real scalar, got '" + s + "'");
    return z.re;
}

}  // namespace lindstedt
