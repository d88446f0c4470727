#include <lindstedt/coeffpoly.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace lindstedt;
using P = CoeffPoly<QuadNum>;
using C = ExactComplex;

namespace {

P sym(int d, int j, int s) { return P::symbol(d, j, s); }
P cst(int d, const std::string& s) { return P::constant(d, parse_scalar(s)); }

P random_poly(std::mt19937& rng, int d) {
    std::uniform_int_distribution<int> ex(0, 2), num(-5, 5), den(1, 4), nterms(0, 4);
    P p(d);
    int n = nterms(rng);
    for (int t = 0; t < n; ++t) {
        Monomial m(2 * d);
        for (auto& e : m) e = ex(rng);
        C s(QuadNum(Rational(num(rng), den(rng))), QuadNum(Rational(num(rng), den(rng))));
        p.add_term(m, s);
    }
    return p;
}

}  // namespace

TEST(ScalarKernel, QuadraticFieldArithmetic) {
    QuadNum phi = parse_real("(1+sqrt5)/2");
    EXPECT_EQ(phi * phi, phi + QuadNum(1));
    EXPECT_EQ((phi - QuadNum(1)) * phi, QuadNum(1));
    EXPECT_EQ(phi.inverse(), phi - QuadNum(1));
    EXPECT_GT(phi, QuadNum(Rational(161, 100)));
    EXPECT_LT(phi, QuadNum(Rational(162, 100)));
    EXPECT_EQ((QuadNum(2) - phi).sign(), 1);
    EXPECT_EQ(QuadNum::sqrt_of(8), QuadNum(0) + QuadNum(Rational(0), Rational(2), 2));
    EXPECT_EQ(QuadNum::sqrt_of(9), QuadNum(3));
    EXPECT_THROW(QuadNum::sqrt_of(2) + QuadNum::sqrt_of(3), field_error);
}

TEST(ScalarKernel, ParseForms) {
    EXPECT_EQ(parse_scalar("3/4"), C(QuadNum(Rational(3, 4))));
    EXPECT_EQ(parse_scalar("1+2i"), C(QuadNum(1), QuadNum(2)));
    EXPECT_EQ(parse_scalar("0.125"), C(QuadNum(Rational(1, 8))));
    EXPECT_EQ(parse_scalar("-2.5e-1"), C(QuadNum(Rational(-1, 4))));
    EXPECT_EQ(parse_scalar("1/3 - 2/5 i"), C(QuadNum(Rational(1, 3)), QuadNum(Rational(-2, 5))));
    EXPECT_THROW(parse_scalar("1/0"), std::invalid_argument);
    EXPECT_THROW(parse_scalar("abc"), std::invalid_argument);
}

TEST(CoeffAlg, AddExamples) {
    EXPECT_TRUE((sym(1, 0, 1) + (-sym(1, 0, 1))).is_zero());
    P cc = sym(1, 0, 1) * sym(1, 0, -1);
    EXPECT_EQ(cc + cc, cc.scaled(C(2)));
    P a = sym(2, 0, 1) + sym(2, 1, -1);
    EXPECT_EQ(a + sym(2, 1, -1), sym(2, 0, 1) + sym(2, 1, -1).scaled(C(2)));
    EXPECT_THROW(sym(1, 0, 1) + sym(2, 0, 1), std::invalid_argument);
}

TEST(CoeffAlg, MulExamples) {
    P cp = sym(1, 0, 1), cm = sym(1, 0, -1);
    EXPECT_EQ((cp * cm).str(), "(1) * c1+^1 c1-^1");
    EXPECT_EQ((cp + cm) * (cp - cm), cp * cp - cm * cm);
    EXPECT_TRUE((P(1) * (cp + cm)).is_zero());
    EXPECT_THROW(cp * sym(2, 0, 1), std::invalid_argument);
}

TEST(CoeffAlg, ConjugateExamples) {
    P icp = sym(1, 0, 1).scaled(parse_scalar("i"));
    EXPECT_EQ(icp.conj(), sym(1, 0, -1).scaled(parse_scalar("-i")));
    P cc = sym(1, 0, 1) * sym(1, 0, -1);
    EXPECT_EQ(cc.conj(), cc);
    std::mt19937 rng(7);
    for (int t = 0; t < 50; ++t) {
        P p = random_poly(rng, 2);
        EXPECT_EQ(p.conj().conj(), p);
    }
}

TEST(CoeffAlg, EvalExamples) {
    set_bigfloat_precision(256);
    using FC = FloatComplex;
    P cc = sym(1, 0, 1) * sym(1, 0, -1);
    FC v = cc.eval(std::vector<FC>{FC(BigFloat(2))});
    EXPECT_EQ(v.re, BigFloat(4));
    EXPECT_EQ(v.im, BigFloat(0));
    FC w = sym(1, 0, 1).eval(std::vector<FC>{FC(BigFloat(1), BigFloat(1))});
    EXPECT_EQ(w.re, BigFloat(1));
    EXPECT_EQ(w.im, BigFloat(1));
    P two = (sym(1, 0, 1) * sym(1, 0, 1)).scaled(C(2));
    FC u = two.eval(std::vector<FC>{FC(BigFloat(0), BigFloat(1))});
    EXPECT_EQ(u.re, BigFloat(-2));
    EXPECT_EQ(u.im, BigFloat(0));
    // exact evaluation stays in the quadratic field
    C e = two.eval(std::vector<C>{C(QuadNum(0), QuadNum(1))});
    EXPECT_EQ(e, C(-2));
}

TEST(CoeffAlg, ModulusOnly) {
    P cp = sym(1, 0, 1), cm = sym(1, 0, -1);
    EXPECT_TRUE((cp * cm).is_modulus_only());
    EXPECT_FALSE((cp * cp).is_modulus_only());
    // fixture from the hand second-order expansion of x'' + x + eps x^2
    EXPECT_TRUE((cp * cm).scaled(parse_scalar("10/3")).is_modulus_only());
    EXPECT_FALSE((cp * cm).scaled(parse_scalar("i")).is_modulus_only());
}

TEST(CoeffAlg, RingAxiomsRandomized) {
    set_bigfloat_precision(256);
    std::mt19937 rng(2024);
    for (int t = 0; t < 60; ++t) {
        P a = random_poly(rng, 2), b = random_poly(rng, 2), c = random_poly(rng, 2);
        EXPECT_EQ((a * b) * c, a * (b * c));
        EXPECT_EQ(a * (b + c), a * b + a * c);
        EXPECT_EQ(a * b, b * a);
        EXPECT_EQ((a * b).conj(), a.conj() * b.conj());
        std::vector<C> pt{C(QuadNum(Rational(1, 3)), QuadNum(2)), C(QuadNum(-1), QuadNum(Rational(1, 2)))};
        EXPECT_EQ((a * b).eval(pt), a.eval(pt) * b.eval(pt));
    }
}

TEST(CoeffAlg, MonomialDivision) {
    P cp = sym(1, 0, 1), cm = sym(1, 0, -1);
    P p = cp * cp * cm + cp.scaled(C(3));
    EXPECT_EQ(p.divide_symbol(0, 1), cp * cm + P::constant(1, C(3)));
    EXPECT_THROW(p.divide_symbol(0, -1), std::logic_error);
}

TEST(CoeffAlg, BigFloatPruning) {
    set_bigfloat_precision(128);
    using PF = CoeffPoly<BigFloat>;
    PF a = PF::symbol(1, 0, 1);
    PF b = a.scaled(FloatComplex(BigFloat(1) + boost::multiprecision::ldexp(BigFloat(1), -100)));
    EXPECT_TRUE((a - b).is_zero());
    PF c = a.scaled(FloatComplex(BigFloat(1) + boost::multiprecision::ldexp(BigFloat(1), -40)));
    EXPECT_FALSE((a - c).is_zero());
    set_bigfloat_precision(256);
}

TEST(CoeffAlg, Serialization) {
    P p = (sym(1, 0, 1) * sym(1, 0, -1)).scaled(parse_scalar("10/3")) + sym(1, 0, 1).scaled(parse_scalar("1/2+3i"));
    EXPECT_EQ(p.str(), "(1/2 + 3 i) * c1+^1 + (10/3) * c1+^1 c1-^1");
}
