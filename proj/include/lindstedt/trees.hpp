#pragma once

#include "series.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <tuple>
#include <vector>

namespace lindstedt {

// leg: the entering line of a detached self-energy cluster
enum class NodeKind { end, internal, zero, leg };

// scale label of a line that has not been assigned one
constexpr int kUnscaled = -2;

struct TreeNode;
using NodePtr = std::shared_ptr<const TreeNode>;

// A node together with the line leaving it.
struct TreeNode {
    NodeKind kind = NodeKind::end;
    int j = 0;
    int sigma_node = 0;  // end and zero nodes
    int k = 0;           // order label k_v
    Mode nu;             // momentum of the exiting line
    int sigma_line = 1;
    int scale = kUnscaled;
    std::vector<NodePtr> children;  // sorted by key
    int order = 0;                  // k of the subtree
    bool path = false;              // subtree holds the leg; nu is then an offset from the leg momentum
    std::string key;
};

inline std::string node_key(const TreeNode& n) {
    std::string s;
    switch (n.kind) {
        case NodeKind::end: s = "e"; break;
        case NodeKind::internal: s = "v"; break;
        case NodeKind::zero: s = "z"; break;
        case NodeKind::leg: s = "L"; break;
    }
    s += std::to_string(n.j + 1);
    if (n.kind == NodeKind::internal || n.kind == NodeKind::zero) s += "k" + std::to_string(n.k);
    if (n.kind != NodeKind::internal) s += n.sigma_node > 0 ? "+" : "-";
    s += "|" + mode_str(n.nu) + (n.sigma_line > 0 ? "+" : "-");
    if (n.scale != kUnscaled) s += "n" + std::to_string(n.scale);
    if (!n.children.empty()) {
        s += "[";
        for (size_t i = 0; i < n.children.size(); ++i) s += (i ? "," : "") + n.children[i]->key;
        s += "]";
    }
    return s;
}

inline NodePtr finish_node(TreeNode n) {
    std::sort(n.children.begin(), n.children.end(), [](const NodePtr& a, const NodePtr& b) { return a->key < b->key; });
    n.order = n.k;
    n.path = n.kind == NodeKind::leg;
    for (auto& c : n.children) {
        n.order += c->order;
        n.path = n.path || c->path;
    }
    n.key = node_key(n);
    return std::make_shared<const TreeNode>(std::move(n));
}

inline NodePtr make_end(int d, int j, int sigma) {
    TreeNode n;
    n.kind = NodeKind::end;
    n.j = j;
    n.sigma_node = sigma;
    n.sigma_line = sigma;
    n.nu = unit(d, j, sigma);
    return finish_node(std::move(n));
}

// Rebuild with sorted children at every level; keys of equivalent trees coincide.
inline NodePtr canonicalize(const NodePtr& t) {
    TreeNode n = *t;
    for (auto& c : n.children) c = canonicalize(c);
    return finish_node(std::move(n));
}

inline NodePtr shuffle_children(const NodePtr& t, std::mt19937& rng) {
    TreeNode n = *t;
    for (auto& c : n.children) c = shuffle_children(c, rng);
    std::shuffle(n.children.begin(), n.children.end(), rng);
    n.key = node_key(n);  // deliberately not re-sorted
    return std::make_shared<const TreeNode>(std::move(n));
}

inline bool is_resonant_line(const TreeNode& n) {
    Mode e(n.nu.size(), 0);
    e[n.j] = n.sigma_line;
    return n.nu == e;
}

template <class F> struct TreeClass {
    NodePtr root;
    long multiplicity = 1;  // planar trees represented by the class
    CoeffPoly<F> value;     // Val of one representative
    int order() const { return root->order; }
    const std::string& key() const { return root->key; }
};

enum class ValueMode { unscaled, scaled };

template <class F> struct TreeRules {
    const Model<F>& m;
    explicit TreeRules(const Model<F>& model) : m(model) {}

    int d() const { return m.d(); }
    bool real() const { return m.variant == Variant::real; }

    int line_sign(int j, const Mode& nu) const { return minimizer_sign(m.spec, j, nu); }

    F denominator(int j, int sigma, const Mode& nu) const {
        F w = m.spec.dot(nu);
        if (real()) return w * w - m.spec.omega[j] * m.spec.omega[j];
        return F(sigma) * w - m.spec.omega[j];
    }

    F divisor(int j, int sigma, const Mode& nu) const {
        if (real()) return small_divisor(m.spec, j, nu).delta;
        F x = F(sigma) * m.spec.dot(nu) - m.spec.omega[j];
        return field_traits<F>::sign(x) < 0 ? -x : x;
    }

    F propagator(const TreeNode& n, ValueMode mode) const {
        if (is_resonant_line(n)) return F(1);
        F den = denominator(n.j, n.sigma_line, n.nu);
        if (denominator_vanishes(den)) throw resonance_error("vanishing propagator denominator at mode " + mode_str(n.nu));
        if (mode == ValueMode::unscaled) return F(1) / den;
        if (n.scale < 0) throw std::logic_error("scaled evaluation of a line without a scale label");
        return m.partition().Psi(n.scale, divisor(n.j, n.sigma_line, n.nu)) / den;
    }

    std::vector<int> slots_of(const std::vector<NodePtr>& children) const {
        std::vector<int> s(m.force.nslots(), 0);
        for (auto& c : children) s[ForceTable<F>::slot_of(m.variant, c->j, c->sigma_line)]++;
        return s;
    }

    // (s_1! ... s_d! / s!) f_{j,s}, with f^{sigma_line} in the zw variant
    Complex<F> internal_factor(int j, int sigma_line, const std::vector<int>& slots) const {
        Complex<F> f = m.force.lookup(j, sigma_line, slots);
        if (f.is_zero()) return f;
        Rational num(1), den(1);
        int s = 0;
        for (int c : slots) {
            for (int i = 2; i <= c; ++i) num *= i;
            s += c;
        }
        for (int i = 2; i <= s; ++i) den *= i;
        return f * Complex<F>(field_traits<F>::from_rational(num / den));
    }

    CoeffPoly<F> value(const TreeNode& n, ValueMode mode) const {
        int dd = d();
        if (n.kind == NodeKind::end) return CoeffPoly<F>::symbol(dd, n.j, n.sigma_node);
        CoeffPoly<F> prod = CoeffPoly<F>::constant(dd, Complex<F>(1));
        for (auto& c : n.children) prod = prod * value(*c, mode);
        if (n.kind == NodeKind::internal) {
            prod = prod.scaled(internal_factor(n.j, n.sigma_line, slots_of(n.children)));
        } else {
            prod = prod.divide_symbol(n.j, n.sigma_node).scaled(Complex<F>(F(-1) / F(2)));
        }
        return prod.scaled(Complex<F>(propagator(n, mode)));
    }
};

template <class F> CoeffPoly<F> tree_value(const Model<F>& m, const NodePtr& t, ValueMode mode = ValueMode::unscaled) {
    return TreeRules<F>(m).value(*t, mode);
}

// Memoized enumeration of tree classes by exiting-line labels.
template <class F> class TreeEnumerator {
public:
    explicit TreeEnumerator(const Model<F>& m) : rules_(m), m_(m) {}

    const std::vector<TreeClass<F>>& subtrees(int k, int j, int sigma, const Mode& nu) {
        auto key = std::make_tuple(k, j, sigma, nu);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        std::vector<TreeClass<F>> out;
        if (k >= 1 && norm1(nu) <= k + 1) build(k, j, sigma, nu, out);
        return memo_.emplace(key, std::move(out)).first->second;
    }

    // root line sign: fixed by the momentum in the real variant, free in zw
    const std::vector<TreeClass<F>>& trees(int k, int j, const Mode& nu, int sigma = 0) {
        if (m_.variant == Variant::real) sigma = rules_.line_sign(j, nu);
        if (sigma == 0) throw std::invalid_argument("zw trees need a root sign");
        return subtrees(k, j, sigma, nu);
    }

    const TreeRules<F>& rules() const { return rules_; }

    struct Item {
        const TreeClass<F>* cls;  // null for end nodes
        NodePtr node;
        int order;
    };

    // children admissible in a given slot, orders <= R
    std::vector<Item> candidates(int slot, int R) {
        int d = m_.d();
        int i = m_.force.slot_component(slot);
        std::vector<int> signs = m_.variant == Variant::real ? std::vector<int>{1, -1} : std::vector<int>{m_.force.slot_sign(slot)};
        std::vector<Item> out;
        for (int s : signs) out.push_back({nullptr, make_end(d, i, s), 0});
        for (int kp = 1; kp <= R; ++kp) {
            for (auto& nu : modes_within(d, kp + 1)) {
                for (int s : signs) {
                    int sl = m_.variant == Variant::real ? rules_.line_sign(i, nu) : s;
                    if (sl != s) continue;
                    if (nu == unit(d, i, sl)) continue;  // resonant lines only enter zero nodes
                    for (auto& c : subtrees(kp, i, sl, nu)) out.push_back({&c, c.root, kp});
                }
            }
        }
        return out;
    }

private:
    void build(int k, int j, int sigma, const Mode& nu, std::vector<TreeClass<F>>& out) {
        int d = m_.d();
        bool resonant = nu == unit(d, j, sigma);
        for (auto& term : m_.force.component(j, sigma)) {
            if (term.p > k) continue;
            int R = k - term.p;
            std::vector<std::vector<Item>> cand(term.slots.size());
            for (size_t t = 0; t < term.slots.size(); ++t)
                if (term.slots[t] > 0) cand[t] = candidates(static_cast<int>(t), R);
            std::vector<const Item*> picked;
            choose(term, cand, nu, 0, 0, 0, R, Mode(d, 0), picked, [&](const std::vector<const Item*>& ch) {
                if (!(sum_mode(ch, d) == nu)) return;
                TreeNode n;
                n.kind = NodeKind::internal;
                n.j = j;
                n.k = term.p;
                n.nu = nu;
                n.sigma_line = sigma;
                long mult = orderings(ch);
                CoeffPoly<F> val = CoeffPoly<F>::constant(d, Complex<F>(1));
                for (auto* it : ch) {
                    n.children.push_back(it->node);
                    if (it->cls) {
                        mult *= it->cls->multiplicity;
                        val = val * it->cls->value;
                    } else {
                        val = val * CoeffPoly<F>::symbol(d, it->node->j, it->node->sigma_node);
                    }
                }
                auto node = finish_node(std::move(n));
                val = val.scaled(rules_.internal_factor(j, sigma, rules_.slots_of(node->children)));
                val = val.scaled(Complex<F>(rules_.propagator(*node, ValueMode::unscaled)));
                if (val.is_zero()) return;
                out.push_back({node, mult, std::move(val)});
            });
        }
        if (resonant) return;
        if (m_.variant == Variant::real && rules_.line_sign(j, nu) != sigma) return;
        // zero node: eta-type insertion, one resonant child and one with the same momentum
        Mode e = unit(d, j, sigma);
        for (int k1 = 1; k1 < k; ++k1) {
            const auto& A = subtrees(k1, j, sigma, e);
            if (A.empty()) continue;
            const auto& B = subtrees(k - k1, j, sigma, nu);
            for (auto& a : A) {
                for (auto& b : B) {
                    TreeNode n;
                    n.kind = NodeKind::zero;
                    n.j = j;
                    n.k = 0;
                    n.sigma_node = sigma;
                    n.sigma_line = sigma;
                    n.nu = nu;
                    n.children = {a.root, b.root};
                    auto node = finish_node(std::move(n));
                    CoeffPoly<F> val = (a.value * b.value).divide_symbol(j, sigma).scaled(Complex<F>(F(-1) / F(2)));
                    val = val.scaled(Complex<F>(rules_.propagator(*node, ValueMode::unscaled)));
                    if (val.is_zero()) continue;
                    out.push_back({node, 2 * a.multiplicity * b.multiplicity, std::move(val)});
                }
            }
        }
    }

public:
    static Mode sum_mode(const std::vector<const Item*>& ch, int d) {
        Mode s(d, 0);
        for (auto* it : ch) s = s + it->node->nu;
        return s;
    }

    static long orderings(const std::vector<const Item*>& ch) {
        long r = 1;
        for (size_t i = 2; i <= ch.size(); ++i) r *= static_cast<long>(i);
        std::map<std::string, int> mult;
        for (auto* it : ch) mult[it->node->key]++;
        for (auto& [key, c] : mult)
            for (int i = 2; i <= c; ++i) r /= i;
        return r;
    }

    // multisets per slot (nondecreasing candidate index), total child order exactly R
    template <class Emit>
    static void choose(const ForceTerm<F>& term, const std::vector<std::vector<Item>>& cand, const Mode& target, size_t slot, int filled, size_t start, int R, Mode acc,
                std::vector<const Item*>& picked, Emit&& emit) {
        while (slot < term.slots.size() && filled == term.slots[slot]) {
            ++slot;
            filled = 0;
            start = 0;
        }
        if (slot == term.slots.size()) {
            if (R == 0) emit(picked);
            return;
        }
        int left = -filled;
        for (size_t t = slot; t < term.slots.size(); ++t) left += term.slots[t];
        const auto& list = cand[slot];
        for (size_t c = start; c < list.size(); ++c) {
            const Item& it = list[c];
            if (it.order > R) continue;
            Mode next = acc + it.node->nu;
            int rest = left - 1, Rn = R - it.order;
            if (rest == 0 && Rn != 0) continue;
            // each remaining child moves the momentum by at most its order + 1
            if (norm1(target - next) > Rn + rest) continue;
            picked.push_back(&it);
            choose(term, cand, target, slot, filled + 1, c, R - it.order, next, picked, emit);
            picked.pop_back();
        }
    }

private:
    TreeRules<F> rules_;
    const Model<F>& m_;
    std::map<std::tuple<int, int, int, Mode>, std::vector<TreeClass<F>>> memo_;
};

template <class F> std::vector<TreeClass<F>> enumerate_trees(const Model<F>& m, int k, int j, const Mode& nu, int sigma = 0) {
    TreeEnumerator<F> e(m);
    return e.trees(k, j, nu, sigma);
}

template <class F> CoeffPoly<F> sum_classes(const std::vector<TreeClass<F>>& cls, int d) {
    CoeffPoly<F> s(d);
    for (auto& c : cls) s += c.value.scaled(Complex<F>(F(c.multiplicity)));
    return s;
}

// x^(k)_{j,nu} from trees (z or w in the zw variant, by sigma); for nu = sigma e_j the counterterm eta^(k)_{j,sigma}.
template <class F> CoeffPoly<F> coefficient_from_trees(TreeEnumerator<F>& e, const Model<F>& m, int k, int j, const Mode& nu, int sigma = 0) {
    int d = m.d();
    if (m.variant == Variant::real) sigma = minimizer_sign(m.spec, j, nu);
    CoeffPoly<F> s = sum_classes(e.trees(k, j, nu, sigma), d);
    if (nu == unit(d, j, sigma)) return -s.divide_symbol(j, sigma);
    if (m.variant == Variant::real && nu == unit(d, j, -sigma)) return CoeffPoly<F>(d);
    return s;
}

template <class F> CoeffPoly<F> coefficient_from_trees(const Model<F>& m, int k, int j, const Mode& nu, int sigma = 0) {
    TreeEnumerator<F> e(m);
    return coefficient_from_trees(e, m, k, j, nu, sigma);
}

// Negate every node sign and, consistently, every momentum and line sign.
inline NodePtr sign_flip(const NodePtr& t) {
    TreeNode n = *t;
    n.nu = -n.nu;
    n.sigma_line = -n.sigma_line;
    if (n.kind != NodeKind::internal) n.sigma_node = -n.sigma_node;
    for (auto& c : n.children) c = sign_flip(c);
    return finish_node(std::move(n));
}

// Drop the resonant branches of zero nodes nearest the root; zero nodes keep one child.
inline NodePtr prune(const NodePtr& t) {
    TreeNode n = *t;
    std::vector<NodePtr> kept;
    for (auto& c : n.children) {
        if (n.kind == NodeKind::zero && c->kind != NodeKind::end && !c->path && is_resonant_line(*c)) continue;
        kept.push_back(prune(c));
    }
    n.children = std::move(kept);
    return finish_node(std::move(n));
}

struct TreeStats {
    int end_nodes = 0, internal_nodes = 0, zero_nodes = 0, lines = 0, max_line_momentum = 0;
};

inline void collect_stats(const TreeNode& n, TreeStats& s) {
    ++s.lines;
    s.max_line_momentum = std::max(s.max_line_momentum, norm1(n.nu));
    if (n.kind == NodeKind::end) ++s.end_nodes;
    else ++s.internal_nodes;
    if (n.kind == NodeKind::zero) ++s.zero_nodes;
    for (auto& c : n.children) collect_stats(*c, s);
}

inline TreeStats tree_stats(const NodePtr& t) {
    TreeStats s;
    collect_stats(*t, s);
    return s;
}

// |E^sigma_i| per (i, sigma): index 2i (+), 2i+1 (-)
inline std::vector<int> end_node_counts(const NodePtr& t, int d) {
    std::vector<int> c(2 * d, 0);
    std::vector<const TreeNode*> stack{t.get()};
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        if (n->kind == NodeKind::end) c[2 * n->j + (n->sigma_node > 0 ? 0 : 1)]++;
        for (auto& ch : n->children) stack.push_back(ch.get());
    }
    return c;
}

// Label constraints on nodes and lines; ties omega.nu == 0 accept either line sign.
template <class F> std::vector<std::string> validate_tree(const Model<F>& m, const NodePtr& t) {
    std::vector<std::string> v;
    TreeRules<F> rules(m);
    int d = m.d();
    std::function<void(const TreeNode&)> walk = [&](const TreeNode& n) {
        std::string at = " at " + n.key.substr(0, 40);
        bool res = is_resonant_line(n);
        if (m.variant == Variant::real && n.kind != NodeKind::end) {
            int s = rules.line_sign(n.j, n.nu);
            bool tie = field_traits<F>::is_zero(m.spec.dot(n.nu));
            if (s != n.sigma_line && !tie) v.push_back("line sign" + at);
        }
        if (n.scale != kUnscaled && (res ? n.scale != -1 : n.scale < 0)) v.push_back("scale label" + at);
        switch (n.kind) {
            case NodeKind::end:
                if (!n.children.empty()) v.push_back("end node with children" + at);
                if (n.nu != unit(d, n.j, n.sigma_node) || n.sigma_line != n.sigma_node) v.push_back("end node labels" + at);
                break;
            case NodeKind::internal: {
                int s = static_cast<int>(n.children.size());
                if (s < 2) v.push_back("s_v < 2" + at);
                if (n.k != s - 1) v.push_back("k_v != s_v - 1" + at);
                Mode sum(d, 0);
                for (auto& c : n.children) {
                    sum = sum + c->nu;
                    if (c->kind != NodeKind::end && is_resonant_line(*c)) v.push_back("resonant line into a k>=1 node" + at);
                }
                if (sum != n.nu) v.push_back("conservation" + at);
                break;
            }
            case NodeKind::zero: {
                if (n.children.size() != 2) {
                    v.push_back("zero node arity" + at);
                    break;
                }
                int nres = 0;
                for (auto& c : n.children) {
                    if (c->kind == NodeKind::end) v.push_back("end line into zero node" + at);
                    if (c->j != n.j || c->sigma_line != n.sigma_node) v.push_back("zero node child labels" + at);
                    if (c->nu == unit(d, n.j, n.sigma_node)) ++nres;
                    else if (c->nu != n.nu) v.push_back("conservation" + at);
                }
                if (nres != 1) v.push_back("zero node needs exactly one resonant child" + at);
                if (n.sigma_line != n.sigma_node) v.push_back("zero node exit sign" + at);
                break;
            }
        }
        for (auto& c : n.children) walk(*c);
    };
    walk(*t);
    return v;
}

// All admissible scale assignments (Psi_n != 0 on every line, -1 on resonant lines).
template <class F> std::vector<NodePtr> expand_scales(const Model<F>& m, const NodePtr& t) {
    TreeRules<F> rules(m);
    auto part = m.partition();
    std::function<std::vector<NodePtr>(const NodePtr&)> rec = [&](const NodePtr& p) -> std::vector<NodePtr> {
        std::vector<int> own;
        if (is_resonant_line(*p)) {
            own = {-1};
        } else {
            for (auto& w : part.scale_weights(rules.divisor(p->j, p->sigma_line, p->nu))) own.push_back(w.n);
        }
        std::vector<std::vector<NodePtr>> combos{{}};
        for (auto& c : p->children) {
            auto opts = rec(c);
            std::vector<std::vector<NodePtr>> next;
            for (auto& base : combos)
                for (auto& o : opts) {
                    auto b = base;
                    b.push_back(o);
                    next.push_back(std::move(b));
                }
            combos = std::move(next);
        }
        std::vector<NodePtr> out;
        for (int n : own)
            for (auto& ch : combos) {
                TreeNode q = *p;
                q.scale = n;
                q.children = ch;
                out.push_back(finish_node(std::move(q)));
            }
        return out;
    };
    return rec(t);
}

// Scaled classes: each unscaled class expanded, duplicates merged by key with summed weight.
template <class F> std::vector<TreeClass<F>> scaled_classes(const Model<F>& m, const std::vector<TreeClass<F>>& unscaled) {
    std::map<std::string, TreeClass<F>> merged;
    for (auto& c : unscaled) {
        for (auto& s : expand_scales(m, c.root)) {
            auto it = merged.find(s->key);
            if (it != merged.end()) {
                it->second.multiplicity += c.multiplicity;
                continue;
            }
            merged.emplace(s->key, TreeClass<F>{s, c.multiplicity, tree_value(m, s, ValueMode::scaled)});
        }
    }
    std::vector<TreeClass<F>> out;
    for (auto& [k, c] : merged) out.push_back(std::move(c));
    return out;
}

// All planar rooted trees with N nodes below the root point, as bracket strings.
inline std::vector<std::string> planar_tree_shapes(int N) {
    if (N == 0) return {};
    // a node followed by an ordered forest of N - 1 nodes
    std::function<std::vector<std::string>(int)> forests = [&](int n) -> std::vector<std::string> {
        if (n == 0) return {""};
        std::vector<std::string> out;
        for (int a = 1; a <= n; ++a)
            for (auto& first : planar_tree_shapes(a))
                for (auto& rest : forests(n - a)) out.push_back(first + rest);
        return out;
    };
    std::vector<std::string> out;
    for (auto& f : forests(N - 1)) out.push_back("(" + f + ")");
    return out;
}

}  // namespace lindstedt
