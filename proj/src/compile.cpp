#include "nesya/compile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

namespace nesya {

std::span<const std::uint32_t> CompiledGuard::children(std::size_t node) const {
    const auto& n = nodes_.at(node);
    return std::span<const std::uint32_t>(edges_).subspan(n.first_child, n.child_count);
}

double CompiledGuard::evaluate(std::span<const double> p, std::span<double> scratch) const {
    const std::uint32_t* edges = edges_.data();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        double v;
        switch (n.kind) {
        case CircuitKind::Const:
            v = n.flag ? 1.0 : 0.0;
            break;
        case CircuitKind::Leaf:
            v = n.flag ? p[n.var] : 1.0 - p[n.var];
            break;
        case CircuitKind::Sum:
            v = 0.0;
            for (std::uint32_t k = 0; k < n.child_count; ++k)
                v += scratch[edges[n.first_child + k]];
            break;
        case CircuitKind::Product:
            v = 1.0;
            for (std::uint32_t k = 0; k < n.child_count; ++k)
                v *= scratch[edges[n.first_child + k]];
            break;
        }
        scratch[i] = v;
    }
    return scratch[nodes_.size() - 1];
}

void CompiledGuard::dump(std::ostream& os) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        os << i;
        switch (n.kind) {
        case CircuitKind::Const:
            os << " const " << (n.flag ? 1 : 0);
            break;
        case CircuitKind::Leaf:
            os << " leaf " << n.var << ' ' << (n.flag ? '+' : '-');
            break;
        case CircuitKind::Sum:
        case CircuitKind::Product:
            os << (n.kind == CircuitKind::Sum ? " sum" : " prod");
            for (auto c : children(i))
                os << ' ' << c;
            break;
        }
        os << '\n';
    }
}

std::vector<std::size_t> declaration_order(std::size_t vocab_size) {
    std::vector<std::size_t> order(vocab_size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
}

namespace {

Formula simplify(const Formula& f);

// Rebuilds an And/Or node from already-simplified children with constant folding.
Formula fold_nary(FormulaKind kind, std::vector<Formula> children) {
    const bool is_and = kind == FormulaKind::And;
    const FormulaKind absorbing = is_and ? FormulaKind::False : FormulaKind::True;
    const FormulaKind neutral = is_and ? FormulaKind::True : FormulaKind::False;
    std::vector<Formula> kept;
    kept.reserve(children.size());
    for (auto& c : children) {
        if (c.kind() == absorbing)
            return c;
        if (c.kind() != neutral)
            kept.push_back(std::move(c));
    }
    return is_and ? Formula::conjunction(std::move(kept)) : Formula::disjunction(std::move(kept));
}

Formula simplify(const Formula& f) {
    switch (f.kind()) {
    case FormulaKind::True:
    case FormulaKind::False:
    case FormulaKind::Var:
        return f;
    case FormulaKind::Not: {
        Formula c = simplify(f.children()[0]);
        if (c.is_constant())
            return Formula::constant(c.kind() == FormulaKind::False);
        if (c.kind() == FormulaKind::Not)
            return c.children()[0];
        return Formula::negation(std::move(c));
    }
    case FormulaKind::And:
    case FormulaKind::Or: {
        std::vector<Formula> cs;
        cs.reserve(f.children().size());
        for (const auto& c : f.children())
            cs.push_back(simplify(c));
        return fold_nary(f.kind(), std::move(cs));
    }
    }
    return f;
}

// f with variable `var` fixed to `value`, constant-folded. Input must be simplified.
Formula condition(const Formula& f, std::size_t var, bool value) {
    switch (f.kind()) {
    case FormulaKind::True:
    case FormulaKind::False:
        return f;
    case FormulaKind::Var:
        return f.var_index() == var ? Formula::constant(value) : f;
    case FormulaKind::Not: {
        Formula c = condition(f.children()[0], var, value);
        if (c.is_constant())
            return Formula::constant(c.kind() == FormulaKind::False);
        if (c == f.children()[0])
            return f;
        return Formula::negation(std::move(c));
    }
    case FormulaKind::And:
    case FormulaKind::Or: {
        std::vector<Formula> cs;
        cs.reserve(f.children().size());
        for (const auto& c : f.children())
            cs.push_back(condition(c, var, value));
        return fold_nary(f.kind(), std::move(cs));
    }
    }
    return f;
}

void encode(const Formula& f, std::string& out) {
    switch (f.kind()) {
    case FormulaKind::True:
        out += 'T';
        return;
    case FormulaKind::False:
        out += 'F';
        return;
    case FormulaKind::Var:
        out += 'v';
        out += std::to_string(f.var_index());
        out += ';';
        return;
    case FormulaKind::Not:
        out += '!';
        encode(f.children()[0], out);
        return;
    case FormulaKind::And:
    case FormulaKind::Or:
        out += f.kind() == FormulaKind::And ? "&(" : "|(";
        for (const auto& c : f.children())
            encode(c, out);
        out += ')';
        return;
    }
}

} // namespace

class CircuitBuilder {
public:
    CircuitBuilder(std::span<const std::size_t> order, const CompileOptions& options)
        : order_(order.begin(), order.end()), position_(order.size(), npos), options_(options) {
        for (std::size_t d = 0; d < order_.size(); ++d) {
            auto v = order_[d];
            if (v >= order_.size() || position_[v] != npos)
                throw Error("variable order must be a permutation of the vocabulary indices");
            position_[v] = d;
        }
    }

    CompiledGuard build(const Formula& f) {
        if (min_vocabulary_size(f) > order_.size())
            throw DimensionError("guard mentions variables outside a vocabulary of size " +
                                 std::to_string(order_.size()));
        std::uint32_t root = expand(simplify(f));
        return compact(root);
    }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::uint32_t expand(const Formula& f) {
        if (f.is_constant())
            return make_const(f.kind() == FormulaKind::True);

        std::size_t depth = npos;
        for (auto v : support(f))
            depth = std::min(depth, position_[v]);

        std::string key = std::to_string(depth) + ':';
        encode(f, key);
        if (auto it = memo_.find(key); it != memo_.end())
            return it->second;

        const std::size_t x = order_[depth];
        std::uint32_t hi = expand(condition(f, x, true));
        std::uint32_t lo = expand(condition(f, x, false));
        std::uint32_t id = decision(x, hi, lo);
        memo_.emplace(std::move(key), id);
        return id;
    }

    // (x & hi) | (!x & lo) with constant folding.
    std::uint32_t decision(std::size_t x, std::uint32_t hi, std::uint32_t lo) {
        if (hi == lo)
            return hi;
        std::vector<std::uint32_t> branches;
        for (auto [child, polarity] : {std::pair{hi, true}, std::pair{lo, false}}) {
            if (is_const(child, false))
                continue;
            std::uint32_t leaf = make_leaf(x, polarity);
            branches.push_back(is_const(child, true) ? leaf : make_op(CircuitKind::Product, {leaf, child}));
        }
        if (branches.size() == 1)
            return branches.front();
        return make_op(CircuitKind::Sum, std::move(branches));
    }

    bool is_const(std::uint32_t id, bool value) const {
        return nodes_[id].kind == CircuitKind::Const && nodes_[id].flag == value;
    }

    std::uint32_t make_const(bool value) {
        return intern(CircuitNode{CircuitKind::Const, value, 0, 0, 0}, {});
    }

    std::uint32_t make_leaf(std::size_t var, bool polarity) {
        return intern(CircuitNode{CircuitKind::Leaf, polarity, static_cast<std::uint32_t>(var), 0, 0}, {});
    }

    std::uint32_t make_op(CircuitKind kind, std::vector<std::uint32_t> children) {
        const auto count = static_cast<std::uint32_t>(children.size());
        return intern(CircuitNode{kind, false, 0, 0, count}, std::move(children));
    }

    std::uint32_t intern(CircuitNode node, std::vector<std::uint32_t> children) {
        std::string key;
        key += static_cast<char>('0' + static_cast<int>(node.kind));
        key += node.flag ? '+' : '-';
        key += std::to_string(node.var);
        for (auto c : children) {
            key += ',';
            key += std::to_string(c);
        }
        if (auto it = unique_.find(key); it != unique_.end())
            return it->second;
        if (nodes_.size() >= options_.node_cap)
            throw ResourceLimitError("circuit exceeds the node cap of " + std::to_string(options_.node_cap));
        node.first_child = static_cast<std::uint32_t>(edges_.size());
        edges_.insert(edges_.end(), children.begin(), children.end());
        auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back(node);
        unique_.emplace(std::move(key), id);
        return id;
    }

    // Keep only nodes reachable from the root, preserving creation order.
    CompiledGuard compact(std::uint32_t root) const {
        std::vector<bool> live(nodes_.size(), false);
        live[root] = true;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (!live[i])
                continue;
            const auto& n = nodes_[i];
            for (std::uint32_t k = 0; k < n.child_count; ++k)
                live[edges_[n.first_child + k]] = true;
        }
        std::vector<std::uint32_t> remap(nodes_.size(), 0);
        CompiledGuard g;
        g.vocab_size_ = order_.size();
        for (std::size_t i = 0; i <= root; ++i) {
            if (!live[i])
                continue;
            CircuitNode n = nodes_[i];
            auto first = static_cast<std::uint32_t>(g.edges_.size());
            for (std::uint32_t k = 0; k < n.child_count; ++k)
                g.edges_.push_back(remap[edges_[n.first_child + k]]);
            n.first_child = first;
            remap[i] = static_cast<std::uint32_t>(g.nodes_.size());
            g.nodes_.push_back(n);
        }
        return g;
    }

    std::vector<std::size_t> order_;
    std::vector<std::size_t> position_;
    CompileOptions options_;
    std::vector<CircuitNode> nodes_;
    std::vector<std::uint32_t> edges_;
    std::unordered_map<std::string, std::uint32_t> unique_;
    std::unordered_map<std::string, std::uint32_t> memo_;
};

CompiledGuard compile_guard(const Formula& f, std::span<const std::size_t> order, const CompileOptions& options) {
    return CircuitBuilder(order, options).build(f);
}

CompiledGuard compile_guard(const Formula& f, std::size_t vocab_size, const CompileOptions& options) {
    auto order = declaration_order(vocab_size);
    return compile_guard(f, order, options);
}

namespace {

void check_dimension(const CompiledGuard& g, std::span<const double> p) {
    if (p.size() != g.vocabulary_size())
        throw DimensionError("probability vector has length " + std::to_string(p.size()) +
                             ", circuit vocabulary has " + std::to_string(g.vocabulary_size()));
}

} // namespace

double wmc_accumulate_gradient(const CompiledGuard& g, std::span<const double> p, double upstream,
                               std::span<double> grad, std::span<double> scratch) {
    const std::size_t n = g.size();
    std::span<double> value = scratch.subspan(0, n);
    std::span<double> adjoint = scratch.subspan(n, n);
    const double result = g.evaluate(p, value);

    std::fill(adjoint.begin(), adjoint.end(), 0.0);
    adjoint[n - 1] = upstream;
    auto nodes = g.nodes();
    for (std::size_t i = n; i-- > 0;) {
        const double a = adjoint[i];
        if (a == 0.0)
            continue;
        const auto& node = nodes[i];
        auto kids = g.children(i);
        switch (node.kind) {
        case CircuitKind::Const:
            break;
        case CircuitKind::Leaf:
            grad[node.var] += node.flag ? a : -a;
            break;
        case CircuitKind::Sum:
            for (auto c : kids)
                adjoint[c] += a;
            break;
        case CircuitKind::Product: {
            // Product of the other children via prefix/suffix products (exact with zeros).
            const std::size_t k = kids.size();
            if (k == 2) {
                adjoint[kids[0]] += a * value[kids[1]];
                adjoint[kids[1]] += a * value[kids[0]];
                break;
            }
            double prefix = 1.0;
            std::vector<double> suffix(k + 1, 1.0);
            for (std::size_t j = k; j-- > 0;)
                suffix[j] = suffix[j + 1] * value[kids[j]];
            for (std::size_t j = 0; j < k; ++j) {
                adjoint[kids[j]] += a * prefix * suffix[j + 1];
                prefix *= value[kids[j]];
            }
            break;
        }
        }
    }
    return result;
}

WmcResult wmc(const CompiledGuard& g, std::span<const double> p, bool want_gradient) {
    check_dimension(g, p);
    WmcResult r;
    if (!want_gradient) {
        std::vector<double> scratch(g.size());
        r.value = g.evaluate(p, scratch);
        return r;
    }
    std::vector<double> scratch(2 * g.size());
    r.gradient.assign(g.vocabulary_size(), 0.0);
    r.value = wmc_accumulate_gradient(g, p, 1.0, r.gradient, scratch);
    return r;
}

double model_count(const CompiledGuard& g) {
    std::vector<double> half(g.vocabulary_size(), 0.5);
    std::vector<double> scratch(g.size());
    return std::ldexp(g.evaluate(half, scratch), static_cast<int>(g.vocabulary_size()));
}

bool is_satisfiable(const CompiledGuard& g) { return model_count(g) > 0.0; }

bool is_valid(const CompiledGuard& g) {
    return model_count(g) == std::ldexp(1.0, static_cast<int>(g.vocabulary_size()));
}

} // namespace nesya
