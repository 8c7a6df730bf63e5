#include "nesya/logic.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace nesya {

// ---------------------------------------------------------------------------
// Vocabulary

bool is_identifier(std::string_view text) {
    if (text.empty())
        return false;
    auto first = static_cast<unsigned char>(text.front());
    if (!std::isalpha(first) && first != '_')
        return false;
    return std::all_of(text.begin() + 1, text.end(), [](char c) {
        auto u = static_cast<unsigned char>(c);
        return std::isalnum(u) || c == '_';
    });
}

Vocabulary::Vocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        const auto& n = names_[i];
        if (!is_identifier(n) || n == "true" || n == "false")
            throw Error("invalid variable name '" + n + "'");
        if (!index_.emplace(n, i).second)
            throw Error("duplicate variable name '" + n + "'");
    }
}

std::optional<std::size_t> Vocabulary::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
        return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------
// Formula

struct Formula::Node {
    FormulaKind kind;
    std::size_t var = 0;
    std::vector<Formula> children;
};

Formula Formula::constant(bool value) {
    static const auto t = std::make_shared<const Node>(Node{FormulaKind::True, 0, {}});
    static const auto f = std::make_shared<const Node>(Node{FormulaKind::False, 0, {}});
    return Formula(value ? t : f);
}

Formula Formula::var(std::size_t index) {
    return Formula(std::make_shared<const Node>(Node{FormulaKind::Var, index, {}}));
}

Formula Formula::negation(Formula child) {
    return Formula(std::make_shared<const Node>(Node{FormulaKind::Not, 0, {std::move(child)}}));
}

namespace {

Formula make_nary(FormulaKind kind, std::vector<Formula> children, Formula empty,
                  auto&& build) {
    std::vector<Formula> flat;
    flat.reserve(children.size());
    for (auto& c : children) {
        if (c.kind() == kind) {
            auto cs = c.children();
            flat.insert(flat.end(), cs.begin(), cs.end());
        } else {
            flat.push_back(std::move(c));
        }
    }
    if (flat.empty())
        return empty;
    if (flat.size() == 1)
        return flat.front();
    return build(std::move(flat));
}

} // namespace

Formula Formula::conjunction(std::vector<Formula> children) {
    return make_nary(FormulaKind::And, std::move(children), constant(true), [](std::vector<Formula> cs) {
        return Formula(std::make_shared<const Node>(Node{FormulaKind::And, 0, std::move(cs)}));
    });
}

Formula Formula::disjunction(std::vector<Formula> children) {
    return make_nary(FormulaKind::Or, std::move(children), constant(false), [](std::vector<Formula> cs) {
        return Formula(std::make_shared<const Node>(Node{FormulaKind::Or, 0, std::move(cs)}));
    });
}

FormulaKind Formula::kind() const noexcept { return node_->kind; }

std::size_t Formula::var_index() const {
    if (node_->kind != FormulaKind::Var)
        throw Error("var_index() on a non-variable formula");
    return node_->var;
}

std::span<const Formula> Formula::children() const noexcept { return node_->children; }

bool operator==(const Formula& a, const Formula& b) {
    if (a.node_ == b.node_)
        return true;
    if (a.kind() != b.kind())
        return false;
    if (a.kind() == FormulaKind::Var)
        return a.node_->var == b.node_->var;
    return std::ranges::equal(a.children(), b.children());
}

// ---------------------------------------------------------------------------
// Interpretation

Interpretation Interpretation::from_mask(std::size_t size, std::uint64_t mask) {
    if (size > 64)
        throw DimensionError("mask interpretations support at most 64 variables");
    Interpretation omega(size);
    for (std::size_t i = 0; i < size; ++i)
        omega.bits_[i] = ((mask >> i) & 1U) != 0;
    return omega;
}

Interpretation Interpretation::from_true(std::size_t size, std::initializer_list<std::size_t> true_vars) {
    Interpretation omega(size);
    for (auto v : true_vars)
        omega.set(v);
    return omega;
}

std::uint64_t Interpretation::mask() const {
    if (bits_.size() > 64)
        throw DimensionError("mask() requires at most 64 variables");
    std::uint64_t m = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i])
            m |= std::uint64_t{1} << i;
    return m;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
public:
    Parser(std::string_view text, const Vocabulary& vocab) : text_(text), vocab_(vocab) {}

    Formula parse() {
        Formula f = parse_impl();
        skip_ws();
        if (pos_ != text_.size())
            fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return f;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg + " at position " + std::to_string(pos_), pos_);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    bool accept(std::string_view tok) {
        skip_ws();
        if (text_.substr(pos_, tok.size()) == tok) {
            pos_ += tok.size();
            return true;
        }
        return false;
    }

    Formula parse_impl() {
        Formula lhs = parse_or();
        if (accept("->")) {
            Formula rhs = parse_impl(); // right-associative
            return Formula::disjunction({Formula::negation(std::move(lhs)), std::move(rhs)});
        }
        return lhs;
    }

    Formula parse_or() {
        std::vector<Formula> parts{parse_and()};
        while (accept("|"))
            parts.push_back(parse_and());
        return parts.size() == 1 ? parts.front() : Formula::disjunction(std::move(parts));
    }

    Formula parse_and() {
        std::vector<Formula> parts{parse_not()};
        while (accept("&"))
            parts.push_back(parse_not());
        return parts.size() == 1 ? parts.front() : Formula::conjunction(std::move(parts));
    }

    Formula parse_not() {
        if (accept("!"))
            return Formula::negation(parse_not());
        return parse_atom();
    }

    Formula parse_atom() {
        skip_ws();
        if (pos_ >= text_.size())
            fail("unexpected end of expression");
        if (accept("(")) {
            Formula inner = parse_impl();
            if (!accept(")"))
                fail("expected ')'");
            return inner;
        }
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string_view ident = text_.substr(start, pos_ - start);
        if (!is_identifier(ident)) {
            pos_ = start;
            fail("expected identifier, 'true', 'false' or '('");
        }
        if (ident == "true")
            return Formula::constant(true);
        if (ident == "false")
            return Formula::constant(false);
        auto index = vocab_.find(ident);
        if (!index) {
            pos_ = start;
            fail("undeclared variable '" + std::string(ident) + "'");
        }
        return Formula::var(*index);
    }

    std::string_view text_;
    const Vocabulary& vocab_;
    std::size_t pos_ = 0;
};

// Binding strength used by the printer: Or < And < Not/atoms.
int precedence(const Formula& f) {
    switch (f.kind()) {
    case FormulaKind::Or:
        return 1;
    case FormulaKind::And:
        return 2;
    default:
        return 3;
    }
}

void print(const Formula& f, const Vocabulary& vocab, std::string& out) {
    auto child = [&](const Formula& c, int min_prec) {
        if (precedence(c) < min_prec) {
            out += '(';
            print(c, vocab, out);
            out += ')';
        } else {
            print(c, vocab, out);
        }
    };
    switch (f.kind()) {
    case FormulaKind::True:
        out += "true";
        break;
    case FormulaKind::False:
        out += "false";
        break;
    case FormulaKind::Var:
        out += vocab.name(f.var_index());
        break;
    case FormulaKind::Not:
        out += '!';
        child(f.children()[0], 3);
        break;
    case FormulaKind::And:
    case FormulaKind::Or: {
        const char* sep = f.kind() == FormulaKind::And ? " & " : " | ";
        // Nested same-kind children only arise from hand-built trees; parenthesize them.
        int min_prec = precedence(f) + 1;
        bool first = true;
        for (const auto& c : f.children()) {
            if (!first)
                out += sep;
            first = false;
            child(c, min_prec);
        }
        break;
    }
    }
}

void collect_support(const Formula& f, std::set<std::size_t>& acc) {
    if (f.kind() == FormulaKind::Var) {
        acc.insert(f.var_index());
        return;
    }
    for (const auto& c : f.children())
        collect_support(c, acc);
}

} // namespace

Formula parse_formula(std::string_view text, const Vocabulary& vocab) {
    return Parser(text, vocab).parse();
}

std::string to_string(const Formula& f, const Vocabulary& vocab) {
    std::string out;
    print(f, vocab, out);
    return out;
}

bool evaluate(const Formula& f, const Interpretation& omega) {
    switch (f.kind()) {
    case FormulaKind::True:
        return true;
    case FormulaKind::False:
        return false;
    case FormulaKind::Var: {
        auto i = f.var_index();
        if (i >= omega.size())
            throw DimensionError("formula mentions variable " + std::to_string(i) +
                                 " but the interpretation has " + std::to_string(omega.size()));
        return omega.test(i);
    }
    case FormulaKind::Not:
        return !evaluate(f.children()[0], omega);
    case FormulaKind::And:
        for (const auto& c : f.children())
            if (!evaluate(c, omega))
                return false;
        return true;
    case FormulaKind::Or:
        for (const auto& c : f.children())
            if (evaluate(c, omega))
                return true;
        return false;
    }
    return false;
}

std::vector<std::size_t> support(const Formula& f) {
    std::set<std::size_t> acc;
    collect_support(f, acc);
    return {acc.begin(), acc.end()};
}

std::size_t min_vocabulary_size(const Formula& f) {
    auto vars = support(f);
    return vars.empty() ? 0 : vars.back() + 1;
}

std::vector<Interpretation> enumerate_models(const Formula& f, std::size_t vocab_size) {
    if (vocab_size > max_enumeration_vars)
        throw ResourceLimitError("model enumeration limited to " + std::to_string(max_enumeration_vars) +
                                 " variables, got " + std::to_string(vocab_size));
    if (min_vocabulary_size(f) > vocab_size)
        throw DimensionError("formula mentions variables outside a vocabulary of size " +
                             std::to_string(vocab_size));
    std::vector<Interpretation> models;
    const std::uint64_t count = std::uint64_t{1} << vocab_size;
    for (std::uint64_t m = 0; m < count; ++m) {
        auto omega = Interpretation::from_mask(vocab_size, m);
        if (evaluate(f, omega))
            models.push_back(std::move(omega));
    }
    return models;
}

} // namespace nesya
