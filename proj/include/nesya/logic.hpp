#pragma once

#include "nesya/error.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nesya {

struct Variable {
    std::string name;
    std::size_t index;
};

// Ordered set of propositional variable names.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> names);

    [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }
    [[nodiscard]] const std::string& name(std::size_t index) const { return names_.at(index); }
    [[nodiscard]] Variable variable(std::size_t index) const { return {names_.at(index), index}; }
    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.names_ == b.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

bool is_identifier(std::string_view text);

enum class FormulaKind : std::uint8_t { False, True, Var, Not, And, Or };

// Immutable propositional formula. Nodes are shared, so copies are cheap.
// And/Or are n-ary; the factories flatten nested nodes of the same kind.
class Formula {
public:
    static Formula constant(bool value);
    static Formula var(std::size_t index);
    static Formula negation(Formula child);
    static Formula conjunction(std::vector<Formula> children);
    static Formula disjunction(std::vector<Formula> children);

    [[nodiscard]] FormulaKind kind() const noexcept;
    [[nodiscard]] std::size_t var_index() const;
    [[nodiscard]] std::span<const Formula> children() const noexcept;

    [[nodiscard]] bool is_constant() const noexcept {
        return kind() == FormulaKind::True || kind() == FormulaKind::False;
    }

    // Structural equality, not logical equivalence.
    friend bool operator==(const Formula& a, const Formula& b);

private:
    struct Node;
    explicit Formula(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;
};

inline Formula operator!(Formula f) { return Formula::negation(std::move(f)); }
inline Formula operator&(Formula a, Formula b) { return Formula::conjunction({std::move(a), std::move(b)}); }
inline Formula operator|(Formula a, Formula b) { return Formula::disjunction({std::move(a), std::move(b)}); }

// Total truth assignment; bit i is the value of variable i.
class Interpretation {
public:
    Interpretation() = default;
    explicit Interpretation(std::size_t size) : bits_(size, false) {}

    static Interpretation from_mask(std::size_t size, std::uint64_t mask);
    static Interpretation from_true(std::size_t size, std::initializer_list<std::size_t> true_vars);

    [[nodiscard]] std::size_t size() const noexcept { return bits_.size(); }
    [[nodiscard]] bool test(std::size_t i) const { return bits_.at(i); }
    void set(std::size_t i, bool value = true) { bits_.at(i) = value; }
    // Requires size() <= 64.
    [[nodiscard]] std::uint64_t mask() const;

    friend bool operator==(const Interpretation&, const Interpretation&) = default;
    friend auto operator<=>(const Interpretation& a, const Interpretation& b) { return a.bits_ <=> b.bits_; }

private:
    std::vector<bool> bits_;
};

using Trace = std::vector<Interpretation>;

// Grammar:
//   expr := impl ; impl := or ("->" or)? ; or := and ("|" and)* ;
//   and := not ("&" not)* ; not := "!" not | atom ;
//   atom := ident | "true" | "false" | "(" expr ")"
// `a -> b` becomes `!a | b`.
Formula parse_formula(std::string_view text, const Vocabulary& vocab);

// Minimal-parenthesis rendering that parse_formula reads back.
std::string to_string(const Formula& f, const Vocabulary& vocab);

// Throws DimensionError if f mentions a variable outside the interpretation.
bool evaluate(const Formula& f, const Interpretation& omega);

// Sorted, duplicate-free indices of the variables f mentions.
std::vector<std::size_t> support(const Formula& f);

// Largest variable index + 1 (0 for variable-free formulas).
std::size_t min_vocabulary_size(const Formula& f);

inline constexpr std::size_t max_enumeration_vars = 24;

// All models of f over a vocabulary of `vocab_size` variables, in increasing
// mask order. Exponential; throws ResourceLimitError above 24 variables.
std::vector<Interpretation> enumerate_models(const Formula& f, std::size_t vocab_size);

} // namespace nesya
