#pragma once

#include "nesya/logic.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace nesya {

using ProbVector = std::vector<double>;

enum class CircuitKind : std::uint8_t { Const, Leaf, Sum, Product };

struct CircuitNode {
    CircuitKind kind;
    // Const: truth value. Leaf: polarity (true = positive literal).
    bool flag = false;
    std::uint32_t var = 0;
    std::uint32_t first_child = 0;
    std::uint32_t child_count = 0;
};

// Deterministic, decomposable arithmetic circuit for one guard. Nodes are
// stored children-before-parents; the root is the last node.
class CompiledGuard {
public:
    [[nodiscard]] std::size_t vocabulary_size() const noexcept { return vocab_size_; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] std::size_t root() const noexcept { return nodes_.size() - 1; }
    [[nodiscard]] std::span<const CircuitNode> nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::span<const std::uint32_t> children(std::size_t node) const;

    // Single bottom-up pass. `scratch` must hold size() doubles.
    double evaluate(std::span<const double> p, std::span<double> scratch) const;

    // `<id> <kind> <args...>` per line, children first.
    void dump(std::ostream& os) const;

private:
    friend class CircuitBuilder;
    std::size_t vocab_size_ = 0;
    std::vector<CircuitNode> nodes_;
    std::vector<std::uint32_t> edges_;
};

struct CompileOptions {
    std::size_t node_cap = 1'000'000;
};

std::vector<std::size_t> declaration_order(std::size_t vocab_size);

// Top-down Shannon expansion over `order` (a permutation of the vocabulary
// indices), memoized on (depth, residual formula) with a unique table for
// structurally identical sub-circuits. Throws ResourceLimitError past
// options.node_cap nodes.
CompiledGuard compile_guard(const Formula& f, std::span<const std::size_t> order,
                            const CompileOptions& options = {});
CompiledGuard compile_guard(const Formula& f, std::size_t vocab_size, const CompileOptions& options = {});

struct WmcResult {
    double value = 0.0;
    std::vector<double> gradient; // d value / d p[i]; empty unless requested
};

// Weighted model count of the guard under independent symbol probabilities p.
WmcResult wmc(const CompiledGuard& g, std::span<const double> p, bool want_gradient = false);

// Adds `upstream * d value / d p` into `grad`. `scratch` holds 2 * size() doubles.
double wmc_accumulate_gradient(const CompiledGuard& g, std::span<const double> p, double upstream,
                               std::span<double> grad, std::span<double> scratch);

// Number of models over the full vocabulary, as WMC at p = 1/2 scaled by 2^|V|.
// Exact for vocabularies up to 52 variables.
double model_count(const CompiledGuard& g);
bool is_satisfiable(const CompiledGuard& g);
bool is_valid(const CompiledGuard& g);

} // namespace nesya
