#pragma once

#include "nesya/compile.hpp"
#include "nesya/logic.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nesya {

struct Transition {
    std::size_t from;
    std::size_t to;
    Formula guard;
};

// Symbolic automaton (V, Q, q0, delta, F). Transitions not listed carry the
// guard `false`; repeated (from, to) pairs are merged by disjunction.
class Sfa {
public:
    Sfa(Vocabulary vocab, std::vector<std::string> states, std::size_t initial,
        std::vector<std::size_t> accepting, std::vector<Transition> transitions,
        std::vector<std::size_t> variable_order = {});

    [[nodiscard]] const Vocabulary& vocabulary() const noexcept { return vocab_; }
    [[nodiscard]] std::size_t symbol_count() const noexcept { return vocab_.size(); }
    [[nodiscard]] const std::vector<std::string>& states() const noexcept { return states_; }
    [[nodiscard]] std::size_t state_count() const noexcept { return states_.size(); }
    [[nodiscard]] std::size_t initial() const noexcept { return initial_; }
    [[nodiscard]] const std::vector<std::size_t>& accepting() const noexcept { return accepting_; }
    [[nodiscard]] bool is_accepting(std::size_t q) const { return accepting_mask_.at(q); }
    [[nodiscard]] const std::vector<Transition>& transitions() const noexcept { return transitions_; }
    // Compilation order; declaration order unless overridden.
    [[nodiscard]] const std::vector<std::size_t>& variable_order() const noexcept { return order_; }
    [[nodiscard]] bool has_custom_order() const noexcept { return custom_order_; }
    [[nodiscard]] std::optional<std::size_t> find_state(std::string_view name) const;

private:
    Vocabulary vocab_;
    std::vector<std::string> states_;
    std::size_t initial_;
    std::vector<std::size_t> accepting_;
    std::vector<bool> accepting_mask_;
    std::vector<Transition> transitions_;
    std::vector<std::size_t> order_;
    bool custom_order_ = false;
};

class NonDeterministicError : public Error {
public:
    NonDeterministicError(const std::string& what, std::size_t state, std::size_t target_a,
                          std::size_t target_b, Interpretation witness)
        : Error(what), state_(state), targets_{target_a, target_b}, witness_(std::move(witness)) {}
    [[nodiscard]] std::size_t state() const noexcept { return state_; }
    [[nodiscard]] std::pair<std::size_t, std::size_t> targets() const noexcept { return targets_; }
    [[nodiscard]] const Interpretation& witness() const noexcept { return witness_; }

private:
    std::size_t state_;
    std::pair<std::size_t, std::size_t> targets_;
    Interpretation witness_;
};

class IncompleteError : public Error {
public:
    IncompleteError(const std::string& what, std::size_t state, Interpretation witness)
        : Error(what), state_(state), witness_(std::move(witness)) {}
    [[nodiscard]] std::size_t state() const noexcept { return state_; }
    [[nodiscard]] const Interpretation& witness() const noexcept { return witness_; }

private:
    std::size_t state_;
    Interpretation witness_;
};

struct SfaCompileOptions {
    // When a state's outgoing guards do not cover every interpretation, add
    // the uncovered part to its self-loop instead of rejecting the automaton.
    bool complete_with_self_loops = true;
    CompileOptions circuit;
};

struct CompiledEdge {
    std::size_t from;
    std::size_t to;
    Formula guard;
    CompiledGuard circuit;
    bool completed = false; // guard was extended by self-loop completion
};

class CompiledSfa {
public:
    [[nodiscard]] const Sfa& sfa() const noexcept { return sfa_; }
    [[nodiscard]] std::size_t state_count() const noexcept { return sfa_.state_count(); }
    [[nodiscard]] std::size_t symbol_count() const noexcept { return sfa_.symbol_count(); }
    // Edges grouped by source state.
    [[nodiscard]] std::span<const CompiledEdge> edges() const noexcept { return edges_; }
    [[nodiscard]] std::span<const CompiledEdge> outgoing(std::size_t q) const;
    [[nodiscard]] std::size_t max_circuit_size() const noexcept { return max_circuit_size_; }

    // Boolean run on a fully known interpretation.
    [[nodiscard]] std::size_t step(std::size_t q, const Interpretation& omega) const;
    [[nodiscard]] std::size_t run(const Trace& trace) const;
    [[nodiscard]] bool accepts(const Trace& trace) const { return sfa_.is_accepting(run(trace)); }

private:
    friend CompiledSfa validate_and_compile(const Sfa&, const SfaCompileOptions&);
    explicit CompiledSfa(Sfa sfa) : sfa_(std::move(sfa)) {}

    Sfa sfa_;
    std::vector<CompiledEdge> edges_;
    std::vector<std::size_t> offsets_;
    std::size_t max_circuit_size_ = 0;
};

// Compiles every guard and checks that, for each state, the outgoing guards
// are pairwise disjoint and jointly exhaustive. Throws NonDeterministicError
// or IncompleteError with a witness interpretation.
CompiledSfa validate_and_compile(const Sfa& sfa, const SfaCompileOptions& options = {});

inline constexpr double row_sum_tolerance = 1e-6;

// Dense |Q| x |Q| matrix, entry (from, to).
class TransitionMatrix {
public:
    explicit TransitionMatrix(std::size_t states) : n_(states), data_(states * states, 0.0) {}

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    double& operator()(std::size_t from, std::size_t to) { return data_[from * n_ + to]; }
    double operator()(std::size_t from, std::size_t to) const { return data_[from * n_ + to]; }
    [[nodiscard]] std::span<const double> row(std::size_t from) const {
        return std::span<const double>(data_).subspan(from * n_, n_);
    }
    [[nodiscard]] double row_sum(std::size_t from) const;

private:
    std::size_t n_;
    std::vector<double> data_;
};

struct EdgeGradient {
    std::size_t from;
    std::size_t to;
    std::vector<double> gradient; // d T(from, to) / d p
};

struct TransitionMatrixWithGradient {
    TransitionMatrix matrix;
    std::vector<EdgeGradient> gradients;
};

// T(from, to) = P(guard(from, to) | p). Throws InternalConsistencyError when a
// row misses 1 by more than row_sum_tolerance.
TransitionMatrix transition_matrix(const CompiledSfa& c, std::span<const double> p);
TransitionMatrixWithGradient transition_matrix_with_gradient(const CompiledSfa& c, std::span<const double> p);

using StateDistribution = std::vector<double>;

StateDistribution initial_distribution(const CompiledSfa& c);

// alpha_t for t = 1..n, with alpha_0 one-hot at the initial state and
// alpha_{t+1} = alpha_t T(p_{t+1}).
std::vector<StateDistribution> forward(const CompiledSfa& c, std::span<const ProbVector> ps);

double accepting_mass(const CompiledSfa& c, std::span<const double> alpha);

// Probability that the run ends in an accepting state.
double acceptance(const CompiledSfa& c, std::span<const ProbVector> ps);

// Reverse-mode pass through the recursion and the circuits. upstream[t] is
// dL/d alpha_{t+1}; returns dL/d p_{t+1} for every step.
std::vector<std::vector<double>> forward_backward_grad(const CompiledSfa& c, std::span<const ProbVector> ps,
                                                       std::span<const std::vector<double>> upstream);

struct AcceptanceGradient {
    double value = 0.0;
    std::vector<std::vector<double>> gradients;
};

AcceptanceGradient acceptance_with_gradient(const CompiledSfa& c, std::span<const ProbVector> ps);

std::string to_string(const Interpretation& omega, const Vocabulary& vocab);

} // namespace nesya
