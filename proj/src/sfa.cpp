#include "nesya/sfa.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace nesya {

Sfa::Sfa(Vocabulary vocab, std::vector<std::string> states, std::size_t initial,
         std::vector<std::size_t> accepting, std::vector<Transition> transitions,
         std::vector<std::size_t> variable_order)
    : vocab_(std::move(vocab)), states_(std::move(states)), initial_(initial) {
    const std::size_t n = states_.size();
    if (n == 0)
        throw Error("automaton has no states");
    for (std::size_t i = 0; i < n; ++i) {
        if (states_[i].empty())
            throw Error("empty state name");
        for (std::size_t j = 0; j < i; ++j)
            if (states_[i] == states_[j])
                throw Error("duplicate state '" + states_[i] + "'");
    }
    if (initial_ >= n)
        throw Error("initial state index out of range");

    accepting_mask_.assign(n, false);
    for (auto q : accepting) {
        if (q >= n)
            throw Error("accepting state index out of range");
        accepting_mask_[q] = true;
    }
    for (std::size_t q = 0; q < n; ++q)
        if (accepting_mask_[q])
            accepting_.push_back(q);

    std::map<std::pair<std::size_t, std::size_t>, std::size_t> slot;
    for (auto& t : transitions) {
        if (t.from >= n || t.to >= n)
            throw Error("transition references an unknown state");
        if (min_vocabulary_size(t.guard) > vocab_.size())
            throw Error("transition guard mentions an undeclared variable");
        auto [it, fresh] = slot.emplace(std::pair{t.from, t.to}, transitions_.size());
        if (fresh)
            transitions_.push_back(std::move(t));
        else
            transitions_[it->second].guard = transitions_[it->second].guard | t.guard;
    }

    if (variable_order.empty()) {
        order_ = declaration_order(vocab_.size());
    } else {
        std::vector<bool> seen(vocab_.size(), false);
        if (variable_order.size() != vocab_.size())
            throw Error("variable order must list every variable exactly once");
        for (auto v : variable_order) {
            if (v >= vocab_.size() || seen[v])
                throw Error("variable order must list every variable exactly once");
            seen[v] = true;
        }
        order_ = std::move(variable_order);
        custom_order_ = true;
    }
}

std::optional<std::size_t> Sfa::find_state(std::string_view name) const {
    for (std::size_t i = 0; i < states_.size(); ++i)
        if (states_[i] == name)
            return i;
    return std::nullopt;
}

std::string to_string(const Interpretation& omega, const Vocabulary& vocab) {
    std::string out = "{";
    bool first = true;
    for (std::size_t i = 0; i < omega.size(); ++i) {
        if (!omega.test(i))
            continue;
        if (!first)
            out += ", ";
        first = false;
        out += i < vocab.size() ? vocab.name(i) : std::to_string(i);
    }
    return out + "}";
}

namespace {

// First interpretation (in increasing mask order over the support variables,
// everything else false) satisfying `pred`.
template <typename Pred>
std::optional<Interpretation> find_witness(std::span<const std::size_t> support_vars, std::size_t vocab_size,
                                           Pred&& pred) {
    if (support_vars.size() > max_enumeration_vars)
        return std::nullopt;
    const std::uint64_t count = std::uint64_t{1} << support_vars.size();
    for (std::uint64_t m = 0; m < count; ++m) {
        Interpretation omega(vocab_size);
        for (std::size_t k = 0; k < support_vars.size(); ++k)
            if ((m >> k) & 1U)
                omega.set(support_vars[k]);
        if (pred(omega))
            return omega;
    }
    return std::nullopt;
}

std::vector<std::size_t> joint_support(std::span<const Formula> fs) {
    std::vector<std::size_t> all;
    for (const auto& f : fs) {
        auto s = support(f);
        all.insert(all.end(), s.begin(), s.end());
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

void check_disjoint(const Sfa& sfa, std::size_t q, const CompiledEdge& a, const CompiledEdge& b,
                    const CompileOptions& opts) {
    auto both = compile_guard(a.guard & b.guard, sfa.variable_order(), opts);
    if (!is_satisfiable(both))
        return;
    const Formula pair[] = {a.guard, b.guard};
    auto witness = find_witness(joint_support(pair), sfa.symbol_count(), [&](const Interpretation& w) {
        return evaluate(a.guard, w) && evaluate(b.guard, w);
    });
    const auto& names = sfa.states();
    std::string msg = "non-deterministic transitions from '" + names[q] + "' to '" + names[a.to] + "' and '" +
                      names[b.to] + "'";
    if (witness)
        msg += ": both satisfied by " + to_string(*witness, sfa.vocabulary());
    throw NonDeterministicError(msg, q, a.to, b.to, witness.value_or(Interpretation(sfa.symbol_count())));
}

} // namespace

CompiledSfa validate_and_compile(const Sfa& sfa, const SfaCompileOptions& options) {
    CompiledSfa c(sfa);
    const std::size_t n = sfa.state_count();
    const auto& order = sfa.variable_order();

    std::vector<std::vector<const Transition*>> by_source(n);
    for (const auto& t : sfa.transitions())
        by_source[t.from].push_back(&t);

    c.offsets_.push_back(0);
    for (std::size_t q = 0; q < n; ++q) {
        std::vector<CompiledEdge> out;
        for (const auto* t : by_source[q])
            out.push_back({q, t->to, t->guard, compile_guard(t->guard, order, options.circuit), false});

        for (std::size_t a = 0; a < out.size(); ++a)
            for (std::size_t b = a + 1; b < out.size(); ++b)
                check_disjoint(sfa, q, out[a], out[b], options.circuit);

        std::vector<Formula> guards;
        for (const auto& e : out)
            guards.push_back(e.guard);
        Formula covered = Formula::disjunction(guards);
        if (!is_valid(compile_guard(covered, order, options.circuit))) {
            if (!options.complete_with_self_loops) {
                auto witness = find_witness(joint_support(guards), sfa.symbol_count(), [&](const Interpretation& w) {
                    return !evaluate(covered, w);
                });
                std::string msg = "no outgoing transition of '" + sfa.states()[q] + "' is satisfied";
                if (witness)
                    msg += " by " + to_string(*witness, sfa.vocabulary());
                throw IncompleteError(msg, q, witness.value_or(Interpretation(sfa.symbol_count())));
            }
            Formula rest = !covered;
            auto self = std::find_if(out.begin(), out.end(), [q](const CompiledEdge& e) { return e.to == q; });
            if (self == out.end()) {
                out.push_back({q, q, rest, {}, true});
                self = out.end() - 1;
            } else {
                self->guard = self->guard | rest;
                self->completed = true;
            }
            self->circuit = compile_guard(self->guard, order, options.circuit);
            for (const auto& e : out)
                if (&e != &*self)
                    check_disjoint(sfa, q, *self, e, options.circuit);
            guards.clear();
            for (const auto& e : out)
                guards.push_back(e.guard);
            if (!is_valid(compile_guard(Formula::disjunction(guards), order, options.circuit)))
                throw InternalConsistencyError("self-loop completion failed for state '" + sfa.states()[q] + "'");
        }

        for (auto& e : out) {
            c.max_circuit_size_ = std::max(c.max_circuit_size_, e.circuit.size());
            c.edges_.push_back(std::move(e));
        }
        c.offsets_.push_back(c.edges_.size());
    }
    return c;
}

std::span<const CompiledEdge> CompiledSfa::outgoing(std::size_t q) const {
    if (q >= state_count())
        throw Error("state index out of range");
    return std::span<const CompiledEdge>(edges_).subspan(offsets_[q], offsets_[q + 1] - offsets_[q]);
}

std::size_t CompiledSfa::step(std::size_t q, const Interpretation& omega) const {
    if (omega.size() != symbol_count())
        throw DimensionError("interpretation size does not match the vocabulary");
    for (const auto& e : outgoing(q))
        if (evaluate(e.guard, omega))
            return e.to;
    throw InternalConsistencyError("no transition satisfied in a validated automaton");
}

std::size_t CompiledSfa::run(const Trace& trace) const {
    std::size_t q = sfa_.initial();
    for (const auto& omega : trace)
        q = step(q, omega);
    return q;
}

double TransitionMatrix::row_sum(std::size_t from) const {
    auto r = row(from);
    return std::accumulate(r.begin(), r.end(), 0.0);
}

namespace {

void check_probs(const CompiledSfa& c, std::span<const double> p) {
    if (p.size() != c.symbol_count())
        throw DimensionError("probability vector has length " + std::to_string(p.size()) + ", automaton has " +
                             std::to_string(c.symbol_count()) + " symbols");
}

void check_row_sum(std::size_t q, double s) {
    if (!(std::abs(s - 1.0) <= row_sum_tolerance))
        throw InternalConsistencyError("transition matrix row " + std::to_string(q) + " sums to " +
                                       std::to_string(s));
}

// Entries off the edge list are never written, so rows are summed along edges.
void check_rows(const CompiledSfa& c, const TransitionMatrix& t) {
    for (std::size_t q = 0; q < t.size(); ++q) {
        double s = 0.0;
        for (const auto& e : c.outgoing(q))
            s += t(q, e.to);
        check_row_sum(q, s);
    }
}

void fill_matrix(const CompiledSfa& c, std::span<const double> p, TransitionMatrix& t, std::vector<double>& scratch) {
    for (const auto& e : c.edges())
        t(e.from, e.to) = e.circuit.evaluate(p, scratch);
}

} // namespace

TransitionMatrix transition_matrix(const CompiledSfa& c, std::span<const double> p) {
    check_probs(c, p);
    TransitionMatrix t(c.state_count());
    std::vector<double> scratch(c.max_circuit_size());
    fill_matrix(c, p, t, scratch);
    check_rows(c, t);
    return t;
}

TransitionMatrixWithGradient transition_matrix_with_gradient(const CompiledSfa& c, std::span<const double> p) {
    check_probs(c, p);
    TransitionMatrixWithGradient out{TransitionMatrix(c.state_count()), {}};
    for (const auto& e : c.edges()) {
        auto r = wmc(e.circuit, p, true);
        out.matrix(e.from, e.to) = r.value;
        out.gradients.push_back({e.from, e.to, std::move(r.gradient)});
    }
    check_rows(c, out.matrix);
    return out;
}

StateDistribution initial_distribution(const CompiledSfa& c) {
    StateDistribution alpha(c.state_count(), 0.0);
    alpha[c.sfa().initial()] = 1.0;
    return alpha;
}

std::vector<StateDistribution> forward(const CompiledSfa& c, std::span<const ProbVector> ps) {
    std::vector<StateDistribution> alphas;
    alphas.reserve(ps.size());
    StateDistribution alpha = initial_distribution(c);
    TransitionMatrix t(c.state_count());
    std::vector<double> scratch(c.max_circuit_size());
    for (const auto& p : ps) {
        check_probs(c, p);
        fill_matrix(c, p, t, scratch);
        check_rows(c, t);
        StateDistribution next(c.state_count(), 0.0);
        for (const auto& e : c.edges())
            next[e.to] += alpha[e.from] * t(e.from, e.to);
        alphas.push_back(next);
        alpha = std::move(next);
    }
    return alphas;
}

double accepting_mass(const CompiledSfa& c, std::span<const double> alpha) {
    if (alpha.size() != c.state_count())
        throw DimensionError("state distribution has the wrong length");
    double total = 0.0;
    for (auto q : c.sfa().accepting())
        total += alpha[q];
    return total;
}

double acceptance(const CompiledSfa& c, std::span<const ProbVector> ps) {
    const std::size_t nq = c.state_count();
    StateDistribution alpha = initial_distribution(c);
    StateDistribution next(nq), row_sums(nq);
    std::vector<double> scratch(c.max_circuit_size());
    for (const auto& p : ps) {
        check_probs(c, p);
        std::fill(next.begin(), next.end(), 0.0);
        std::fill(row_sums.begin(), row_sums.end(), 0.0);
        for (const auto& e : c.edges()) {
            const double w = e.circuit.evaluate(p, scratch);
            row_sums[e.from] += w;
            next[e.to] += alpha[e.from] * w;
        }
        for (std::size_t q = 0; q < nq; ++q)
            check_row_sum(q, row_sums[q]);
        std::swap(alpha, next);
    }
    return accepting_mass(c, alpha);
}

std::vector<std::vector<double>> forward_backward_grad(const CompiledSfa& c, std::span<const ProbVector> ps,
                                                       std::span<const std::vector<double>> upstream) {
    const std::size_t n = ps.size();
    const std::size_t nq = c.state_count();
    if (upstream.size() != n)
        throw DimensionError("upstream gradient count " + std::to_string(upstream.size()) +
                             " does not match sequence length " + std::to_string(n));
    for (const auto& u : upstream)
        if (u.size() != nq)
            throw DimensionError("upstream gradient has the wrong number of states");

    std::vector<StateDistribution> alphas;
    alphas.reserve(n + 1);
    alphas.push_back(initial_distribution(c));
    auto rest = forward(c, ps);
    alphas.insert(alphas.end(), std::make_move_iterator(rest.begin()), std::make_move_iterator(rest.end()));

    std::vector<std::vector<double>> grads(n, std::vector<double>(c.symbol_count(), 0.0));
    std::vector<double> adjoint(nq, 0.0);
    std::vector<double> scratch(2 * c.max_circuit_size());
    std::vector<double> value_scratch(c.max_circuit_size());
    for (std::size_t t = n; t-- > 0;) {
        for (std::size_t q = 0; q < nq; ++q)
            adjoint[q] += upstream[t][q];
        const auto& prev = alphas[t];
        std::vector<double> carried(nq, 0.0);
        for (const auto& e : c.edges()) {
            const double coef = prev[e.from] * adjoint[e.to];
            double entry;
            if (coef != 0.0)
                entry = wmc_accumulate_gradient(e.circuit, ps[t], coef, grads[t], scratch);
            else
                entry = e.circuit.evaluate(ps[t], value_scratch);
            carried[e.from] += entry * adjoint[e.to];
        }
        adjoint = std::move(carried);
    }
    return grads;
}

AcceptanceGradient acceptance_with_gradient(const CompiledSfa& c, std::span<const ProbVector> ps) {
    AcceptanceGradient out;
    out.value = acceptance(c, ps);
    if (ps.empty())
        return out;
    std::vector<std::vector<double>> upstream(ps.size(), std::vector<double>(c.state_count(), 0.0));
    for (auto q : c.sfa().accepting())
        upstream.back()[q] = 1.0;
    out.gradients = forward_backward_grad(c, ps, upstream);
    return out;
}

} // namespace nesya
