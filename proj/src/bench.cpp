#include "nesya/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <set>

namespace nesya {

Sfa driving_sfa() {
    Vocabulary v({"tired", "blocked", "fast"});
    auto g = [&](std::string_view text) { return parse_formula(text, v); };
    std::vector<Transition> ts{
        {0, 0, g("!tired & !blocked")},
        {0, 1, g("tired | blocked")},
        {1, 1, g("!fast & (tired | blocked)")},
        {1, 0, g("!tired & !blocked & !fast")},
        {1, 2, g("fast")},
        {2, 2, g("true")},
    };
    return Sfa(std::move(v), {"q0", "q1", "q2"}, 0, {0, 1}, std::move(ts));
}

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<bool> reachable_states(const CompiledSfa& c) {
    std::vector<bool> seen(c.state_count(), false);
    std::vector<std::size_t> stack{c.sfa().initial()};
    seen[c.sfa().initial()] = true;
    while (!stack.empty()) {
        auto q = stack.back();
        stack.pop_back();
        for (const auto& e : c.outgoing(q))
            if (!seen[e.to] && is_satisfiable(e.circuit)) {
                seen[e.to] = true;
                stack.push_back(e.to);
            }
    }
    return seen;
}

} // namespace

Sfa random_pattern_sfa(std::size_t states, std::size_t symbols, std::uint64_t seed) {
    if (states < 2 || symbols < 1)
        throw Error("random patterns need at least 2 states and 1 symbol");
    std::mt19937_64 rng(seed);
    std::vector<std::string> names;
    for (std::size_t q = 0; q < states; ++q)
        names.push_back("q" + std::to_string(q));
    std::vector<std::string> vars;
    for (std::size_t i = 0; i < symbols; ++i)
        vars.push_back("x" + std::to_string(i));
    Vocabulary vocab(vars);

    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<Transition> ts;
        for (std::size_t q = 0; q < states; ++q) {
            const std::size_t branches = 2 + uniform_index(rng, std::min<std::size_t>(states, 3) - 1);
            std::vector<std::size_t> targets(states);
            for (std::size_t k = 0; k < states; ++k)
                targets[k] = k;
            std::shuffle(targets.begin(), targets.end(), rng);

            std::vector<Formula> cubes;
            for (std::size_t b = 0; b + 1 < branches; ++b) {
                const std::size_t width = 1 + uniform_index(rng, std::min<std::size_t>(symbols, 2));
                std::vector<std::size_t> pool(symbols);
                for (std::size_t i = 0; i < symbols; ++i)
                    pool[i] = i;
                std::shuffle(pool.begin(), pool.end(), rng);
                std::vector<Formula> lits;
                for (std::size_t w = 0; w < width; ++w) {
                    Formula x = Formula::var(pool[w]);
                    lits.push_back(rng() & 1U ? x : !x);
                }
                cubes.push_back(Formula::conjunction(std::move(lits)));
            }
            for (std::size_t b = 0; b < branches; ++b) {
                std::vector<Formula> parts;
                if (b < cubes.size())
                    parts.push_back(cubes[b]);
                for (std::size_t prev = 0; prev < b && prev < cubes.size(); ++prev)
                    parts.push_back(!cubes[prev]);
                ts.push_back({q, targets[b], Formula::conjunction(std::move(parts))});
            }
        }
        std::vector<std::size_t> order(states);
        for (std::size_t k = 0; k < states; ++k)
            order[k] = k;
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t n_accept = 1 + uniform_index(rng, states - 1);
        std::vector<std::size_t> accepting(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_accept));

        Sfa sfa(vocab, names, 0, accepting, ts);
        auto reach = reachable_states(validate_and_compile(sfa));
        if (std::all_of(reach.begin(), reach.end(), [](bool b) { return b; }))
            return sfa;
    }
    throw Error("could not generate a connected random pattern");
}

PatternSpec benchmark_pattern(int id) {
    switch (id) {
    case 1:
        return {1, driving_sfa()};
    case 2:
        return {2, random_pattern_sfa(4, 4, 2)};
    case 3:
        return {3, random_pattern_sfa(6, 5, 3)};
    default:
        throw Error("unknown benchmark pattern " + std::to_string(id) + " (expected 1, 2 or 3)");
    }
}

// ---------------------------------------------------------------------------
// Sampling

TraceSampler::TraceSampler(const CompiledSfa& c, std::size_t length)
    : length_(length), symbols_(c.symbol_count()), initial_(c.sfa().initial()) {
    if (symbols_ > max_sampling_vars)
        throw ResourceLimitError("trace sampling supports at most " + std::to_string(max_sampling_vars) +
                                 " symbols");
    const std::size_t nq = c.state_count();
    const std::size_t n_omega = std::size_t{1} << symbols_;
    successor_.assign(nq, std::vector<std::size_t>(n_omega));
    for (std::size_t q = 0; q < nq; ++q)
        for (std::size_t m = 0; m < n_omega; ++m)
            successor_[q][m] = c.step(q, Interpretation::from_mask(symbols_, m));

    accepted_.assign(length + 1, std::vector<double>(nq, 0.0));
    rejected_.assign(length + 1, std::vector<double>(nq, 0.0));
    for (std::size_t q = 0; q < nq; ++q) {
        accepted_[0][q] = c.sfa().is_accepting(q) ? 1.0 : 0.0;
        rejected_[0][q] = 1.0 - accepted_[0][q];
    }
    for (std::size_t r = 1; r <= length; ++r)
        for (std::size_t q = 0; q < nq; ++q)
            for (std::size_t m = 0; m < n_omega; ++m) {
                accepted_[r][q] += accepted_[r - 1][successor_[q][m]];
                rejected_[r][q] += rejected_[r - 1][successor_[q][m]];
            }
}

Trace TraceSampler::sample(bool accepted, std::mt19937_64& rng) const {
    const auto& counts = accepted ? accepted_ : rejected_;
    if (counts[length_][initial_] == 0.0)
        throw UnsatisfiablePatternError(std::string("no ") + (accepted ? "accepted" : "rejected") +
                                        " trace of length " + std::to_string(length_));
    Trace trace;
    trace.reserve(length_);
    std::size_t q = initial_;
    for (std::size_t r = length_; r > 0; --r) {
        const auto& next = counts[r - 1];
        double target = uniform01(rng) * counts[r][q];
        std::size_t chosen = successor_[q].size();
        for (std::size_t m = 0; m < successor_[q].size(); ++m) {
            double w = next[successor_[q][m]];
            if (w == 0.0)
                continue;
            chosen = m;
            if (target < w)
                break;
            target -= w;
        }
        trace.push_back(Interpretation::from_mask(symbols_, chosen));
        q = successor_[q][chosen];
    }
    return trace;
}

FeatureVector render_interpretation(const Interpretation& omega, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, sigma);
    FeatureVector o(2 * omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i) {
        const double s = omega.test(i) ? 1.0 : -1.0;
        o[2 * i] = s + (sigma > 0.0 ? noise(rng) : 0.0);
        o[2 * i + 1] = -s + (sigma > 0.0 ? noise(rng) : 0.0);
    }
    return o;
}

SyntheticDataset generate_dataset(const CompiledSfa& c, const GenerationParams& params) {
    if (params.sigma < 0.0)
        throw Error("noise level must be non-negative");
    TraceSampler sampler(c, params.length);
    if (params.n_pos > 0 && sampler.accepted_count() == 0.0)
        throw UnsatisfiablePatternError("no accepted trace of length " + std::to_string(params.length));
    if (params.n_neg > 0 && sampler.rejected_count() == 0.0)
        throw UnsatisfiablePatternError("no rejected trace of length " + std::to_string(params.length));

    std::mt19937_64 rng(params.seed);
    SyntheticDataset ds{params, {}, {}};
    for (std::size_t k = 0; k < params.n_pos + params.n_neg; ++k) {
        const bool positive = k < params.n_pos;
        Trace trace = sampler.sample(positive, rng);
        LabeledSequence s;
        for (const auto& omega : trace)
            s.observations.push_back(render_interpretation(omega, params.sigma, rng));
        s.label = positive ? 1 : 0;
        ds.sequences.push_back(std::move(s));
        ds.clean_traces.push_back(std::move(trace));
    }
    return ds;
}

SyntheticDataset generate_tagging_dataset(const CompiledSfa& c, std::size_t length, std::size_t count, double sigma,
                                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SyntheticDataset ds{{length, 0, 0, sigma, seed}, {}, {}};
    const std::size_t v = c.symbol_count();
    for (std::size_t k = 0; k < count; ++k) {
        Trace trace;
        LabeledSequence s;
        std::vector<int> labels;
        std::size_t q = c.sfa().initial();
        for (std::size_t t = 0; t < length; ++t) {
            Interpretation omega(v);
            for (std::size_t i = 0; i < v; ++i)
                omega.set(i, (rng() & 1U) != 0);
            q = c.step(q, omega);
            labels.push_back(static_cast<int>(q));
            s.observations.push_back(render_interpretation(omega, sigma, rng));
            trace.push_back(std::move(omega));
        }
        s.label = std::move(labels);
        ds.sequences.push_back(std::move(s));
        ds.clean_traces.push_back(std::move(trace));
    }
    return ds;
}

LinearExtractor prototype_extractor(std::size_t symbols, double sigma) {
    const double s = std::max(sigma, 1e-3);
    const double gain = 2.0 / (s * s);
    LinearExtractor f(symbols, 2 * symbols);
    for (std::size_t i = 0; i < symbols; ++i) {
        f.weight(i, 2 * i) = gain;
        f.weight(i, 2 * i + 1) = -gain;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Enumerative engine

double enumerative_acceptance(const Sfa& sfa, std::span<const ProbVector> ps) {
    const std::size_t v = sfa.symbol_count();
    if (v > max_enumerative_vars)
        throw ResourceLimitError("enumerative inference supports at most " + std::to_string(max_enumerative_vars) +
                                 " symbols");
    const std::size_t nq = sfa.state_count();
    const std::uint32_t n_omega = std::uint32_t{1} << v;

    struct ExpandedEdge {
        std::size_t from, to;
        std::vector<std::uint32_t> models;
    };
    std::vector<ExpandedEdge> edges;
    for (std::size_t q = 0; q < nq; ++q) {
        std::vector<bool> covered(n_omega, false);
        std::size_t self_edge = static_cast<std::size_t>(-1);
        for (const auto& t : sfa.transitions()) {
            if (t.from != q)
                continue;
            ExpandedEdge e{q, t.to, {}};
            for (std::uint32_t m = 0; m < n_omega; ++m) {
                if (!evaluate(t.guard, Interpretation::from_mask(v, m)))
                    continue;
                if (covered[m])
                    throw Error("enumerative engine: overlapping guards out of state '" + sfa.states()[q] + "'");
                covered[m] = true;
                e.models.push_back(m);
            }
            if (t.to == q)
                self_edge = edges.size();
            edges.push_back(std::move(e));
        }
        // Uncovered interpretations keep the automaton in place.
        for (std::uint32_t m = 0; m < n_omega; ++m) {
            if (covered[m])
                continue;
            if (self_edge == static_cast<std::size_t>(-1)) {
                self_edge = edges.size();
                edges.push_back({q, q, {}});
            }
            edges[self_edge].models.push_back(m);
        }
    }

    std::vector<double> alpha(nq, 0.0), next(nq);
    alpha[sfa.initial()] = 1.0;
    for (const auto& p : ps) {
        if (p.size() != v)
            throw DimensionError("probability vector has the wrong length");
        std::fill(next.begin(), next.end(), 0.0);
        for (const auto& e : edges) {
            double prob = 0.0;
            for (auto m : e.models) {
                double w = 1.0;
                for (std::size_t i = 0; i < v; ++i)
                    w *= ((m >> i) & 1U) ? p[i] : 1.0 - p[i];
                prob += w;
            }
            next[e.to] += alpha[e.from] * prob;
        }
        std::swap(alpha, next);
    }
    double total = 0.0;
    for (auto q : sfa.accepting())
        total += alpha[q];
    return total;
}

// ---------------------------------------------------------------------------
// Benchmark

std::string to_string(Engine e) { return e == Engine::Compiled ? "compiled" : "enumerative"; }

Engine parse_engine(std::string_view name) {
    if (name == "compiled")
        return Engine::Compiled;
    if (name == "enumerative")
        return Engine::Enumerative;
    throw Error("unknown engine '" + std::string(name) + "'");
}

BenchReport run_benchmark(const BenchConfig& cfg) {
    if (cfg.batch_size == 0 || cfg.repetitions == 0)
        throw Error("batch size and repetitions must be positive");
    BenchReport report;
    for (int id : cfg.patterns) {
        auto pattern = benchmark_pattern(id);
        auto compiled = validate_and_compile(pattern.sfa);
        auto extractor = prototype_extractor(pattern.symbols(), cfg.sigma);
        for (auto length : cfg.lengths) {
            GenerationParams gp{length, (cfg.batch_size + 1) / 2, cfg.batch_size / 2, cfg.sigma, cfg.seed};
            auto ds = generate_dataset(compiled, gp);
            std::vector<std::vector<ProbVector>> batch;
            for (const auto& s : ds.sequences)
                batch.push_back(extract_all(extractor, s.observations));

            for (auto engine : cfg.engines) {
                std::vector<double> outputs(batch.size());
                std::vector<double> times;
                for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
                    auto start = std::chrono::steady_clock::now();
                    for (std::size_t k = 0; k < batch.size(); ++k)
                        outputs[k] = engine == Engine::Compiled ? acceptance(compiled, batch[k])
                                                                : enumerative_acceptance(pattern.sfa, batch[k]);
                    auto stop = std::chrono::steady_clock::now();
                    times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
                }
                std::sort(times.begin(), times.end());
                const std::size_t mid = times.size() / 2;
                const double median = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);

                std::size_t correct = 0;
                for (std::size_t k = 0; k < batch.size(); ++k)
                    correct += (outputs[k] >= 0.5) == (std::get<int>(ds.sequences[k].label) == 1);
                report.rows.push_back({id, pattern.states(), pattern.symbols(), length, engine, median,
                                       static_cast<double>(correct) / static_cast<double>(batch.size()), cfg.seed,
                                       std::move(outputs)});
            }
        }
    }
    return report;
}

void write_bench_csv(std::ostream& os, const BenchReport& report) {
    os << "pattern,states,symbols,length,engine,batch_ms_median,accuracy,seed\n";
    for (const auto& r : report.rows)
        os << r.pattern << ',' << r.states << ',' << r.symbols << ',' << r.length << ',' << to_string(r.engine)
           << ',' << r.batch_ms_median << ',' << r.accuracy << ',' << r.seed << '\n';
}

// ---------------------------------------------------------------------------
// Metrics

Metrics metrics(std::span<const int> predictions, std::span<const int> labels, std::size_t num_classes) {
    if (predictions.size() != labels.size())
        throw DimensionError("predictions and labels differ in length");
    if (labels.empty())
        throw Error("metrics of an empty input");

    std::set<int> classes;
    if (num_classes == 0) {
        classes.insert(predictions.begin(), predictions.end());
        classes.insert(labels.begin(), labels.end());
    } else {
        for (std::size_t k = 0; k < num_classes; ++k)
            classes.insert(static_cast<int>(k));
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        correct += predictions[i] == labels[i];

    double f1_sum = 0.0;
    for (int k : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const bool pred = predictions[i] == k, gold = labels[i] == k;
            tp += pred && gold;
            fp += pred && !gold;
            fn += !pred && gold;
        }
        if (tp > 0)
            f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    }
    return {static_cast<double>(correct) / static_cast<double>(labels.size()),
            f1_sum / static_cast<double>(classes.size())};
}

} // namespace nesya
