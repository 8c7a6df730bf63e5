#pragma once

#include "nesya/learn.hpp"
#include "nesya/sfa.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nesya {

// tired/blocked/fast driving automaton: once the driver is tired or the road
// is blocked, the next step must not be fast.
Sfa driving_sfa();

// Random deterministic automaton. Each state's outgoing guards form a
// decision list over random cubes, so they are disjoint and exhaustive by
// construction. Every state is reachable and the accepting set is a proper,
// non-empty subset.
Sfa random_pattern_sfa(std::size_t states, std::size_t symbols, std::uint64_t seed);

struct PatternSpec {
    int id;
    Sfa sfa;
    [[nodiscard]] std::size_t states() const noexcept { return sfa.state_count(); }
    [[nodiscard]] std::size_t symbols() const noexcept { return sfa.symbol_count(); }
};

// 1: driving (3 states, 3 symbols); 2: random (4 states, 4 symbols);
// 3: random (6 states, 5 symbols).
PatternSpec benchmark_pattern(int id);

class UnsatisfiablePatternError : public Error {
public:
    using Error::Error;
};

// Samples traces of a fixed length uniformly among the accepted (or the
// rejected) ones, using per-state counts of accepting/rejecting completions.
class TraceSampler {
public:
    TraceSampler(const CompiledSfa& c, std::size_t length);

    [[nodiscard]] double accepted_count() const { return accepted_[length_][initial_]; }
    [[nodiscard]] double rejected_count() const { return rejected_[length_][initial_]; }
    Trace sample(bool accepted, std::mt19937_64& rng) const;

private:
    std::size_t length_;
    std::size_t symbols_;
    std::size_t initial_;
    std::vector<std::vector<std::size_t>> successor_; // [state][interpretation mask]
    std::vector<std::vector<double>> accepted_;       // [remaining][state]
    std::vector<std::vector<double>> rejected_;
};

inline constexpr std::size_t max_sampling_vars = 20;

struct GenerationParams {
    std::size_t length = 10;
    std::size_t n_pos = 100;
    std::size_t n_neg = 100;
    double sigma = 0.3;
    std::uint64_t seed = 0;
};

struct SyntheticDataset {
    GenerationParams params;
    std::vector<LabeledSequence> sequences;
    std::vector<Trace> clean_traces;
};

// Two features per symbol: (+1, -1) when true, (-1, +1) when false, plus
// independent N(0, sigma^2) noise on every coordinate.
FeatureVector render_interpretation(const Interpretation& omega, double sigma, std::mt19937_64& rng);

// Positives first, then negatives. Throws UnsatisfiablePatternError when a
// requested class has no trace of the given length.
SyntheticDataset generate_dataset(const CompiledSfa& c, const GenerationParams& params);

// Uniformly random traces labelled per step with the state of the boolean run.
SyntheticDataset generate_tagging_dataset(const CompiledSfa& c, std::size_t length, std::size_t count, double sigma,
                                          std::uint64_t seed);

// Linear read-out that returns the exact per-symbol posterior for features
// rendered with noise level sigma.
LinearExtractor prototype_extractor(std::size_t symbols, double sigma);

inline constexpr std::size_t max_enumerative_vars = 12;

// Acceptance by propositionalization: each transition is expanded into its
// explicit model set and every model's probability is summed directly.
double enumerative_acceptance(const Sfa& sfa, std::span<const ProbVector> ps);

enum class Engine { Compiled, Enumerative };
std::string to_string(Engine e);
Engine parse_engine(std::string_view name);

struct BenchConfig {
    std::vector<int> patterns{1, 2, 3};
    std::vector<std::size_t> lengths{10, 20, 30};
    std::vector<Engine> engines{Engine::Compiled, Engine::Enumerative};
    std::size_t batch_size = 16;
    std::size_t repetitions = 5;
    std::uint64_t seed = 0;
    double sigma = 0.3;
};

struct BenchRow {
    int pattern;
    std::size_t states;
    std::size_t symbols;
    std::size_t length;
    Engine engine;
    double batch_ms_median;
    double accuracy;
    std::uint64_t seed;
    std::vector<double> outputs; // per-sequence acceptance probabilities
};

struct BenchReport {
    std::vector<BenchRow> rows;
};

BenchReport run_benchmark(const BenchConfig& cfg);
void write_bench_csv(std::ostream& os, const BenchReport& report);

struct Metrics {
    double accuracy;
    double macro_f1;
};

// With num_classes = 0 the classes are those occurring in either input;
// otherwise classes 0..num_classes-1, where absent classes score F1 = 0.
Metrics metrics(std::span<const int> predictions, std::span<const int> labels, std::size_t num_classes = 0);

} // namespace nesya
