// One line per acceptance criterion; exit status is the number of failures.

#include "nesya/bench.hpp"
#include "nesya/compile.hpp"
#include "nesya/learn.hpp"
#include "nesya/sfa.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

using namespace nesya;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d %s  %s  (%s; %.2fs)\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

const std::vector<ProbVector> running_ps{{0.8, 0.3, 0.6}, {0.7, 0.9, 0.3}};

Outcome running_example() {
    auto c = validate_and_compile(driving_sfa());
    const double t_expected[3][3] = {{0.14, 0.86, 0}, {0.056, 0.344, 0.6}, {0, 0, 1}};
    auto t = transition_matrix(c, running_ps[0]);
    double t_err = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            t_err = std::max(t_err, std::abs(t(i, j) - t_expected[i][j]));
    const double a_expected[3] = {0.02226, 0.71974, 0.258};
    auto alpha = forward(c, running_ps).back();
    double a_err = 0.0;
    for (std::size_t q = 0; q < 3; ++q)
        a_err = std::max(a_err, std::abs(alpha[q] - a_expected[q]));
    const double p = acceptance(c, running_ps);
    return {t_err <= 1e-12 && a_err <= 1e-4 && std::abs(p - 0.742) <= 1e-3,
            fmt("max|T-T*|=%.1e, max|a2-a2*|=%.1e, P_accept=%.6f", t_err, a_err, p)};
}

Outcome wmc_example() {
    Vocabulary v({"tired", "blocked", "fast"});
    auto g = compile_guard(parse_formula("!fast & (tired | blocked)", v), 3);
    const double w = wmc(g, std::vector<double>{0.8, 0.3, 0.6}).value;
    return {std::abs(w - 0.344) <= 1e-12, fmt("wmc=%.15f", w)};
}

Outcome trace_oracle() {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        auto sfa = oracle::random_sfa(rng, 4, 5);
        auto c = validate_and_compile(sfa);
        auto ps = oracle::random_ps(rng, 1 + rng() % 5, sfa.symbol_count());
        auto alphas = forward(c, ps);
        auto expected = oracle::trace_enumeration_alphas(sfa, ps);
        for (std::size_t t = 0; t < ps.size(); ++t)
            for (std::size_t q = 0; q < sfa.state_count(); ++q)
                worst = std::max(worst, std::abs(alphas[t][q] - expected[t][q]));
    }
    return {worst <= 1e-9, fmt("200 instances, max per-state deviation %.1e", worst)};
}

Outcome engine_equivalence() {
    std::mt19937_64 rng(77);
    double worst = 0.0;
    std::size_t max_vars = 0;
    for (int k = 0; k < 100; ++k) {
        auto sfa = oracle::random_sfa(rng, 8, 6);
        max_vars = std::max(max_vars, sfa.symbol_count());
        auto c = validate_and_compile(sfa);
        auto ps = oracle::random_ps(rng, 1 + rng() % 12, sfa.symbol_count());
        worst = std::max(worst, std::abs(acceptance(c, ps) - enumerative_acceptance(sfa, ps)));
    }
    return {worst <= 1e-9, fmt("100 instances up to |V|=%.0f, max deviation %.1e", static_cast<double>(max_vars), worst)};
}

Outcome gradient_suite() {
    std::mt19937_64 rng(5);
    int configs = 0, bad = 0;
    double worst_rel = 0.0;
    auto check = [&](const std::vector<double>& analytic, const std::vector<double>& numeric) {
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            if (!oracle::gradient_close(analytic[i], numeric[i]))
                ++bad;
            const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
            worst_rel = std::max(worst_rel, std::abs(analytic[i] - numeric[i]) / scale);
        }
    };
    while (configs < 24) {
        auto sfa = oracle::random_sfa(rng, 4, 4);
        auto c = validate_and_compile(sfa);
        const std::size_t d = 2 + rng() % 4, n = 1 + rng() % 5;
        auto f = LinearExtractor::random(sfa.symbol_count(), d, rng(), 0.8);
        std::normal_distribution<double> g(0.0, 1.0);
        std::vector<FeatureVector> obs(n, FeatureVector(d));
        for (auto& o : obs)
            for (auto& x : o)
                x = g(rng);
        std::vector<double> theta(f.parameters().begin(), f.parameters().end());
        auto with = [&](const std::vector<double>& th) {
            LinearExtractor h = f;
            std::copy(th.begin(), th.end(), h.parameters().begin());
            return h;
        };

        const int label = static_cast<int>(rng() % 2);
        auto seq = sequence_loss(c, f, obs, label);
        if (seq.value >= -std::log(probability_clamp) - 1e-6)
            continue;
        check(seq.gradient, oracle::finite_difference(
                                [&](const std::vector<double>& th) { return sequence_loss(c, with(th), obs, label).value; },
                                theta));

        std::vector<int> state_to_label(sfa.state_count());
        for (std::size_t q = 0; q < state_to_label.size(); ++q)
            state_to_label[q] = static_cast<int>(q % 2);
        const int n_labels = sfa.state_count() > 1 ? 2 : 1;
        std::vector<int> steps(n);
        for (auto& s : steps)
            s = rng() % 4 == 0 ? unlabeled_step : static_cast<int>(rng() % static_cast<unsigned>(n_labels));
        auto tag = tagging_loss(c, f, obs, steps, state_to_label);
        if (tag.value > 10.0)
            continue;
        check(tag.gradient,
              oracle::finite_difference(
                  [&](const std::vector<double>& th) { return tagging_loss(c, with(th), obs, steps, state_to_label).value; },
                  theta));
        ++configs;
    }
    return {bad == 0, fmt("%.0f configurations x 2 losses, %.0f mismatches, max rel. error %.1e", configs, bad, worst_rel)};
}

Outcome driving_accuracy() {
    auto c = validate_and_compile(driving_sfa());
    std::ostringstream detail;
    bool pass = true;
    for (std::size_t length : {10u, 20u}) {
        int good = 0;
        detail << "L=" << length << ":";
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            auto train_set = generate_dataset(c, {length, 100, 100, 0.3, seed});
            auto test_set = generate_dataset(c, {length, 100, 100, 0.3, seed + 1000});
            TrainConfig cfg;
            cfg.seed = seed;
            auto r = train(c, train_set.sequences, cfg);
            std::size_t correct = 0;
            for (const auto& s : test_set.sequences)
                correct += (predict_acceptance(c, r.extractor, s.observations) >= 0.5) == (std::get<int>(s.label) == 1);
            const double acc = static_cast<double>(correct) / static_cast<double>(test_set.sequences.size());
            good += acc >= 0.95;
            char buf[16];
            std::snprintf(buf, sizeof buf, " %.3f", acc);
            detail << buf;
        }
        detail << " (" << good << "/5 >= 0.95)";
        if (length == 10)
            detail << "; ";
        pass = pass && good >= 4;
    }
    return {pass, detail.str()};
}

Outcome speed_gap() {
    BenchConfig cfg;
    cfg.patterns = {3};
    cfg.lengths = {30};
    cfg.batch_size = 16;
    cfg.repetitions = 31;
    auto rows = run_benchmark(cfg).rows;
    const auto& compiled = rows.at(0);
    const auto& enumerative = rows.at(1);
    double worst = 0.0;
    for (std::size_t k = 0; k < compiled.outputs.size(); ++k)
        worst = std::max(worst, std::abs(compiled.outputs[k] - enumerative.outputs[k]));
    const double ratio = enumerative.batch_ms_median / compiled.batch_ms_median;
    return {ratio >= 10.0 && worst <= 1e-9 && compiled.states == 6 && compiled.symbols == 5,
            fmt("compiled %.4f ms, enumerative %.4f ms per batch, speedup %.1fx", compiled.batch_ms_median,
                enumerative.batch_ms_median, ratio)};
}

Outcome property_suites() {
    std::mt19937_64 rng(99);
    int violations = 0;
    for (int k = 0; k < 100; ++k) {
        auto sfa = oracle::random_sfa(rng, 6, 6);
        auto c = validate_and_compile(sfa);
        auto ps = oracle::random_ps(rng, 6, sfa.symbol_count());
        auto t = transition_matrix(c, ps[0]);
        for (std::size_t q = 0; q < t.size(); ++q)
            violations += std::abs(t.row_sum(q) - 1.0) > 1e-9;
        for (const auto& a : forward(c, ps)) {
            double s = 0.0;
            for (double x : a)
                s += x;
            violations += std::abs(s - 1.0) > 1e-9;
        }
        // 0/1 inputs reproduce the boolean run
        auto bits = oracle::random_ps(rng, 6, sfa.symbol_count(), 1.0);
        Trace trace;
        for (const auto& p : bits) {
            Interpretation w(p.size());
            for (std::size_t i = 0; i < p.size(); ++i)
                w.set(i, p[i] == 1.0);
            trace.push_back(w);
        }
        violations += acceptance(c, bits) != (c.accepts(trace) ? 1.0 : 0.0);
        // complement identity on every guard
        for (const auto& e : c.edges()) {
            auto neg = compile_guard(!e.guard, sfa.symbol_count());
            violations += std::abs(wmc(e.circuit, ps[1]).value + wmc(neg, ps[1]).value - 1.0) > 1e-12;
        }
    }
    auto c = validate_and_compile(driving_sfa());
    auto data = generate_dataset(c, {8, 20, 20, 0.3, 3}).sequences;
    TrainConfig cfg;
    cfg.max_epochs = 10;
    cfg.seed = 17;
    violations += !(train(c, data, cfg).extractor == train(c, data, cfg).extractor);
    return {violations == 0, fmt("%.0f violations across row-stochasticity, normalization, 0/1 runs, complements, "
                                 "seeded training",
                                 violations)};
}

} // namespace

int main() {
    report(1, "running-example regression", running_example);
    report(2, "WMC regression", wmc_example);
    report(3, "trace-enumeration oracle", trace_oracle);
    report(4, "engine equivalence", engine_equivalence);
    report(5, "gradient suite", gradient_suite);
    report(6, "driving accuracy", driving_accuracy);
    report(7, "compiled vs enumerative speed", speed_gap);
    report(8, "property suites", property_suites);
    std::printf("%d of 8 criteria failed\n", failures);
    return failures;
}
