#include "nesya/cli.hpp"

#include "nesya/bench.hpp"
#include "nesya/dataset_io.hpp"
#include "nesya/learn.hpp"
#include "nesya/sfa_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace nesya::cli {

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

struct Options {
    std::string sfa_path;
    std::string dataset_path;
    std::string out_path;
    std::string checkpoint;
    std::string config_path;
    std::string mode = "accept";
    bool strict = false;
    std::vector<int> state_labels;

    TrainConfig train;
    std::string optimizer = "adam";

    int pattern = 1;
    std::size_t random_states = 0;
    std::size_t random_symbols = 0;
    std::uint64_t pattern_seed = 0;
    std::size_t length = 10;
    std::size_t n_pos = 100;
    std::size_t n_neg = 100;
    std::size_t count = 100;
    double sigma = 0.3;
    std::uint64_t seed = 0;
    bool tagging = false;
    std::string emit_sfa;

    std::vector<int> patterns{1, 2, 3};
    std::vector<std::size_t> lengths{10, 20, 30};
    std::vector<std::string> engines{"compiled", "enumerative"};
    std::size_t batch_size = 16;
    std::size_t repetitions = 5;
};

std::string_view trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Flat `key = value` overlay. Keys are long flag names (underscores accepted
// for hyphens); flags given on the command line win.
void apply_config(CLI::App& sub, const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        std::string_view body = trim(std::string_view(line).substr(0, hash));
        if (body.empty())
            continue;
        auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key = value", line_no);
        std::string key(trim(body.substr(0, eq)));
        std::string value(trim(body.substr(eq + 1)));
        std::replace(key.begin(), key.end(), '_', '-');
        CLI::Option* opt = key == "config" ? nullptr : sub.get_option_no_throw("--" + key);
        if (opt == nullptr)
            throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (opt->count() == 0) {
            opt->add_result(value);
            opt->run_callback();
        }
    }
}

CompiledSfa compile_from_file(const Options& o) {
    SfaCompileOptions opts;
    opts.complete_with_self_loops = !o.strict;
    return validate_and_compile(load_sfa(o.sfa_path), opts);
}

void check_state_labels(const Options& o, const CompiledSfa& c) {
    if (!o.state_labels.empty() && o.state_labels.size() != c.state_count())
        throw UsageError("--state-labels needs one label per state (" + std::to_string(c.state_count()) + ")");
}

template <typename Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn&& fn) {
    if (path.empty()) {
        fn(fallback);
        return;
    }
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot write '" + path + "'");
    fn(os);
}

int cmd_validate(const Options& o, std::ostream& out) {
    Sfa sfa = load_sfa(o.sfa_path);
    SfaCompileOptions opts;
    opts.complete_with_self_loops = !o.strict;
    try {
        auto c = validate_and_compile(sfa, opts);
        out << "valid (" << sfa.state_count() << " states, " << sfa.symbol_count() << " symbols, "
            << c.edges().size() << " transitions)\n";
        for (const auto& e : c.edges())
            if (e.completed)
                out << "note: self-loop on " << sfa.states()[e.from] << " completed to "
                    << to_string(e.guard, sfa.vocabulary()) << '\n';
        return exit_ok;
    } catch (const NonDeterministicError& e) {
        out << "invalid: " << e.what() << '\n';
        out << "witness: " << to_string(e.witness(), sfa.vocabulary()) << '\n';
    } catch (const IncompleteError& e) {
        out << "invalid: " << e.what() << '\n';
        out << "witness: " << to_string(e.witness(), sfa.vocabulary()) << '\n';
    }
    return exit_domain_error;
}

int cmd_compile(const Options& o, std::ostream& out) {
    auto c = compile_from_file(o);
    const auto& sfa = c.sfa();
    for (const auto& e : c.edges()) {
        out << "# " << sfa.states()[e.from] << " -> " << sfa.states()[e.to] << " : "
            << to_string(e.guard, sfa.vocabulary()) << '\n';
        e.circuit.dump(out);
    }
    return exit_ok;
}

int cmd_infer(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.mode != "accept" && o.mode != "tag")
        throw UsageError("--mode must be 'accept' or 'tag'");
    auto c = compile_from_file(o);
    check_state_labels(o, c);
    auto records = load_dataset(o.dataset_path);
    std::optional<LinearExtractor> extractor;
    if (!o.checkpoint.empty()) {
        extractor = load_checkpoint(o.checkpoint);
        if (extractor->symbol_count() != c.symbol_count())
            throw DimensionError("checkpoint has " + std::to_string(extractor->symbol_count()) +
                                 " symbols, automaton has " + std::to_string(c.symbol_count()));
    }

    const auto& states = c.sfa().states();
    out << std::setprecision(10);
    if (o.mode == "accept") {
        out << "sequence,p_accept,label\n";
    } else {
        out << "sequence,step";
        for (const auto& s : states)
            out << ',' << s;
        out << ",label\n";
    }

    std::vector<int> predictions, labels;
    for (std::size_t k = 0; k < records.size(); ++k) {
        const auto& r = records[k];
        std::vector<ProbVector> ps;
        if (r.has_probs()) {
            ps = r.probs;
        } else if (r.has_features()) {
            if (!extractor)
                throw UsageError("sequence " + std::to_string(k) + " has features but no --checkpoint was given");
            ps = extract_all(*extractor, r.features);
        }

        if (o.mode == "accept") {
            const double p = acceptance(c, ps);
            out << k << ',' << p << ',';
            if (auto* l = std::get_if<int>(&r.label)) {
                out << *l;
                predictions.push_back(p >= 0.5 ? 1 : 0);
                labels.push_back(*l);
            }
            out << '\n';
            continue;
        }

        auto alphas = forward(c, ps);
        const auto* step_labels = std::get_if<std::vector<int>>(&r.label);
        for (std::size_t t = 0; t < alphas.size(); ++t) {
            out << k << ',' << t + 1;
            for (double a : alphas[t])
                out << ',' << a;
            out << ',';
            if (step_labels) {
                int gold = (*step_labels)[t];
                out << gold;
                if (gold != unlabeled_step) {
                    std::map<int, double> mass;
                    for (std::size_t q = 0; q < alphas[t].size(); ++q)
                        mass[o.state_labels.empty() ? static_cast<int>(q) : o.state_labels[q]] += alphas[t][q];
                    auto best = std::max_element(mass.begin(), mass.end(),
                                                 [](const auto& a, const auto& b) { return a.second < b.second; });
                    predictions.push_back(best->first);
                    labels.push_back(gold);
                }
            }
            out << '\n';
        }
    }
    if (!labels.empty()) {
        auto m = metrics(predictions, labels);
        err << "accuracy " << m.accuracy << " macro_f1 " << m.macro_f1 << " over " << labels.size()
            << (o.mode == "accept" ? " sequences\n" : " steps\n");
    }
    return exit_ok;
}

int cmd_train(Options o, std::ostream& out, std::ostream& err) {
    if (o.optimizer == "adam")
        o.train.optimizer = Optimizer::Adam;
    else if (o.optimizer == "sgd")
        o.train.optimizer = Optimizer::Sgd;
    else
        throw UsageError("--optimizer must be 'adam' or 'sgd'");
    o.train.validate();

    auto c = compile_from_file(o);
    check_state_labels(o, c);
    std::vector<LabeledSequence> data;
    for (const auto& r : load_dataset(o.dataset_path))
        data.push_back(to_labeled_sequence(r));
    auto result = train(c, data, o.train, o.state_labels);
    save_checkpoint(o.out_path, result.extractor);
    write_loss_csv(out, result.trace);
    err << "trained " << result.trace.size() << " epochs, best epoch " << result.best_epoch << " (loss "
        << result.trace[result.best_epoch - 1].loss << "), checkpoint written to " << o.out_path << '\n';
    return exit_ok;
}

int cmd_generate(const Options& o, std::ostream& out) {
    Sfa sfa = [&] {
        if (!o.sfa_path.empty())
            return load_sfa(o.sfa_path);
        if (o.random_states > 0 || o.random_symbols > 0) {
            if (o.random_states == 0 || o.random_symbols == 0)
                throw UsageError("--random-states and --random-symbols go together");
            return random_pattern_sfa(o.random_states, o.random_symbols, o.pattern_seed);
        }
        return benchmark_pattern(o.pattern).sfa;
    }();
    auto c = validate_and_compile(sfa);
    if (!o.emit_sfa.empty())
        with_output(o.emit_sfa, out, [&](std::ostream& os) { os << format_sfa(sfa); });

    SyntheticDataset ds = o.tagging ? generate_tagging_dataset(c, o.length, o.count, o.sigma, o.seed)
                                    : generate_dataset(c, {o.length, o.n_pos, o.n_neg, o.sigma, o.seed});
    auto records = to_records(ds);
    with_output(o.out_path, out, [&](std::ostream& os) { write_dataset(os, records); });
    return exit_ok;
}

int cmd_bench(const Options& o, std::ostream& out) {
    BenchConfig cfg;
    cfg.patterns = o.patterns;
    cfg.lengths = o.lengths;
    cfg.engines.clear();
    for (const auto& e : o.engines)
        cfg.engines.push_back(parse_engine(e));
    cfg.batch_size = o.batch_size;
    cfg.repetitions = o.repetitions;
    cfg.seed = o.seed;
    cfg.sigma = o.sigma;
    auto report = run_benchmark(cfg);
    with_output(o.out_path, out, [&](std::ostream& os) { write_bench_csv(os, report); });
    return exit_ok;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Symbolic automata with probabilistic, differentiable inference", "nesya"};
    app.require_subcommand(1);

    auto add_sfa = [&](CLI::App* sub) {
        sub->add_option("sfa", o.sfa_path, "automaton spec file")->required();
    };
    auto add_strict = [&](CLI::App* sub) {
        sub->add_flag("--strict", o.strict, "reject states whose guards are not exhaustive instead of "
                                            "completing them with a self-loop");
    };
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "flat key=value file with defaults for the flags");
    };

    auto* validate = app.add_subcommand("validate", "check determinism and completeness of an automaton");
    add_sfa(validate);
    add_strict(validate);

    auto* compile = app.add_subcommand("compile", "dump the compiled circuit of every transition");
    add_sfa(compile);
    add_strict(compile);

    auto* infer = app.add_subcommand("infer", "acceptance probabilities or per-step state distributions as CSV");
    add_sfa(infer);
    infer->add_option("dataset", o.dataset_path, "JSON-lines dataset")->required();
    infer->add_option("--mode", o.mode, "accept | tag")->check(CLI::IsMember({"accept", "tag"}));
    infer->add_option("--checkpoint", o.checkpoint, "extractor checkpoint for feature inputs");
    infer->add_option("--state-labels", o.state_labels, "label per state for tag-mode scoring")->delimiter(',');
    add_strict(infer);

    auto* train_cmd = app.add_subcommand("train", "fit the symbol extractor; prints the loss trace as CSV");
    add_sfa(train_cmd);
    train_cmd->add_option("dataset", o.dataset_path, "JSON-lines dataset with features and labels")->required();
    train_cmd->add_option("--out", o.out_path, "checkpoint path")->required();
    train_cmd->add_option("--lr,--learning-rate", o.train.learning_rate, "learning rate")->capture_default_str();
    train_cmd->add_option("--optimizer", o.optimizer, "adam | sgd")->capture_default_str();
    train_cmd->add_option("--batch-size", o.train.batch_size, "sequences per update")->capture_default_str();
    train_cmd->add_option("--epochs", o.train.max_epochs, "maximum epochs")->capture_default_str();
    train_cmd->add_option("--patience", o.train.patience, "early-stop patience in epochs")->capture_default_str();
    train_cmd->add_option("--seed", o.train.seed, "initialization and shuffling seed")->capture_default_str();
    train_cmd->add_option("--state-labels", o.state_labels, "label per state for per-step supervision")
        ->delimiter(',');
    add_strict(train_cmd);
    add_config(train_cmd);

    auto* generate = app.add_subcommand("generate", "synthetic noisy-feature sequences as JSON lines");
    generate->add_option("--sfa", o.sfa_path, "automaton spec file (overrides --pattern)");
    generate->add_option("--pattern", o.pattern, "built-in pattern 1, 2 or 3")->capture_default_str();
    generate->add_option("--random-states", o.random_states, "states of a random pattern");
    generate->add_option("--random-symbols", o.random_symbols, "symbols of a random pattern");
    generate->add_option("--pattern-seed", o.pattern_seed, "seed of the random pattern")->capture_default_str();
    generate->add_option("--length", o.length, "sequence length")->capture_default_str();
    generate->add_option("--pos", o.n_pos, "accepted sequences")->capture_default_str();
    generate->add_option("--neg", o.n_neg, "rejected sequences")->capture_default_str();
    generate->add_option("--sigma", o.sigma, "feature noise standard deviation")->capture_default_str();
    generate->add_option("--seed", o.seed, "sampling seed")->capture_default_str();
    generate->add_flag("--tagging", o.tagging, "uniform random traces with per-step state labels");
    generate->add_option("--count", o.count, "sequences in tagging mode")->capture_default_str();
    generate->add_option("--out", o.out_path, "output file (default stdout)");
    generate->add_option("--emit-sfa", o.emit_sfa, "also write the automaton spec to this file");
    add_config(generate);

    auto* bench = app.add_subcommand("bench", "time compiled vs enumerative inference per batch");
    bench->add_option("--patterns", o.patterns, "built-in patterns")->delimiter(',');
    bench->add_option("--lengths", o.lengths, "sequence lengths")->delimiter(',');
    bench->add_option("--engines", o.engines, "compiled,enumerative")
        ->delimiter(',')
        ->check(CLI::IsMember({"compiled", "enumerative"}));
    bench->add_option("--batch-size", o.batch_size, "sequences per batch")->capture_default_str();
    bench->add_option("--reps", o.repetitions, "timed repetitions (median reported)")->capture_default_str();
    bench->add_option("--sigma", o.sigma, "feature noise standard deviation")->capture_default_str();
    bench->add_option("--seed", o.seed, "data seed")->capture_default_str();
    bench->add_option("--out", o.out_path, "output file (default stdout)");
    add_config(bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? exit_ok : exit_usage_error;
    }

    try {
        for (auto* sub : app.get_subcommands())
            if (!o.config_path.empty() && sub->get_option_no_throw("--config"))
                apply_config(*sub, o.config_path);

        if (validate->parsed())
            return cmd_validate(o, out);
        if (compile->parsed())
            return cmd_compile(o, out);
        if (infer->parsed())
            return cmd_infer(o, out, err);
        if (train_cmd->parsed())
            return cmd_train(o, out, err);
        if (generate->parsed())
            return cmd_generate(o, out);
        if (bench->parsed())
            return cmd_bench(o, out);
    } catch (const CLI::Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage_error;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage_error;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage_error;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage_error;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_domain_error;
    }
    return exit_usage_error;
}

} // namespace nesya::cli
