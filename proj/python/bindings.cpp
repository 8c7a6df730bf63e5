#include "nesya/bench.hpp"
#include "nesya/compile.hpp"
#include "nesya/dataset_io.hpp"
#include "nesya/learn.hpp"
#include "nesya/logic.hpp"
#include "nesya/sfa.hpp"
#include "nesya/sfa_io.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace nesya;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_rows(const TransitionMatrix& t) {
    Matrix rows(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        rows[i].assign(t.row(i).begin(), t.row(i).end());
    return rows;
}

std::vector<LabeledSequence> to_sequences(const std::vector<DatasetRecord>& records) {
    std::vector<LabeledSequence> out;
    out.reserve(records.size());
    for (const auto& r : records)
        out.push_back(to_labeled_sequence(r));
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Symbolic finite automata with knowledge-compiled, differentiable probabilistic inference";
    m.attr("__version__") = "0.1.0";

    auto error = py::register_exception<Error>(m, "Error");
    py::register_exception<ParseError>(m, "ParseError", error.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
    py::register_exception<ResourceLimitError>(m, "ResourceLimitError", error.ptr());
    py::register_exception<InternalConsistencyError>(m, "InternalConsistencyError", error.ptr());
    py::register_exception<IoError>(m, "IoError", error.ptr());
    py::register_exception<NonDeterministicError>(m, "NonDeterministicError", error.ptr());
    py::register_exception<IncompleteError>(m, "IncompleteError", error.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", error.ptr());
    py::register_exception<UnsatisfiablePatternError>(m, "UnsatisfiablePatternError", error.ptr());

    // logic
    py::class_<Vocabulary>(m, "Vocabulary")
        .def(py::init<std::vector<std::string>>(), py::arg("names"))
        .def("__len__", &Vocabulary::size)
        .def_property_readonly("names", &Vocabulary::names)
        .def("find", &Vocabulary::find, py::arg("name"))
        .def("__repr__", [](const Vocabulary& v) {
            std::string s = "Vocabulary([";
            for (std::size_t i = 0; i < v.size(); ++i)
                s += (i ? ", '" : "'") + v.name(i) + "'";
            return s + "])";
        });

    py::class_<Formula>(m, "Formula")
        .def_property_readonly("is_constant", &Formula::is_constant)
        .def("__eq__", [](const Formula& a, const Formula& b) { return a == b; })
        .def("__invert__", [](const Formula& f) { return !f; })
        .def("__and__", [](const Formula& a, const Formula& b) { return a & b; })
        .def("__or__", [](const Formula& a, const Formula& b) { return a | b; });

    m.def("parse_formula", &parse_formula, py::arg("text"), py::arg("vocabulary"));
    m.def("formula_to_string", py::overload_cast<const Formula&, const Vocabulary&>(&to_string), py::arg("formula"),
          py::arg("vocabulary"));
    m.def(
        "evaluate",
        [](const Formula& f, const std::vector<bool>& omega) {
            Interpretation w(omega.size());
            for (std::size_t i = 0; i < omega.size(); ++i)
                w.set(i, omega[i]);
            return evaluate(f, w);
        },
        py::arg("formula"), py::arg("interpretation"));
    m.def(
        "models",
        [](const Formula& f, std::size_t n) {
            std::vector<std::uint64_t> masks;
            for (const auto& w : enumerate_models(f, n))
                masks.push_back(w.mask());
            return masks;
        },
        py::arg("formula"), py::arg("vocabulary_size"),
        "Models as bit masks (bit i = variable i), in increasing order.");

    // compile
    py::class_<CompiledGuard>(m, "CompiledGuard")
        .def_property_readonly("size", &CompiledGuard::size)
        .def_property_readonly("vocabulary_size", &CompiledGuard::vocabulary_size)
        .def("dump", [](const CompiledGuard& g) {
            std::ostringstream os;
            g.dump(os);
            return os.str();
        });

    m.def(
        "compile_guard",
        [](const Formula& f, std::size_t n, std::optional<std::vector<std::size_t>> order) {
            return order ? compile_guard(f, *order) : compile_guard(f, n);
        },
        py::arg("formula"), py::arg("vocabulary_size"), py::arg("order") = py::none());
    m.def(
        "wmc", [](const CompiledGuard& g, const std::vector<double>& p) { return wmc(g, p).value; }, py::arg("guard"),
        py::arg("p"));
    m.def(
        "wmc_with_gradient",
        [](const CompiledGuard& g, const std::vector<double>& p) {
            auto r = wmc(g, p, true);
            return py::make_tuple(r.value, r.gradient);
        },
        py::arg("guard"), py::arg("p"));
    m.def("model_count", &model_count, py::arg("guard"));
    m.def("is_satisfiable", &is_satisfiable, py::arg("guard"));
    m.def("is_valid", &is_valid, py::arg("guard"));

    // sfa
    py::class_<Sfa>(m, "Sfa")
        .def_property_readonly("vocabulary", &Sfa::vocabulary)
        .def_property_readonly("states", &Sfa::states)
        .def_property_readonly("initial", &Sfa::initial)
        .def_property_readonly("accepting", &Sfa::accepting)
        .def_property_readonly("symbol_count", &Sfa::symbol_count)
        .def_property_readonly("state_count", &Sfa::state_count)
        .def("__str__", &format_sfa);

    m.def("parse_sfa", &parse_sfa, py::arg("text"));
    m.def("load_sfa", &load_sfa, py::arg("path"));

    py::class_<CompiledSfa>(m, "CompiledSfa")
        .def_property_readonly("sfa", &CompiledSfa::sfa)
        .def_property_readonly("state_count", &CompiledSfa::state_count)
        .def_property_readonly("symbol_count", &CompiledSfa::symbol_count)
        .def(
            "accepts",
            [](const CompiledSfa& c, const std::vector<std::vector<bool>>& trace) {
                Trace t;
                for (const auto& step : trace) {
                    Interpretation w(step.size());
                    for (std::size_t i = 0; i < step.size(); ++i)
                        w.set(i, step[i]);
                    t.push_back(std::move(w));
                }
                return c.accepts(t);
            },
            py::arg("trace"));

    m.def(
        "validate_and_compile",
        [](const Sfa& sfa, bool complete) {
            SfaCompileOptions opts;
            opts.complete_with_self_loops = complete;
            return validate_and_compile(sfa, opts);
        },
        py::arg("sfa"), py::arg("complete_with_self_loops") = true);
    m.def(
        "transition_matrix",
        [](const CompiledSfa& c, const std::vector<double>& p) { return to_rows(transition_matrix(c, p)); },
        py::arg("compiled"), py::arg("p"));
    m.def(
        "forward", [](const CompiledSfa& c, const Matrix& ps) { return forward(c, ps); }, py::arg("compiled"),
        py::arg("ps"));
    m.def(
        "acceptance", [](const CompiledSfa& c, const Matrix& ps) { return acceptance(c, ps); }, py::arg("compiled"),
        py::arg("ps"));
    m.def(
        "acceptance_with_gradient",
        [](const CompiledSfa& c, const Matrix& ps) {
            auto r = acceptance_with_gradient(c, ps);
            return py::make_tuple(r.value, r.gradients);
        },
        py::arg("compiled"), py::arg("ps"));

    // learn
    py::class_<LinearExtractor>(m, "LinearExtractor")
        .def(py::init<std::size_t, std::size_t>(), py::arg("symbols"), py::arg("features"))
        .def_static("random", &LinearExtractor::random, py::arg("symbols"), py::arg("features"), py::arg("seed"),
                    py::arg("scale") = 0.1)
        .def_property_readonly("symbol_count", &LinearExtractor::symbol_count)
        .def_property_readonly("feature_count", &LinearExtractor::feature_count)
        .def_property(
            "parameters",
            [](const LinearExtractor& f) {
                auto p = f.parameters();
                return std::vector<double>(p.begin(), p.end());
            },
            [](LinearExtractor& f, const std::vector<double>& values) {
                if (values.size() != f.parameter_count())
                    throw DimensionError("expected " + std::to_string(f.parameter_count()) + " parameters");
                std::copy(values.begin(), values.end(), f.parameters().begin());
            })
        .def(
            "extract", [](const LinearExtractor& f, const std::vector<double>& o) { return f.extract(o); },
            py::arg("observation"));

    py::enum_<Optimizer>(m, "Optimizer").value("SGD", Optimizer::Sgd).value("ADAM", Optimizer::Adam);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("optimizer", &TrainConfig::optimizer)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("max_epochs", &TrainConfig::max_epochs)
        .def_readwrite("patience", &TrainConfig::patience)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<EpochStats>(m, "EpochStats")
        .def_readonly("epoch", &EpochStats::epoch)
        .def_readonly("loss", &EpochStats::loss)
        .def_readonly("metric", &EpochStats::metric);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("extractor", &TrainResult::extractor)
        .def_readonly("trace", &TrainResult::trace)
        .def_readonly("best_epoch", &TrainResult::best_epoch);

    m.def(
        "sequence_loss",
        [](const CompiledSfa& c, const LinearExtractor& f, const Matrix& obs, int label) {
            auto r = sequence_loss(c, f, obs, label);
            return py::make_tuple(r.value, r.gradient);
        },
        py::arg("compiled"), py::arg("extractor"), py::arg("observations"), py::arg("label"));
    m.def(
        "predict_acceptance",
        [](const CompiledSfa& c, const LinearExtractor& f, const Matrix& obs) {
            return predict_acceptance(c, f, obs);
        },
        py::arg("compiled"), py::arg("extractor"), py::arg("observations"));
    m.def(
        "predict_tags",
        [](const CompiledSfa& c, const LinearExtractor& f, const Matrix& obs, const std::vector<int>& labels) {
            return predict_tags(c, f, obs, labels);
        },
        py::arg("compiled"), py::arg("extractor"), py::arg("observations"),
        py::arg("state_to_label") = std::vector<int>{});

    // Training data is passed as dataset records (the JSON-lines schema), which
    // keeps the Python surface free of variant-typed labels.
    py::class_<DatasetRecord>(m, "DatasetRecord")
        .def_readonly("features", &DatasetRecord::features)
        .def_readonly("probs", &DatasetRecord::probs)
        .def_readonly("clean_trace", &DatasetRecord::clean_trace)
        .def_property_readonly("label", [](const DatasetRecord& r) -> py::object {
            if (auto* l = std::get_if<int>(&r.label))
                return py::int_(*l);
            if (auto* ls = std::get_if<std::vector<int>>(&r.label))
                return py::cast(*ls);
            return py::none();
        });

    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def(
        "train",
        [](const CompiledSfa& c, const std::vector<DatasetRecord>& data, const TrainConfig& cfg,
           const std::vector<int>& state_to_label) { return train(c, to_sequences(data), cfg, state_to_label); },
        py::arg("compiled"), py::arg("data"), py::arg("config") = TrainConfig{},
        py::arg("state_to_label") = std::vector<int>{}, py::call_guard<py::gil_scoped_release>());
    m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("extractor"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    // bench
    m.def("driving_sfa", &driving_sfa);
    m.def("random_pattern_sfa", &random_pattern_sfa, py::arg("states"), py::arg("symbols"), py::arg("seed"));
    m.def(
        "benchmark_pattern", [](int id) { return benchmark_pattern(id).sfa; }, py::arg("id"));
    m.def(
        "generate_dataset",
        [](const CompiledSfa& c, std::size_t length, std::size_t n_pos, std::size_t n_neg, double sigma,
           std::uint64_t seed) { return to_records(generate_dataset(c, {length, n_pos, n_neg, sigma, seed})); },
        py::arg("compiled"), py::arg("length") = 10, py::arg("n_pos") = 100, py::arg("n_neg") = 100,
        py::arg("sigma") = 0.3, py::arg("seed") = 0);
    m.def(
        "generate_tagging_dataset",
        [](const CompiledSfa& c, std::size_t length, std::size_t count, double sigma, std::uint64_t seed) {
            return to_records(generate_tagging_dataset(c, length, count, sigma, seed));
        },
        py::arg("compiled"), py::arg("length") = 10, py::arg("count") = 100, py::arg("sigma") = 0.3,
        py::arg("seed") = 0);
    m.def("prototype_extractor", &prototype_extractor, py::arg("symbols"), py::arg("sigma"));
    m.def(
        "enumerative_acceptance", [](const Sfa& s, const Matrix& ps) { return enumerative_acceptance(s, ps); },
        py::arg("sfa"), py::arg("ps"));
    m.def(
        "metrics",
        [](const std::vector<int>& pred, const std::vector<int>& labels, std::size_t num_classes) {
            auto r = metrics(pred, labels, num_classes);
            return py::dict(py::arg("accuracy") = r.accuracy, py::arg("macro_f1") = r.macro_f1);
        },
        py::arg("predictions"), py::arg("labels"), py::arg("num_classes") = 0);
    m.def(
        "run_benchmark",
        [](std::vector<int> patterns, std::vector<std::size_t> lengths, std::vector<std::string> engines,
           std::size_t batch_size, std::size_t reps, std::uint64_t seed) {
            BenchConfig cfg;
            cfg.patterns = std::move(patterns);
            cfg.lengths = std::move(lengths);
            cfg.engines.clear();
            for (const auto& e : engines)
                cfg.engines.push_back(parse_engine(e));
            cfg.batch_size = batch_size;
            cfg.repetitions = reps;
            cfg.seed = seed;
            py::list rows;
            for (const auto& r : run_benchmark(cfg).rows)
                rows.append(py::dict(py::arg("pattern") = r.pattern, py::arg("states") = r.states,
                                     py::arg("symbols") = r.symbols, py::arg("length") = r.length,
                                     py::arg("engine") = to_string(r.engine),
                                     py::arg("batch_ms_median") = r.batch_ms_median,
                                     py::arg("accuracy") = r.accuracy));
            return rows;
        },
        py::arg("patterns") = std::vector<int>{1, 2, 3}, py::arg("lengths") = std::vector<std::size_t>{10, 20, 30},
        py::arg("engines") = std::vector<std::string>{"compiled", "enumerative"}, py::arg("batch_size") = 16,
        py::arg("reps") = 5, py::arg("seed") = 0);
}
