#include "nesya/bench.hpp"
#include "nesya/learn.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <sstream>

using namespace nesya;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// Extractor that maps one-hot observation t to the t-th probability vector.
LinearExtractor lookup_extractor(const std::vector<ProbVector>& ps) {
    LinearExtractor f(ps[0].size(), ps.size());
    for (std::size_t t = 0; t < ps.size(); ++t)
        for (std::size_t i = 0; i < ps[t].size(); ++i)
            f.weight(i, t) = logit(ps[t][i]);
    return f;
}

std::vector<FeatureVector> one_hots(std::size_t n) {
    std::vector<FeatureVector> obs(n, FeatureVector(n, 0.0));
    for (std::size_t t = 0; t < n; ++t)
        obs[t][t] = 1.0;
    return obs;
}

std::vector<FeatureVector> random_observations(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<FeatureVector> obs(n, FeatureVector(d));
    for (auto& o : obs)
        for (auto& x : o)
            x = g(rng);
    return obs;
}

LinearExtractor with_parameters(LinearExtractor f, const std::vector<double>& theta) {
    std::copy(theta.begin(), theta.end(), f.parameters().begin());
    return f;
}

std::vector<double> params_of(const LinearExtractor& f) { return {f.parameters().begin(), f.parameters().end()}; }

std::vector<LabeledSequence> sequences(const SyntheticDataset& ds) { return ds.sequences; }

} // namespace

TEST_CASE("sigmoid is stable") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(-800.0) == doctest::Approx(0.0));
    CHECK(std::isfinite(sigmoid(-800.0)));
    CHECK(sigmoid(2.0) + sigmoid(-2.0) == doctest::Approx(1.0));
}

TEST_CASE("extractor jacobians match finite differences") {
    std::mt19937_64 rng(1);
    auto f = LinearExtractor::random(3, 4, 7, 1.0);
    auto o = random_observations(rng, 1, 4)[0];
    auto jp = f.parameter_jacobian(o);
    auto ji = f.input_jacobian(o);
    for (std::size_t i = 0; i < 3; ++i) {
        auto fd_p = oracle::finite_difference(
            [&](const std::vector<double>& th) { return with_parameters(f, th).extract(o)[i]; }, params_of(f));
        for (std::size_t k = 0; k < fd_p.size(); ++k)
            CHECK(oracle::gradient_close(jp[i][k], fd_p[k]));
        auto fd_o = oracle::finite_difference([&](const std::vector<double>& x) { return f.extract(x)[i]; }, o);
        for (std::size_t j = 0; j < fd_o.size(); ++j)
            CHECK(oracle::gradient_close(ji[i][j], fd_o[j]));
    }
    CHECK_THROWS_AS((void)f.extract(std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("random initialization is seeded and bounded") {
    auto a = LinearExtractor::random(3, 6, 42);
    auto b = LinearExtractor::random(3, 6, 42);
    auto c = LinearExtractor::random(3, 6, 43);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    for (double x : a.parameters())
        CHECK(std::abs(x) <= 0.1);
}

TEST_CASE("running example binary cross entropy") {
    auto c = validate_and_compile(driving_sfa());
    const std::vector<ProbVector> ps{{0.8, 0.3, 0.6}, {0.7, 0.9, 0.3}};
    auto f = lookup_extractor(ps);
    auto obs = one_hots(2);
    CHECK(predict_acceptance(c, f, obs) == doctest::Approx(0.742).epsilon(1e-12));
    CHECK(sequence_loss(c, f, obs, 1).value == doctest::Approx(-std::log(0.742)).epsilon(1e-12));
    CHECK(std::abs(sequence_loss(c, f, obs, 1).value - 0.2985) <= 1e-4);
    CHECK(sequence_loss(c, f, obs, 0).value == doctest::Approx(-std::log(0.258)).epsilon(1e-12));
    CHECK_THROWS_AS(sequence_loss(c, f, obs, 2), Error);
}

TEST_CASE("loss is clamped for certain predictions") {
    Vocabulary v({"a"});
    Sfa all(v, {"s"}, 0, {0}, {{0, 0, Formula::constant(true)}});
    auto c = validate_and_compile(all);
    LinearExtractor f(1, 1);
    std::vector<FeatureVector> obs{{0.3}, {1.2}};
    auto pos = sequence_loss(c, f, obs, 1);
    CHECK(pos.value <= 1e-6);
    for (double g : pos.gradient)
        CHECK(g == 0.0);
    CHECK(sequence_loss(c, f, obs, 0).value == doctest::Approx(-std::log(probability_clamp)));
}

TEST_CASE("end-to-end gradients of both losses match finite differences") {
    std::mt19937_64 rng(2);
    int configurations = 0;
    for (int k = 0; k < 30; ++k) {
        auto sfa = oracle::random_sfa(rng, 4, 4);
        auto c = validate_and_compile(sfa);
        const std::size_t d = 2 + rng() % 4;
        const std::size_t n = 1 + rng() % 5;
        auto f = LinearExtractor::random(sfa.symbol_count(), d, rng(), 0.8);
        auto obs = random_observations(rng, n, d);
        const int label = static_cast<int>(rng() % 2);

        auto r = sequence_loss(c, f, obs, label);
        auto fd = oracle::finite_difference(
            [&](const std::vector<double>& th) { return sequence_loss(c, with_parameters(f, th), obs, label).value; },
            params_of(f));
        for (std::size_t i = 0; i < fd.size(); ++i)
            CHECK(oracle::gradient_close(r.gradient[i], fd[i]));

        // Tagging with a random state labelling and some unlabeled steps.
        const int n_labels = 1 + static_cast<int>(rng() % sfa.state_count());
        std::vector<int> state_to_label(sfa.state_count());
        for (std::size_t q = 0; q < state_to_label.size(); ++q)
            state_to_label[q] = static_cast<int>(q) % n_labels;
        std::shuffle(state_to_label.begin(), state_to_label.end(), rng);
        std::vector<int> steps(n);
        for (auto& s : steps)
            s = rng() % 4 == 0 ? unlabeled_step : static_cast<int>(rng() % static_cast<unsigned>(n_labels));
        auto tr = tagging_loss(c, f, obs, steps, state_to_label);
        if (!std::isfinite(tr.value) || tr.value > 10.0)
            continue; // a label the automaton can barely reach; clamp territory
        auto tfd = oracle::finite_difference(
            [&](const std::vector<double>& th) {
                return tagging_loss(c, with_parameters(f, th), obs, steps, state_to_label).value;
            },
            params_of(f));
        for (std::size_t i = 0; i < tfd.size(); ++i)
            CHECK(oracle::gradient_close(tr.gradient[i], tfd[i]));
        ++configurations;
    }
    CHECK(configurations >= 20);
}

TEST_CASE("tagging with an accepting indicator equals sequence loss") {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 50; ++k) {
        auto sfa = oracle::random_sfa(rng, 4, 4);
        auto c = validate_and_compile(sfa);
        const std::size_t n = 1 + rng() % 5;
        auto f = LinearExtractor::random(sfa.symbol_count(), 3, rng(), 0.5);
        auto obs = random_observations(rng, n, 3);
        if (sfa.accepting().empty() || sfa.accepting().size() == sfa.state_count())
            continue;
        std::vector<int> indicator(sfa.state_count());
        for (std::size_t q = 0; q < indicator.size(); ++q)
            indicator[q] = sfa.is_accepting(q) ? 1 : 0;
        for (int label : {0, 1}) {
            std::vector<int> steps(n, unlabeled_step);
            steps.back() = label;
            auto a = tagging_loss(c, f, obs, steps, indicator);
            auto b = sequence_loss(c, f, obs, label);
            if (b.value >= -std::log(probability_clamp) - 1e-9)
                continue; // clamped
            CHECK(std::abs(a.value - b.value) <= 1e-12);
            for (std::size_t i = 0; i < a.gradient.size(); ++i)
                CHECK(std::abs(a.gradient[i] - b.gradient[i]) <= 1e-9);
        }
    }
}

TEST_CASE("tagging label validation") {
    auto c = validate_and_compile(driving_sfa());
    LinearExtractor f(3, 2);
    std::vector<FeatureVector> obs{{0.0, 1.0}, {1.0, 0.0}};
    std::vector<int> identity{0, 1, 2};
    CHECK_NOTHROW(tagging_loss(c, f, obs, std::vector<int>{0, 1}, identity));
    CHECK_THROWS_AS(tagging_loss(c, f, obs, std::vector<int>{0}, identity), DimensionError);
    CHECK_THROWS_AS(tagging_loss(c, f, obs, std::vector<int>{0, 3}, identity), Error);
    CHECK_THROWS_AS(tagging_loss(c, f, obs, std::vector<int>{0, 1}, std::vector<int>{0, 1}), DimensionError);
}

TEST_CASE("training improves and is deterministic under a seed") {
    auto c = validate_and_compile(driving_sfa());
    auto data = sequences(generate_dataset(c, {10, 30, 30, 0.3, 5}));
    TrainConfig cfg;
    cfg.max_epochs = 25;
    cfg.seed = 9;
    auto a = train(c, data, cfg);
    auto b = train(c, data, cfg);
    CHECK(a.extractor == b.extractor);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i)
        CHECK(a.trace[i].loss == b.trace[i].loss);
    CHECK(a.trace.back().loss < a.trace.front().loss);
    CHECK(a.best_epoch >= 1);
    CHECK(a.best_epoch <= a.trace.size());

    cfg.seed = 10;
    auto other = train(c, data, cfg);
    CHECK_FALSE(other.extractor == a.extractor);
}

TEST_CASE("sgd and early stopping") {
    auto c = validate_and_compile(driving_sfa());
    auto data = sequences(generate_dataset(c, {6, 1, 1, 0.3, 6}));
    TrainConfig cfg;
    cfg.optimizer = Optimizer::Sgd;
    cfg.learning_rate = 0.0; // no progress: stops after `patience` stale epochs
    cfg.patience = 3;
    cfg.max_epochs = 50;
    auto r = train(c, data, cfg);
    CHECK(r.trace.size() == 4);
    CHECK(r.best_epoch == 1);
    CHECK(r.extractor == LinearExtractor::random(3, 6, cfg.seed));
}

TEST_CASE("tag prediction on the training distribution") {
    auto c = validate_and_compile(driving_sfa());
    auto ds = generate_tagging_dataset(c, 8, 60, 0.3, 7);
    TrainConfig cfg;
    cfg.max_epochs = 40;
    auto r = train(c, ds.sequences, cfg);
    std::size_t correct = 0, total = 0;
    for (const auto& s : ds.sequences) {
        auto tags = predict_tags(c, r.extractor, s.observations);
        const auto& gold = std::get<std::vector<int>>(s.label);
        for (std::size_t t = 0; t < gold.size(); ++t, ++total)
            correct += tags[t] == gold[t];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(total) > 0.9);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.learning_rate = std::nan("");
    CHECK_THROWS_AS(cfg.validate(), Error);
    auto c = validate_and_compile(driving_sfa());
    CHECK_THROWS_AS(train(c, {}, TrainConfig{}), Error);
}

TEST_CASE("checkpoint round trip") {
    auto f = LinearExtractor::random(3, 5, 11, 2.0);
    std::stringstream ss;
    write_checkpoint(ss, f);
    auto g = read_checkpoint(ss);
    CHECK(f == g);

    std::stringstream bad("NOTACKPT........");
    CHECK_THROWS_AS(read_checkpoint(bad), IoError);
    std::string bytes;
    {
        std::stringstream s2;
        write_checkpoint(s2, f);
        bytes = s2.str();
    }
    std::stringstream truncated(bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(read_checkpoint(truncated), IoError);
}

TEST_CASE("loss csv") {
    std::vector<EpochStats> trace{{1, 0.5, 0.75}, {2, 0.25, 1.0}};
    std::ostringstream os;
    write_loss_csv(os, trace);
    CHECK(os.str().rfind("epoch,loss,metric\n1,0.5,0.75\n2,0.25,1\n", 0) == 0);
}
