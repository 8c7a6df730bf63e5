#include "nesya/learn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace nesya {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

double sigmoid(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

LinearExtractor::LinearExtractor(std::size_t symbols, std::size_t features)
    : symbols_(symbols), features_(features), params_(symbols * features + symbols, 0.0) {}

LinearExtractor LinearExtractor::random(std::size_t symbols, std::size_t features, std::uint64_t seed,
                                        double scale) {
    LinearExtractor f(symbols, features);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& w : f.params_)
        w = dist(rng);
    return f;
}

void LinearExtractor::check_input(std::span<const double> observation) const {
    if (observation.size() != features_)
        throw DimensionError("observation has " + std::to_string(observation.size()) +
                             " features, extractor expects " + std::to_string(features_));
}

ProbVector LinearExtractor::extract(std::span<const double> observation) const {
    check_input(observation);
    ProbVector p(symbols_);
    const double* w = params_.data();
    const double* b = params_.data() + symbols_ * features_;
    for (std::size_t i = 0; i < symbols_; ++i) {
        double z = b[i];
        for (std::size_t j = 0; j < features_; ++j)
            z += w[i * features_ + j] * observation[j];
        p[i] = sigmoid(z);
    }
    return p;
}

std::vector<std::vector<double>> LinearExtractor::parameter_jacobian(std::span<const double> observation) const {
    auto p = extract(observation);
    std::vector<std::vector<double>> jac(symbols_, std::vector<double>(parameter_count(), 0.0));
    for (std::size_t i = 0; i < symbols_; ++i) {
        const double s = p[i] * (1.0 - p[i]);
        for (std::size_t j = 0; j < features_; ++j)
            jac[i][i * features_ + j] = s * observation[j];
        jac[i][symbols_ * features_ + i] = s;
    }
    return jac;
}

std::vector<std::vector<double>> LinearExtractor::input_jacobian(std::span<const double> observation) const {
    auto p = extract(observation);
    std::vector<std::vector<double>> jac(symbols_, std::vector<double>(features_, 0.0));
    for (std::size_t i = 0; i < symbols_; ++i)
        for (std::size_t j = 0; j < features_; ++j)
            jac[i][j] = p[i] * (1.0 - p[i]) * weight(i, j);
    return jac;
}

void LinearExtractor::accumulate_gradient(std::span<const double> observation, std::span<const double> probs,
                                          std::span<const double> upstream, std::span<double> grad) const {
    check_input(observation);
    for (std::size_t i = 0; i < symbols_; ++i) {
        const double dz = upstream[i] * probs[i] * (1.0 - probs[i]);
        if (dz == 0.0)
            continue;
        for (std::size_t j = 0; j < features_; ++j)
            grad[i * features_ + j] += dz * observation[j];
        grad[symbols_ * features_ + i] += dz;
    }
}

std::vector<ProbVector> extract_all(const LinearExtractor& f, std::span<const FeatureVector> observations) {
    std::vector<ProbVector> ps;
    ps.reserve(observations.size());
    for (const auto& o : observations)
        ps.push_back(f.extract(o));
    return ps;
}

namespace {

void check_symbols(const CompiledSfa& c, const LinearExtractor& f) {
    if (f.symbol_count() != c.symbol_count())
        throw DimensionError("extractor produces " + std::to_string(f.symbol_count()) +
                             " symbols, automaton has " + std::to_string(c.symbol_count()));
}

// -log of the clamped probability, and d/dprob (zero inside the clamp).
std::pair<double, double> neg_log_clamped(double prob) {
    const double clamped = std::clamp(prob, probability_clamp, 1.0 - probability_clamp);
    const double slope = clamped == prob ? -1.0 / prob : 0.0;
    return {-std::log(clamped), slope};
}

LossResult chain_to_parameters(const CompiledSfa& c, const LinearExtractor& f,
                               std::span<const FeatureVector> observations, std::span<const ProbVector> ps,
                               double value, std::span<const std::vector<double>> upstream) {
    LossResult r{value, std::vector<double>(f.parameter_count(), 0.0)};
    auto dps = forward_backward_grad(c, ps, upstream);
    for (std::size_t t = 0; t < observations.size(); ++t)
        f.accumulate_gradient(observations[t], ps[t], dps[t], r.gradient);
    return r;
}

std::vector<int> identity_labels(std::size_t states) {
    std::vector<int> ids(states);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

} // namespace

LossResult sequence_loss(const CompiledSfa& c, const LinearExtractor& f, std::span<const FeatureVector> observations,
                         int label) {
    check_symbols(c, f);
    if (label != 0 && label != 1)
        throw Error("sequence label must be 0 or 1, got " + std::to_string(label));
    auto ps = extract_all(f, observations);
    const double accept = acceptance(c, ps);
    auto [value, slope] = neg_log_clamped(label == 1 ? accept : 1.0 - accept);
    const double dloss_daccept = label == 1 ? slope : -slope;

    std::vector<std::vector<double>> upstream(ps.size(), std::vector<double>(c.state_count(), 0.0));
    if (!ps.empty())
        for (auto q : c.sfa().accepting())
            upstream.back()[q] = dloss_daccept;
    return chain_to_parameters(c, f, observations, ps, value, upstream);
}

LossResult tagging_loss(const CompiledSfa& c, const LinearExtractor& f, std::span<const FeatureVector> observations,
                        std::span<const int> step_labels, std::span<const int> state_to_label) {
    check_symbols(c, f);
    const std::size_t nq = c.state_count();
    if (state_to_label.size() != nq)
        throw DimensionError("state_to_label needs one entry per state");
    if (step_labels.size() != observations.size())
        throw DimensionError("per-step label count does not match the sequence length");
    const int n_labels = *std::max_element(state_to_label.begin(), state_to_label.end()) + 1;
    if (*std::min_element(state_to_label.begin(), state_to_label.end()) < 0)
        throw Error("state labels must be non-negative");
    for (int l : step_labels)
        if (l != unlabeled_step && (l < 0 || l >= n_labels))
            throw Error("step label " + std::to_string(l) + " out of range [0, " + std::to_string(n_labels) + ")");

    auto ps = extract_all(f, observations);
    auto alphas = forward(c, ps);
    double value = 0.0;
    std::vector<std::vector<double>> upstream(ps.size(), std::vector<double>(nq, 0.0));
    for (std::size_t t = 0; t < ps.size(); ++t) {
        if (step_labels[t] == unlabeled_step)
            continue;
        double mass = 0.0;
        for (std::size_t q = 0; q < nq; ++q)
            if (state_to_label[q] == step_labels[t])
                mass += alphas[t][q];
        auto [term, slope] = neg_log_clamped(mass);
        value += term;
        for (std::size_t q = 0; q < nq; ++q)
            if (state_to_label[q] == step_labels[t])
                upstream[t][q] = slope;
    }
    return chain_to_parameters(c, f, observations, ps, value, upstream);
}

LossResult loss(const CompiledSfa& c, const LinearExtractor& f, const LabeledSequence& s,
                std::span<const int> state_to_label) {
    if (!s.is_tagged())
        return sequence_loss(c, f, s.observations, std::get<int>(s.label));
    if (state_to_label.empty()) {
        auto ids = identity_labels(c.state_count());
        return tagging_loss(c, f, s.observations, std::get<std::vector<int>>(s.label), ids);
    }
    return tagging_loss(c, f, s.observations, std::get<std::vector<int>>(s.label), state_to_label);
}

double predict_acceptance(const CompiledSfa& c, const LinearExtractor& f,
                          std::span<const FeatureVector> observations) {
    check_symbols(c, f);
    return acceptance(c, extract_all(f, observations));
}

std::vector<int> predict_tags(const CompiledSfa& c, const LinearExtractor& f,
                              std::span<const FeatureVector> observations, std::span<const int> state_to_label) {
    check_symbols(c, f);
    std::vector<int> ids;
    if (state_to_label.empty()) {
        ids = identity_labels(c.state_count());
        state_to_label = ids;
    }
    if (state_to_label.size() != c.state_count())
        throw DimensionError("state_to_label needs one entry per state");
    const int n_labels = *std::max_element(state_to_label.begin(), state_to_label.end()) + 1;
    std::vector<int> tags;
    for (const auto& alpha : forward(c, extract_all(f, observations))) {
        std::vector<double> mass(static_cast<std::size_t>(n_labels), 0.0);
        for (std::size_t q = 0; q < alpha.size(); ++q)
            mass[static_cast<std::size_t>(state_to_label[q])] += alpha[q];
        tags.push_back(static_cast<int>(std::max_element(mass.begin(), mass.end()) - mass.begin()));
    }
    return tags;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw Error("learning rate must be a finite non-negative number");
    if (batch_size == 0)
        throw Error("batch size must be at least 1");
    if (patience == 0)
        throw Error("patience must be at least 1");
}

namespace {

double training_metric(const CompiledSfa& c, const LinearExtractor& f, std::span<const LabeledSequence> data,
                       std::span<const int> state_to_label) {
    std::size_t correct = 0, total = 0;
    for (const auto& s : data) {
        if (!s.is_tagged()) {
            bool accept = predict_acceptance(c, f, s.observations) >= 0.5;
            correct += accept == (std::get<int>(s.label) == 1);
            ++total;
            continue;
        }
        const auto& labels = std::get<std::vector<int>>(s.label);
        auto tags = predict_tags(c, f, s.observations, state_to_label);
        for (std::size_t t = 0; t < labels.size(); ++t) {
            if (labels[t] == unlabeled_step)
                continue;
            correct += tags[t] == labels[t];
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

class Updater {
public:
    Updater(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void apply(std::span<double> params, std::span<const double> grad) {
        const double lr = cfg_.learning_rate;
        if (cfg_.optimizer == Optimizer::Sgd) {
            for (std::size_t k = 0; k < params.size(); ++k)
                params[k] -= lr * grad[k];
            return;
        }
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        ++step_;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            m_[k] = beta1 * m_[k] + (1.0 - beta1) * grad[k];
            v_[k] = beta2 * v_[k] + (1.0 - beta2) * grad[k] * grad[k];
            params[k] -= lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps);
        }
    }

private:
    const TrainConfig& cfg_;
    std::vector<double> m_, v_;
    std::size_t step_ = 0;
};

} // namespace

TrainResult train(const CompiledSfa& c, std::span<const LabeledSequence> data, const TrainConfig& cfg,
                  std::span<const int> state_to_label, const std::optional<LinearExtractor>& init) {
    cfg.validate();
    if (data.empty())
        throw Error("training data is empty");

    std::size_t features = 0;
    bool found = false;
    for (const auto& s : data)
        for (const auto& o : s.observations) {
            if (!found) {
                features = o.size();
                found = true;
            } else if (o.size() != features) {
                throw DimensionError("observations have inconsistent feature dimensions");
            }
        }
    if (!found && !init)
        throw Error("training data contains no observations");

    LinearExtractor f = init ? *init : LinearExtractor::random(c.symbol_count(), features, cfg.seed);
    check_symbols(c, f);
    if (found && f.feature_count() != features)
        throw DimensionError("initial extractor does not match the feature dimension");

    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    Updater updater(cfg, f.parameter_count());
    std::vector<std::size_t> perm(data.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    TrainResult result{f, {}, 0};
    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::vector<double> grad(f.parameter_count());

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), shuffle_rng);
        double total = 0.0;
        for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(perm.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                auto r = loss(c, f, data[perm[k]], state_to_label);
                if (!std::isfinite(r.value))
                    throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
                total += r.value;
                for (std::size_t j = 0; j < grad.size(); ++j)
                    grad[j] += r.gradient[j];
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto& g : grad)
                g *= scale;
            updater.apply(f.parameters(), grad);
            for (double w : f.parameters())
                if (!std::isfinite(w))
                    throw DivergenceError("non-finite parameter at epoch " + std::to_string(epoch));
        }
        const double mean = total / static_cast<double>(data.size());
        result.trace.push_back({epoch, mean, training_metric(c, f, data, state_to_label)});

        if (mean < best) {
            best = mean;
            result.extractor = f;
            result.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    return result;
}

namespace {

constexpr char checkpoint_magic[8] = {'N', 'E', 'S', 'Y', 'A', 'C', 'K', 'P'};
constexpr std::uint32_t checkpoint_version = 1;

template <typename T>
void put(std::ostream& os, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    char buf[sizeof(T)];
    if (!is.read(buf, sizeof(T)))
        throw IoError("truncated checkpoint");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

} // namespace

void write_checkpoint(std::ostream& os, const LinearExtractor& f) {
    os.write(checkpoint_magic, sizeof(checkpoint_magic));
    put<std::uint32_t>(os, checkpoint_version);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(f.symbol_count()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(f.feature_count()));
    put<std::uint32_t>(os, 0);
    for (double w : f.parameters())
        put<double>(os, w);
    if (!os)
        throw IoError("failed to write checkpoint");
}

LinearExtractor read_checkpoint(std::istream& is) {
    char magic[8];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, checkpoint_magic, sizeof(magic)) != 0)
        throw IoError("not a checkpoint file");
    auto version = get<std::uint32_t>(is);
    if (version != checkpoint_version)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    auto symbols = get<std::uint32_t>(is);
    auto features = get<std::uint32_t>(is);
    get<std::uint32_t>(is);
    LinearExtractor f(symbols, features);
    for (auto& w : f.parameters())
        w = get<double>(is);
    return f;
}

void save_checkpoint(const std::filesystem::path& path, const LinearExtractor& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot write '" + path.string() + "'");
    write_checkpoint(os, f);
}

LinearExtractor load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + path.string() + "'");
    return read_checkpoint(is);
}

void write_loss_csv(std::ostream& os, std::span<const EpochStats> trace) {
    os << "epoch,loss,metric\n";
    auto precision = os.precision(17);
    for (const auto& e : trace)
        os << e.epoch << ',' << e.loss << ',' << e.metric << '\n';
    os.precision(precision);
}

} // namespace nesya
