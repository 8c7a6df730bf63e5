#pragma once

#include "nesya/sfa.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace nesya {

using FeatureVector = std::vector<double>;

// Independent logistic unit per symbol: p[i] = sigmoid(W[i] . o + b[i]).
// Parameters are stored flat as [W row-major (symbols x features), b].
class LinearExtractor {
public:
    LinearExtractor(std::size_t symbols, std::size_t features);

    // Weights and biases uniform in [-scale, scale].
    static LinearExtractor random(std::size_t symbols, std::size_t features, std::uint64_t seed,
                                  double scale = 0.1);

    [[nodiscard]] std::size_t symbol_count() const noexcept { return symbols_; }
    [[nodiscard]] std::size_t feature_count() const noexcept { return features_; }
    [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }
    [[nodiscard]] std::span<double> parameters() noexcept { return params_; }
    [[nodiscard]] std::span<const double> parameters() const noexcept { return params_; }

    double& weight(std::size_t symbol, std::size_t feature) { return params_.at(symbol * features_ + feature); }
    [[nodiscard]] double weight(std::size_t symbol, std::size_t feature) const {
        return params_.at(symbol * features_ + feature);
    }
    double& bias(std::size_t symbol) { return params_.at(symbols_ * features_ + symbol); }
    [[nodiscard]] double bias(std::size_t symbol) const { return params_.at(symbols_ * features_ + symbol); }

    [[nodiscard]] ProbVector extract(std::span<const double> observation) const;

    // d p[i] / d theta[k], one row per symbol.
    [[nodiscard]] std::vector<std::vector<double>> parameter_jacobian(std::span<const double> observation) const;
    // d p[i] / d o[j], one row per symbol.
    [[nodiscard]] std::vector<std::vector<double>> input_jacobian(std::span<const double> observation) const;

    // grad += (d p / d theta)^T upstream, given probs = extract(observation).
    void accumulate_gradient(std::span<const double> observation, std::span<const double> probs,
                             std::span<const double> upstream, std::span<double> grad) const;

    friend bool operator==(const LinearExtractor&, const LinearExtractor&) = default;

private:
    void check_input(std::span<const double> observation) const;

    std::size_t symbols_;
    std::size_t features_;
    std::vector<double> params_;
};

double sigmoid(double x);

// One observation sequence with either a sequence label (0 reject / 1 accept)
// or one label per step; a step label of -1 leaves that step unsupervised.
struct LabeledSequence {
    std::vector<FeatureVector> observations;
    std::variant<int, std::vector<int>> label = 0;

    [[nodiscard]] bool is_tagged() const noexcept { return std::holds_alternative<std::vector<int>>(label); }
};

inline constexpr double probability_clamp = 1e-7;
inline constexpr int unlabeled_step = -1;

struct LossResult {
    double value = 0.0;
    std::vector<double> gradient; // d loss / d extractor parameters
};

// Binary cross entropy of the acceptance probability.
LossResult sequence_loss(const CompiledSfa& c, const LinearExtractor& f, std::span<const FeatureVector> observations,
                         int label);

// Sum over steps of -log(mass of the states mapped to the step's label).
LossResult tagging_loss(const CompiledSfa& c, const LinearExtractor& f, std::span<const FeatureVector> observations,
                        std::span<const int> step_labels, std::span<const int> state_to_label);

// Dispatches on the label kind; an empty state_to_label means identity.
LossResult loss(const CompiledSfa& c, const LinearExtractor& f, const LabeledSequence& s,
                std::span<const int> state_to_label = {});

std::vector<ProbVector> extract_all(const LinearExtractor& f, std::span<const FeatureVector> observations);
double predict_acceptance(const CompiledSfa& c, const LinearExtractor& f, std::span<const FeatureVector> observations);
// Most probable label per step.
std::vector<int> predict_tags(const CompiledSfa& c, const LinearExtractor& f,
                              std::span<const FeatureVector> observations, std::span<const int> state_to_label = {});

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
    double learning_rate = 0.01;
    Optimizer optimizer = Optimizer::Adam;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch;
    double loss;   // mean training loss over the epoch
    double metric; // training accuracy (per sequence or per step) after the epoch
};

struct TrainResult {
    LinearExtractor extractor;
    std::vector<EpochStats> trace;
    std::size_t best_epoch = 0;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

// Mini-batch gradient descent on the extractor. Deterministic for a fixed
// config; stops after `patience` epochs without a lower training loss and
// returns the parameters from the best epoch.
TrainResult train(const CompiledSfa& c, std::span<const LabeledSequence> data, const TrainConfig& cfg,
                  std::span<const int> state_to_label = {}, const std::optional<LinearExtractor>& init = {});

// Checkpoint layout (little-endian):
//   0  char[8]  "NESYACKP"
//   8  u32      format version (1)
//   12 u32      symbols
//   16 u32      features
//   20 u32      reserved (0)
//   24 f64[symbols * features] weights, row-major
//   .. f64[symbols]            biases
void write_checkpoint(std::ostream& os, const LinearExtractor& f);
LinearExtractor read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const LinearExtractor& f);
LinearExtractor load_checkpoint(const std::filesystem::path& path);

// `epoch,loss,metric` rows with a header.
void write_loss_csv(std::ostream& os, std::span<const EpochStats> trace);

} // namespace nesya
