#pragma once

#include "nesya/bench.hpp"
#include "nesya/learn.hpp"

#include <algorithm>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace nesya {

// One JSON object per line:
//   {"features": [[...], ...], "label": 0 | 1 | [int, ...], "clean_trace": [[bool, ...], ...]}
// `probs` (per-step symbol probabilities) may replace or accompany `features`;
// `label` and `clean_trace` are optional.
struct DatasetRecord {
    std::vector<FeatureVector> features;
    std::vector<ProbVector> probs;
    std::variant<std::monostate, int, std::vector<int>> label;
    std::vector<std::vector<bool>> clean_trace;

    [[nodiscard]] bool has_features() const noexcept { return !features.empty(); }
    [[nodiscard]] bool has_probs() const noexcept { return !probs.empty(); }
    [[nodiscard]] std::size_t length() const noexcept { return std::max(features.size(), probs.size()); }
};

// ParseError::position() is the 1-based line number.
std::vector<DatasetRecord> read_dataset(std::istream& is);
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& os, std::span<const DatasetRecord> records);

std::vector<DatasetRecord> to_records(const SyntheticDataset& ds);
// Throws if a record lacks features or a label.
LabeledSequence to_labeled_sequence(const DatasetRecord& r);

} // namespace nesya
