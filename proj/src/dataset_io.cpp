#include "nesya/dataset_io.hpp"

#include <json.hpp>

#include <fstream>
#include <istream>
#include <ostream>

namespace nesya {

using json = nlohmann::json;

namespace {

template <typename T>
std::vector<std::vector<T>> matrix_field(const json& obj, const char* key) {
    std::vector<std::vector<T>> rows;
    if (!obj.contains(key))
        return rows;
    for (const auto& row : obj.at(key))
        rows.push_back(row.get<std::vector<T>>());
    return rows;
}

DatasetRecord parse_record(const json& obj) {
    if (!obj.is_object())
        throw Error("expected a JSON object");
    DatasetRecord r;
    r.features = matrix_field<double>(obj, "features");
    r.probs = matrix_field<double>(obj, "probs");
    r.clean_trace = matrix_field<bool>(obj, "clean_trace");
    if (obj.contains("label")) {
        const auto& l = obj.at("label");
        if (l.is_array())
            r.label = l.get<std::vector<int>>();
        else if (l.is_number_integer())
            r.label = l.get<int>();
        else
            throw Error("label must be an integer or an array of integers");
    }
    if (!r.features.empty() && !r.probs.empty() && r.features.size() != r.probs.size())
        throw Error("features and probs differ in length");
    if (auto* steps = std::get_if<std::vector<int>>(&r.label); steps && steps->size() != r.length())
        throw Error("per-step label count does not match the sequence length");
    for (const auto& row : r.probs)
        for (double p : row)
            if (!(p >= 0.0 && p <= 1.0))
                throw Error("probabilities must lie in [0, 1]");
    return r;
}

} // namespace

std::vector<DatasetRecord> read_dataset(std::istream& is) {
    std::vector<DatasetRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            records.push_back(parse_record(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
        } catch (const Error& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
        }
    }
    return records;
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    return read_dataset(in);
}

void write_dataset(std::ostream& os, std::span<const DatasetRecord> records) {
    for (const auto& r : records) {
        json obj = json::object();
        if (r.has_features())
            obj["features"] = r.features;
        if (r.has_probs())
            obj["probs"] = r.probs;
        if (auto* l = std::get_if<int>(&r.label))
            obj["label"] = *l;
        else if (auto* ls = std::get_if<std::vector<int>>(&r.label))
            obj["label"] = *ls;
        if (!r.clean_trace.empty())
            obj["clean_trace"] = r.clean_trace;
        os << obj.dump() << '\n';
    }
}

std::vector<DatasetRecord> to_records(const SyntheticDataset& ds) {
    std::vector<DatasetRecord> out;
    out.reserve(ds.sequences.size());
    for (std::size_t k = 0; k < ds.sequences.size(); ++k) {
        const auto& s = ds.sequences[k];
        DatasetRecord r;
        r.features = s.observations;
        if (s.is_tagged())
            r.label = std::get<std::vector<int>>(s.label);
        else
            r.label = std::get<int>(s.label);
        if (k < ds.clean_traces.size())
            for (const auto& omega : ds.clean_traces[k]) {
                std::vector<bool> bits(omega.size());
                for (std::size_t i = 0; i < omega.size(); ++i)
                    bits[i] = omega.test(i);
                r.clean_trace.push_back(std::move(bits));
            }
        out.push_back(std::move(r));
    }
    return out;
}

LabeledSequence to_labeled_sequence(const DatasetRecord& r) {
    if (!r.has_features() && r.length() > 0)
        throw Error("record has no features");
    LabeledSequence s;
    s.observations = r.features;
    if (auto* l = std::get_if<int>(&r.label))
        s.label = *l;
    else if (auto* ls = std::get_if<std::vector<int>>(&r.label))
        s.label = *ls;
    else
        throw Error("record has no label");
    return s;
}

} // namespace nesya
