#include "fedpsi/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "fedpsi/errors.hpp"
#include "fedpsi/rng.hpp"

namespace fedpsi {

void Dataset::validate() const {
    if (num_classes < 1) throw SpecError("dataset: num_classes must be >= 1");
    if (dims < 1) throw SpecError("dataset: dims must be >= 1");
    if (labels.size() * dims != features.size())
        throw SpecError("dataset: features size does not match N x dims");
    if (size() < static_cast<std::size_t>(num_classes))
        throw SpecError("dataset: fewer examples than classes");
    std::vector<bool> seen(num_classes, false);
    for (const int y : labels) {
        if (y < 0 || y >= num_classes)
            throw SpecError("dataset: label " + std::to_string(y) + " out of range");
        seen[y] = true;
    }
    for (int c = 0; c < num_classes; ++c) {
        if (!seen[c]) throw SpecError("dataset: class " + std::to_string(c) + " has no examples");
    }
    for (const double v : features) {
        if (!std::isfinite(v)) throw SpecError("dataset: non-finite feature value");
    }
}

namespace {

// Class mean layout; minimum pairwise distance equals `separation`.
std::vector<double> class_mean(int c, int num_classes, int dims, double separation) {
    std::vector<double> mean(dims, 0.0);
    if (dims == 1) {
        mean[0] = separation * c;
        return mean;
    }
    const double radius = separation / (2.0 * std::sin(std::numbers::pi / num_classes));
    const double angle = 2.0 * std::numbers::pi * c / num_classes;
    mean[0] = radius * std::cos(angle);
    mean[1] = radius * std::sin(angle);
    return mean;
}

} // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) throw SpecError("synthetic: num_classes must be >= 2");
    if (spec.examples_per_class < 1) throw SpecError("synthetic: examples_per_class must be >= 1");
    if (spec.dims < 1) throw SpecError("synthetic: dims must be >= 1");
    if (spec.class_separation < 0.0) throw SpecError("synthetic: class_separation must be >= 0");
    if (spec.noise_sigma < 0.0) throw SpecError("synthetic: noise_sigma must be >= 0");

    Dataset out;
    out.dims = static_cast<std::size_t>(spec.dims);
    out.num_classes = spec.num_classes;
    const std::size_t n = static_cast<std::size_t>(spec.num_classes) *
                          static_cast<std::size_t>(spec.examples_per_class);
    out.features.reserve(n * out.dims);
    out.labels.reserve(n);

    Rng rng(derive_seed(spec.seed, "synthetic"));
    for (int c = 0; c < spec.num_classes; ++c) {
        const std::vector<double> mean = class_mean(c, spec.num_classes, spec.dims,
                                                    spec.class_separation);
        for (int e = 0; e < spec.examples_per_class; ++e) {
            for (int d = 0; d < spec.dims; ++d) {
                out.features.push_back(mean[d] + spec.noise_sigma * rng.normal());
            }
            out.labels.push_back(c);
        }
    }
    return out;
}

namespace {

// Splits one CSV record, handling quoted fields with embedded commas and
// doubled quotes. Strips a trailing '\r'.
std::vector<std::string> split_csv_record(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch != '\r' || i + 1 != line.size()) {
            field.push_back(ch);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

double parse_feature(const std::string& text, std::size_t row, const std::string& column) {
    if (text.empty()) {
        throw IngestError("csv: blank feature cell at row " + std::to_string(row) +
                          ", column '" + column + "'");
    }
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw IngestError("csv: non-numeric feature '" + text + "' at row " +
                          std::to_string(row) + ", column '" + column + "'");
    }
    return value;
}

} // namespace

Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw IngestError("csv: cannot open file '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw IngestError("csv: empty file '" + path + "'");
    const std::vector<std::string> header = split_csv_record(line);

    std::size_t label_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == label_column) label_col = i;
    }
    if (label_col == header.size())
        throw IngestError("csv: label column '" + label_column + "' not found in '" + path + "'");

    Dataset out;
    out.dims = header.size() - 1;
    if (out.dims == 0) throw IngestError("csv: no feature columns in '" + path + "'");

    std::unordered_map<std::string, int> label_ids;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> fields = split_csv_record(line);
        if (fields.size() != header.size()) {
            throw IngestError("csv: row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header.size()));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i == label_col) continue;
            out.features.push_back(parse_feature(fields[i], row, header[i]));
        }
        const std::string& label_text = fields[label_col];
        if (label_text.empty())
            throw IngestError("csv: blank label at row " + std::to_string(row) +
                              ", column '" + label_column + "'");
        const auto [it, inserted] =
            label_ids.emplace(label_text, static_cast<int>(label_ids.size()));
        out.labels.push_back(it->second);
        (void)inserted;
    }
    if (out.labels.empty()) throw IngestError("csv: no data rows in '" + path + "'");
    out.num_classes = static_cast<int>(label_ids.size());
    out.validate();
    return out;
}

void write_csv(const Dataset& data, const std::string& path, const std::string& label_column) {
    std::ofstream out(path);
    if (!out) throw IngestError("csv: cannot write file '" + path + "'");
    for (std::size_t d = 0; d < data.dims; ++d) out << "f" << d << ",";
    out << label_column << "\n";
    char buf[40];
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = data.row(i);
        for (const double v : r) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf << ",";
        }
        out << data.labels[i] << "\n";
    }
    if (!out) throw IngestError("csv: write failed for '" + path + "'");
}

LabelHistogram label_histogram(std::span<const int> labels, int num_classes) {
    if (num_classes < 1) throw RangeError("label_histogram: num_classes must be >= 1");
    LabelHistogram counts(num_classes, 0);
    for (const int y : labels) {
        if (y < 0 || y >= num_classes)
            throw RangeError("label_histogram: label " + std::to_string(y) +
                             " outside [0, " + std::to_string(num_classes) + ")");
        ++counts[y];
    }
    return counts;
}

} // namespace fedpsi
