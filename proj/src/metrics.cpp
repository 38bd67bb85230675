// SPDX-License-Identifier: Apache-2.0
#include "symgrade/metrics.hpp"

#include "symgrade/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace symgrade {

std::uint64_t ConfusionMatrix::total() const noexcept {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
    std::uint64_t t = 0;
    for (std::size_t c = 0; c < k_; ++c) t += counts_[c * k_ + c];
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < k_; ++p) s += at(truth, p);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < k_; ++t) s += at(t, pred);
    return s;
}

ConfusionMatrix confusion_matrix(std::span<const GradeLabel> preds, std::span<const GradeLabel> truths,
                                 std::size_t k) {
    if (preds.size() != truths.size()) {
        throw ContractError("confusion_matrix: " + std::to_string(preds.size()) + " predictions for " +
                            std::to_string(truths.size()) + " labels");
    }
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto t = static_cast<std::size_t>(truths[i].value());
        const auto p = static_cast<std::size_t>(preds[i].value());
        if (t >= k || p >= k) throw ContractError("confusion_matrix: grade outside 0..k-1");
        ++cm.at(t, p);
    }
    return cm;
}

MetricsReport prf_report(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw ContractError("prf_report: confusion matrix is empty");
    const std::size_t k = cm.k();
    MetricsReport r;
    r.samples = total;
    r.confusion = cm;
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    r.precision.resize(k);
    r.recall.resize(k);
    r.f1.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        const double tp = static_cast<double>(cm.at(c, c));
        const double col = static_cast<double>(cm.col_sum(c));
        const double row = static_cast<double>(cm.row_sum(c));
        bool degenerate = false;
        r.precision[c] = col > 0 ? tp / col : (degenerate = true, 0.0);
        r.recall[c] = row > 0 ? tp / row : (degenerate = true, 0.0);
        const double pr = r.precision[c] + r.recall[c];
        r.f1[c] = pr > 0 ? 2.0 * r.precision[c] * r.recall[c] / pr : (degenerate = true, 0.0);
        if (degenerate) r.degenerate_classes.push_back(static_cast<int>(c));
    }
    const auto mean = [k](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(k);
    };
    r.macro_precision = mean(r.precision);
    r.macro_recall = mean(r.recall);
    r.macro_f1 = mean(r.f1);
    // Single-label multiclass: micro P = micro R = accuracy.
    r.micro_precision = r.accuracy;
    r.micro_recall = r.accuracy;
    r.micro_f1 = r.accuracy;
    return r;
}

double flip_consistency_rate(const ModelParams& params, const Batch& batch) {
    if (batch.size() == 0) throw ContractError("flip_consistency_rate: empty batch");
    const auto original = predict(params, batch.images);
    const auto flipped = predict(params, flip_horizontal(batch).images);
    std::size_t same = 0;
    for (std::size_t i = 0; i < original.size(); ++i) same += original[i] == flipped[i] ? 1 : 0;
    return static_cast<double>(same) / static_cast<double>(original.size());
}

MetricsReport evaluate(const ModelParams& params, const Batch& batch, std::size_t chunk) {
    if (batch.size() == 0) throw ContractError("evaluate: empty batch");
    const auto& shape = batch.images.shape();
    const std::size_t per = shape[1] * shape[2] * shape[3];
    std::vector<GradeLabel> preds, flipped_preds;
    for (std::size_t start = 0; start < batch.size(); start += chunk) {
        const std::size_t n = std::min(chunk, batch.size() - start);
        const auto src = batch.images.data().subspan(start * per, n * per);
        Batch part;
        part.images = Tensor({n, shape[1], shape[2], shape[3]}, std::vector<double>(src.begin(), src.end()));
        part.labels.assign(batch.labels.begin() + static_cast<std::ptrdiff_t>(start),
                           batch.labels.begin() + static_cast<std::ptrdiff_t>(start + n));
        for (auto g : predict(params, part.images)) preds.push_back(g);
        for (auto g : predict(params, flip_horizontal(part).images)) flipped_preds.push_back(g);
    }
    MetricsReport r = prf_report(confusion_matrix(preds, batch.labels));
    std::size_t same = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) same += preds[i] == flipped_preds[i] ? 1 : 0;
    r.flip_consistency_rate = static_cast<double>(same) / static_cast<double>(preds.size());
    return r;
}

// --- serialization ---

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["samples"] = r.samples;
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["macro"] = {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"f1", r.macro_f1}};
    j["micro"] = {{"precision", r.micro_precision}, {"recall", r.micro_recall}, {"f1", r.micro_f1}};
    j["degenerate_classes"] = r.degenerate_classes;
    j["flip_consistency_rate"] = r.flip_consistency_rate;
    auto rows = nlohmann::json::array();
    for (std::size_t t = 0; t < r.confusion.k(); ++t) {
        auto row = nlohmann::json::array();
        for (std::size_t p = 0; p < r.confusion.k(); ++p) row.push_back(r.confusion.at(t, p));
        rows.push_back(row);
    }
    j["confusion"] = rows;
    return j;
}

MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.samples = j.at("samples").get<std::size_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<std::vector<double>>();
    r.recall = j.at("recall").get<std::vector<double>>();
    r.f1 = j.at("f1").get<std::vector<double>>();
    r.macro_precision = j.at("macro").at("precision").get<double>();
    r.macro_recall = j.at("macro").at("recall").get<double>();
    r.macro_f1 = j.at("macro").at("f1").get<double>();
    r.micro_precision = j.at("micro").at("precision").get<double>();
    r.micro_recall = j.at("micro").at("recall").get<double>();
    r.micro_f1 = j.at("micro").at("f1").get<double>();
    r.degenerate_classes = j.at("degenerate_classes").get<std::vector<int>>();
    r.flip_consistency_rate = j.at("flip_consistency_rate").get<double>();
    const auto& rows = j.at("confusion");
    r.confusion = ConfusionMatrix(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != rows.size()) throw FormatError("confusion matrix is not square");
        for (std::size_t p = 0; p < rows.size(); ++p) r.confusion.at(t, p) = rows[t][p].get<std::uint64_t>();
    }
    return r;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("bad number '" + s + "'");
    return v;
}

std::uint64_t parse_count(const std::string& s) {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw FormatError("bad count '" + s + "'");
    return v;
}

void write_csv(const MetricsReport& r, std::ostream& out) {
    out << "metric,value\n";
    out << "samples," << r.samples << '\n';
    out << "accuracy," << fmt17(r.accuracy) << '\n';
    out << "macro_precision," << fmt17(r.macro_precision) << '\n';
    out << "macro_recall," << fmt17(r.macro_recall) << '\n';
    out << "macro_f1," << fmt17(r.macro_f1) << '\n';
    out << "micro_precision," << fmt17(r.micro_precision) << '\n';
    out << "micro_recall," << fmt17(r.micro_recall) << '\n';
    out << "micro_f1," << fmt17(r.micro_f1) << '\n';
    out << "flip_consistency_rate," << fmt17(r.flip_consistency_rate) << '\n';
    out << "\nclass,name,precision,recall,f1,degenerate\n";
    for (std::size_t c = 0; c < r.precision.size(); ++c) {
        const bool deg = std::find(r.degenerate_classes.begin(), r.degenerate_classes.end(),
                                   static_cast<int>(c)) != r.degenerate_classes.end();
        out << c << ',' << (c < kNumGrades ? grade_name(static_cast<int>(c)) : "") << ','
            << fmt17(r.precision[c]) << ',' << fmt17(r.recall[c]) << ',' << fmt17(r.f1[c]) << ','
            << (deg ? 1 : 0) << '\n';
    }
    out << "\nconfusion\n";
    for (std::size_t t = 0; t < r.confusion.k(); ++t) {
        for (std::size_t p = 0; p < r.confusion.k(); ++p) out << (p ? "," : "") << r.confusion.at(t, p);
        out << '\n';
    }
}

MetricsReport read_csv(std::istream& in) {
    MetricsReport r;
    std::string line;
    enum class Section { metrics, classes, confusion } section = Section::metrics;
    std::vector<std::vector<std::uint64_t>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line == "metric,value") continue;
        if (line.rfind("class,", 0) == 0) {
            section = Section::classes;
            continue;
        }
        if (line == "confusion") {
            section = Section::confusion;
            continue;
        }
        const auto cells = split_csv(line);
        switch (section) {
        case Section::metrics: {
            if (cells.size() != 2) throw FormatError("bad metric line '" + line + "'");
            const auto& key = cells[0];
            if (key == "samples") r.samples = parse_count(cells[1]);
            else if (key == "accuracy") r.accuracy = parse_double(cells[1]);
            else if (key == "macro_precision") r.macro_precision = parse_double(cells[1]);
            else if (key == "macro_recall") r.macro_recall = parse_double(cells[1]);
            else if (key == "macro_f1") r.macro_f1 = parse_double(cells[1]);
            else if (key == "micro_precision") r.micro_precision = parse_double(cells[1]);
            else if (key == "micro_recall") r.micro_recall = parse_double(cells[1]);
            else if (key == "micro_f1") r.micro_f1 = parse_double(cells[1]);
            else if (key == "flip_consistency_rate") r.flip_consistency_rate = parse_double(cells[1]);
            else throw FormatError("unknown metric '" + key + "'");
            break;
        }
        case Section::classes:
            if (cells.size() != 6) throw FormatError("bad class line '" + line + "'");
            r.precision.push_back(parse_double(cells[2]));
            r.recall.push_back(parse_double(cells[3]));
            r.f1.push_back(parse_double(cells[4]));
            if (cells[5] == "1") r.degenerate_classes.push_back(static_cast<int>(parse_count(cells[0])));
            break;
        case Section::confusion: {
            std::vector<std::uint64_t> row;
            for (const auto& c : cells) row.push_back(parse_count(c));
            rows.push_back(std::move(row));
            break;
        }
        }
    }
    r.confusion = ConfusionMatrix(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != rows.size()) throw FormatError("confusion section is not square");
        for (std::size_t p = 0; p < rows.size(); ++p) r.confusion.at(t, p) = rows[t][p];
    }
    return r;
}

} // namespace

void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report " + path.string());
    if (format == ReportFormat::json) {
        out << to_json(report).dump(2) << '\n';
    } else {
        write_csv(report, out);
    }
    if (!out) throw IoError("write failed for report " + path.string());
}

MetricsReport read_report(const std::filesystem::path& path, ReportFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open report " + path.string());
    try {
        if (format == ReportFormat::json) return from_json(nlohmann::json::parse(in));
        return read_csv(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const std::invalid_argument&) {
        throw FormatError(path.string() + ": malformed number");
    } catch (const std::out_of_range&) {
        throw FormatError(path.string() + ": number out of range");
    }
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t t = 0; t < cm.k(); ++t) {
        for (std::size_t p = 0; p < cm.k(); ++p) out << (p ? "," : "") << cm.at(t, p);
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace symgrade
