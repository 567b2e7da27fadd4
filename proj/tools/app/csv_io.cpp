#include "csv_io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "anatpaste/error.hpp"

namespace anatpaste::app {

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, std::string_view why) {
    throw Error(Errc::ParseError, fmt::format("line {}: {}", line_no, why));
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        fn(line, line_no);
    }
}

}  // namespace

std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    for (;;) {
        const auto comma = line.find(',');
        fields.push_back(line.substr(0, comma));
        if (comma == std::string_view::npos) break;
        line.remove_prefix(comma + 1);
    }
    return fields;
}

double parse_double_field(std::string_view field, std::size_t line_no) {
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
        parse_fail(line_no, fmt::format("'{}' is not a finite number", field));
    }
    return v;
}

std::string features_csv(const FeatureTable& table) {
    const std::size_t dim = table.rows.empty() ? 0 : table.rows.front().size();
    std::string out = "id";
    for (std::size_t j = 0; j < dim; ++j) out += fmt::format(",f{}", j);
    out += '\n';
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        out += table.ids[i];
        for (double v : table.rows[i]) out += fmt::format(",{}", v);
        out += '\n';
    }
    return out;
}

FeatureTable parse_features_csv(std::string_view text) {
    FeatureTable table;
    std::size_t dim = 0;
    bool header = true;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (line.empty()) return;
        const auto fields = split_csv_line(line);
        if (header) {
            if (fields.front() != "id") parse_fail(line_no, "features header must start with 'id'");
            for (std::size_t j = 1; j < fields.size(); ++j) {
                if (fields[j] != fmt::format("f{}", j - 1)) parse_fail(line_no, fmt::format("expected column f{}", j - 1));
            }
            dim = fields.size() - 1;
            header = false;
            return;
        }
        if (fields.size() != dim + 1) {
            parse_fail(line_no, fmt::format("expected {} fields, found {}", dim + 1, fields.size()));
        }
        if (fields[0].empty()) parse_fail(line_no, "empty id");
        table.ids.emplace_back(fields[0]);
        auto& row = table.rows.emplace_back();
        row.reserve(dim);
        for (std::size_t j = 1; j < fields.size(); ++j) row.push_back(parse_double_field(fields[j], line_no));
    });
    if (header) parse_fail(1, "missing header");
    return table;
}

std::string scores_csv(const std::vector<ScoreRow>& rows) {
    std::string out = "id,raw,score,label\n";
    for (const auto& r : rows) out += fmt::format("{},{},{},{}\n", r.id, r.raw, r.score, r.label);
    return out;
}

std::vector<ScoreRow> parse_scores_csv(std::string_view text) {
    std::vector<ScoreRow> rows;
    bool header = true;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (line.empty()) return;
        const auto fields = split_csv_line(line);
        if (header) {
            if (line != "id,raw,score,label") parse_fail(line_no, "expected header 'id,raw,score,label'");
            header = false;
            return;
        }
        if (fields.size() != 4) parse_fail(line_no, fmt::format("expected 4 fields, found {}", fields.size()));
        ScoreRow r;
        r.id = std::string(fields[0]);
        if (r.id.empty()) parse_fail(line_no, "empty id");
        r.raw = parse_double_field(fields[1], line_no);
        r.score = parse_double_field(fields[2], line_no);
        if (fields[3] == "0") r.label = 0;
        else if (fields[3] == "1") r.label = 1;
        else if (fields[3] == "-1") r.label = -1;
        else parse_fail(line_no, fmt::format("label '{}' must be 0, 1 or -1", fields[3]));
        rows.push_back(std::move(r));
    });
    if (header) parse_fail(1, "missing header");
    return rows;
}

std::string train_log_csv(const std::vector<nn::EpochLog>& log) {
    std::string out = "epoch,lr,mean_loss,loss_terms,batches\n";
    for (const auto& e : log) {
        out += fmt::format("{},{},{},{},{}\n", e.epoch, e.learning_rate, e.mean_loss, e.loss_terms, e.batches);
    }
    return out;
}

std::string roc_csv(const std::vector<eval::RocPoint>& roc) {
    std::string out = "fpr,tpr,threshold\n";
    for (const auto& p : roc) out += fmt::format("{},{},{}\n", p.fpr, p.tpr, p.threshold);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, fmt::format("{}: cannot open file", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoError, fmt::format("{}: cannot open file for writing", path));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(Errc::IoError, fmt::format("{}: write failed", path));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(Errc::IoError, fmt::format("{}: {}", path, ec.message()));
}

}  // namespace anatpaste::app
