#include "rareclass/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace rareclass {

// ------------------------------------------------------------
// FeatureMatrix
// ------------------------------------------------------------

FeatureMatrix::FeatureMatrix(std::size_t rows, std::vector<std::size_t> column_ids)
    : rows_(rows), column_ids_(std::move(column_ids)), cells_(rows * column_ids_.size(), kMissing) {
    std::vector<std::size_t> sorted = column_ids_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error("FeatureMatrix: duplicate column id");
    }
}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols) : FeatureMatrix(rows, [cols] {
    std::vector<std::size_t> ids(cols);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    return ids;
}()) {}

std::optional<double> FeatureMatrix::get(std::size_t r, std::size_t c) const {
    const double v = value(r, c);
    if (is_missing(v)) return std::nullopt;
    return v;
}

std::vector<double> FeatureMatrix::column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = value(r, c);
    return out;
}

std::optional<std::size_t> FeatureMatrix::find(std::size_t column_id) const {
    auto it = std::find(column_ids_.begin(), column_ids_.end(), column_id);
    if (it == column_ids_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - column_ids_.begin());
}

std::size_t FeatureMatrix::position_of(std::size_t column_id) const {
    auto pos = find(column_id);
    if (!pos) throw Error("unknown column " + std::to_string(column_id));
    return *pos;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> positions) const {
    std::vector<std::size_t> ids;
    ids.reserve(positions.size());
    for (std::size_t p : positions) {
        if (p >= cols()) throw Error("select_columns: position out of range");
        ids.push_back(column_ids_[p]);
    }
    FeatureMatrix out(rows_, std::move(ids));
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = 0; k < positions.size(); ++k) out.value(r, k) = value(r, positions[k]);
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
    FeatureMatrix out(rows.size(), column_ids_);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= rows_) throw Error("select_rows: row out of range");
        auto src = row(rows[k]);
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
}

void FeatureMatrix::append_row(std::span<const double> values) {
    if (values.size() != cols()) throw Error("append_row: width mismatch");
    cells_.insert(cells_.end(), values.begin(), values.end());
    ++rows_;
}

std::size_t FeatureMatrix::missing_count() const {
    return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](double v) { return is_missing(v); }));
}

bool FeatureMatrix::operator==(const FeatureMatrix& other) const {
    if (rows_ != other.rows_ || column_ids_ != other.column_ids_) return false;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        const double a = cells_[i];
        const double b = other.cells_[i];
        if (is_missing(a) != is_missing(b)) return false;
        if (!is_missing(a) && std::memcmp(&a, &b, sizeof a) != 0) return false;
    }
    return true;
}

// ------------------------------------------------------------
// Dataset
// ------------------------------------------------------------

std::size_t Dataset::count_class(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

void Dataset::validate() const {
    if (labels.size() != features.rows()) throw Error("labels length does not match row count");
    if (row_ids.size() != features.rows()) throw Error("row id length does not match row count");
    for (int y : labels) {
        if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
    }
}

void Dataset::require_both_classes(const char* op) const {
    if (count_class(0) == 0 || count_class(1) == 0) throw Error(std::string(op) + ": both classes required");
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features = features.select_rows(rows);
    out.labels.reserve(rows.size());
    out.row_ids.reserve(rows.size());
    for (std::size_t r : rows) {
        out.labels.push_back(labels[r]);
        out.row_ids.push_back(row_ids[r]);
    }
    out.provenance = provenance;
    return out;
}

Dataset Dataset::select_columns(std::span<const std::size_t> positions) const {
    Dataset out;
    out.features = features.select_columns(positions);
    out.labels = labels;
    out.row_ids = row_ids;
    out.provenance = provenance;
    return out;
}

void Dataset::log(std::string operation, std::string parameters, std::vector<std::size_t> columns) {
    provenance.push_back({std::move(operation), std::move(parameters), std::move(columns)});
}

Dataset make_dataset(FeatureMatrix features, std::vector<int> labels) {
    Dataset d;
    d.row_ids.resize(features.rows());
    std::iota(d.row_ids.begin(), d.row_ids.end(), std::size_t{0});
    d.features = std::move(features);
    d.labels = std::move(labels);
    d.validate();
    return d;
}

// ------------------------------------------------------------
// Loading
// ------------------------------------------------------------

namespace {

std::vector<std::string> split_whitespace(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::vector<std::string> split_delimited(const std::string& line, char delimiter) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == delimiter) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& tok, std::size_t line_no) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (tok.empty() || end != begin + tok.size() || !std::isfinite(v)) {
        throw Error("unparseable numeric token '" + tok + "' on line " + std::to_string(line_no));
    }
    return v;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

}  // namespace

Dataset load_secom(const std::filesystem::path& data_path, const std::filesystem::path& labels_path) {
    auto data_in = open_input(data_path);
    std::vector<double> cells;
    std::size_t n_cols = 0;
    std::size_t n_rows = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(data_in, line)) {
        ++line_no;
        auto toks = split_whitespace(line);
        if (toks.empty()) continue;
        if (n_rows == 0) {
            n_cols = toks.size();
        } else if (toks.size() != n_cols) {
            throw Error("ragged row on line " + std::to_string(line_no) + " of " + data_path.string());
        }
        for (const auto& t : toks) cells.push_back(t == "NaN" ? kMissing : parse_number(t, line_no));
        ++n_rows;
    }
    if (n_rows == 0) throw Error("empty input: " + data_path.string());

    auto labels_in = open_input(labels_path);
    std::vector<int> labels;
    std::size_t n_timestamps = 0;
    std::string first_stamp;
    std::string last_stamp;
    line_no = 0;
    while (std::getline(labels_in, line)) {
        ++line_no;
        auto toks = split_whitespace(line);
        if (toks.empty()) continue;
        if (toks[0] == "-1") {
            labels.push_back(0);
        } else if (toks[0] == "1") {
            labels.push_back(1);
        } else {
            throw Error("unparseable label token '" + toks[0] + "' on line " + std::to_string(line_no));
        }
        if (toks.size() > 1) {
            std::string stamp = toks[1];
            for (std::size_t i = 2; i < toks.size(); ++i) stamp += " " + toks[i];
            if (n_timestamps == 0) first_stamp = stamp;
            last_stamp = stamp;
            ++n_timestamps;
        }
    }
    if (labels.empty()) throw Error("empty input: " + labels_path.string());
    if (labels.size() != n_rows) {
        throw Error("row-count mismatch: " + std::to_string(n_rows) + " data rows, " + std::to_string(labels.size()) +
                    " labels");
    }

    FeatureMatrix fm(n_rows, n_cols);
    for (std::size_t r = 0; r < n_rows; ++r) {
        std::copy_n(cells.begin() + static_cast<std::ptrdiff_t>(r * n_cols), n_cols, fm.row(r).begin());
    }
    Dataset d = make_dataset(std::move(fm), std::move(labels));
    d.log("load_secom", "data=" + data_path.filename().string() + " labels=" + labels_path.filename().string() +
                            " rows=" + std::to_string(n_rows) + " cols=" + std::to_string(n_cols));
    d.log("timestamps", "count=" + std::to_string(n_timestamps) + " first=" + first_stamp + " last=" + last_stamp);
    return d;
}

Dataset load_delimited(const std::filesystem::path& path, const std::string& label_column, char delimiter,
                       const std::set<std::string>& missing_tokens) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw Error("empty input: " + path.string());
    auto header = split_delimited(line, delimiter);
    for (auto& h : header) h = trim(h);
    auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end()) throw Error("missing label column '" + label_column + "'");
    const std::size_t label_pos = static_cast<std::size_t>(label_it - header.begin());

    std::vector<std::string> raw_labels;
    std::vector<double> cells;
    const std::size_t n_cols = header.size() - 1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto toks = split_delimited(line, delimiter);
        if (toks.size() != header.size()) throw Error("ragged row on line " + std::to_string(line_no));
        for (std::size_t i = 0; i < toks.size(); ++i) {
            std::string t = trim(toks[i]);
            if (i == label_pos) {
                raw_labels.push_back(t);
            } else {
                cells.push_back(missing_tokens.count(t) ? kMissing : parse_number(t, line_no));
            }
        }
    }
    if (raw_labels.empty()) throw Error("empty input: " + path.string());

    std::map<std::string, std::size_t> counts;
    for (const auto& l : raw_labels) ++counts[l];
    if (counts.size() != 2) {
        throw Error("label column must hold exactly two distinct values, found " + std::to_string(counts.size()));
    }
    // Minority value becomes class 1; on equal counts the lexicographically larger one does.
    auto first = counts.begin();
    auto second = std::next(first);
    const std::string positive = first->second < second->second ? first->first : second->first;

    const std::size_t n_rows = raw_labels.size();
    FeatureMatrix fm(n_rows, n_cols);
    std::vector<int> labels(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        std::copy_n(cells.begin() + static_cast<std::ptrdiff_t>(r * n_cols), n_cols, fm.row(r).begin());
        labels[r] = raw_labels[r] == positive ? 1 : 0;
    }
    Dataset d = make_dataset(std::move(fm), std::move(labels));
    d.log("load_delimited", "path=" + path.filename().string() + " label=" + label_column + " positive=" + positive);
    return d;
}

// ------------------------------------------------------------
// Statistics
// ------------------------------------------------------------

ColumnStats column_stats_of(std::size_t column_id, std::span<const double> values) {
    ColumnStats s;
    s.column_id = column_id;
    std::vector<double> present;
    present.reserve(values.size());
    for (double v : values) {
        if (!is_missing(v)) present.push_back(v);
    }
    s.n_present = present.size();
    s.missing_fraction = values.empty() ? 0.0 : 1.0 - static_cast<double>(present.size()) / values.size();
    if (present.empty()) return s;

    std::sort(present.begin(), present.end());
    const std::size_t m = present.size();
    const double n = static_cast<double>(m);
    s.min = present.front();
    s.max = present.back();
    s.is_constant = present.front() == present.back();
    s.median = m % 2 == 1 ? present[m / 2] : 0.5 * (present[m / 2 - 1] + present[m / 2]);
    s.n_unique = 1;
    for (std::size_t i = 1; i < m; ++i) s.n_unique += present[i] != present[i - 1];

    double sum = 0.0;
    for (double v : present) sum += v;
    const double mean = sum / n;
    s.mean = mean;
    double m2 = 0.0;
    double m3 = 0.0;
    for (double v : present) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    if (s.is_constant) {
        s.std = 0.0;
        s.skewness = 0.0;
        return s;
    }
    s.std = std::sqrt(m2);
    s.skewness = (m < 3 || m2 <= 0.0) ? 0.0 : m3 / std::pow(m2, 1.5);
    return s;
}

std::vector<ColumnStats> column_stats(const Dataset& d) {
    std::vector<ColumnStats> out(d.cols());
    parallel_for(d.cols(), [&](std::size_t c) {
        const auto col = d.features.column(c);
        out[c] = column_stats_of(d.features.column_ids()[c], col);
    });
    return out;
}

MissingSummary missing_summary(const Dataset& d) {
    MissingSummary s;
    s.total_cells = d.rows() * d.cols();
    std::size_t affected_cells = 0;
    for (std::size_t c = 0; c < d.cols(); ++c) {
        std::size_t miss = 0;
        for (std::size_t r = 0; r < d.rows(); ++r) miss += d.features.missing(r, c);
        if (miss > 0) {
            ++s.affected_columns;
            affected_cells += d.rows();
        }
        s.missing_cells += miss;
    }
    if (s.total_cells > 0) s.cell_fraction = static_cast<double>(s.missing_cells) / s.total_cells;
    if (affected_cells > 0) s.affected_column_cell_fraction = static_cast<double>(s.missing_cells) / affected_cells;
    return s;
}

std::optional<double> CorrelationMatrix::at(std::size_t i, std::size_t j) const {
    const double v = raw(i, j);
    if (is_missing(v)) return std::nullopt;
    return v;
}

std::optional<double> pairwise_pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("pairwise_pearson: length mismatch");
    std::size_t n = 0;
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (is_missing(x[i]) || is_missing(y[i])) continue;
        sx += x[i];
        sy += y[i];
        ++n;
    }
    if (n < 2) return std::nullopt;
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (is_missing(x[i]) || is_missing(y[i])) continue;
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationMatrix correlation_matrix(const Dataset& d) {
    const std::size_t p = d.cols();
    std::vector<std::vector<double>> cols(p);
    for (std::size_t c = 0; c < p; ++c) cols[c] = d.features.column(c);
    CorrelationMatrix m(p);
    // Row i of the upper triangle is owned by task i.
    parallel_for(p, [&](std::size_t i) {
        for (std::size_t j = i; j < p; ++j) {
            auto r = pairwise_pearson(cols[i], cols[j]);
            if (r) m.set(i, j, i == j ? 1.0 : *r);
        }
    });
    return m;
}

// ------------------------------------------------------------
// Text output
// ------------------------------------------------------------

namespace {
std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }
}  // namespace

void write_column_stats(const std::vector<ColumnStats>& stats, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "column_id,missing_fraction,mean,median,std,skewness,min,max,n_unique,is_constant\n";
    for (const auto& s : stats) {
        out << s.column_id << ',' << format_double(s.missing_fraction) << ',' << opt(s.mean) << ',' << opt(s.median)
            << ',' << opt(s.std) << ',' << opt(s.skewness) << ',' << opt(s.min) << ',' << opt(s.max) << ','
            << s.n_unique << ',' << (s.is_constant ? 1 : 0) << '\n';
    }
}

void write_dataset_csv(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "row_id,label";
    for (std::size_t id : d.features.column_ids()) out << ',' << id;
    out << '\n';
    for (std::size_t r = 0; r < d.rows(); ++r) {
        if (d.row_ids[r] == kSyntheticRow) {
            out << "synthetic";
        } else {
            out << d.row_ids[r];
        }
        out << ',' << d.labels[r];
        for (double v : d.features.row(r)) out << ',' << format_double(v);
        out << '\n';
    }
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw Error("empty input: " + path.string());
    auto header = split_delimited(line, ',');
    if (header.size() < 2 || header[0] != "row_id" || header[1] != "label") {
        throw Error("not a dataset file: " + path.string());
    }
    std::vector<std::size_t> ids;
    for (std::size_t i = 2; i < header.size(); ++i) ids.push_back(static_cast<std::size_t>(std::stoull(header[i])));
    Dataset d;
    d.features = FeatureMatrix(0, ids);
    std::size_t line_no = 1;
    std::vector<double> row(ids.size());
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto toks = split_delimited(line, ',');
        if (toks.size() != header.size()) throw Error("ragged row on line " + std::to_string(line_no));
        d.row_ids.push_back(toks[0] == "synthetic" ? kSyntheticRow : static_cast<std::size_t>(std::stoull(toks[0])));
        d.labels.push_back(static_cast<int>(parse_number(toks[1], line_no)));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            row[i] = toks[i + 2] == "NaN" ? kMissing : parse_number(toks[i + 2], line_no);
        }
        d.features.append_row(row);
    }
    d.validate();
    return d;
}

}  // namespace rareclass
