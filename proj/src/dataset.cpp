#include "pricer/dataset.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "pricer/errors.hpp"

namespace pricer {

std::string_view to_string(ColumnRole role) { return role == ColumnRole::Input ? "input" : "output"; }

Dataset::Dataset(std::vector<Column> columns, RowMatrix data)
    : columns_(std::move(columns)), data_(std::move(data)) {
    if (static_cast<Eigen::Index>(columns_.size()) != data_.cols()) {
        throw ShapeMismatch("dataset: column count does not match data width");
    }
}

Eigen::Index Dataset::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) return static_cast<Eigen::Index>(i);
    }
    throw DomainError("dataset: missing column '" + std::string(name) + "'");
}

bool Dataset::has_column(std::string_view name) const {
    for (const auto& c : columns_) {
        if (c.name == name) return true;
    }
    return false;
}

std::vector<std::string> Dataset::input_names() const {
    std::vector<std::string> out;
    for (const auto& c : columns_) {
        if (c.role == ColumnRole::Input) out.push_back(c.name);
    }
    return out;
}

std::vector<std::string> Dataset::output_names() const {
    std::vector<std::string> out;
    for (const auto& c : columns_) {
        if (c.role == ColumnRole::Output) out.push_back(c.name);
    }
    return out;
}

namespace {

RowMatrix gather_columns(const RowMatrix& data, const std::vector<Column>& cols, ColumnRole role) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i].role == role) idx.push_back(static_cast<Eigen::Index>(i));
    }
    RowMatrix out(data.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = data.col(idx[j]);
    return out;
}

}  // namespace

RowMatrix Dataset::inputs() const { return gather_columns(data_, columns_, ColumnRole::Input); }

RowMatrix Dataset::outputs() const { return gather_columns(data_, columns_, ColumnRole::Output); }

Dataset Dataset::select_rows(const std::vector<Eigen::Index>& rows) const {
    RowMatrix sub(static_cast<Eigen::Index>(rows.size()), data_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = data_.row(rows[i]);
    Dataset out(columns_, std::move(sub));
    out.transforms = transforms;
    out.provenance = provenance;
    return out;
}

Dataset Dataset::head(Eigen::Index count) const {
    if (count > rows()) throw DomainError("dataset: head() beyond row count");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    return select_rows(idx);
}

Dataset Dataset::filter_range(
    const std::vector<std::pair<std::string, std::pair<double, double>>>& ranges) const {
    std::vector<std::pair<Eigen::Index, std::pair<double, double>>> resolved;
    for (const auto& [name, range] : ranges) resolved.emplace_back(column_index(name), range);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < rows(); ++r) {
        bool ok = true;
        for (const auto& [c, range] : resolved) {
            const double v = data_(r, c);
            if (v < range.first || v > range.second) {
                ok = false;
                break;
            }
        }
        if (ok) keep.push_back(r);
    }
    return select_rows(keep);
}

void Dataset::validate() const {
    if (rows() == 0) throw FormatError("dataset: no rows");
    for (Eigen::Index c = 0; c < cols(); ++c) {
        const Column& col = columns_[static_cast<std::size_t>(c)];
        for (Eigen::Index r = 0; r < rows(); ++r) {
            const double v = data_(r, c);
            if (!std::isfinite(v)) {
                throw FormatError("dataset: non-finite value in column '" + col.name + "'");
            }
            if (v < col.low || v > col.high) {
                std::ostringstream msg;
                msg << "dataset: value " << v << " in column '" << col.name << "' outside ["
                    << col.low << ", " << col.high << "]";
                throw FormatError(msg.str());
            }
        }
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p.replace_extension(".meta.json");
    return p;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

double parse_double(std::string_view tok, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw FormatError("dataset csv: bad number '" + std::string(tok) + "' on line " +
                          std::to_string(line));
    }
    return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

nlohmann::json range_json(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

double range_from_json(const nlohmann::json& j, double fallback) {
    return j.is_number() ? j.get<double>() : fallback;
}

}  // namespace

std::string dataset_to_csv(const Dataset& ds) {
    std::string out;
    out.reserve(static_cast<std::size_t>(ds.rows() * ds.cols() * 20 + 64));
    for (std::size_t c = 0; c < ds.columns().size(); ++c) {
        if (c) out += ',';
        out += ds.columns()[c].name;
        out += ':';
        out += to_string(ds.columns()[c].role);
    }
    out += '\n';
    for (Eigen::Index r = 0; r < ds.rows(); ++r) {
        for (Eigen::Index c = 0; c < ds.cols(); ++c) {
            if (c) out += ',';
            append_double(out, ds.data()(r, c));
        }
        out += '\n';
    }
    return out;
}

Dataset dataset_from_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
        start = end + 1;
    }
    if (lines.empty()) throw FormatError("dataset csv: empty file");

    std::vector<Column> cols;
    for (auto tok : split_commas(lines[0])) {
        const std::size_t colon = tok.rfind(':');
        if (colon == std::string_view::npos) {
            throw FormatError("dataset csv: header entry '" + std::string(tok) + "' lacks ':role'");
        }
        Column c;
        c.name = std::string(tok.substr(0, colon));
        const auto role = tok.substr(colon + 1);
        if (role == "input") {
            c.role = ColumnRole::Input;
        } else if (role == "output") {
            c.role = ColumnRole::Output;
        } else {
            throw FormatError("dataset csv: unknown role '" + std::string(role) + "'");
        }
        cols.push_back(std::move(c));
    }

    RowMatrix data(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto toks = split_commas(lines[i]);
        if (toks.size() != cols.size()) {
            throw FormatError("dataset csv: line " + std::to_string(i + 1) + " has " +
                              std::to_string(toks.size()) + " fields, expected " +
                              std::to_string(cols.size()));
        }
        for (std::size_t j = 0; j < toks.size(); ++j) {
            data(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) = parse_double(toks[j], i + 1);
        }
    }
    return Dataset(std::move(cols), std::move(data));
}

nlohmann::json dataset_sidecar(const Dataset& ds) {
    nlohmann::json meta = ds.provenance;
    meta["rows"] = ds.rows();
    meta["transforms"] = ds.transforms;
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : ds.columns()) {
        cols.push_back({{"name", c.name},
                        {"role", std::string(to_string(c.role))},
                        {"low", range_json(c.low)},
                        {"high", range_json(c.high)}});
    }
    meta["columns"] = cols;
    meta["created"] = utc_timestamp();
    return meta;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& csv_path) {
    const std::string csv = dataset_to_csv(ds);
    const std::string meta = dataset_sidecar(ds).dump(2) + "\n";
    write_file_atomic(csv_path, csv);
    write_file_atomic(sidecar_path(csv_path), meta);
}

Dataset load_dataset(const std::filesystem::path& csv_path) {
    Dataset ds = dataset_from_csv(read_file(csv_path));
    const auto meta_path = sidecar_path(csv_path);
    if (!std::filesystem::exists(meta_path)) return ds;

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(meta_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset sidecar '" + meta_path.string() + "': " + e.what());
    }
    std::vector<Column> cols = ds.columns();
    if (meta.contains("columns")) {
        for (const auto& jc : meta["columns"]) {
            for (auto& c : cols) {
                if (c.name == jc.value("name", "")) {
                    c.low = range_from_json(jc.value("low", nlohmann::json()), c.low);
                    c.high = range_from_json(jc.value("high", nlohmann::json()), c.high);
                }
            }
        }
    }
    Dataset out(std::move(cols), ds.data());
    if (meta.contains("transforms")) out.transforms = meta["transforms"].get<std::vector<std::string>>();
    for (const char* key : {"rows", "transforms", "columns", "created"}) meta.erase(key);
    out.provenance = meta;
    return out;
}

void SplitSpec::validate() const {
    if (train < 0.0 || validation < 0.0 || test < 0.0) {
        throw DomainError("split: fractions must be non-negative");
    }
    if (std::abs(train + validation + test - 1.0) > 1e-12) {
        throw DomainError("split: fractions must sum to 1");
    }
}

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    const auto n = static_cast<std::size_t>(ds.rows());
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.validation));
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.test));
    if (n_val + n_test > n) throw DomainError("split: partitions exceed row count");
    const std::size_t n_train = n - n_val - n_test;
    if ((spec.train > 0.0 && n_train == 0) || (spec.validation > 0.0 && n_val == 0) ||
        (spec.test > 0.0 && n_test == 0)) {
        throw DomainError("split: a partition with non-zero fraction would be empty");
    }

    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Rng rng(spec.seed);
    rng.shuffle(idx);

    auto take = [&](std::size_t from, std::size_t count) {
        return ds.select_rows(std::vector<Eigen::Index>(idx.begin() + static_cast<std::ptrdiff_t>(from),
                                                         idx.begin() + static_cast<std::ptrdiff_t>(from + count)));
    };
    SplitResult out;
    out.train = take(0, n_train);
    out.validation = take(n_train, n_val);
    out.test = take(n_train + n_val, n_test);
    return out;
}

Dataset subset_for_size_study(const Dataset& train, double factor, std::size_t base) {
    if (!(factor > 0.0)) throw DomainError("size study: factor must be positive");
    const auto count = static_cast<Eigen::Index>(std::floor(factor * static_cast<double>(base)));
    if (count < 1 || count > train.rows()) {
        throw DomainError("size study: need " + std::to_string(count) + " rows, training set has " +
                          std::to_string(train.rows()));
    }
    return train.head(count);
}

}  // namespace pricer
