#pragma once

// Column-labelled sample matrices, their CSV/JSON persistence and
// train/validation/test partitioning.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pricer/sampling.hpp"

namespace pricer {

enum class ColumnRole { Input, Output };

std::string_view to_string(ColumnRole role);

struct Column {
    std::string name;
    ColumnRole role = ColumnRole::Input;
    // Declared range, validated by Dataset::validate(). Infinite means open.
    double low = -std::numeric_limits<double>::infinity();
    double high = std::numeric_limits<double>::infinity();
};

class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Column> columns, RowMatrix data);

    const std::vector<Column>& columns() const { return columns_; }
    const RowMatrix& data() const { return data_; }
    RowMatrix& data() { return data_; }
    Eigen::Index rows() const { return data_.rows(); }
    Eigen::Index cols() const { return data_.cols(); }

    // Throws DomainError naming the column if absent.
    Eigen::Index column_index(std::string_view name) const;
    bool has_column(std::string_view name) const;
    std::vector<std::string> input_names() const;
    std::vector<std::string> output_names() const;

    // Input / output columns in declaration order.
    RowMatrix inputs() const;
    RowMatrix outputs() const;

    Dataset select_rows(const std::vector<Eigen::Index>& rows) const;
    Dataset head(Eigen::Index count) const;
    // Rows whose named columns lie inside [low, high].
    Dataset filter_range(const std::vector<std::pair<std::string, std::pair<double, double>>>& ranges) const;

    // Transform tags such as "log-time-value" and generator provenance.
    std::vector<std::string> transforms;
    nlohmann::json provenance = nlohmann::json::object();

    // Throws FormatError for empty data, non-finite values or values outside
    // their column's declared range.
    void validate() const;

private:
    std::vector<Column> columns_;
    RowMatrix data_;
};

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// Sidecar metadata path: "bs.csv" -> "bs.meta.json".
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

// CSV: header "name:role" per column, 17 significant digits, LF endings.
// Also writes the sidecar with generator, seed, ranges, transforms, row
// count and a creation timestamp.
void save_dataset(const Dataset& ds, const std::filesystem::path& csv_path);
// The sidecar document save_dataset writes.
nlohmann::json dataset_sidecar(const Dataset& ds);
// Reads the CSV and, when present, the sidecar. Throws IoError / FormatError.
Dataset load_dataset(const std::filesystem::path& csv_path);

std::string dataset_to_csv(const Dataset& ds);
Dataset dataset_from_csv(std::string_view text);

struct SplitSpec {
    double train = 0.9;
    double validation = 0.0;
    double test = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitResult {
    Dataset train;
    Dataset validation;  // empty when the fraction is 0
    Dataset test;
};

// Seeded shuffle then contiguous partition. Validation/test sizes are the
// rounded fractions; training takes the remainder. Throws DomainError if a
// partition with a non-zero fraction would be empty.
SplitResult split(const Dataset& ds, const SplitSpec& spec);

inline constexpr std::size_t kSizeStudyBase = 24300;

// First floor(factor * base) rows of an already shuffled training set.
Dataset subset_for_size_study(const Dataset& train, double factor, std::size_t base = kSizeStudyBase);

}  // namespace pricer
