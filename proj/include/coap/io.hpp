#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "coap/linalg.hpp"

namespace coap::io {

/// Dense CSV, no header, one row per line, reals written with 17
/// significant digits so every double survives a round trip.
void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_csv(const std::filesystem::path& path);

/// A vector is stored as a single column.
void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v);
Eigen::VectorXd read_vector(const std::filesystem::path& path);

/// MatrixMarket coordinate file (real, integer or pattern; general or
/// symmetric), expanded to a dense matrix.
Eigen::MatrixXd read_matrix_market(const std::filesystem::path& path);

/// Chooses the reader from the extension: .mtx is MatrixMarket, anything else CSV.
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of the file contents.
std::string sha256_file(const std::filesystem::path& path);

/// Whole-file read and write; errors become coap::Error with code Io.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace coap::io
