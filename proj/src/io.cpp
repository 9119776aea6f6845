#include "coap/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <memory>
#include <sstream>

#include "coap/error.hpp"

namespace coap::io {
namespace {

[[noreturn]] void io_fail(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorCode::Io, path.string() + ": " + what);
}

double parse_double(std::string_view field, const std::filesystem::path& path, std::size_t line) {
  while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.remove_prefix(1);
  while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    io_fail(path, "line " + std::to_string(line) + ": cannot parse '" + std::string(field) + "'");
  return value;
}

void append_double(std::string& out, double v) {
  std::array<char, 40> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  out.append(buf.data(), res.ptr);
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_fail(path, "cannot open for writing");
  out << text;
  if (!out) io_fail(path, "write failed");
}

void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::string text;
  text.reserve(static_cast<std::size_t>(m.size()) * 24);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) text.push_back(',');
      append_double(text, m(i, j));
    }
    text.push_back('\n');
  }
  write_text(path, text);
}

Eigen::MatrixXd read_csv(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::vector<double> values;
  Index cols = -1, rows = 0;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    Index count = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      values.push_back(parse_double(line.substr(start, comma - start), path, line_no));
      ++count;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols < 0) cols = count;
    if (count != cols) io_fail(path, "line " + std::to_string(line_no) + ": ragged row");
    ++rows;
  }
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  return Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), rows, cols);
}

void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v) { write_csv(path, v); }

Eigen::VectorXd read_vector(const std::filesystem::path& path) {
  const Eigen::MatrixXd m = read_csv(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  if (m.size() == 0) return Eigen::VectorXd(0);
  io_fail(path, "expected a single row or column");
}

Eigen::MatrixXd read_matrix_market(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) io_fail(path, "empty file");
  std::string lower = line;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::istringstream header(lower);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%matrixmarket" || object != "matrix" || format != "coordinate")
    io_fail(path, "only MatrixMarket coordinate matrices are supported");
  if (field != "real" && field != "integer" && field != "pattern")
    io_fail(path, "unsupported field type '" + field + "'");
  if (symmetry != "general" && symmetry != "symmetric")
    io_fail(path, "unsupported symmetry '" + symmetry + "'");

  while (std::getline(in, line) && (line.empty() || line[0] == '%')) {}
  long long rows = 0, cols = 0, nnz = 0;
  if (!(std::istringstream(line) >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0)
    io_fail(path, "bad size line");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  for (long long k = 0; k < nnz; ++k) {
    if (!std::getline(in, line)) io_fail(path, "fewer entries than declared");
    if (line.empty() || line[0] == '%') { --k; continue; }
    std::istringstream entry(line);
    long long i = 0, j = 0;
    double v = 1.0;
    entry >> i >> j;
    if (field != "pattern") entry >> v;
    if (!entry || i < 1 || j < 1 || i > rows || j > cols) io_fail(path, "bad entry '" + line + "'");
    m(i - 1, j - 1) += v;
    if (symmetry == "symmetric" && i != j) m(j - 1, i - 1) += v;
  }
  return m;
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  if (path.extension() == ".mtx") return read_matrix_market(path);
  return read_csv(path);
}

std::string sha256_file(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1)
    io_fail(path, "SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) {
    hex.push_back(kHex[digest[k] >> 4]);
    hex.push_back(kHex[digest[k] & 0xf]);
  }
  return hex;
}

}  // namespace coap::io
