#include "stochinv/io.hpp"

#include "stochinv/error.hpp"

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stochinv {

namespace fs = std::filesystem;

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw FormatError("cannot format value");
  out.append(buf, end);
}

void append_row(std::string& out, const double* data, Eigen::Index n, Eigen::Index stride) {
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j) out.push_back(' ');
    append_double(out, data[j * stride]);
  }
  out.push_back('\n');
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::vector<double> parse_row(std::string_view line, const fs::path& path, int lineno) {
  std::vector<double> row;
  const char* p = line.data();
  const char* end = p + line.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    if (p == end) break;
    double v = 0.0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number");
    }
    row.push_back(v);
    p = next;
  }
  return row;
}

Eigen::MatrixXd rows_to_matrix(const std::vector<std::vector<double>>& rows, const fs::path& path) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  Eigen::MatrixXd M(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw FormatError(path.string() + ": ragged rows");
    for (std::size_t j = 0; j < cols; ++j) M(i, j) = rows[i][j];
  }
  return M;
}

constexpr char kKpcaMagic[8] = {'S', 'I', 'K', 'P', 'C', 'A', '0', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError(path.string() + ": truncated");
  return v;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& M) {
  put<std::int64_t>(out, M.rows());
  put<std::int64_t>(out, M.cols());
  out.write(reinterpret_cast<const char*>(M.data()), static_cast<std::streamsize>(sizeof(double) * M.size()));
}

Eigen::MatrixXd get_matrix(std::istream& in, const fs::path& path) {
  const auto rows = get<std::int64_t>(in, path);
  const auto cols = get<std::int64_t>(in, path);
  if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 32)) throw FormatError(path.string() + ": bad matrix shape");
  Eigen::MatrixXd M(rows, cols);
  if (!in.read(reinterpret_cast<char*>(M.data()), static_cast<std::streamsize>(sizeof(double) * M.size())))
    throw FormatError(path.string() + ": truncated");
  return M;
}

}  // namespace

void write_matrix(const fs::path& path, const Eigen::MatrixXd& M, const std::string& header) {
  std::string out;
  out.reserve(static_cast<std::size_t>(M.size()) * 24 + 64);
  if (!header.empty()) {
    std::istringstream hs(header);
    for (std::string line; std::getline(hs, line);) out += "# " + line + "\n";
  }
  for (Eigen::Index i = 0; i < M.rows(); ++i) append_row(out, M.data() + i, M.cols(), M.outerStride());
  write_text(path, out);
}

Eigen::MatrixXd read_matrix(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    ++lineno;
    pos = nl + 1;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || line[first] == '#') continue;
    rows.push_back(parse_row(line, path, lineno));
  }
  return rows_to_matrix(rows, path);
}

void write_vector(const fs::path& path, const Eigen::VectorXd& v, const std::string& header) {
  write_matrix(path, v, header);
}

Eigen::VectorXd read_vector(const fs::path& path) {
  Eigen::MatrixXd M = read_matrix(path);
  if (M.cols() != 1 && M.size() > 0) throw FormatError(path.string() + ": expected one column");
  return M.size() ? Eigen::VectorXd(M.col(0)) : Eigen::VectorXd();
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << text;
  if (!out) throw FormatError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_kpca(const fs::path& path, const KpcaModel& model) {
  if (!model.fitted()) throw InvalidArgument("save_kpca: model is not fitted");
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out.write(kKpcaMagic, sizeof kKpcaMagic);
  const Kernel& k = model.kernel();
  put<std::int32_t>(out, static_cast<std::int32_t>(k.kind));
  put<std::int32_t>(out, k.degree);
  put<double>(out, k.offset);
  put<double>(out, k.sigma);
  put<std::int32_t>(out, model.dimension());
  put_matrix(out, model.snapshots());
  put_matrix(out, model.eigenvectors());
  put_matrix(out, model.eigenvalues());
  if (!out) throw FormatError("cannot write " + path.string());
}

KpcaModel load_kpca(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[sizeof kKpcaMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kKpcaMagic, sizeof magic) != 0)
    throw FormatError(path.string() + ": not a kpca model");
  Kernel k;
  const auto kind = get<std::int32_t>(in, path);
  if (kind < 0 || kind > 2) throw FormatError(path.string() + ": bad kernel kind");
  k.kind = static_cast<KernelKind>(kind);
  k.degree = get<std::int32_t>(in, path);
  k.offset = get<double>(in, path);
  k.sigma = get<double>(in, path);
  const int r = get<std::int32_t>(in, path);
  Eigen::MatrixXd Y = get_matrix(in, path);
  Eigen::MatrixXd V = get_matrix(in, path);
  Eigen::MatrixXd ev = get_matrix(in, path);
  if (ev.cols() != 1) throw FormatError(path.string() + ": bad eigenvalue block");
  return KpcaModel::from_parts(Y, k, V, ev.col(0), r);
}

void save_pce(const fs::path& path, const PceModel& model) {
  std::string out = "stochinv-pce 1\n";
  out += "order " + std::to_string(model.order) + "\n";
  out += "dimension " + std::to_string(model.dimension()) + "\n";
  out += "samples " + std::to_string(model.source_samples.rows()) + "\n";
  out += "coeffs\n";
  for (Eigen::Index i = 0; i < model.coeffs.rows(); ++i)
    append_row(out, model.coeffs.data() + i, model.coeffs.cols(), model.coeffs.outerStride());
  out += "bandwidths\n";
  append_row(out, model.bandwidths.data(), model.bandwidths.size(), 1);
  out += "source_samples\n";
  const auto& S = model.source_samples;
  for (Eigen::Index i = 0; i < S.rows(); ++i) append_row(out, S.data() + i, S.cols(), S.outerStride());
  write_text(path, out);
}

PceModel load_pce(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string word;
  int version = 0;
  in >> word >> version;
  if (word != "stochinv-pce" || version != 1) throw FormatError(path.string() + ": not a pce model");
  auto expect_int = [&](const char* key) {
    std::string w;
    long long v = -1;
    in >> w >> v;
    if (w != key || v < 0) throw FormatError(path.string() + ": expected " + key);
    return static_cast<int>(v);
  };
  auto expect_word = [&](const char* key) {
    std::string w;
    in >> w;
    if (w != key) throw FormatError(path.string() + ": expected " + key);
  };
  auto read_block = [&](Eigen::MatrixXd& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j)
        if (!(in >> M(i, j))) throw FormatError(path.string() + ": truncated");
  };
  PceModel m;
  m.order = expect_int("order");
  const int r = expect_int("dimension");
  const int n = expect_int("samples");
  expect_word("coeffs");
  m.coeffs.resize(r, m.order + 1);
  read_block(m.coeffs);
  expect_word("bandwidths");
  Eigen::MatrixXd bw(1, r);
  read_block(bw);
  m.bandwidths = bw.row(0).transpose();
  expect_word("source_samples");
  m.source_samples.resize(n, r);
  read_block(m.source_samples);
  return m;
}

void save_observations(const fs::path& path, const ObservationSet& obs) {
  Eigen::MatrixXd M(obs.size(), 3);
  for (int i = 0; i < obs.size(); ++i) {
    M(i, 0) = obs.dof_indices[static_cast<std::size_t>(i)];
    M(i, 1) = obs.values(i);
    M(i, 2) = obs.weights(i);
  }
  write_matrix(path, M, "dof value weight");
}

ObservationSet load_observations(const fs::path& path) {
  Eigen::MatrixXd M = read_matrix(path);
  if (M.size() == 0 || M.cols() != 3) throw FormatError(path.string() + ": expected columns dof value weight");
  ObservationSet obs;
  obs.values = M.col(1);
  obs.weights = M.col(2);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const double d = M(i, 0);
    if (d < 0 || d != static_cast<double>(static_cast<int>(d))) throw FormatError(path.string() + ": bad dof index");
    obs.dof_indices.push_back(static_cast<int>(d));
  }
  return obs;
}

}  // namespace stochinv
