#include "demd/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "demd/error.hpp"

namespace demd::io {

namespace {

static_assert(std::endian::native == std::endian::little, "binary format assumes a little-endian host");

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
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
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ParseError(where + ": cannot parse '" + t + "' as a number");
  return v;
}

long long parse_int(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ParseError(where + ": cannot parse '" + t + "' as an integer");
  return v;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key,
                           const std::filesystem::path& path) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ParseError(path.string() + ": missing key '" + key + "'");
  return it->second;
}

std::string join(const IndexList& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

PointCloud parse_points_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("point CSV is empty");
  const auto header = split(line, ',');
  int label_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (trim(header[c]) == "label") label_col = static_cast<int>(c);
  if (label_col < 0) throw ParseError("point CSV header has no 'label' column");
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1) throw ParseError("point CSV needs at least one coordinate column x0");
  {
    int next = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (static_cast<int>(c) == label_col) continue;
      const std::string expect = "x" + std::to_string(next++);
      if (trim(header[c]) != expect)
        throw ParseError("point CSV column '" + trim(header[c]) + "' where '" + expect + "' was expected");
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    const std::string where = "point CSV line " + std::to_string(row);
    if (static_cast<int>(fields.size()) != d + 1)
      throw ParseError(where + ": expected " + std::to_string(d + 1) + " fields, found " + std::to_string(fields.size()));
    for (int c = 0; c <= d; ++c) {
      if (c == label_col) {
        const long long id = parse_int(fields[static_cast<std::size_t>(c)], where + " column label");
        if (id < 0 || id > std::numeric_limits<int>::max()) throw ParseError(where + ": label must be a nonnegative integer");
        labels.push_back(static_cast<int>(id));
      } else {
        values.push_back(parse_double(fields[static_cast<std::size_t>(c)], where));
      }
    }
  }
  const int n = static_cast<int>(labels.size());
  if (n == 0) throw ParseError("point CSV has no data rows");
  Matrix coords(n, d);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) coords(i, c) = values[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
  return PointCloud::create(std::move(coords), std::move(labels));
}

PointCloud read_points_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_points_csv(in);
}

void write_points_csv(const std::filesystem::path& path, const PointCloud& points) {
  auto out = open_out(path);
  for (int c = 0; c < points.dim(); ++c) out << 'x' << c << ',';
  out << "label\n";
  for (int i = 0; i < points.size(); ++i) {
    for (int c = 0; c < points.dim(); ++c) out << format_double(points.coords(i, c)) << ',';
    out << points.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

void write_matrix_binary(const std::filesystem::path& path, const Matrix& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() || m.cols() > std::numeric_limits<std::uint32_t>::max())
    throw InvalidInput("matrix too large for the binary format");
  auto out = open_out(path, std::ios::binary);
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()), 0};
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  const RowMatrix rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rm.size())));
  if (!out) throw InvalidInput("failed writing " + path.string());
}

Matrix read_matrix_binary(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  std::uint32_t header[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ParseError(path.string() + ": not a DEMD binary matrix");
  RowMatrix rm(header[0], header[1]);
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rm.size())));
  if (!in) throw ParseError(path.string() + ": truncated matrix data");
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path.string() + ": trailing bytes after matrix data");
  return Matrix(rm);
}

std::map<std::string, std::string> parse_key_value(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("line " + std::to_string(row) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ParseError("line " + std::to_string(row) + ": empty key");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_key_value(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return parse_key_value(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::filesystem::path metadata_path(const std::filesystem::path& embedding) {
  return std::filesystem::path(embedding.string() + ".meta");
}

void write_embedding(const std::filesystem::path& path, const MultiscaleEmbedding& embedding) {
  write_matrix_binary(path, embedding.bins);
  auto out = open_out(metadata_path(path));
  const EmbedConfig& c = embedding.config;
  out << "format=demd-embedding\n"
      << "rows=" << embedding.bins.rows() << '\n'
      << "cols=" << embedding.bins.cols() << '\n'
      << "method=" << to_string(c.method) << '\n'
      << "alpha=" << format_double(c.alpha) << '\n'
      << "K=" << c.max_scale << '\n'
      << "J=" << c.cheb_order << '\n'
      << "delta=" << format_double(c.rank_delta) << '\n'
      << "n_scales_kept=" << c.n_scales_kept << '\n'
      << "subsample=" << (c.subsample ? 1 : 0) << '\n'
      << "blocks=" << embedding.blocks.size() << '\n';
  for (std::size_t b = 0; b < embedding.blocks.size(); ++b) {
    const ScaleBlock& blk = embedding.blocks[b];
    const std::string p = "block." + std::to_string(b) + ".";
    out << p << "scale=" << blk.scale << '\n'
        << p << "offset=" << blk.offset << '\n'
        << p << "length=" << blk.length << '\n'
        << p << "weight=" << format_double(blk.weight) << '\n'
        << p << "centers=" << join(blk.centers) << '\n';
  }
  if (!out) throw InvalidInput("failed writing " + metadata_path(path).string());
}

MultiscaleEmbedding read_embedding(const std::filesystem::path& path) {
  MultiscaleEmbedding e;
  e.bins = read_matrix_binary(path);
  const auto meta = metadata_path(path);
  const auto kv = read_key_value(meta);
  if (require(kv, "format", meta) != "demd-embedding") throw ParseError(meta.string() + ": unknown format");
  const std::string where = meta.string();
  if (parse_int(require(kv, "rows", meta), where) != e.bins.rows() || parse_int(require(kv, "cols", meta), where) != e.bins.cols())
    throw ParseError(where + ": shape does not match " + path.string());
  try {
    e.config.method = parse_embed_method(require(kv, "method", meta));
  } catch (const InvalidParameter& err) {
    throw ParseError(where + ": " + err.what());
  }
  e.config.alpha = parse_double(require(kv, "alpha", meta), where);
  e.config.max_scale = static_cast<int>(parse_int(require(kv, "K", meta), where));
  e.config.cheb_order = static_cast<int>(parse_int(require(kv, "J", meta), where));
  e.config.rank_delta = parse_double(require(kv, "delta", meta), where);
  e.config.n_scales_kept = static_cast<int>(parse_int(require(kv, "n_scales_kept", meta), where));
  e.config.subsample = parse_int(require(kv, "subsample", meta), where) != 0;
  const long long blocks = parse_int(require(kv, "blocks", meta), where);
  std::size_t covered = 0;
  for (long long b = 0; b < blocks; ++b) {
    const std::string p = "block." + std::to_string(b) + ".";
    ScaleBlock blk;
    blk.scale = static_cast<int>(parse_int(require(kv, p + "scale", meta), where));
    blk.offset = static_cast<std::size_t>(parse_int(require(kv, p + "offset", meta), where));
    blk.length = static_cast<std::size_t>(parse_int(require(kv, p + "length", meta), where));
    blk.weight = parse_double(require(kv, p + "weight", meta), where);
    const std::string& centers = require(kv, p + "centers", meta);
    if (!centers.empty())
      for (const auto& f : split(centers, ',')) blk.centers.push_back(static_cast<int>(parse_int(f, where)));
    if (blk.offset != covered || blk.centers.size() != blk.length) throw ParseError(where + ": inconsistent block " + std::to_string(b));
    covered += blk.length;
    e.blocks.push_back(std::move(blk));
  }
  if (covered != static_cast<std::size_t>(e.bins.cols())) throw ParseError(where + ": blocks do not cover the embedding");
  return e;
}

void write_distances_csv(const std::filesystem::path& path, const Matrix& distances) {
  auto out = open_out(path);
  for (Eigen::Index j = 0; j < distances.cols(); ++j) out << (j ? "," : "") << j;
  out << '\n';
  for (Eigen::Index i = 0; i < distances.rows(); ++i) {
    for (Eigen::Index j = 0; j < distances.cols(); ++j) out << (j ? "," : "") << format_double(distances(i, j));
    out << '\n';
  }
}

Matrix read_distances_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty distance CSV");
  const auto m = static_cast<Eigen::Index>(split(line, ',').size());
  Matrix d(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::getline(in, line)) throw ParseError(path.string() + ": expected " + std::to_string(m) + " rows");
    const auto fields = split(line, ',');
    if (static_cast<Eigen::Index>(fields.size()) != m) throw ParseError(path.string() + ": row " + std::to_string(i) + " has the wrong width");
    for (Eigen::Index j = 0; j < m; ++j) d(i, j) = parse_double(fields[static_cast<std::size_t>(j)], path.string());
  }
  return d;
}

void write_neighbors_csv(const std::filesystem::path& path, const std::vector<IndexList>& neighbors,
                         const std::vector<std::vector<double>>& distances) {
  if (distances.size() != neighbors.size()) throw InvalidInput("neighbor and distance lists differ in length");
  auto out = open_out(path);
  out << "query,rank,neighbor,distance\n";
  for (std::size_t q = 0; q < neighbors.size(); ++q) {
    if (distances[q].size() != neighbors[q].size()) throw InvalidInput("neighbor and distance lists differ in length");
    for (std::size_t r = 0; r < neighbors[q].size(); ++r)
      out << q << ',' << r + 1 << ',' << neighbors[q][r] << ',' << format_double(distances[q][r]) << '\n';
  }
}

void write_rank_profile_csv(const std::filesystem::path& path, const RankProfile& profile) {
  auto out = open_out(path);
  out << "scale,rank,basis_size\n";
  for (const auto& e : profile.entries) out << e.scale << ',' << e.rank << ',' << e.basis_size << '\n';
}

void write_oracle_csv(const std::filesystem::path& path, const std::vector<OracleRow>& rows) {
  auto out = open_out(path);
  out << "pair_i,pair_j,exact,approx\n";
  for (const auto& r : rows)
    out << r.pair_i << ',' << r.pair_j << ',' << format_double(r.exact) << ',' << format_double(r.approx) << '\n';
}

void write_gradient_csv(const std::filesystem::path& path, const std::vector<GradientReport>& reports) {
  auto out = open_out(path);
  out << "node,coordinate,analytic,numeric,relative_error,tolerance,passed\n";
  for (const auto& r : reports)
    for (Eigen::Index c = 0; c < r.analytic.size(); ++c)
      out << r.node << ',' << c << ',' << format_double(r.analytic(c)) << ',' << format_double(r.numeric(c)) << ','
          << format_double(r.max_relative_error) << ',' << format_double(r.tolerance) << ',' << (r.passed ? 1 : 0) << '\n';
}

}  // namespace demd::io
