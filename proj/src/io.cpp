#include "jsqr/io.hpp"

#include "jsqr/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace jsqr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(v);
}

std::string join_doubles(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v(i));
  }
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  return join_doubles(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (const std::string& f : split(s, ',')) {
    double v;
    if (!parse_double(f, v)) throw DataError("draws header: bad number '" + f + "' in " + what);
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_hash(const std::string& path) { return hex64(fnv1a(read_file(path))); }

CsvTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");
  CsvTable t;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split(trim(line), ',');
    if (!have_header) {
      t.header = fields;
      for (const std::string& h : t.header)
        if (h.empty()) throw DataError(path + ":" + std::to_string(lineno) + ": empty column name in header");
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j)
      if (!parse_double(fields[j], row[j]))
        throw DataError(path + ":" + std::to_string(lineno) + ": column '" + t.header[j] + "' is not a finite number: '" +
                        fields[j] + "'");
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError(path + ":1: empty file, expected a header row");
  return t;
}

Dataset read_dataset(const std::string& path, const RescaleRecord* record) {
  const CsvTable t = read_numeric_csv(path);
  const std::size_t cols = t.header.size();
  if (cols < 4 || t.header.front() != "y" || t.header[cols - 2] != "s1" || t.header[cols - 1] != "s2")
    throw DataError(path + ":1: header must read y, x1..xp, s1, s2");
  if (t.rows.empty()) throw DataError(path + ":2: no observations after the header");
  const Eigen::Index n = static_cast<Eigen::Index>(t.rows.size());
  const int p = static_cast<int>(cols) - 3;
  if (record && record->p() != p)
    throw DataError(path + ":1: expected " + std::to_string(record->p()) + " predictors, found " + std::to_string(p));
  Eigen::VectorXd y(n);
  Eigen::MatrixXd x(n, p);
  Locations s(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::vector<double>& r = t.rows[static_cast<std::size_t>(i)];
    y(i) = r[0];
    for (int j = 0; j < p; ++j) x(i, j) = r[static_cast<std::size_t>(j) + 1];
    s(i, 0) = r[cols - 2];
    s(i, 1) = r[cols - 1];
  }
  Dataset d;
  try {
    d = record ? make_dataset(y, x, s, *record) : make_dataset(y, x, s);
  } catch (const DomainError& e) {
    throw DataError(path + ": " + e.what());
  }
  d.predictor_names.assign(t.header.begin() + 1, t.header.end() - 2);
  return d;
}

void write_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot write file");
  out << "y";
  for (int j = 0; j < data.p(); ++j)
    out << ',' << (j < static_cast<int>(data.predictor_names.size()) ? data.predictor_names[j] : "x" + std::to_string(j + 1));
  out << ",s1,s2\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << format_double(data.y(i));
    for (int j = 0; j < data.p(); ++j) out << ',' << format_double(data.x_raw(i, j));
    out << ',' << format_double(data.s(i, 0)) << ',' << format_double(data.s(i, 1)) << '\n';
  }
}

// ---------------------------------------------------------------------------

void write_draws(const std::string& path, const PosteriorDraws& d, const DrawsHeader& h) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot write file");
  const Eigen::Index n = d.draws.empty() ? 0 : d.draws.front().u.size();
  out << "# jsqr-draws version=" << h.version << '\n';
  out << "# created=" << h.created << '\n';
  out << "# config_hash=" << h.config_hash << '\n';
  out << "# data_hash=" << h.data_hash << '\n';
  out << "# seed=" << h.seed << '\n';
  out << "# copula=" << to_string(d.spec.copula) << '\n';
  out << "# base=" << to_string(d.spec.base) << '\n';
  out << "# nu=" << format_double(d.spec.nu) << '\n';
  out << "# G=" << d.spec.G << '\n';
  out << "# alpha_fixed_zero=" << (d.spec.alpha_fixed_zero ? 1 : 0) << '\n';
  out << "# scale_proportion=" << (d.spec.scale_proportion ? 1 : 0) << '\n';
  out << "# p=" << d.layout.p << '\n';
  out << "# m=" << d.layout.m << '\n';
  out << "# n=" << n << '\n';
  out << "# phi_grid=" << join_doubles(d.phi_grid) << '\n';
  out << "# rescale_lo=" << join_doubles(h.rescale.lo) << '\n';
  out << "# rescale_hi=" << join_doubles(h.rescale.hi) << '\n';
  out << "# phi_rejections=" << d.phi_rejections << '\n';
  for (const BlockDiagnostics& b : d.diagnostics)
    out << "# block=" << b.name << ',' << b.proposals << ',' << b.accepts << ',' << format_double(b.final_log_scale)
        << '\n';

  out << "chain,phi_index,loglik,log_post";
  for (const std::string& name : d.layout.names()) out << ',' << name;
  for (Eigen::Index i = 0; i < n; ++i) out << ",u" << (i + 1);
  out << '\n';
  for (const Draw& dr : d.draws) {
    out << dr.chain << ',' << dr.phi_index << ',' << format_double(dr.loglik) << ',' << format_double(dr.log_post);
    for (Eigen::Index k = 0; k < dr.theta.size(); ++k) out << ',' << format_double(dr.theta(k));
    for (Eigen::Index i = 0; i < dr.u.size(); ++i) out << ',' << format_double(dr.u(i));
    out << '\n';
  }
  if (!out) throw DataError(path + ": write failed");
}

DrawsFile read_draws(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open draws file");
  DrawsFile f;
  std::map<std::string, std::string> meta;
  std::vector<std::string> blocks;
  std::string line;
  int lineno = 0;
  std::vector<std::string> columns;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("# ", 0) == 0) {
      const std::string body = line.substr(2);
      if (body.rfind("jsqr-draws", 0) == 0) {
        const auto eq = body.find("version=");
        if (eq == std::string::npos) throw DataError(path + ":1: missing draws format version");
        f.header.version = std::atoi(body.c_str() + eq + 8);
        continue;
      }
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw DataError(path + ":" + std::to_string(lineno) + ": malformed header line");
      const std::string key = body.substr(0, eq), value = body.substr(eq + 1);
      if (key == "block")
        blocks.push_back(value);
      else
        meta[key] = value;
      continue;
    }
    columns = split(trim(line), ',');
    break;
  }
  if (f.header.version != 1) throw DataError(path + ": unsupported draws format version");
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = meta.find(k);
    if (it == meta.end()) throw DataError(path + ": draws header lacks '" + k + "'");
    return it->second;
  };
  f.header.created = meta.count("created") ? meta["created"] : "";
  f.header.config_hash = need("config_hash");
  f.header.data_hash = need("data_hash");
  f.header.seed = std::strtoull(need("seed").c_str(), nullptr, 10);

  PosteriorDraws& d = f.draws;
  try {
    d.spec.copula = parse_copula_family(need("copula"));
    d.spec.base = parse_base_family(need("base"));
  } catch (const DomainError& e) {
    throw DataError(path + ": " + e.what());
  }
  d.spec.nu = std::strtod(need("nu").c_str(), nullptr);
  d.spec.G = std::atoi(need("G").c_str());
  d.spec.alpha_fixed_zero = need("alpha_fixed_zero") == "1";
  d.spec.scale_proportion = need("scale_proportion") == "1";
  const int p = std::atoi(need("p").c_str());
  const int m = std::atoi(need("m").c_str());
  const Eigen::Index n = std::atol(need("n").c_str());
  d.layout = ParameterLayout::make(p, m, d.spec);
  d.phi_grid = parse_doubles(need("phi_grid"), "phi_grid");
  const std::vector<double> lo = parse_doubles(need("rescale_lo"), "rescale_lo");
  const std::vector<double> hi = parse_doubles(need("rescale_hi"), "rescale_hi");
  f.header.rescale.lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  f.header.rescale.hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  d.phi_rejections = std::atol(meta.count("phi_rejections") ? meta["phi_rejections"].c_str() : "0");
  for (const std::string& b : blocks) {
    const std::vector<std::string> parts = split(b, ',');
    if (parts.size() != 4) throw DataError(path + ": malformed block diagnostics");
    d.diagnostics.push_back({parts[0], std::atol(parts[1].c_str()), std::atol(parts[2].c_str()),
                             std::strtod(parts[3].c_str(), nullptr)});
  }

  const std::vector<std::string> names = d.layout.names();
  const std::size_t expected = 4 + names.size() + static_cast<std::size_t>(n);
  if (columns.size() != expected) throw DataError(path + ":" + std::to_string(lineno) + ": column header does not match the layout");
  for (std::size_t k = 0; k < names.size(); ++k)
    if (columns[4 + k] != names[k]) throw DataError(path + ":" + std::to_string(lineno) + ": unexpected column '" + columns[4 + k] + "'");

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split(trim(line), ',');
    if (fields.size() != expected)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(expected) + " fields");
    std::vector<double> v(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      char* end = nullptr;
      v[j] = std::strtod(fields[j].c_str(), &end);
      if (end != fields[j].c_str() + fields[j].size())
        throw DataError(path + ":" + std::to_string(lineno) + ": bad number in column " + columns[j]);
    }
    Draw dr;
    dr.chain = static_cast<int>(v[0]);
    dr.phi_index = static_cast<std::size_t>(v[1]);
    if (dr.phi_index >= d.phi_grid.size()) throw DataError(path + ":" + std::to_string(lineno) + ": decay index out of range");
    dr.loglik = v[2];
    dr.log_post = v[3];
    dr.theta = Eigen::Map<const Eigen::VectorXd>(v.data() + 4, static_cast<Eigen::Index>(names.size()));
    dr.u = Eigen::Map<const Eigen::VectorXd>(v.data() + 4 + names.size(), n);
    d.draws.push_back(std::move(dr));
  }
  return f;
}

std::string draws_payload(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("# created=", 0) == 0) continue;
    out += line;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

ConfigMap parse_config(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw DataError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw DataError("config line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    cfg[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

ConfigMap read_config(const std::string& path) { return parse_config(read_file(path)); }

}  // namespace jsqr
