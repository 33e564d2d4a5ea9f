#include "rsclust/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "rsclust/errors.hpp"

namespace rsclust {

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string at_line(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io_error, "cannot open " + path.string());
  return in;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path tmp =
      dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io_error, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) fail(ErrorKind::io_error, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::io_error, "cannot rename into " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  double value = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (t.empty() || ec != std::errc() || ptr != last) {
    fail(ErrorKind::invalid_input, where + ": cannot parse number '" + t + "'");
  }
  return value;
}

// ---------------------------------------------------------------- data

DataMatrix parse_data_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) {
      header = split(line);
      break;
    }
  }
  if (header.size() < 2) {
    fail(ErrorKind::invalid_input,
         at_line(source, lineno) + ": header needs an id column and at least one variable");
  }
  const std::size_t V = header.size() - 1;
  std::vector<std::string> names;
  for (std::size_t v = 1; v < header.size(); ++v) names.push_back(trim(header[v]));

  std::vector<std::vector<double>> columns;
  std::vector<int> unit_of;
  std::vector<std::string> ids;
  std::map<std::string, int> id_index;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    const std::string where = at_line(source, lineno);
    if (cells.size() != header.size()) {
      fail(ErrorKind::invalid_input, where + ": expected " + std::to_string(header.size()) +
                                         " fields, found " + std::to_string(cells.size()));
    }
    const std::string id = trim(cells[0]);
    if (id.empty()) fail(ErrorKind::invalid_input, where + ": empty observation id");
    auto [it, inserted] = id_index.emplace(id, static_cast<int>(ids.size()));
    if (inserted) ids.push_back(id);
    std::vector<double> col(V);
    for (std::size_t v = 0; v < V; ++v) {
      col[v] = parse_double(cells[v + 1], where);
      if (!std::isfinite(col[v])) {
        fail(ErrorKind::invalid_input, where + ": missing or non-finite value");
      }
    }
    columns.push_back(std::move(col));
    unit_of.push_back(it->second);
  }
  if (columns.empty()) fail(ErrorKind::invalid_input, source + ": no data rows");
  Eigen::MatrixXd values(static_cast<Eigen::Index>(V), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t v = 0; v < V; ++v) {
      values(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c)) = columns[c][v];
    }
  }
  return DataMatrix(std::move(values), std::move(unit_of), std::move(ids), std::move(names));
}

DataMatrix read_data_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  return parse_data_csv(in, path.string());
}

std::string format_data_csv(const DataMatrix& data) {
  std::string out = "id";
  for (const auto& name : data.variable_names()) out += "," + name;
  out += "\n";
  for (int c = 0; c < data.num_columns(); ++c) {
    out += data.observation_ids()[static_cast<std::size_t>(data.unit_of(c))];
    for (int v = 0; v < data.num_variables(); ++v) {
      out += "," + format_double(data.values()(v, c));
    }
    out += "\n";
  }
  return out;
}

void write_data_csv(const fs::path& path, const DataMatrix& data) {
  write_file_atomic(path, format_data_csv(data));
}

// ---------------------------------------------------------------- hyper

HyperFile parse_hyper(std::istream& in, const std::string& source) {
  std::map<std::string, double> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const std::string where = at_line(source, lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::invalid_input, where + ": expected name=value");
    const std::string key = trim(line.substr(0, eq));
    bool known = false;
    for (const char* name : kHyperNames) {
      known = known || key == name || key == std::string(name) + "_se";
    }
    if (!known) fail(ErrorKind::invalid_input, where + ": unknown key '" + key + "'");
    if (!kv.emplace(key, parse_double(line.substr(eq + 1), where)).second) {
      fail(ErrorKind::invalid_input, where + ": duplicate key '" + key + "'");
    }
  }
  auto pick = [&](const std::string& suffix, bool required) -> std::optional<HyperParams> {
    std::array<double, 5> x{};
    int found = 0;
    for (std::size_t k = 0; k < kHyperNames.size(); ++k) {
      auto it = kv.find(kHyperNames[k] + suffix);
      if (it != kv.end()) {
        x[k] = it->second;
        ++found;
      }
    }
    if (found == 0 && !required) return std::nullopt;
    if (found != 5) {
      fail(ErrorKind::invalid_input,
           source + ": need all five hyperparameters" + (suffix.empty() ? "" : " for " + suffix));
    }
    return HyperParams{x[0], x[1], x[2], x[3], x[4]};
  };
  HyperFile out;
  out.hyper = *pick("", true);
  out.hyper.validate();
  out.standard_errors = pick("_se", false);
  return out;
}

HyperFile read_hyper(const fs::path& path) {
  std::ifstream in = open_in(path);
  return parse_hyper(in, path.string());
}

std::string format_hyper(const HyperParams& hyper, const HyperParams* se) {
  const std::array<double, 5> x{hyper.mu, hyper.sigma2, hyper.sigma2_eta, hyper.sigma2_theta,
                                hyper.p};
  std::string out;
  for (std::size_t k = 0; k < x.size(); ++k) {
    out += std::string(kHyperNames[k]) + "=" + format_double(x[k]) + "\n";
  }
  if (se != nullptr) {
    const std::array<double, 5> s{se->mu, se->sigma2, se->sigma2_eta, se->sigma2_theta, se->p};
    for (std::size_t k = 0; k < s.size(); ++k) {
      out += std::string(kHyperNames[k]) + "_se=" + format_double(s[k]) + "\n";
    }
  }
  return out;
}

void write_hyper(const fs::path& path, const HyperParams& hyper, const HyperParams* se) {
  write_file_atomic(path, format_hyper(hyper, se));
}

// ---------------------------------------------------------------- trace

Trace parse_trace(std::istream& in, const std::string& source) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = at_line(source, lineno);
    if (!line.empty() && line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      trace.meta[trim(line.substr(1, eq - 1))] = trim(line.substr(eq + 1));
      continue;
    }
    if (trim(line).empty()) continue;
    if (!header_seen) {
      if (trim(line) != "iteration,state,log_post") {
        fail(ErrorKind::invalid_input, where + ": expected header iteration,state,log_post");
      }
      header_seen = true;
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != 3) fail(ErrorKind::invalid_input, where + ": expected 3 fields");
    const StateKey key(trim(cells[1]));
    try {
      key.allocation();
    } catch (const Error& e) {
      fail(ErrorKind::invalid_input, where + ": " + e.what());
    }
    try {
      trace.push(key, parse_double(cells[2], where));
    } catch (const Error& e) {
      fail(ErrorKind::invalid_input, where + ": " + e.what());
    }
  }
  if (!header_seen) fail(ErrorKind::invalid_input, source + ": missing trace header");
  return trace;
}

Trace read_trace(const fs::path& path) {
  std::ifstream in = open_in(path);
  return parse_trace(in, path.string());
}

void write_trace(const fs::path& path, const Trace& trace) {
  std::string out;
  for (const auto& [k, v] : trace.meta) out += "# " + k + "=" + v + "\n";
  out += "iteration,state,log_post\n";
  std::vector<std::string> lp;
  lp.reserve(trace.num_distinct());
  for (double x : trace.distinct_log_post()) lp.push_back(format_double(x));
  const auto& keys = trace.distinct_states();
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto s = trace.state_index(t);
    out += std::to_string(t + 1);
    out += ',';
    out += keys[s].str();
    out += ',';
    out += lp[s];
    out += '\n';
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------- mass table

MassTable read_mass_table(const fs::path& path) {
  std::ifstream in = open_in(path);
  MassTable table;
  bool have_z = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = at_line(path.string(), lineno);
    if (!line.empty() && line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos && trim(line.substr(1, eq - 1)) == "log_Z") {
        table.log_Z = parse_double(line.substr(eq + 1), where);
        have_z = true;
      }
      continue;
    }
    if (trim(line).empty() || trim(line) == "state,log_mass") continue;
    const auto cells = split(line);
    if (cells.size() != 2) fail(ErrorKind::invalid_input, where + ": expected 2 fields");
    table.states.emplace_back(trim(cells[0]));
    table.log_mass.push_back(parse_double(cells[1], where));
  }
  if (!have_z) fail(ErrorKind::invalid_input, path.string() + ": missing log_Z header");
  return table;
}

void write_mass_table(const fs::path& path, const MassTable& table) {
  std::string out = "# log_Z=" + format_double(table.log_Z) + "\nstate,log_mass\n";
  for (std::size_t s = 0; s < table.size(); ++s) {
    out += table.states[s].str() + "," + format_double(table.log_mass[s]) + "\n";
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------- fixture

ChainFixture read_fixture(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<StateKey> states;
  std::vector<int> island;
  std::vector<std::vector<double>> rows;
  std::vector<double> pi;
  std::size_t width = 0;
  std::size_t first = 2;  // first transition column; 3 when a pi column is present
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = at_line(path.string(), lineno);
    const auto cells = split(line);
    if (width == 0) {
      if (cells.size() < 3 || trim(cells[0]) != "state" || trim(cells[1]) != "island") {
        fail(ErrorKind::invalid_input, where + ": expected header state,island[,pi],<states>");
      }
      if (trim(cells[2]) == "pi") first = 3;
      width = cells.size();
      continue;
    }
    if (cells.size() != width) fail(ErrorKind::invalid_input, where + ": wrong field count");
    states.emplace_back(trim(cells[0]));
    island.push_back(static_cast<int>(parse_double(cells[1], where)));
    if (first == 3) pi.push_back(parse_double(cells[2], where));
    std::vector<double> row;
    for (std::size_t c = first; c < cells.size(); ++c) row.push_back(parse_double(cells[c], where));
    rows.push_back(std::move(row));
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (m == 0 || static_cast<std::size_t>(m) + first != width) {
    fail(ErrorKind::invalid_input, path.string() + ": transition matrix is not square");
  }
  Eigen::MatrixXd P(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      P(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  ChainFixture f = pi.empty() ? make_fixture(std::move(states), std::move(P))
                              : make_fixture(std::move(states), std::move(P),
                                             Eigen::Map<Eigen::VectorXd>(pi.data(), m));
  if (std::all_of(island.begin(), island.end(), [](int x) { return x >= 0; })) {
    f.island = std::move(island);
  }
  return f;
}

void write_fixture(const fs::path& path, const ChainFixture& fixture) {
  std::string out = "state,island,pi";
  for (const auto& s : fixture.states) out += "," + s.str();
  out += "\n";
  for (std::size_t i = 0; i < fixture.states.size(); ++i) {
    out += fixture.states[i].str() + "," +
           std::to_string(fixture.island.empty() ? -1 : fixture.island[i]) + "," +
           format_double(fixture.pi(static_cast<Eigen::Index>(i)));
    for (std::size_t j = 0; j < fixture.states.size(); ++j) {
      out += "," + format_double(fixture.P(static_cast<Eigen::Index>(i),
                                           static_cast<Eigen::Index>(j)));
    }
    out += "\n";
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------- consensus

std::string format_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& ids) {
  if (static_cast<Eigen::Index>(ids.size()) != m.rows() || m.rows() != m.cols()) {
    fail(ErrorKind::invalid_input, "matrix and id list sizes differ");
  }
  std::string out = "id";
  for (const auto& id : ids) out += "," + id;
  out += "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += "," + format_double(m(i, j));
    out += "\n";
  }
  return out;
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path, std::vector<std::string>* ids) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> row_ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = at_line(path.string(), lineno);
    const auto cells = split(line);
    if (header.empty()) {
      header = cells;
      continue;
    }
    if (cells.size() != header.size()) fail(ErrorKind::invalid_input, where + ": wrong field count");
    row_ids.push_back(trim(cells[0]));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_double(cells[c], where));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (header.empty() || static_cast<std::size_t>(n) + 1 != header.size()) {
    fail(ErrorKind::invalid_input, path.string() + ": matrix is not square");
  }
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  if (ids != nullptr) *ids = std::move(row_ids);
  return m;
}

void write_consensus(const fs::path& dir, const std::string& stem,
                     const ConsensusMatrix& consensus, const std::vector<std::string>& ids) {
  write_file_atomic(dir / (stem + ".csv"), format_matrix_csv(consensus.rho, ids));
  if (consensus.se.size() > 0) {
    write_file_atomic(dir / (stem + "_se.csv"), format_matrix_csv(consensus.se, ids));
  }
}

void write_consensus_pairs(const fs::path& path, const ConsensusMatrix& consensus,
                           const std::vector<std::string>& ids, double rho_min) {
  struct Pair {
    int i, j;
    double rho;
  };
  std::vector<Pair> pairs;
  const auto n = static_cast<int>(consensus.rho.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (consensus.rho(i, j) > rho_min) pairs.push_back({i, j, consensus.rho(i, j)});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& a, const Pair& b) { return a.rho > b.rho; });
  const bool have_se = consensus.se.size() > 0;
  std::string out = have_se ? "obs_i,obs_j,rho,se\n" : "obs_i,obs_j,rho\n";
  for (const auto& p : pairs) {
    out += ids[static_cast<std::size_t>(p.i)] + "," + ids[static_cast<std::size_t>(p.j)] + "," +
           format_double(p.rho);
    if (have_se) out += "," + format_double(consensus.se(p.i, p.j));
    out += "\n";
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------- tours

void write_tours(const fs::path& path, const Tours& tours) {
  std::string out = "r,tau_r,N_r\n";
  for (std::size_t r = 0; r < tours.tau.size(); ++r) {
    out += std::to_string(r) + "," + std::to_string(tours.tau[r]) + ",";
    if (r > 0) out += std::to_string(tours.lengths[r - 1]);
    out += "\n";
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------- json

std::string diagnostic_json(const DiagnosticResult& result, int indent) {
  using nlohmann::json;
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  json sigma = json::array();
  for (Eigen::Index i = 0; i < result.sigma_hat.rows(); ++i) {
    sigma.push_back(vec(result.sigma_hat.row(i).transpose()));
  }
  json j;
  j["K"] = result.K;
  j["R"] = result.R;
  j["dof"] = result.dof;
  j["t2"] = result.t2;
  j["t2_projection"] = result.t2_projection;
  j["p_value"] = result.p_value;
  j["z_inv_hat"] = result.z_inv_hat;
  j["log_z_inv_hat"] = result.log_z_inv_hat;
  j["condition_number"] = result.condition_number;
  j["g_bar"] = vec(result.g_bar);
  j["weights"] = vec(result.weights);
  j["sigma_hat"] = sigma;
  j["unvisited"] = result.unvisited;
  j["warnings"] = result.warnings;
  return j.dump(indent);
}

}  // namespace rsclust
