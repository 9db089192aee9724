#include "icl/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace icl {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0;
  const auto t = trim(s);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) throw IoError(what + ": '" + s + "' is not a number");
  return v;
}

// Shortest representation that reads back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json matrix_to_json(const Matrix& M) {
  json j;
  j["rows"] = M.rows();
  j["cols"] = M.cols();
  Index nnz = 0;
  for (Index r = 0; r < M.rows(); ++r)
    for (Index c = 0; c < M.cols(); ++c) nnz += M(r, c) != 0;
  // construction weights are very sparse; store triplets unless that is larger
  if (3 * nnz < M.size()) {
    json e = json::array();
    for (Index r = 0; r < M.rows(); ++r)
      for (Index c = 0; c < M.cols(); ++c)
        if (M(r, c) != 0) e.push_back({r, c, M(r, c)});
    j["entries"] = std::move(e);
  } else {
    std::vector<double> data(static_cast<size_t>(M.size()));
    for (Index r = 0; r < M.rows(); ++r)
      for (Index c = 0; c < M.cols(); ++c) data[static_cast<size_t>(r * M.cols() + c)] = M(r, c);
    j["data"] = data;
  }
  return j;
}

double finite_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw IoError(where + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw IoError(where + ": non-finite value");
  return x;
}

Matrix matrix_from_json(const json& j, Index rows, Index cols, const std::string& where) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols")) throw IoError(where + ": matrix needs rows/cols");
  const Index r = j["rows"].get<Index>(), c = j["cols"].get<Index>();
  if ((rows >= 0 && r != rows) || (cols >= 0 && c != cols))
    throw IoError(where + ": shape " + std::to_string(r) + "x" + std::to_string(c) + ", expected " +
                  std::to_string(rows) + "x" + std::to_string(cols));
  if (r < 0 || c < 0) throw IoError(where + ": negative shape");
  Matrix M = Matrix::Zero(r, c);
  if (j.contains("data")) {
    const auto& d = j["data"];
    if (!d.is_array() || static_cast<Index>(d.size()) != r * c) throw IoError(where + ": data has wrong length");
    for (Index i = 0; i < r * c; ++i) M(i / c, i % c) = finite_number(d[static_cast<size_t>(i)], where);
  } else if (j.contains("entries")) {
    for (const auto& e : j["entries"]) {
      if (!e.is_array() || e.size() != 3) throw IoError(where + ": entries must be [row, col, value]");
      const Index a = e[0].get<Index>(), b = e[1].get<Index>();
      if (a < 0 || a >= r || b < 0 || b >= c) throw IoError(where + ": entry index out of range");
      M(a, b) = finite_number(e[2], where);
    }
  } else {
    throw IoError(where + ": matrix needs data or entries");
  }
  return M;
}

json params_json(const TransformerParams& p) {
  json j;
  j["D"] = p.D;
  j["masked"] = p.masked;
  json layers = json::array();
  for (const auto& l : p.layers) {
    json jl;
    jl["heads"] = json::array();
    for (const auto& h : l.heads)
      jl["heads"].push_back({{"Q", matrix_to_json(h.Q)}, {"K", matrix_to_json(h.K)}, {"V", matrix_to_json(h.V)}});
    jl["W1"] = matrix_to_json(l.mlp.W1);
    jl["W2"] = matrix_to_json(l.mlp.W2);
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  return j;
}

TransformerParams params_of(const json& j) {
  if (!j.is_object() || !j.contains("D") || !j.contains("layers")) throw IoError("weights: need D and layers");
  TransformerParams p;
  p.D = j["D"].get<Index>();
  if (p.D < 1) throw IoError("weights: D must be positive");
  p.masked = j.value("masked", false);
  int li = 0;
  for (const auto& jl : j["layers"]) {
    const std::string where = "layer " + std::to_string(li);
    Layer l;
    int hi = 0;
    for (const auto& jh : jl.at("heads")) {
      const std::string hw = where + " head " + std::to_string(hi++);
      l.heads.push_back({matrix_from_json(jh.at("Q"), p.D, p.D, hw + " Q"), matrix_from_json(jh.at("K"), p.D, p.D, hw + " K"),
                         matrix_from_json(jh.at("V"), p.D, p.D, hw + " V")});
    }
    // an absent MLP may be stored as 0x0 or 0xD / Dx0
    const bool no_mlp = jl.at("W1").is_object() && jl.at("W1").value("rows", Index{-1}) == 0;
    if (no_mlp) {
      matrix_from_json(jl.at("W2"), -1, 0, where + " W2");
      l.mlp.W1.resize(0, p.D);
      l.mlp.W2.resize(p.D, 0);
    } else {
      l.mlp.W1 = matrix_from_json(jl.at("W1"), -1, p.D, where + " W1");
      l.mlp.W2 = matrix_from_json(jl.at("W2"), p.D, l.mlp.W1.rows(), where + " W2");
    }
    p.layers.push_back(std::move(l));
    ++li;
  }
  return p;
}

json report_json(const ConstructionReport& r) {
  json j;
  j["kind"] = r.kind;
  j["layers"] = r.layers;
  j["heads"] = r.heads;
  j["hidden"] = r.hidden;
  j["op_norm"] = r.op_norm;
  j["norm_bound"] = r.norm_bound;
  j["bound_formula"] = r.bound_formula;
  j["values"] = r.values;
  return j;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(what + ": " + e.what());
  }
}

template <class F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw IoError(what + ": " + e.what());
  }
}

}  // namespace

// ---- config ----

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  c.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(origin + ":" + std::to_string(no) + ": expected key=value, got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw IoError(origin + ":" + std::to_string(no) + ": empty key");
    c.kv_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::string& path) { return parse(read_file(path), path); }

std::string Config::str(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw IoError(origin_ + ": missing key '" + key + "'");
  used_[key] = true;
  return it->second;
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
  return has(key) ? str(key) : fallback;
}

double Config::num(const std::string& key) const { return parse_double(str(key), origin_ + ": " + key); }

double Config::num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }

long Config::integer(const std::string& key) const {
  const double v = num(key);
  if (v != std::floor(v) || std::abs(v) > 1e15) throw IoError(origin_ + ": " + key + " must be an integer");
  return static_cast<long>(v);
}

long Config::integer(const std::string& key, long fallback) const { return has(key) ? integer(key) : fallback; }

bool Config::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto v = str(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw IoError(origin_ + ": " + key + " must be true/false");
}

std::vector<double> Config::nums(const std::string& key) const {
  std::vector<double> out;
  std::istringstream in(str(key));
  std::string item;
  while (std::getline(in, item, ','))
    if (!trim(item).empty()) out.push_back(parse_double(item, origin_ + ": " + key));
  return out;
}

std::vector<double> Config::nums(const std::string& key, const std::vector<double>& fallback) const {
  return has(key) ? nums(key) : fallback;
}

std::vector<std::string> Config::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv_)
    if (k.rfind(prefix, 0) == 0) out.push_back(k.substr(prefix.size()));
  return out;
}

void Config::check_all_used() const {
  for (const auto& [k, v] : kv_)
    if (!used_.count(k)) throw IoError(origin_ + ": unknown key '" + k + "'");
}

// ---- weights ----

std::string params_to_json(const TransformerParams& p, int indent) { return params_json(p).dump(indent); }

TransformerParams params_from_json(const std::string& text) {
  const json j = parse_json(text, "weights");
  return guarded("weights", [&] { return params_of(j); });
}

std::string report_to_json(const ConstructionReport& r, int indent) { return report_json(r).dump(indent); }

void save_weights(const std::string& path, const WeightDoc& doc) {
  json j = params_json(doc.params);
  json slots = json::array();
  for (const auto& s : doc.layout.slots) slots.push_back({{"name", s.name}, {"begin", s.begin}, {"size", s.size}});
  j["layout"] = {{"D", doc.layout.D}, {"d", doc.layout.d}, {"slots", slots}};
  j["report"] = report_json(doc.report);
  j["config"] = doc.config;
  write_file(path, j.dump());
}

WeightDoc load_weights(const std::string& path) {
  const json j = parse_json(read_file(path), path);
  return guarded(path, [&] {
    WeightDoc doc;
    doc.params = params_of(j);
    if (j.contains("layout")) {
      const auto& L = j["layout"];
      doc.layout.D = L.at("D").get<Index>();
      doc.layout.d = L.at("d").get<Index>();
      for (const auto& s : L.at("slots")) {
        Slot slot{s.at("name").get<std::string>(), s.at("begin").get<Index>(), s.at("size").get<Index>()};
        if (slot.begin < 0 || slot.size < 0 || slot.begin + slot.size > doc.params.D)
          throw IoError(path + ": slot '" + slot.name + "' outside the token");
        doc.layout.slots.push_back(slot);
      }
      if (doc.layout.D != doc.params.D) throw IoError(path + ": layout D differs from weights D");
    }
    if (j.contains("report")) {
      const auto& r = j["report"];
      doc.report.kind = r.value("kind", "");
      doc.report.layers = r.value("layers", Index{0});
      doc.report.heads = r.value("heads", std::vector<Index>{});
      doc.report.hidden = r.value("hidden", std::vector<Index>{});
      doc.report.op_norm = r.value("op_norm", 0.0);
      doc.report.norm_bound = r.value("norm_bound", 0.0);
      doc.report.bound_formula = r.value("bound_formula", "");
      doc.report.values = r.value("values", std::map<std::string, double>{});
    }
    if (j.contains("config")) doc.config = j["config"].get<std::map<std::string, std::string>>();
    return doc;
  });
}

// ---- instances ----

std::string instance_to_json(const IclInstance& inst) {
  json j;
  json xs = json::array();
  for (Index i = 0; i < inst.N(); ++i) {
    std::vector<double> row;
    for (Index c = 0; c < inst.d(); ++c) row.push_back(inst.xs(i, c));
    xs.push_back(row);
  }
  j["d"] = inst.d();
  j["xs"] = xs;
  j["ys"] = std::vector<double>(inst.ys.data(), inst.ys.data() + inst.ys.size());
  j["x_query"] = std::vector<double>(inst.x_query.data(), inst.x_query.data() + inst.x_query.size());
  if (inst.y_query) j["y_query"] = *inst.y_query;
  if (!inst.split.empty()) j["split"] = inst.split;
  return j.dump();
}

IclInstance instance_from_json(const std::string& text) {
  const json j = parse_json(text, "instance");
  return guarded("instance", [&] {
    IclInstance inst;
    const auto& xs = j.at("xs");
    const auto xq = j.at("x_query").get<std::vector<double>>();
    const Index d = j.contains("d") ? j["d"].get<Index>() : static_cast<Index>(xq.size());
    const Index N = static_cast<Index>(xs.size());
    inst.xs.resize(N, d);
    for (Index i = 0; i < N; ++i) {
      const auto& row = xs[static_cast<size_t>(i)];
      if (static_cast<Index>(row.size()) != d) throw IoError("instance: row " + std::to_string(i) + " has wrong length");
      for (Index c = 0; c < d; ++c) inst.xs(i, c) = finite_number(row[static_cast<size_t>(c)], "instance xs");
    }
    const auto& ys = j.at("ys");
    if (static_cast<Index>(ys.size()) != N) throw IoError("instance: ys length differs from xs");
    inst.ys.resize(N);
    for (Index i = 0; i < N; ++i) inst.ys(i) = finite_number(ys[static_cast<size_t>(i)], "instance ys");
    if (static_cast<Index>(xq.size()) != d) throw IoError("instance: x_query has wrong length");
    inst.x_query = Eigen::Map<const Vector>(xq.data(), d);
    if (j.contains("y_query")) inst.y_query = finite_number(j["y_query"], "instance y_query");
    if (j.contains("split")) inst.split = j["split"].get<std::vector<int>>();
    try {
      validate(inst);
    } catch (const std::exception& e) {
      throw IoError(std::string("instance: ") + e.what());
    }
    return inst;
  });
}

// ---- relu reps ----

std::string rep_to_json(const SumOfRelus& rep) {
  json j;
  j["k"] = rep.k;
  j["R"] = rep.R;
  j["eps"] = rep.eps;
  j["grid"] = rep.grid;
  j["exact"] = rep.exact;
  json terms = json::array();
  for (const auto& t : rep.terms)
    terms.push_back({{"c", t.c}, {"a", std::vector<double>(t.a.data(), t.a.data() + t.a.size())}});
  j["terms"] = terms;
  return j.dump();
}

SumOfRelus rep_from_json(const std::string& text) {
  const json j = parse_json(text, "relu rep");
  return guarded("relu rep", [&] {
    SumOfRelus rep;
    rep.k = j.at("k").get<int>();
    rep.R = finite_number(j.at("R"), "rep R");
    rep.eps = finite_number(j.at("eps"), "rep eps");
    rep.grid = j.value("grid", 0);
    rep.exact = j.value("exact", false);
    for (const auto& t : j.at("terms")) {
      const auto a = t.at("a").get<std::vector<double>>();
      if (static_cast<int>(a.size()) != rep.k + 1) throw IoError("relu rep: direction has wrong length");
      ReluTerm term;
      term.c = finite_number(t.at("c"), "rep c");
      term.a = Eigen::Map<const Vector>(a.data(), rep.k + 1);
      if (!term.a.allFinite()) throw IoError("relu rep: non-finite direction");
      rep.terms.push_back(term);
    }
    return rep;
  });
}

// ---- csv ----

void RiskReport::sort() {
  std::stable_sort(rows.begin(), rows.end(), [](const RiskRow& a, const RiskRow& b) {
    return std::tie(a.task, a.method) < std::tie(b.task, b.method);
  });
}

std::string emit_csv(RiskReport report) {
  report.sort();
  std::string out = "task,method,N_used,risk_mean,half_width,n_mc,seed\n";
  for (const auto& r : report.rows) {
    for (const auto& field : {r.task, r.method})
      if (field.find_first_of(",\"\n") != std::string::npos) throw IoError("csv: field '" + field + "' needs quoting");
    out += r.task + ',' + r.method + ',' + std::to_string(r.N_used) + ',' + fmt_double(r.risk_mean) + ',' +
           fmt_double(r.half_width) + ',' + std::to_string(r.n_mc) + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

RiskReport parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "task,method,N_used,risk_mean,half_width,n_mc,seed")
    throw IoError("csv: missing or unexpected header");
  RiskReport rep;
  int no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string item;
    while (std::getline(ls, item, ',')) f.push_back(item);
    if (f.size() != 7) throw IoError("csv line " + std::to_string(no) + ": expected 7 fields");
    RiskRow r;
    r.task = f[0];
    r.method = f[1];
    const std::string where = "csv line " + std::to_string(no);
    r.N_used = static_cast<Index>(parse_double(f[2], where));
    r.risk_mean = parse_double(f[3], where);
    r.half_width = parse_double(f[4], where);
    r.n_mc = static_cast<Index>(parse_double(f[5], where));
    r.seed = std::stoull(trim(f[6]));
    if (r.half_width < 0) throw IoError(where + ": negative half width");
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace icl
