#include "toc3d/report.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace toc3d::prof {

using nlohmann::json;

ReportFormat parse_report_format(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw UsageError("unknown report format '" + s + "' (expected json or csv)");
}

std::string format_delta(double reduction) {
  const double pct = std::round(-reduction * 1000.0) / 10.0;
  char buf[32];
  if (pct == 0.0) {
    std::snprintf(buf, sizeof buf, "0.0%%");
  } else {
    std::snprintf(buf, sizeof buf, "%+.1f%%", pct);
  }
  return buf;
}

// ---- JSON ----

namespace {

json bench_json(const BenchResult& b) {
  return {{"mean_ms", b.mean_ms}, {"std_ms", b.std_ms},   {"iterations", b.iterations}, {"warmup", b.warmup},
          {"batch", b.batch},     {"digest", b.digest},   {"threads", b.threads},       {"cores", b.cores}};
}

BenchResult bench_from(const json& j) {
  BenchResult b;
  b.mean_ms = j.at("mean_ms").get<double>();
  b.std_ms = j.at("std_ms").get<double>();
  b.iterations = j.at("iterations").get<int>();
  b.warmup = j.at("warmup").get<int>();
  b.batch = j.at("batch").get<int>();
  b.digest = j.at("digest").get<std::string>();
  b.threads = j.at("threads").get<int>();
  b.cores = j.at("cores").get<int>();
  return b;
}

json row_json(const SweepRow& r) {
  json layers = json::array();
  for (const auto& l : r.flops.layers) {
    layers.push_back({{"layer", l.layer},
                      {"tokens", l.tokens},
                      {"attention_macs", l.attention_macs},
                      {"mlp_macs", l.mlp_macs},
                      {"mqts_macs", l.mqts_macs},
                      {"baseline_macs", l.baseline_macs}});
  }
  json flops = {{"baseline_macs", r.flops.baseline_macs},
                {"compressed_macs", r.flops.compressed_macs},
                {"mqts_macs", r.flops.mqts_macs},
                {"reduction", r.flops.reduction},
                {"reduction_with_overhead", r.flops.reduction_with_overhead},
                {"memory_bytes", r.flops.memory_bytes},
                {"layers", layers}};
  json bench = nullptr;
  if (r.bench) {
    bench = {{"baseline", bench_json(r.bench->baseline)},
             {"compressed", bench_json(r.bench->compressed)},
             {"separation_sigma", r.bench->separation_sigma},
             {"max_abs_diff", r.bench->max_abs_diff ? json(*r.bench->max_abs_diff) : json(nullptr)},
             {"output_hash_baseline", r.bench->output_hash_baseline},
             {"output_hash_compressed", r.bench->output_hash_compressed}};
  }
  return {{"update_layers", r.update_layers},
          {"ratios", r.ratios},
          {"n_q", r.n_q},
          {"delta", format_delta(r.flops.reduction)},
          {"flops", flops},
          {"bench", bench},
          {"recall", r.recall ? json(*r.recall) : json(nullptr)},
          {"error", r.error}};
}

SweepRow row_from(const json& j) {
  SweepRow r;
  r.update_layers = j.at("update_layers").get<std::vector<int>>();
  r.ratios = j.at("ratios").get<std::vector<double>>();
  r.n_q = j.at("n_q").get<int>();
  const json& f = j.at("flops");
  r.flops.baseline_macs = f.at("baseline_macs").get<std::int64_t>();
  r.flops.compressed_macs = f.at("compressed_macs").get<std::int64_t>();
  r.flops.mqts_macs = f.at("mqts_macs").get<std::int64_t>();
  r.flops.reduction = f.at("reduction").get<double>();
  r.flops.reduction_with_overhead = f.at("reduction_with_overhead").get<double>();
  r.flops.memory_bytes = f.at("memory_bytes").get<std::int64_t>();
  for (const auto& l : f.at("layers")) {
    r.flops.layers.push_back({l.at("layer").get<int>(), l.at("tokens").get<std::int64_t>(),
                              l.at("attention_macs").get<std::int64_t>(), l.at("mlp_macs").get<std::int64_t>(),
                              l.at("mqts_macs").get<std::int64_t>(), l.at("baseline_macs").get<std::int64_t>()});
  }
  const json& b = j.at("bench");
  if (!b.is_null()) {
    BenchComparison c;
    c.baseline = bench_from(b.at("baseline"));
    c.compressed = bench_from(b.at("compressed"));
    c.separation_sigma = b.at("separation_sigma").get<double>();
    if (!b.at("max_abs_diff").is_null()) c.max_abs_diff = b.at("max_abs_diff").get<double>();
    c.output_hash_baseline = b.at("output_hash_baseline").get<std::string>();
    c.output_hash_compressed = b.at("output_hash_compressed").get<std::string>();
    r.bench = c;
  }
  if (!j.at("recall").is_null()) r.recall = j.at("recall").get<double>();
  r.error = j.at("error").get<std::string>();
  return r;
}

}  // namespace

std::string to_json(const Report& report) {
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back(row_json(r));
  const json doc = {{"schema", "toc3d-report"},
                    {"schema_version", report.schema_version},
                    {"convention", report.convention},
                    {"config_digest", report.config_digest},
                    {"rows", rows}};
  return doc.dump(2) + "\n";
}

Report report_from_json(const std::string& text) {
  const json doc = json::parse(text);
  if (doc.at("schema").get<std::string>() != "toc3d-report") throw ReportIoError("not a toc3d report");
  Report r;
  r.schema_version = doc.at("schema_version").get<int>();
  if (r.schema_version != kReportSchemaVersion) {
    throw ReportIoError("unsupported report schema version " + std::to_string(r.schema_version));
  }
  r.convention = doc.at("convention").get<std::string>();
  r.config_digest = doc.at("config_digest").get<std::string>();
  for (const auto& row : doc.at("rows")) r.rows.push_back(row_from(row));
  return r;
}

// ---- CSV ----

namespace {

const std::vector<std::string> kCsvColumns = {
    "update_layers", "ratios", "n_q", "delta", "baseline_macs", "compressed_macs", "mqts_macs", "reduction",
    "reduction_with_overhead", "memory_bytes", "layers",
    "baseline_mean_ms", "baseline_std_ms", "baseline_iterations", "baseline_warmup", "baseline_batch",
    "baseline_digest", "baseline_threads", "baseline_cores",
    "compressed_mean_ms", "compressed_std_ms", "compressed_iterations", "compressed_warmup", "compressed_batch",
    "compressed_digest", "compressed_threads", "compressed_cores",
    "separation_sigma", "max_abs_diff", "output_hash_baseline", "output_hash_compressed", "recall", "error"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_d(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw ReportIoError("bad number '" + s + "'");
  return v;
}

long long to_ll(const std::string& s) {
  std::size_t used = 0;
  const long long v = std::stoll(s, &used);
  if (used != s.size()) throw ReportIoError("bad integer '" + s + "'");
  return v;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, char sep, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + f(v[i]);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (s.back() == sep) out.emplace_back();
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

// Splits one CSV record; quoted fields may span lines.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool quoted = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

void bench_cells(std::vector<std::string>& cells, const BenchResult& b) {
  cells.insert(cells.end(), {num(b.mean_ms), num(b.std_ms), std::to_string(b.iterations), std::to_string(b.warmup),
                             std::to_string(b.batch), b.digest, std::to_string(b.threads), std::to_string(b.cores)});
}

BenchResult bench_parse(const std::vector<std::string>& c, std::size_t at) {
  BenchResult b;
  b.mean_ms = to_d(c[at]);
  b.std_ms = to_d(c[at + 1]);
  b.iterations = static_cast<int>(to_ll(c[at + 2]));
  b.warmup = static_cast<int>(to_ll(c[at + 3]));
  b.batch = static_cast<int>(to_ll(c[at + 4]));
  b.digest = c[at + 5];
  b.threads = static_cast<int>(to_ll(c[at + 6]));
  b.cores = static_cast<int>(to_ll(c[at + 7]));
  return b;
}

}  // namespace

std::string to_csv(const Report& report) {
  std::ostringstream out;
  out << "# schema_version=" << report.schema_version << '\n';
  out << "# config_digest=" << report.config_digest << '\n';
  out << "# convention=" << report.convention << '\n';
  out << join(kCsvColumns, ',', [](const std::string& s) { return s; }) << '\n';
  for (const auto& r : report.rows) {
    std::vector<std::string> cells;
    cells.push_back(join(r.update_layers, ';', [](int v) { return std::to_string(v); }));
    cells.push_back(join(r.ratios, ';', [](double v) { return num(v); }));
    cells.push_back(std::to_string(r.n_q));
    cells.push_back(format_delta(r.flops.reduction));
    cells.push_back(std::to_string(r.flops.baseline_macs));
    cells.push_back(std::to_string(r.flops.compressed_macs));
    cells.push_back(std::to_string(r.flops.mqts_macs));
    cells.push_back(num(r.flops.reduction));
    cells.push_back(num(r.flops.reduction_with_overhead));
    cells.push_back(std::to_string(r.flops.memory_bytes));
    cells.push_back(join(r.flops.layers, '|', [](const LayerCost& l) {
      return std::to_string(l.layer) + ":" + std::to_string(l.tokens) + ":" + std::to_string(l.attention_macs) +
             ":" + std::to_string(l.mlp_macs) + ":" + std::to_string(l.mqts_macs) + ":" +
             std::to_string(l.baseline_macs);
    }));
    if (r.bench) {
      bench_cells(cells, r.bench->baseline);
      bench_cells(cells, r.bench->compressed);
      cells.push_back(num(r.bench->separation_sigma));
      cells.push_back(r.bench->max_abs_diff ? num(*r.bench->max_abs_diff) : "");
      cells.push_back(r.bench->output_hash_baseline);
      cells.push_back(r.bench->output_hash_compressed);
    } else {
      cells.resize(cells.size() + 20);
    }
    cells.push_back(r.recall ? num(*r.recall) : "");
    cells.push_back(r.error);
    out << join(cells, ',', quote) << '\n';
  }
  return out.str();
}

Report report_from_csv(const std::string& text) {
  std::istringstream in(text);
  Report rep;
  std::string line;
  bool have_version = false;
  while (in.peek() == '#') {
    std::getline(in, line);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(2, eq - 2);
    const std::string value = line.substr(eq + 1);
    if (key == "schema_version") {
      rep.schema_version = static_cast<int>(to_ll(value));
      have_version = true;
    } else if (key == "config_digest") {
      rep.config_digest = value;
    } else if (key == "convention") {
      rep.convention = value;
    }
  }
  if (!have_version) throw ReportIoError("CSV report has no schema_version line");
  if (rep.schema_version != kReportSchemaVersion) {
    throw ReportIoError("unsupported report schema version " + std::to_string(rep.schema_version));
  }
  std::vector<std::string> c;
  if (!read_record(in, c) || c != kCsvColumns) throw ReportIoError("CSV header does not match schema v1");
  while (read_record(in, c)) {
    if (c.size() == 1 && c[0].empty()) continue;
    if (c.size() != kCsvColumns.size()) {
      throw ReportIoError("CSV row has " + std::to_string(c.size()) + " fields, expected " +
                          std::to_string(kCsvColumns.size()));
    }
    SweepRow r;
    for (const auto& s : split(c[0], ';')) r.update_layers.push_back(static_cast<int>(to_ll(s)));
    for (const auto& s : split(c[1], ';')) r.ratios.push_back(to_d(s));
    r.n_q = static_cast<int>(to_ll(c[2]));
    r.flops.baseline_macs = to_ll(c[4]);
    r.flops.compressed_macs = to_ll(c[5]);
    r.flops.mqts_macs = to_ll(c[6]);
    r.flops.reduction = to_d(c[7]);
    r.flops.reduction_with_overhead = to_d(c[8]);
    r.flops.memory_bytes = to_ll(c[9]);
    for (const auto& l : split(c[10], '|')) {
      const auto p = split(l, ':');
      if (p.size() != 6) throw ReportIoError("bad layer cell '" + l + "'");
      r.flops.layers.push_back({static_cast<int>(to_ll(p[0])), to_ll(p[1]), to_ll(p[2]), to_ll(p[3]), to_ll(p[4]),
                                to_ll(p[5])});
    }
    if (!c[11].empty()) {
      BenchComparison b;
      b.baseline = bench_parse(c, 11);
      b.compressed = bench_parse(c, 19);
      b.separation_sigma = to_d(c[27]);
      if (!c[28].empty()) b.max_abs_diff = to_d(c[28]);
      b.output_hash_baseline = c[29];
      b.output_hash_compressed = c[30];
      r.bench = b;
    }
    if (!c[31].empty()) r.recall = to_d(c[31]);
    r.error = c[32];
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ReportIoError("cannot open " + path.string() + " for writing");
  out << (format == ReportFormat::json ? to_json(report) : to_csv(report));
  out.flush();
  if (!out) throw ReportIoError("write failed for " + path.string());
}

Report load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReportIoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const auto ext = path.extension().string();
  try {
    if (ext == ".json") return report_from_json(buf.str());
    if (ext == ".csv") return report_from_csv(buf.str());
  } catch (const json::exception& e) {
    throw ReportIoError(path.string() + ": " + e.what());
  } catch (const ReportIoError& e) {
    throw ReportIoError(path.string() + ": " + e.what());
  } catch (const std::logic_error& e) {
    throw ReportIoError(path.string() + ": " + e.what());
  }
  throw ReportIoError(path.string() + ": unknown report extension '" + ext + "'");
}

}  // namespace toc3d::prof
