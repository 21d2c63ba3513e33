#include "edgeinf/reports.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "edgeinf/error.hpp"

namespace edgeinf {

using nlohmann::json;
namespace fs = std::filesystem;

std::string content_hash(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016" PRIx64, h);
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ReportWriter::ReportWriter(std::string out_dir) : out_dir_(std::move(out_dir)) {
  std::error_code ec;
  fs::create_directories(out_dir_, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + out_dir_ + ": " + ec.message());
}

std::string ReportWriter::path(const std::string& name) const {
  return (fs::path(out_dir_) / name).string();
}

void ReportWriter::record(const std::string& name) { artifacts_.push_back(name); }

void ReportWriter::write_text(const std::string& name, const std::string& content) {
  std::ofstream out(path(name));
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path(name));
  out << content;
  record(name);
}

void ReportWriter::write_influence_csv(const std::string& name,
                                       const std::vector<InfluenceBreakdown>& rows) {
  std::ostringstream s;
  s << "u,v,kind,metric,param_shift,msg_prop,total\n";
  for (const auto& b : rows) {
    s << b.edit.u << "," << b.edit.v << "," << edit_kind_name(b.edit.kind) << "," << b.metric.name()
      << "," << format_double(b.param_shift) << "," << format_double(b.msg_prop) << ","
      << format_double(b.total) << "\n";
  }
  write_text(name, s.str());
}

void ReportWriter::write_scatter_csv(const std::string& name,
                                     const std::vector<ScatterRecord>& rows) {
  std::ostringstream s;
  s << "u,v,kind,metric,method,predicted,actual\n";
  for (const auto& r : rows) {
    s << r.edit.u << "," << r.edit.v << "," << edit_kind_name(r.edit.kind) << "," << r.metric.name()
      << "," << method_name(r.method) << "," << format_double(r.predicted) << ","
      << format_double(r.actual) << "\n";
  }
  write_text(name, s.str());
}

void ReportWriter::write_plan_csv(const std::string& name, const EditPlan& plan) {
  std::ostringstream s;
  s << "rank,u,v,kind,total\n";
  for (size_t i = 0; i < plan.selected.size(); ++i) {
    const auto& b = plan.selected[i];
    s << (i + 1) << "," << b.edit.u << "," << b.edit.v << "," << edit_kind_name(b.edit.kind) << ","
      << format_double(b.total) << "\n";
  }
  write_text(name, s.str());
}

void ReportWriter::write_homophily_csv(const std::string& name, const HomophilySummary& summary) {
  std::ostringstream s;
  s << "kind,class,metric,mean,count\n";
  for (const auto& [kind, by_class] : summary)
    for (const auto& [cls, by_metric] : by_class)
      for (const auto& [metric, cell] : by_metric)
        s << kind << "," << cls << "," << metric << "," << format_double(cell.mean) << ","
          << cell.count << "\n";
  write_text(name, s.str());
}

void ReportWriter::write_history_csv(const std::string& name,
                                     const std::vector<EpochStats>& history) {
  std::ostringstream s;
  s << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : history)
    s << e.epoch << "," << format_double(e.train_loss) << "," << format_double(e.val_loss) << ","
      << format_double(e.val_acc) << "\n";
  write_text(name, s.str());
}

namespace {

json summary_to_json(const MethodMetricSummary& s) {
  json j;
  j["n"] = s.n;
  j["runtime_s"] = s.runtime_s;
  if (s.ok) {
    j["pearson"] = s.pearson;
    j["spearman"] = s.spearman;
  } else {
    j["pearson"] = nullptr;
    j["spearman"] = nullptr;
    j["note"] = s.note;
  }
  return j;
}

}  // namespace

void ReportWriter::write_verify_summary(const std::string& name, const VerifyResult& result) {
  json j;
  for (const auto& [metric, by_method] : result.summaries)
    for (const auto& [method, s] : by_method) j["metrics"][metric][method] = summary_to_json(s);
  for (const auto& [metric, s] : result.shift_vs_propagation) {
    json d;
    d["n"] = s.n;
    if (s.ok) {
      d["pearson"] = s.pearson;
      d["spearman"] = s.spearman;
    } else {
      d["pearson"] = nullptr;
      d["note"] = s.note;
    }
    j["shift_vs_propagation"][metric] = d;
  }
  j["failures"] = result.failures;
  j["runtime_s"] = result.runtime_s;
  write_text(name, j.dump(2) + "\n");
}

void ReportWriter::write_score_summary(const std::string& name, const ScoreTable& table) {
  json j;
  for (const auto& [metric, cell] : table.summary) {
    j["metrics"][metric] = {
        {"improve", cell.improve}, {"worsen", cell.worsen}, {"zero", cell.zero}};
  }
  j["rows"] = table.rows.size();
  write_text(name, j.dump(2) + "\n");
}

namespace {

// Zeroes runtime fields so hashes are stable across reruns.
void strip_runtime(json& j) {
  if (j.is_object()) {
    for (auto& [key, value] : j.items()) {
      if (key == "runtime_s")
        value = 0.0;
      else
        strip_runtime(value);
    }
  } else if (j.is_array()) {
    for (auto& v : j) strip_runtime(v);
  }
}

}  // namespace

void ReportWriter::finish() {
  json manifest;
  manifest["artifacts"] = json::array();
  for (const auto& name : artifacts_) {
    std::ifstream in(path(name), std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "manifest: cannot reread " + path(name));
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string bytes = buf.str();
    bool normalized = false;
    if (name.size() > 5 && name.substr(name.size() - 5) == ".json") {
      try {
        json j = json::parse(bytes);
        strip_runtime(j);
        bytes = j.dump(2);
        normalized = true;
      } catch (const json::exception&) {
        // keep raw bytes
      }
    }
    json entry;
    entry["path"] = name;
    entry["hash"] = content_hash(bytes);
    if (normalized) entry["normalized"] = true;
    manifest["artifacts"].push_back(entry);
  }
  std::ofstream out(path("manifest.json"));
  if (!out) throw Error(ErrorKind::Io, "cannot write manifest.json");
  out << manifest.dump(2) << "\n";
}

std::vector<CandidateEdit> load_edit_list_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open edit list: " + path);
  std::vector<CandidateEdit> edits;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("u,", 0) == 0) continue;  // header
    std::istringstream ss(line);
    std::string su, sv, sk;
    if (!std::getline(ss, su, ',') || !std::getline(ss, sv, ',') || !std::getline(ss, sk))
      throw Error(ErrorKind::Schema, path + ":" + std::to_string(lineno) + ": expected u,v,kind");
    try {
      edits.push_back(CandidateEdit(std::stoi(su), std::stoi(sv), parse_edit_kind(sk)));
    } catch (const std::exception& e) {
      throw Error(ErrorKind::Schema, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return edits;
}

}  // namespace edgeinf
