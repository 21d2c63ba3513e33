#pragma once

#include <string>
#include <vector>

#include "edgeinf/apps.hpp"
#include "edgeinf/oracle.hpp"
#include "edgeinf/trainer.hpp"

namespace edgeinf {

// Collects artifacts written into one output directory and finishes with a
// manifest.json listing each file and its content hash. Timing fields inside
// summary JSON files are zeroed before hashing so reruns with identical
// inputs produce identical hashes.
class ReportWriter {
 public:
  explicit ReportWriter(std::string out_dir);

  std::string path(const std::string& name) const;

  void write_text(const std::string& name, const std::string& content);
  void write_influence_csv(const std::string& name, const std::vector<InfluenceBreakdown>& rows);
  void write_scatter_csv(const std::string& name, const std::vector<ScatterRecord>& rows);
  void write_plan_csv(const std::string& name, const EditPlan& plan);
  void write_homophily_csv(const std::string& name, const HomophilySummary& summary);
  void write_history_csv(const std::string& name, const std::vector<EpochStats>& history);
  void write_verify_summary(const std::string& name, const VerifyResult& result);
  void write_score_summary(const std::string& name, const ScoreTable& table);

  // Adds a file written by other code (must live under the output directory).
  void record_external(const std::string& name) { record(name); }

  // Writes manifest.json covering everything written so far.
  void finish();

 private:
  void record(const std::string& name);

  std::string out_dir_;
  std::vector<std::string> artifacts_;
};

// FNV-1a 64-bit over the given bytes, hex-encoded.
std::string content_hash(const std::string& bytes);

// Formats a double with full round-trip precision (%.17g).
std::string format_double(double v);

std::vector<CandidateEdit> load_edit_list_csv(const std::string& path);

}  // namespace edgeinf
