#pragma once

#include <map>
#include <string>
#include <vector>

#include "edgeinf/influence.hpp"

namespace edgeinf {

// Ordered edit selection under a budget. Selection is deterministic: ties
// break on (u, v, kind) and duplicate pairs keep their best-ranked entry.
struct EditPlan {
  std::vector<InfluenceBreakdown> selected;
  int budget = 0;
  EvalMetric objective;
};

// Top-k edits by descending predicted validation-loss influence: the edits
// expected to hurt the model the most.
EditPlan attack_select(const std::vector<InfluenceBreakdown>& influences, int budget);

// Edits predicted to improve the metric: most-negative totals for validation
// loss, most-positive totals for Dirichlet energy / over-squashing. Edits on
// the wrong side of zero are excluded, so the plan may be shorter than the
// budget.
EditPlan improve_select(const std::vector<InfluenceBreakdown>& influences, int budget,
                        const EvalMetric& metric);

struct ScoreSummaryCell {
  int improve = 0;
  int worsen = 0;
  int zero = 0;
};

struct ScoreTable {
  std::vector<InfluenceBreakdown> rows;            // |edits| × |metrics|, edit-major
  std::map<std::string, ScoreSummaryCell> summary;  // metric name -> counts
};

// Influence of an externally produced edit list under all three metrics.
// Invalid edits are rejected with the offending row index.
ScoreTable score_edit_list(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                           const std::vector<CandidateEdit>& edits, const LissaConfig& lissa);

struct HomophilyCell {
  double mean = 0.0;
  int count = 0;
};

// (kind, edge class, metric) -> mean predicted influence. Cells with no
// members are absent.
using HomophilySummary = std::map<std::string, std::map<std::string, std::map<std::string, HomophilyCell>>>;

HomophilySummary homophily_summary(const std::vector<InfluenceBreakdown>& influences,
                                   const Graph& graph);

}  // namespace edgeinf
