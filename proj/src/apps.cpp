#include "edgeinf/apps.hpp"

#include <algorithm>
#include <set>

#include "edgeinf/error.hpp"

namespace edgeinf {

namespace {

bool edit_order(const InfluenceBreakdown& a, const InfluenceBreakdown& b) {
  return a.edit < b.edit;
}

EditPlan select(std::vector<InfluenceBreakdown> pool, int budget, const EvalMetric& metric,
                bool descending) {
  if (pool.empty()) throw Error(ErrorKind::Invalid, "selection over an empty influence list");
  if (budget < 1) throw Error(ErrorKind::Invalid, "selection budget must be >= 1");
  std::stable_sort(pool.begin(), pool.end(), [&](const auto& a, const auto& b) {
    if (a.total != b.total) return descending ? a.total > b.total : a.total < b.total;
    return edit_order(a, b);
  });
  EditPlan plan;
  plan.budget = budget;
  plan.objective = metric;
  std::set<std::pair<int, int>> used;
  for (const auto& b : pool) {
    if (static_cast<int>(plan.selected.size()) >= budget) break;
    if (!used.insert({b.edit.u, b.edit.v}).second) continue;
    plan.selected.push_back(b);
  }
  return plan;
}

}  // namespace

EditPlan attack_select(const std::vector<InfluenceBreakdown>& influences, int budget) {
  return select(influences, budget, EvalMetric::validation_loss(), /*descending=*/true);
}

EditPlan improve_select(const std::vector<InfluenceBreakdown>& influences, int budget,
                        const EvalMetric& metric) {
  // Validation loss improves when it drops; the structural metrics improve
  // when they grow.
  const bool want_negative = metric.kind == MetricKind::ValidationLoss;
  std::vector<InfluenceBreakdown> pool;
  for (const auto& b : influences)
    if (want_negative ? b.total < 0.0 : b.total > 0.0) pool.push_back(b);
  if (pool.empty()) {
    EditPlan plan;
    plan.budget = budget;
    plan.objective = metric;
    return plan;
  }
  return select(std::move(pool), budget, metric, /*descending=*/!want_negative);
}

ScoreTable score_edit_list(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                           const std::vector<CandidateEdit>& edits, const LissaConfig& lissa) {
  ScoreTable table;
  if (edits.empty()) return table;
  for (size_t i = 0; i < edits.size(); ++i) {
    try {
      validate_edit(graph, edits[i]);
    } catch (const Error& e) {
      throw Error(ErrorKind::Invalid, "edit list row " + std::to_string(i) + ": " + e.what());
    }
  }

  InfluenceEngine engine(config, theta_s, graph, edits, lissa);
  const std::vector<EvalMetric> metrics = {EvalMetric::validation_loss(),
                                           EvalMetric::dirichlet_energy(),
                                           EvalMetric::oversquashing()};
  std::vector<std::vector<InfluenceBreakdown>> per_metric;
  for (const auto& m : metrics) per_metric.push_back(engine.score_all(m, edits));

  for (size_t i = 0; i < edits.size(); ++i) {
    for (size_t m = 0; m < metrics.size(); ++m) {
      const InfluenceBreakdown& b = per_metric[m][i];
      table.rows.push_back(b);
      ScoreSummaryCell& cell = table.summary[metrics[m].name()];
      const bool improve =
          metrics[m].kind == MetricKind::ValidationLoss ? b.total < 0.0 : b.total > 0.0;
      if (b.total == 0.0)
        ++cell.zero;
      else if (improve)
        ++cell.improve;
      else
        ++cell.worsen;
    }
  }
  return table;
}

HomophilySummary homophily_summary(const std::vector<InfluenceBreakdown>& influences,
                                   const Graph& graph) {
  struct Acc {
    double sum = 0.0;
    int count = 0;
  };
  std::map<std::string, std::map<std::string, std::map<std::string, Acc>>> acc;
  for (const auto& b : influences) {
    const char* kind = edit_kind_name(b.edit.kind);
    const char* cls = edge_class_name(classify_edge(graph, b.edit.u, b.edit.v));
    Acc& a = acc[kind][cls][b.metric.name()];
    a.sum += b.total;
    a.count += 1;
  }
  HomophilySummary out;
  for (const auto& [kind, by_class] : acc)
    for (const auto& [cls, by_metric] : by_class)
      for (const auto& [metric, a] : by_metric)
        out[kind][cls][metric] = HomophilyCell{a.sum / a.count, a.count};
  return out;
}

}  // namespace edgeinf
