#pragma once

#include <map>
#include <string>
#include <vector>

#include "edgeinf/influence.hpp"
#include "edgeinf/trainer.hpp"

namespace edgeinf {

enum class Method { Ours, Gif };
const char* method_name(Method m);

struct ScatterRecord {
  CandidateEdit edit;
  EvalMetric metric;
  Method method = Method::Ours;
  double predicted = 0.0;
  double actual = 0.0;
};

struct CorrelationResult {
  double pearson = 0.0;
  double spearman = 0.0;
  int n = 0;
};

// Throws ErrorKind::Invalid when n < 3 or either coordinate has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);
CorrelationResult correlation(const std::vector<ScatterRecord>& records);

// Ground-truth influence for the response-function oracle: fine-tune from
// theta_s against the edit (eps taken from config, normally −1/N), then
// measure f on the edited graph with structure-dependent internals recomputed.
double actual_influence_ours(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                             const EvalMetric& metric, const CandidateEdit& edit,
                             const PbrfConfig& pbrf);

// Ground-truth influence for the retraining oracle: train on the edited graph
// from the original initialization and compare against f(theta_s, graph).
double actual_influence_gif(const GcnConfig& config, const GcnParams& theta_init,
                            const GcnParams& theta_s, const Graph& graph, const EvalMetric& metric,
                            const CandidateEdit& edit, const TrainConfig& train_config);

struct MethodMetricSummary {
  bool ok = false;
  double pearson = 0.0;
  double spearman = 0.0;
  int n = 0;
  double runtime_s = 0.0;
  std::string note;  // set when correlations are unavailable
};

struct VerifyConfig {
  std::vector<EvalMetric> metrics;
  LissaConfig lissa;
  PbrfConfig pbrf;       // eps is overridden per run with −1/N
  TrainConfig retrain;   // original training settings, drives the gif oracle
  bool with_gif = true;
};

struct VerifyResult {
  std::vector<ScatterRecord> records;
  std::vector<InfluenceBreakdown> breakdowns;  // ours, per (metric, edit)
  // metric name -> method name -> summary
  std::map<std::string, std::map<std::string, MethodMetricSummary>> summaries;
  // metric name -> Pearson between the two prediction components
  std::map<std::string, MethodMetricSummary> shift_vs_propagation;
  std::vector<std::string> failures;  // one line per failed (edit) oracle run
  double runtime_s = 0.0;
};

// Predicted influence (both methods) and matching oracle measurements for
// every (metric, edit) pair; per-edit failures are collected, not fatal.
VerifyResult verify_run(const GcnConfig& config, const GcnParams& theta_s,
                        const GcnParams& theta_init, const Graph& graph,
                        const std::vector<CandidateEdit>& edits, const VerifyConfig& vconfig);

}  // namespace edgeinf
