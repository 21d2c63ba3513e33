#include "edgeinf/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "edgeinf/error.hpp"
#include "edgeinf/log.hpp"

namespace edgeinf {

const char* method_name(Method m) { return m == Method::Ours ? "ours" : "gif"; }

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::vector<double> ranks_with_ties(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;  // average of 1-based ranks i+1..j+1
    for (int k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::Invalid, "correlation inputs differ in length");
  const int n = static_cast<int>(x.size());
  if (n < 3) throw Error(ErrorKind::Invalid, "correlation requires at least 3 points");
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw Error(ErrorKind::Invalid, "correlation undefined: a coordinate has zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks_with_ties(x), ranks_with_ties(y));
}

CorrelationResult correlation(const std::vector<ScatterRecord>& records) {
  std::vector<double> p, a;
  p.reserve(records.size());
  a.reserve(records.size());
  for (const auto& r : records) {
    if (!std::isfinite(r.predicted) || !std::isfinite(r.actual))
      throw Error(ErrorKind::Numeric, "scatter record contains a non-finite value");
    p.push_back(r.predicted);
    a.push_back(r.actual);
  }
  CorrelationResult out;
  out.n = static_cast<int>(records.size());
  out.pearson = pearson(p, a);
  out.spearman = spearman(p, a);
  return out;
}

double actual_influence_ours(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                             const EvalMetric& metric, const CandidateEdit& edit,
                             const PbrfConfig& pbrf) {
  PbrfResult ft = pbrf_finetune(graph, config, theta_s, edit, pbrf);
  Graph edited = apply_edit(graph, edit);
  return eval_metric(metric, config, ft.params, edited) - eval_metric(metric, config, theta_s, graph);
}

double actual_influence_gif(const GcnConfig& config, const GcnParams& theta_init,
                            const GcnParams& theta_s, const Graph& graph, const EvalMetric& metric,
                            const CandidateEdit& edit, const TrainConfig& train_config) {
  Graph edited = apply_edit(graph, edit);
  TrainResult tr = retrain_plain(edited, config, theta_init, train_config);
  return eval_metric(metric, config, tr.params, edited) - eval_metric(metric, config, theta_s, graph);
}

VerifyResult verify_run(const GcnConfig& config, const GcnParams& theta_s,
                        const GcnParams& theta_init, const Graph& graph,
                        const std::vector<CandidateEdit>& edits, const VerifyConfig& vconfig) {
  if (vconfig.metrics.empty()) throw Error(ErrorKind::Invalid, "verify requires at least one metric");
  const double t_start = now_s();

  VerifyResult result;
  const int n_edits = static_cast<int>(edits.size());
  const int n_metrics = static_cast<int>(vconfig.metrics.size());

  // Predictions: one engine, one solve per (method, metric), shared edit scan.
  InfluenceEngine engine(config, theta_s, graph, edits, vconfig.lissa);
  std::vector<std::vector<InfluenceBreakdown>> ours_pred(n_metrics);
  std::vector<std::vector<double>> gif_pred(n_metrics);
  std::vector<double> pred_time_ours(n_metrics, 0.0), pred_time_gif(n_metrics, 0.0);
  std::vector<double> base(n_metrics, 0.0);
  for (int m = 0; m < n_metrics; ++m) {
    double t0 = now_s();
    ours_pred[m] = engine.score_all(vconfig.metrics[m], edits);
    pred_time_ours[m] = now_s() - t0;
    base[m] = engine.metric_base_value(vconfig.metrics[m]);
    if (vconfig.with_gif) {
      t0 = now_s();
      gif_pred[m] = engine.gif_score_all(vconfig.metrics[m], edits);
      pred_time_gif[m] = now_s() - t0;
    }
  }

  // Oracles: one fine-tune and (optionally) one retrain per edit, every metric
  // measured on the resulting parameters.
  PbrfConfig pbrf = vconfig.pbrf;
  pbrf.eps = -1.0 / static_cast<double>(graph.train_nodes().size());

  struct EditOutcome {
    bool ok = false;
    std::string error;
    std::vector<double> actual_ours;
    std::vector<double> actual_gif;
  };
  std::vector<EditOutcome> outcomes(n_edits);

  const double t_oracle = now_s();
#pragma omp parallel for schedule(dynamic) if (kernels::mode() == kernels::Mode::Parallel)
  for (int i = 0; i < n_edits; ++i) {
    EditOutcome& oc = outcomes[i];
    try {
      Graph edited = apply_edit(graph, edits[i]);
      PbrfResult ft = pbrf_finetune(graph, config, theta_s, edits[i], pbrf);
      oc.actual_ours.resize(n_metrics);
      for (int m = 0; m < n_metrics; ++m)
        oc.actual_ours[m] = eval_metric(vconfig.metrics[m], config, ft.params, edited) - base[m];
      if (vconfig.with_gif) {
        TrainResult tr = retrain_plain(edited, config, theta_init, vconfig.retrain);
        oc.actual_gif.resize(n_metrics);
        for (int m = 0; m < n_metrics; ++m)
          oc.actual_gif[m] = eval_metric(vconfig.metrics[m], config, tr.params, edited) - base[m];
      }
      oc.ok = true;
    } catch (const std::exception& e) {
      oc.error = e.what();
    }
  }
  const double oracle_time = now_s() - t_oracle;

  for (int i = 0; i < n_edits; ++i) {
    if (!outcomes[i].ok) {
      result.failures.push_back("edit (" + std::to_string(edits[i].u) + "," +
                                std::to_string(edits[i].v) + "," + edit_kind_name(edits[i].kind) +
                                "): " + outcomes[i].error);
    }
  }

  // Assemble records and summaries.
  const double oracle_share = n_metrics > 0 ? oracle_time / n_metrics : 0.0;
  for (int m = 0; m < n_metrics; ++m) {
    const EvalMetric& metric = vconfig.metrics[m];
    std::vector<ScatterRecord> ours_records, gif_records;
    std::vector<double> shifts, props;
    for (int i = 0; i < n_edits; ++i) {
      if (!outcomes[i].ok) continue;
      result.breakdowns.push_back(ours_pred[m][i]);
      shifts.push_back(ours_pred[m][i].param_shift);
      props.push_back(ours_pred[m][i].msg_prop);
      ScatterRecord r;
      r.edit = edits[i];
      r.metric = metric;
      r.method = Method::Ours;
      r.predicted = ours_pred[m][i].total;
      r.actual = outcomes[i].actual_ours[m];
      ours_records.push_back(r);
      if (vconfig.with_gif) {
        r.method = Method::Gif;
        r.predicted = gif_pred[m][i];
        r.actual = outcomes[i].actual_gif[m];
        gif_records.push_back(r);
      }
    }
    result.records.insert(result.records.end(), ours_records.begin(), ours_records.end());
    result.records.insert(result.records.end(), gif_records.begin(), gif_records.end());

    auto summarize = [&](const std::vector<ScatterRecord>& recs, double pred_time) {
      MethodMetricSummary s;
      s.n = static_cast<int>(recs.size());
      s.runtime_s = pred_time + oracle_share;
      try {
        CorrelationResult c = correlation(recs);
        s.ok = true;
        s.pearson = c.pearson;
        s.spearman = c.spearman;
      } catch (const Error& e) {
        s.note = s.n < 3 ? "insufficient n" : e.what();
      }
      return s;
    };
    result.summaries[metric.name()]["ours"] = summarize(ours_records, pred_time_ours[m]);
    if (vconfig.with_gif) result.summaries[metric.name()]["gif"] = summarize(gif_records, pred_time_gif[m]);

    MethodMetricSummary sp;
    sp.n = static_cast<int>(shifts.size());
    try {
      sp.pearson = pearson(shifts, props);
      sp.spearman = spearman(shifts, props);
      sp.ok = true;
    } catch (const Error& e) {
      sp.note = e.what();
    }
    result.shift_vs_propagation[metric.name()] = sp;
  }

  result.runtime_s = now_s() - t_start;
  log::info("verify run complete: %d edits, %d metrics, %zu failures, %.1fs", n_edits, n_metrics,
            result.failures.size(), result.runtime_s);
  return result;
}

}  // namespace edgeinf
