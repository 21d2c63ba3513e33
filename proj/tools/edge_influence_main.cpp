#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgeinf/apps.hpp"
#include "edgeinf/error.hpp"
#include "edgeinf/log.hpp"
#include "edgeinf/oracle.hpp"
#include "edgeinf/reports.hpp"

namespace ei = edgeinf;
using nlohmann::json;

namespace {

// Exit codes: 0 ok, 2 usage, 3 io, 4 schema, 5 invalid argument, 6 numeric.
int exit_code(ei::ErrorKind kind) {
  switch (kind) {
    case ei::ErrorKind::Io: return 3;
    case ei::ErrorKind::Schema: return 4;
    case ei::ErrorKind::Invalid: return 5;
    case ei::ErrorKind::Numeric: return 6;
  }
  return 1;
}

void emit_error(const std::string& kind, int code, const std::string& message) {
  json j;
  j["error"] = {{"kind", kind}, {"code", code}, {"message", message}};
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

struct CommonOpts {
  std::string graph_path;
  std::string model_path;
  std::string out_dir = ".";
  std::string metric = "all";
  std::string kinds = "both";
  std::string edits_path;
  int sample = 10000;
  int budget = 10;
  double lambda = 0.01;
  int lissa_iters = 10000;
  double lissa_tol = 1e-8;
  int pbrf_steps = 500;
  int epochs = 2000;
  double lr = 0.03;
  double weight_decay = 1e-4;
  int hidden = 32;
  int layers = 4;
  uint64_t seed = 0;
  int workers = 0;  // 0 = all available
};

std::vector<ei::EvalMetric> parse_metrics(const std::string& s) {
  if (s == "all")
    return {ei::EvalMetric::validation_loss(), ei::EvalMetric::dirichlet_energy(),
            ei::EvalMetric::oversquashing()};
  return {ei::EvalMetric::parse(s)};
}

ei::LissaConfig lissa_from(const CommonOpts& o) {
  ei::LissaConfig c;
  c.damping = o.lambda;
  c.max_iters = o.lissa_iters;
  c.tolerance = o.lissa_tol;
  return c;
}

std::vector<ei::CandidateEdit> gather_edits(const CommonOpts& o, const ei::Graph& graph) {
  if (!o.edits_path.empty()) {
    auto edits = ei::load_edit_list_csv(o.edits_path);
    for (size_t i = 0; i < edits.size(); ++i) {
      try {
        ei::validate_edit(graph, edits[i]);
      } catch (const ei::Error& e) {
        throw ei::Error(ei::ErrorKind::Invalid,
                        o.edits_path + " row " + std::to_string(i) + ": " + e.what());
      }
    }
    return edits;
  }
  return ei::sample_candidates(graph, o.sample, ei::parse_candidate_kinds(o.kinds), o.seed);
}

void add_model_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--hidden", o.hidden, "hidden width");
  cmd->add_option("--layers", o.layers, "number of graph-convolution layers");
}

void add_train_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--lr", o.lr, "learning rate");
  cmd->add_option("--weight-decay", o.weight_decay, "L2 weight decay");
}

void add_solver_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--lambda", o.lambda, "curvature damping");
  cmd->add_option("--lissa-iters", o.lissa_iters, "solver iteration cap");
  cmd->add_option("--lissa-tol", o.lissa_tol, "solver relative-update tolerance");
}

void add_candidate_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--kinds", o.kinds, "candidate kinds: delete|insert|both");
  cmd->add_option("--sample", o.sample, "candidates per kind");
  cmd->add_option("--edits", o.edits_path, "explicit edit list CSV (u,v,kind)");
}

ei::Checkpoint load_model(const CommonOpts& o) {
  if (o.model_path.empty()) throw ei::Error(ei::ErrorKind::Invalid, "--model is required");
  return ei::Checkpoint::load(o.model_path);
}

ei::Graph load_graph_opt(const CommonOpts& o) {
  if (o.graph_path.empty()) throw ei::Error(ei::ErrorKind::Invalid, "--graph is required");
  return ei::Graph::load(o.graph_path);
}

int run_gen(const CommonOpts& o, const std::string& kind, int clique, int bridge,
            const std::string& blocks, double p_in, double p_out, double noise,
            const std::string& out_file) {
  ei::Graph g = [&] {
    if (kind == "barbell") {
      ei::BarbellSpec spec;
      spec.clique_size = clique;
      spec.bridge_length = bridge;
      spec.feature_noise = noise;
      return ei::generate_barbell(spec, o.seed);
    }
    if (kind == "sbm") {
      ei::SbmSpec spec;
      spec.p_in = p_in;
      spec.p_out = p_out;
      spec.feature_noise = noise;
      std::stringstream ss(blocks);
      std::string tok;
      while (std::getline(ss, tok, ',')) spec.block_sizes.push_back(std::stoi(tok));
      return ei::generate_sbm(spec, o.seed);
    }
    throw ei::Error(ei::ErrorKind::Invalid, "unknown generator kind: " + kind);
  }();
  g.save(out_file);
  ei::log::info("wrote %s: %d nodes, %d edges", out_file.c_str(), g.num_nodes(), g.num_edges());
  return 0;
}

int run_train(const CommonOpts& o) {
  ei::Graph g = load_graph_opt(o);
  ei::GcnConfig mc;
  mc.layers = o.layers;
  mc.hidden = o.hidden;
  mc.in_dim = g.feature_dim();
  mc.classes = g.num_classes();
  mc.seed = o.seed;
  ei::TrainConfig tc;
  tc.lr = o.lr;
  tc.weight_decay = o.weight_decay;
  tc.epochs = o.epochs;
  tc.seed = o.seed;
  if (tc.epochs < 1) throw ei::Error(ei::ErrorKind::Invalid, "--epochs must be >= 1");
  if (tc.lr <= 0.0) throw ei::Error(ei::ErrorKind::Invalid, "--lr must be positive");

  ei::TrainResult r = ei::train(g, mc, tc);
  ei::Checkpoint ck{mc, r.params, r.meta};

  ei::ReportWriter w(o.out_dir);
  ck.save(w.path("model.json"));
  w.record_external("model.json");
  w.write_history_csv("history.csv", r.history);
  w.finish();
  ei::log::info("final train loss %.6f, val acc %.3f", r.meta.final_train_loss, r.meta.final_val_acc);
  return 0;
}

int run_influence(const CommonOpts& o) {
  ei::Graph g = load_graph_opt(o);
  ei::Checkpoint ck = load_model(o);
  auto edits = gather_edits(o, g);
  ei::InfluenceEngine engine(ck.config, ck.params, g, edits, lissa_from(o));
  std::vector<ei::InfluenceBreakdown> rows;
  for (const auto& metric : parse_metrics(o.metric)) {
    auto scored = engine.score_all(metric, edits);
    rows.insert(rows.end(), scored.begin(), scored.end());
  }
  ei::ReportWriter w(o.out_dir);
  w.write_influence_csv("influence.csv", rows);
  w.finish();
  return 0;
}

int run_verify(const CommonOpts& o) {
  ei::Graph g = load_graph_opt(o);
  ei::Checkpoint ck = load_model(o);
  auto edits = gather_edits(o, g);

  ei::VerifyConfig vc;
  vc.metrics = parse_metrics(o.metric);
  vc.lissa = lissa_from(o);
  vc.pbrf.damping = o.lambda;
  vc.pbrf.steps = o.pbrf_steps;
  vc.pbrf.lr = ck.meta.lr;
  vc.retrain.lr = ck.meta.lr;
  vc.retrain.weight_decay = ck.meta.weight_decay;
  vc.retrain.epochs = ck.meta.epochs;
  vc.retrain.seed = ck.meta.seed;

  ei::GcnParams init = ei::init_params(ck.config);
  ei::VerifyResult r = ei::verify_run(ck.config, ck.params, init, g, edits, vc);

  ei::ReportWriter w(o.out_dir);
  w.write_scatter_csv("scatter.csv", r.records);
  w.write_influence_csv("influence.csv", r.breakdowns);
  w.write_verify_summary("summary.json", r);
  w.finish();
  if (!r.failures.empty())
    ei::log::error("verify finished with %zu per-edit failures (see summary.json)",
                   r.failures.size());
  return 0;
}

int run_attack(const CommonOpts& o) {
  ei::Graph g = load_graph_opt(o);
  ei::Checkpoint ck = load_model(o);
  auto edits = gather_edits(o, g);
  ei::InfluenceEngine engine(ck.config, ck.params, g, edits, lissa_from(o));
  auto scored = engine.score_all(ei::EvalMetric::validation_loss(), edits);
  ei::EditPlan plan = ei::attack_select(scored, o.budget);
  ei::ReportWriter w(o.out_dir);
  w.write_plan_csv("plan.csv", plan);
  w.finish();
  return 0;
}

int run_score_edits(const CommonOpts& o) {
  ei::Graph g = load_graph_opt(o);
  ei::Checkpoint ck = load_model(o);
  if (o.edits_path.empty()) throw ei::Error(ei::ErrorKind::Invalid, "--edits is required");
  auto edits = ei::load_edit_list_csv(o.edits_path);
  ei::ScoreTable table = ei::score_edit_list(ck.config, ck.params, g, edits, lissa_from(o));
  ei::ReportWriter w(o.out_dir);
  w.write_influence_csv("influence.csv", table.rows);
  w.write_score_summary("score_summary.json", table);
  w.finish();
  return 0;
}

int run_homophily(const CommonOpts& o) {
  ei::Graph g = load_graph_opt(o);
  ei::Checkpoint ck = load_model(o);
  auto edits = gather_edits(o, g);
  ei::InfluenceEngine engine(ck.config, ck.params, g, edits, lissa_from(o));
  std::vector<ei::InfluenceBreakdown> rows;
  for (const auto& metric : parse_metrics(o.metric)) {
    auto scored = engine.score_all(metric, edits);
    rows.insert(rows.end(), scored.begin(), scored.end());
  }
  ei::HomophilySummary summary = ei::homophily_summary(rows, g);
  ei::ReportWriter w(o.out_dir);
  w.write_influence_csv("influence.csv", rows);
  w.write_homophily_csv("homophily.csv", summary);
  w.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-edge influence analysis for graph convolutional networks"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string gen_kind = "barbell", gen_blocks = "30,30,30", gen_out = "graph.json";
  int gen_clique = 5, gen_bridge = 1;
  double gen_p_in = 0.3, gen_p_out = 0.02, gen_noise = 0.1;

  auto add_common = [&](CLI::App* cmd, bool needs_graph, bool needs_model) {
    if (needs_graph) cmd->add_option("--graph", o.graph_path, "graph bundle JSON");
    if (needs_model) cmd->add_option("--model", o.model_path, "model checkpoint JSON");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--workers", o.workers, "worker threads (0 = all)");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic graph bundle");
  gen->add_option("--kind", gen_kind, "barbell|sbm")->required();
  gen->add_option("--clique", gen_clique, "barbell clique size");
  gen->add_option("--bridge", gen_bridge, "barbell bridge length (edges)");
  gen->add_option("--blocks", gen_blocks, "sbm block sizes, comma separated");
  gen->add_option("--p-in", gen_p_in, "sbm within-block edge probability");
  gen->add_option("--p-out", gen_p_out, "sbm cross-block edge probability");
  gen->add_option("--noise", gen_noise, "feature noise level");
  gen->add_option("--out-file", gen_out, "output bundle path");
  gen->add_option("--seed", o.seed, "generator seed");

  CLI::App* train = app.add_subcommand("train", "train a model on a graph bundle");
  add_common(train, true, false);
  add_model_flags(train, o);
  add_train_flags(train, o);

  CLI::App* influence = app.add_subcommand("influence", "predict per-edit influence");
  add_common(influence, true, true);
  influence->add_option("--metric", o.metric, "val-loss|dirichlet|oversquash|all");
  add_candidate_flags(influence, o);
  add_solver_flags(influence, o);

  CLI::App* verify = app.add_subcommand("verify", "compare predicted vs oracle influence");
  add_common(verify, true, true);
  verify->add_option("--metric", o.metric, "val-loss|dirichlet|oversquash|all");
  add_candidate_flags(verify, o);
  add_solver_flags(verify, o);
  verify->add_option("--pbrf-steps", o.pbrf_steps, "fine-tuning step cap");

  CLI::App* attack = app.add_subcommand("attack", "select edits that raise validation loss");
  add_common(attack, true, true);
  add_candidate_flags(attack, o);
  add_solver_flags(attack, o);
  attack->add_option("--budget", o.budget, "number of edits to select");

  CLI::App* score = app.add_subcommand("score-edits", "score an external edit list");
  add_common(score, true, true);
  score->add_option("--edits", o.edits_path, "edit list CSV (u,v,kind)")->required();
  add_solver_flags(score, o);

  CLI::App* homophily = app.add_subcommand("homophily", "mean influence by edge class");
  add_common(homophily, true, true);
  homophily->add_option("--metric", o.metric, "val-loss|dirichlet|oversquash|all");
  add_candidate_flags(homophily, o);
  add_solver_flags(homophily, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    emit_error("usage", 2, e.what());
    return 2;
  }

  try {
    ei::kernels::set_threads(o.workers);
    if (gen->parsed())
      return run_gen(o, gen_kind, gen_clique, gen_bridge, gen_blocks, gen_p_in, gen_p_out,
                     gen_noise, gen_out);
    if (train->parsed()) return run_train(o);
    if (influence->parsed()) return run_influence(o);
    if (verify->parsed()) return run_verify(o);
    if (attack->parsed()) return run_attack(o);
    if (score->parsed()) return run_score_edits(o);
    if (homophily->parsed()) return run_homophily(o);
    emit_error("usage", 2, "no subcommand given");
    return 2;
  } catch (const ei::Error& e) {
    emit_error(ei::error_kind_name(e.kind()), exit_code(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    emit_error("internal", 1, e.what());
    return 1;
  }
}
