#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hyq/benchgen.hpp"
#include "hyq/config.hpp"
#include "hyq/error.hpp"
#include "hyq/executor.hpp"
#include "hyq/harness.hpp"
#include "hyq/plan_rewriter.hpp"
#include "hyq/query_text.hpp"
#include "hyq/training.hpp"

namespace fs = std::filesystem;
using namespace hyq;

namespace {

struct Globals {
  std::string workspace = "hyq_workspace";
  std::string config;
  std::optional<std::uint64_t> seed;
};

// Workspace layout.
struct Paths {
  fs::path root;
  fs::path table() const { return root / "table.bin"; }
  fs::path stats() const { return root / "stats.bin"; }
  fs::path index(const std::string& column) const { return root / ("index_" + column + ".bin"); }
  fs::path encoder() const { return root / "encoder"; }
  fs::path models() const { return root / "models"; }
  fs::path workload() const { return root / "workload.jsonl"; }
  fs::path truth() const { return root / "truth.csv"; }
};

PipelineConfig load_config(const Globals& g) {
  PipelineConfig c = g.config.empty() ? PipelineConfig{} : PipelineConfig::load(g.config);
  if (g.seed) c.reseed(*g.seed);
  return c;
}

void need(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) fail(ErrorCode::IoError, p.string() + " not found; run `" + hint + "` first");
}

// Loads whatever the workspace holds; later stages simply stay unset.
Engine open_engine(const Paths& paths, const PipelineConfig& cfg) {
  need(paths.table(), "hyq ingest");
  Engine engine(Table::load(paths.table()), cfg.engine);
  if (fs::exists(paths.stats())) engine.set_stats(StatsCatalog::load(paths.stats()));
  const auto& cols = engine.table().schema().vector_columns;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (fs::exists(paths.index(cols[i].name))) engine.set_index(i, GraphIndex::load(paths.index(cols[i].name), engine.table()));
  }
  if (fs::exists(paths.encoder())) engine.set_encoder(EncoderBundle::load(paths.encoder()));
  if (fs::exists(paths.models())) engine.set_models(OptimizerModels::load(paths.models()));
  return engine;
}

Metric parse_metric(const std::string& s) {
  if (s == "l2") return Metric::L2;
  if (s == "ip") return Metric::InnerProduct;
  fail(ErrorCode::InvalidConfig, "metric must be l2 or ip, got " + s);
}

// "price:numeric,cat:categorical"
std::vector<ScalarColumnSpec> parse_scalar_columns(const std::string& text) {
  std::vector<ScalarColumnSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) fail(ErrorCode::ParseError, "expected name:kind, got " + item);
    const std::string kind = item.substr(colon + 1);
    if (kind != "numeric" && kind != "categorical") fail(ErrorCode::ParseError, "unknown scalar kind " + kind);
    out.push_back({item.substr(0, colon), kind == "numeric" ? ScalarKind::Numeric : ScalarKind::Categorical});
  }
  return out;
}

std::vector<HybridQuery> queries_of(const std::vector<WorkloadQuery>& w) {
  std::vector<HybridQuery> out;
  for (const auto& q : w) out.push_back(q.query);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

int run_ingest(const Globals& g, bool synthetic, const std::vector<std::string>& vectors, const std::string& scalars,
               const std::string& scalar_columns, const std::string& metric) {
  const auto cfg = load_config(g);
  const Paths paths{g.workspace};
  fs::create_directories(paths.root);
  std::optional<Table> table;
  if (synthetic) {
    table = gen_synthetic_table(cfg.table);
  } else {
    if (vectors.empty() || scalars.empty()) {
      fail(ErrorCode::InvalidConfig, "ingest needs --synthetic or both --vectors and --scalars");
    }
    TableSchema schema;
    std::vector<VectorFile> files;
    for (const auto& spec : vectors) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) fail(ErrorCode::ParseError, "--vectors expects name=path, got " + spec);
      files.push_back(read_fvecs(spec.substr(eq + 1)));
      schema.vector_columns.push_back({spec.substr(0, eq), files.back().dimension, parse_metric(metric)});
    }
    schema.scalar_columns = parse_scalar_columns(scalar_columns);
    schema.validate();
    const auto rows = read_scalar_csv(scalars, schema);
    table.emplace(schema);
    table->insert_batch(assemble_tuples(schema, files, rows));
  }
  table->take_pending_updates();
  table->save(paths.table());
  std::cout << "rows:           " << table->row_count() << '\n'
            << "vector columns: " << table->schema().vector_columns.size() << '\n'
            << "scalar columns: " << table->schema().scalar_columns.size() << '\n'
            << "written:        " << paths.table().string() << '\n';
  return 0;
}

int run_stats_build(const Globals& g) {
  const auto cfg = load_config(g);
  const Paths paths{g.workspace};
  need(paths.table(), "hyq ingest");
  const auto t0 = std::chrono::steady_clock::now();
  const Table table = Table::load(paths.table());
  const auto stats = StatsCatalog::build(table, cfg.engine.histogram_bins);
  stats.save(paths.stats());
  std::cout << "histograms: " << table.schema().scalar_columns.size() << " (" << cfg.engine.histogram_bins
            << " bins)\nseconds:    " << seconds_since(t0) << '\n';
  return 0;
}

int run_index_build(const Globals& g) {
  const auto cfg = load_config(g);
  const Paths paths{g.workspace};
  need(paths.table(), "hyq ingest");
  const Table table = Table::load(paths.table());
  for (std::size_t i = 0; i < table.schema().vector_columns.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto index = GraphIndex::build(table, i, cfg.engine.index);
    const auto& name = table.schema().vector_columns[i].name;
    index.save(paths.index(name));
    std::cout << "index " << name << ": " << index.size() << " vectors, " << seconds_since(t0) << " s\n";
  }
  return 0;
}

int run_train_encoder(const Globals& g) {
  const auto cfg = load_config(g);
  const Paths paths{g.workspace};
  Engine engine = open_engine(paths, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  engine.fit_encoder(cfg.encoder);
  fs::remove_all(paths.encoder());
  engine.encoder().save(paths.encoder());
  std::cout << "encoder: " << engine.encoder().vector_columns() << " vector columns, hash "
            << engine.encoder().config_hash() << ", " << seconds_since(t0) << " s\n";
  return 0;
}

int run_train_optimizer(const Globals& g, std::optional<std::size_t> queries, const std::string& grid_file,
                        const std::string& examples_csv) {
  const auto cfg = load_config(g);
  const Paths paths{g.workspace};
  Engine engine = open_engine(paths, cfg);
  if (!engine.features_ready()) {
    fail(ErrorCode::EngineNotReady, "run `hyq stats build`, `hyq index build` and `hyq train encoder` first");
  }
  const GridSpec spec = grid_file.empty() ? cfg.grid : load_grid_spec(grid_file);
  const auto grid = build_grid(spec, engine.table().schema().vector_columns.size());
  const std::size_t n = queries.value_or(cfg.training_queries);
  const auto t0 = std::chrono::steady_clock::now();
  const auto examples = generate_training_data(engine, n, grid, cfg.workload.seed, cfg.workload, cfg.labels);
  const double label_seconds = seconds_since(t0);
  if (!examples_csv.empty()) write_training_csv(examples_csv, examples, grid);
  const auto trained = train_models(examples, cfg.models);
  fs::remove_all(paths.models());
  trained.models.save(paths.models());

  std::map<std::string, std::size_t> labels;
  for (const auto& e : examples) ++labels[to_string(e.label_plan)];
  std::cout << "examples:            " << examples.size() << " over " << grid.size() << " grid configs ("
            << label_seconds << " s)\n"
            << "label plans:        ";
  for (const auto& [plan, count] : labels) std::cout << ' ' << plan << '=' << count;
  std::cout << "\nplan accuracy:       " << trained.metrics.plan_accuracy << " held out, "
            << trained.metrics.plan_train_accuracy << " train\n"
            << "param log2 MAE:      " << trained.metrics.param_log2_mae << '\n'
            << "scan mode accuracy:  " << trained.metrics.mode_accuracy << '\n';
  return 0;
}

int run_benchgen(const Globals& g, const std::string& spec_file) {
  PipelineConfig cfg = load_config(g);
  if (!spec_file.empty()) {
    // Spec keys layer over the global config.
    auto file = g.config.empty() ? KeyValueFile{} : KeyValueFile::load(g.config);
    for (const auto& [k, v] : KeyValueFile::load(spec_file).entries()) file.set(k, v);
    cfg = PipelineConfig::from(file);
    if (g.seed) cfg.reseed(*g.seed);
  }
  const Paths paths{g.workspace};
  Engine engine = open_engine(paths, cfg);
  if (!engine.has_stats()) fail(ErrorCode::EngineNotReady, "run `hyq stats build` first");
  const auto t0 = std::chrono::steady_clock::now();
  const auto w = cfg.workload.local_rate_strata > 0
                     ? gen_queries(engine.table(), engine.stats(), cfg.workload, engine.index_pointers(),
                                   cfg.engine.probe)
                     : gen_queries(engine.table(), engine.stats(), cfg.workload);
  write_workload(paths.workload(), engine.table().schema(), w.queries);
  write_ground_truth(paths.truth(), gen_ground_truth(engine.table(), w.queries));
  std::size_t used = 0;
  for (auto c : w.occupancy) used += c > 0;
  std::cout << "queries:   " << w.queries.size() << " (" << w.attempts << " attempts)\n"
            << "strata:    " << used << " of " << w.occupancy.size() << " occupied\n"
            << "workload:  " << paths.workload().string() << '\n'
            << "truth:     " << paths.truth().string() << '\n'
            << "seconds:   " << seconds_since(t0) << '\n';
  return 0;
}

int run_query(const Globals& g, const std::string& text, const std::string& plan_text, bool explain) {
  const auto cfg = load_config(g);
  const Paths paths{g.workspace};
  Engine engine = open_engine(paths, cfg);
  const auto& schema = engine.table().schema();
  const HybridQuery q = parse_query(text, schema);
  if (!plan_text.empty()) engine.force_plan(parse_plan(plan_text, schema.vector_columns.size()));
  if (!engine.ready()) {
    fail(ErrorCode::EngineNotReady, "no optimizer models in the workspace; train them or pass --plan sequential");
  }
  const ResultSet rs = engine.execute(q);
  std::cout << "rank,id,score\n";
  for (std::size_t i = 0; i < rs.results.size(); ++i) {
    std::cout << i + 1 << ',' << rs.results[i].id << ',' << rs.results[i].distance << '\n';
  }
  std::cout << "\nplan:      " << to_string(rs.plan) << '\n'
            << "converged: " << (rs.converged ? "yes" : "no") << '\n'
            << "scanned:   " << rs.scanned_count << '\n'
            << "seconds:   " << rs.timings.total << " (features " << rs.timings.features << ", search "
            << rs.timings.search << ", merge " << rs.timings.merge << ")\n";
  if (explain && rs.plan.kind != PlanKind::SequentialScan) {
    for (const auto& sub : rewrite(q, schema, rs.plan, rs.params).subqueries) {
      std::cout << '\n' << format_subquery(sub) << '\n';
    }
  }
  return 0;
}

int run_eval_cmd(const Globals& g, const std::string& out_csv, const std::string& baseline, const std::string& plan_text) {
  const auto cfg = load_config(g);
  const Paths paths{g.workspace};
  Engine engine = open_engine(paths, cfg);
  need(paths.workload(), "hyq benchgen");
  const auto& schema = engine.table().schema();
  const auto workload = read_workload(paths.workload(), schema);
  const auto queries = queries_of(workload);
  const auto truth = read_ground_truth(paths.truth(), queries.size());
  if (!plan_text.empty()) engine.force_plan(parse_plan(plan_text, schema.vector_columns.size()));

  std::optional<GridConfig> base;
  if (baseline == "best-static") {
    const auto grid = build_grid(cfg.grid, schema.vector_columns.size());
    const auto results = evaluate_static_grid(engine, queries, truth, grid);
    if (const auto best = best_static(results)) base = grid[best->config];
    else std::cout << "no static configuration meets the targets on 90% of queries\n";
  } else if (!baseline.empty()) {
    GridConfig c;
    c.plan = parse_plan(baseline, schema.vector_columns.size());
    base = c;
  }
  const auto report = run_eval(engine, queries, truth, base, cfg.eval);
  if (!out_csv.empty()) write_report_csv(out_csv, report);
  std::cout << format_summary(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyq: learned optimizer for multi-vector hybrid queries"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--workspace,-w", g.workspace, "Workspace directory")->capture_default_str();
  app.add_option("--config,-c", g.config, "Key-value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Base seed; derives every component seed");

  auto* ingest = app.add_subcommand("ingest", "Load vectors and scalars into the workspace table");
  bool synthetic = false;
  std::vector<std::string> vectors;
  std::string scalars, scalar_columns, metric = "l2";
  ingest->add_flag("--synthetic", synthetic, "Generate the synthetic table described by table.* keys");
  ingest->add_option("--vectors", vectors, "name=path.fvecs, one per vector column");
  ingest->add_option("--scalars", scalars, "Scalar CSV with an id column");
  ingest->add_option("--scalar-columns", scalar_columns, "name:numeric|categorical,...");
  ingest->add_option("--metric", metric, "l2 or ip")->capture_default_str();

  auto* stats = app.add_subcommand("stats", "Scalar statistics");
  stats->require_subcommand(1);
  auto* stats_build = stats->add_subcommand("build", "Build histograms for every scalar column");

  auto* index = app.add_subcommand("index", "Vector indexes");
  index->require_subcommand(1);
  auto* index_build = index->add_subcommand("build", "Build one graph index per vector column");

  auto* train = app.add_subcommand("train", "Train models");
  train->require_subcommand(1);
  auto* train_encoder = train->add_subcommand("encoder", "Fit the correlation encoder");
  auto* train_optimizer = train->add_subcommand("optimizer", "Label a workload and train plan/parameter models");
  std::optional<std::size_t> train_queries;
  std::string grid_file, examples_csv;
  train_optimizer->add_option("--queries", train_queries, "Training queries to label");
  train_optimizer->add_option("--grid", grid_file, "Grid specification file")->check(CLI::ExistingFile);
  train_optimizer->add_option("--examples", examples_csv, "Write labelled examples as CSV");

  auto* benchgen = app.add_subcommand("benchgen", "Generate a stratified workload and its ground truth");
  std::string spec_file;
  benchgen->add_option("--spec", spec_file, "Workload spec (workload.* keys)")->check(CLI::ExistingFile);

  auto* query = app.add_subcommand("query", "Run one query given as text");
  std::string query_text, query_plan;
  bool explain = false;
  query->add_option("text", query_text, "SELECT id FROM ... ORDER BY ... LIMIT k")->required();
  query->add_option("--plan", query_plan, "Force a plan: sequential, decomposed or single:<i>");
  query->add_flag("--explain", explain, "Print the rewritten subqueries");

  auto* eval = app.add_subcommand("eval", "Execute the workload and report recall and latency");
  std::string out_csv, baseline, eval_plan;
  eval->add_option("--out", out_csv, "Per-query report CSV");
  eval->add_option("--baseline", baseline, "best-static, or a plan name run with default parameters");
  eval->add_option("--plan", eval_plan, "Force a plan for the engine");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*ingest) return run_ingest(g, synthetic, vectors, scalars, scalar_columns, metric);
    if (*stats_build) return run_stats_build(g);
    if (*index_build) return run_index_build(g);
    if (*train_encoder) return run_train_encoder(g);
    if (*train_optimizer) return run_train_optimizer(g, train_queries, grid_file, examples_csv);
    if (*benchgen) return run_benchgen(g, spec_file);
    if (*query) return run_query(g, query_text, query_plan, explain);
    if (*eval) return run_eval_cmd(g, out_csv, baseline, eval_plan);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
