#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "prefer/aspect_space.hpp"
#include "prefer/corpus.hpp"
#include "prefer/plot.hpp"
#include "prefer/service.hpp"
#include "prefer/simulation.hpp"
#include "prefer/workspace.hpp"
#include "prefer/rewriter_http.hpp"

namespace {

using nlohmann::json;
using namespace prefer;

/// Inline JSON when the argument looks like JSON, else a file path.
json json_arg(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && (arg[first] == '{' || arg[first] == '[' || arg[first] == '"'))
    return json::parse(arg);
  std::ifstream in(arg);
  require(in.good(), "cannot open '" + arg + "'", ErrorCode::io);
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::parse_error, arg + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot write '" + path + "'", ErrorCode::io);
  out << text;
  require(out.good(), "write to '" + path + "' failed", ErrorCode::io);
}

std::unique_ptr<summarizer::TextGenerator> make_generator(const std::string& rewriter) {
  if (rewriter.empty()) return nullptr;
  return std::make_unique<summarizer::HttpTextGenerator>(
      summarizer::endpoint_from_json(json_arg(rewriter)));
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string in, out;
  int min_words = 3;
  int max_sents = 20;
};

int run_ingest(const IngestArgs& a) {
  std::ifstream in(a.in);
  require(in.good(), "cannot open '" + a.in + "'", ErrorCode::io);
  std::vector<corpus::RecordError> errors;
  auto raw = corpus::read_raw_records(in, &errors);
  auto result = corpus::ingest(raw);
  for (const auto& e : result.errors) errors.push_back(e);
  auto tables = corpus::sentence_split(std::move(result.tables), {a.min_words, a.max_sents});
  corpus::save_tables(a.out, tables);
  for (const auto& e : errors) std::cerr << "record " << e.index << ": " << e.message << '\n';
  std::cout << "reviews " << tables.reviews.size() << " sentences " << tables.sentences.size()
            << " products " << tables.product_index.size() << " rejected " << errors.size()
            << '\n';
  return 0;
}

struct DiscoverArgs {
  std::string emb, corpus, out, report;
  int k = 10;
  double variance_target = 0.5;
  int pca_components = 0;
  double r = 10.0;
  std::uint64_t seed = 7;
  int n_init = 10;
  std::vector<int> k_candidates;
};

int run_discover(const DiscoverArgs& a) {
  auto emb = aspects::normalize_rows(aspects::read_embeddings(a.emb));
  if (!a.corpus.empty()) {
    const auto tables = corpus::load_tables(a.corpus);
    require(static_cast<std::size_t>(emb.rows()) == tables.sentences.size(),
            "embedding rows (" + std::to_string(emb.rows()) + ") != corpus sentences (" +
                std::to_string(tables.sentences.size()) + ")");
  }
  aspects::DiscoveryOptions opt;
  opt.pca = a.pca_components > 0 ? aspects::PcaTarget::fixed(a.pca_components)
                                 : aspects::PcaTarget::variance(a.variance_target);
  opt.kmeans.k = a.k;
  opt.kmeans.n_init = a.n_init;
  opt.kmeans.seed = a.seed;
  opt.r = a.r;
  const auto d = aspects::discover(emb, opt);
  write_text(a.out, aspects::to_json(d.model, &d.features).dump() + "\n");
  std::cout << "K " << d.model.K() << " m " << d.model.m() << " tau "
            << d.model.tau << " inertia " << d.clustering.inertia << '\n';
  if (!a.report.empty()) {
    json rep = json::array();
    auto kopt = opt.kmeans;
    const auto candidates = a.k_candidates.empty() ? std::vector<int>{a.k} : a.k_candidates;
    const auto scores = aspects::k_selection_report(d.reduced, candidates, kopt);
    for (std::size_t i = 0; i < scores.size(); ++i)
      rep.push_back({{"k", candidates[i]},
                     {"inertia", scores[i].inertia},
                     {"silhouette", scores[i].silhouette},
                     {"calinski_harabasz", scores[i].calinski_harabasz},
                     {"davies_bouldin", scores[i].davies_bouldin}});
    write_text(a.report, rep.dump(2) + "\n");
  }
  return 0;
}

void print_experiment_summary(const simulation::ExperimentConfig& cfg,
                              const simulation::ExperimentResult& res) {
  for (auto arm : cfg.arms) {
    double a_pref = 0, regret = 0, bound = 0, min_coord = 1;
    for (auto seed : cfg.seeds) {
      const auto& run = res.find(arm, seed);
      a_pref += run.rows.back().a_pref;
      regret += run.rows.back().regret_avg;
      bound += run.rows.back().bound_avg;
      for (const auto& r : run.rows) min_coord = std::min({min_coord, r.min_coord_pre, r.min_coord_post});
    }
    const double n = static_cast<double>(cfg.seeds.size());
    std::printf("%-14s A_pref %.4f  regret_avg %.4f  bound_avg %.4f  min_coord %.3g  V_T %.17g\n",
                simulation::to_string(arm), a_pref / n, regret / n, bound / n, min_coord,
                res.find(arm, cfg.seeds.front()).rows.back().v_t);
  }
}

int run_simulate(const std::string& config, const std::string& out_override, bool drift) {
  auto cfg = simulation::load_experiment(config);
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (drift)
    require(cfg.oracle.contains("drift"), "drift run needs an oracle.drift block in the config");
  require(!cfg.output_dir.empty(), "no output directory: set \"output\" or pass --out");
  const auto res = simulation::run_experiment(cfg);
  const auto files = simulation::write_results(res, cfg.output_dir);
  print_experiment_summary(cfg, res);
  std::cout << "wrote " << files.size() << " files to " << cfg.output_dir << '\n';
  return 0;
}

struct CompareArgs {
  std::string product, profiles, config, model, corpus, emb, out, rewriter;
};

int run_compare(const CompareArgs& a) {
  Workspace ws;
  selection::SelectionConfig sel;
  preference::ProfileOptions popt;
  if (!a.config.empty()) {
    const auto cfg = simulation::load_experiment(a.config);
    ws = simulation::build_workspace(cfg);
    sel = cfg.selection;
    popt = cfg.profile;
  } else {
    require(!a.model.empty() && !a.corpus.empty(), "pass --config, or --model and --corpus");
    ws = Workspace::load(a.corpus, a.model,
                         a.emb.empty() ? std::nullopt : std::optional<std::string>(a.emb));
  }
  const json spec = json_arg(a.profiles);
  require(spec.is_array() && !spec.empty(), "profiles must be a non-empty JSON array");
  std::vector<AspectVector> profiles;
  for (const auto& p : spec) profiles.push_back(aspect_vector_from_json(p, ws.K()));
  auto generator = make_generator(a.rewriter);
  const auto rep = simulation::compare_profiles(ws, a.product, profiles, sel, popt, generator.get());
  const auto text = simulation::to_json(rep).dump(2) + "\n";
  if (a.out.empty()) std::cout << text;
  else write_text(a.out, text);
  return 0;
}

struct ServeArgs {
  std::string model, corpus, emb, config, demo_oracle, state_dir = "prefer-state", host = "127.0.0.1",
                                                       rewriter;
  int port = 8080;
};

httplib::Server* g_server = nullptr;

int run_serve(const ServeArgs& a) {
  std::shared_ptr<const Workspace> ws;
  if (!a.config.empty()) {
    ws = std::make_shared<const Workspace>(
        simulation::build_workspace(simulation::load_experiment(a.config)));
  } else {
    require(!a.model.empty() && !a.corpus.empty(), "pass --model and --corpus, or --config");
    ws = std::make_shared<const Workspace>(Workspace::load(
        a.corpus, a.model, a.emb.empty() ? std::nullopt : std::optional<std::string>(a.emb)));
  }
  std::optional<json> oracle;
  if (!a.demo_oracle.empty()) oracle = json_arg(a.demo_oracle);
  auto generator = make_generator(a.rewriter);
  service::SessionManager manager(ws, a.state_dir, oracle, generator.get());
  httplib::Server server;
  service::install_routes(server, manager);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cout << "serving K=" << ws->K() << " products=" << ws->products().size() << " sessions="
            << manager.session_ids().size() << " on http://" << a.host << ':' << a.port
            << std::endl;
  require(server.listen(a.host, a.port), "cannot listen on " + a.host + ":" + std::to_string(a.port),
          ErrorCode::io);
  return 0;
}

struct SynthArgs {
  std::string spec, corpus_out, emb_out;
};

int run_synth(const SynthArgs& a) {
  const auto spec = a.spec.empty() ? simulation::SyntheticSpec{}
                                   : simulation::synthetic_from_json(json_arg(a.spec));
  const auto syn = simulation::make_synthetic_corpus(spec);
  corpus::save_tables(a.corpus_out, syn.tables);
  aspects::write_embeddings(a.emb_out, syn.embeddings);
  std::cout << "sentences " << syn.tables.sentences.size() << " dim " << syn.embeddings.cols()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefer: preference-adaptive review summarization"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Deduplicate raw reviews and split sentences");
  c_ingest->add_option("--in", ingest.in, "Raw review JSONL")->required();
  c_ingest->add_option("--out", ingest.out, "Corpus JSONL")->required();
  c_ingest->add_option("--min-words", ingest.min_words, "Drop shorter sentences")->capture_default_str();
  c_ingest->add_option("--max-sents", ingest.max_sents, "Sentences kept per review")->capture_default_str();

  DiscoverArgs disc;
  auto* c_disc = app.add_subcommand("discover-aspects", "Fit PCA, K-means and the soft assignment");
  c_disc->add_option("--emb", disc.emb, "Embedding file")->required();
  c_disc->add_option("--corpus", disc.corpus, "Corpus JSONL, checked against the embedding rows");
  c_disc->add_option("--k", disc.k, "Number of aspects")->capture_default_str();
  c_disc->add_option("--variance-target", disc.variance_target, "PCA explained-variance target")
      ->capture_default_str();
  c_disc->add_option("--pca-components", disc.pca_components, "Fixed PCA dimension (overrides the target)");
  c_disc->add_option("--r", disc.r, "Top-two membership ratio at the median gap")->capture_default_str();
  c_disc->add_option("--seed", disc.seed, "K-means seed")->capture_default_str();
  c_disc->add_option("--n-init", disc.n_init, "K-means restarts")->capture_default_str();
  c_disc->add_option("--out", disc.out, "Model JSON")->required();
  c_disc->add_option("--report", disc.report, "Write a K-selection report here");
  c_disc->add_option("--k-candidates", disc.k_candidates, "Candidate K values for the report")
      ->delimiter(',');

  std::string sim_config, sim_out;
  auto* c_sim = app.add_subcommand("simulate", "Run a simulation experiment");
  c_sim->add_option("--config", sim_config, "Experiment JSON")->required();
  c_sim->add_option("--out", sim_out, "Output directory (overrides the config)");

  std::string drift_config, drift_out;
  auto* c_drift = app.add_subcommand("drift", "Run an experiment with a drifting oracle");
  c_drift->add_option("--config", drift_config, "Experiment JSON with oracle.drift")->required();
  c_drift->add_option("--out", drift_out, "Output directory (overrides the config)");

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare-profiles", "Summaries for several target profiles");
  c_cmp->add_option("--product", cmp.product, "Product id")->required();
  c_cmp->add_option("--profiles", cmp.profiles, "JSON array of profiles, inline or a file")->required();
  c_cmp->add_option("--config", cmp.config, "Experiment JSON supplying data and selection settings");
  c_cmp->add_option("--model", cmp.model, "Model JSON");
  c_cmp->add_option("--corpus", cmp.corpus, "Corpus JSONL");
  c_cmp->add_option("--emb", cmp.emb, "Embeddings, when the model has no stored features");
  c_cmp->add_option("--rewriter", cmp.rewriter, "Rewriter endpoint JSON");
  c_cmp->add_option("--out", cmp.out, "Report path (default stdout)");

  std::string plot_in, plot_out;
  plot::ChartOptions chart;
  auto* c_plot = app.add_subcommand("plot", "SVG line chart from a result CSV");
  c_plot->add_option("--in", plot_in, "Run or aggregate CSV")->required();
  c_plot->add_option("--out", plot_out, "SVG path")->required();
  c_plot->add_option("--metric", chart.metric, "Metric column")->capture_default_str();
  c_plot->add_option("--title", chart.title, "Chart title");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "HTTP session service");
  c_serve->add_option("--model", serve.model, "Model JSON");
  c_serve->add_option("--corpus", serve.corpus, "Corpus JSONL");
  c_serve->add_option("--emb", serve.emb, "Embeddings, when the model has no stored features");
  c_serve->add_option("--config", serve.config, "Experiment JSON supplying the data instead");
  c_serve->add_option("--port", serve.port, "Port")->capture_default_str();
  c_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
  c_serve->add_option("--demo-oracle", serve.demo_oracle, "Oracle JSON, inline or a file");
  c_serve->add_option("--state-dir", serve.state_dir, "Session log directory")->capture_default_str();
  c_serve->add_option("--rewriter", serve.rewriter, "Rewriter endpoint JSON");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic corpus and its embeddings");
  c_synth->add_option("--spec", synth.spec, "Synthetic spec JSON, inline or a file");
  c_synth->add_option("--corpus-out", synth.corpus_out, "Corpus JSONL")->required();
  c_synth->add_option("--emb-out", synth.emb_out, "Embedding file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_ingest) return run_ingest(ingest);
    if (*c_disc) return run_discover(disc);
    if (*c_sim) return run_simulate(sim_config, sim_out, false);
    if (*c_drift) return run_simulate(drift_config, drift_out, true);
    if (*c_cmp) return run_compare(cmp);
    if (*c_plot) {
      plot::plot_file(plot_in, plot_out, chart);
      return 0;
    }
    if (*c_serve) return run_serve(serve);
    if (*c_synth) return run_synth(synth);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
