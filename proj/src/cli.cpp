#include "demd/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>

#include "demd/error.hpp"
#include "demd/gradient.hpp"
#include "demd/io.hpp"
#include "demd/metric.hpp"
#include "demd/parallel.hpp"
#include "demd/pipeline.hpp"

#ifndef DEMD_VERSION
#define DEMD_VERSION "0.0.0"
#endif

namespace demd::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

// Per-run state shared by every command: stage timings and the manifest.
struct Context {
  std::string command;
  std::vector<std::string> argv;
  std::string stage = "setup";
  Json parameters = Json::object();
  Json resolved = Json::object();
  Json inputs = Json::object();
  Json outputs = Json::object();
  Json timings = Json::object();
  std::optional<std::uint64_t> seed;
  fs::path manifest;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  template <typename F>
  auto timed(const std::string& name, F&& f) {
    stage = name;
    const auto t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      timings[name] = std::chrono::duration<double>(Clock::now() - t0).count();
    } else {
      auto r = f();
      timings[name] = std::chrono::duration<double>(Clock::now() - t0).count();
      return r;
    }
  }

  void add_timings(const StageTimings& t, const std::string& prefix = "") {
    for (const auto& [name, secs] : t) timings[prefix + name] = secs;
  }
};

struct EmbedArgs {
  std::string input, output, method = "chebyshev", rank_profile;
  int knn = 10;
  std::optional<double> epsilon, truncate;
  EmbedConfig config;
  int gamma = 0;
  int spectral_rank = 0;
  std::uint64_t seed = 0x1d;
};

struct MetricArgs {
  std::string embedding, output;
  int k = 10;
};

struct BenchArgs {
  std::string kind, output, plot_dir;
  int n = 500, m = 100, per = 100, knn = 10, gamma = 0, sample = 100, spectral_rank = 0;
  double noise = 2.0, epsilon = 5e-5;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> methods;
  bool rotate = false, force = false;
  EmbedConfig config;
};

struct GradArgs {
  std::string input, output;
  int n = 30, d = 2, m = 2, i = 0, j = 1, checks = 5;
  std::vector<int> nodes;
  double epsilon = 1.0, step = 1e-5, tolerance = 1e-4;
  std::uint64_t seed = 1;
  EmbedConfig config;
};

EmbedMethod method_from_flag(const std::string& name) {
  if (name == "exact") return EmbedMethod::exact_spectral;
  if (name == "chebyshev") return EmbedMethod::chebyshev;
  if (name == "id") return EmbedMethod::interpolative;
  throw InvalidParameter("unknown method '" + name + "'");
}

void add_embed_config(CLI::App* app, EmbedConfig& c) {
  app->add_option("--alpha", c.alpha, "Scale weight exponent, in (0, 0.5]");
  app->add_option("--max-scale", c.max_scale, "Largest dyadic scale K; 0 selects max(ceil(log2 n), 8)");
  app->add_option("--cheb-order", c.cheb_order, "Chebyshev order J");
  app->add_option("--delta", c.rank_delta, "Approximate-rank threshold");
  app->add_option("--n-scales", c.n_scales_kept, "Scales kept when subsampling");
}

void add_common(CLI::App* app, std::string& manifest, int& workers) {
  app->add_option("--manifest", manifest, "Run manifest path (default <output>.manifest.json)");
  app->add_option("--workers", workers, std::string("Worker threads (default $") + kWorkersEnv + " or all cores)")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--config", "key=value file with defaults for any long flag");
}

// Records every option of the subcommand under its long name.
Json describe_options(const CLI::App* app) {
  Json j = Json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    const auto& results = opt->results();
    if (opt->get_expected_max() > 1 && opt->count() > 0) {
      j[name] = results;
    } else if (opt->count() > 0) {
      j[name] = results.back();
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

// Config-file keys are inserted after the subcommand name as --key=value
// unless the command line already sets that flag.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::optional<std::string> config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (!config) return args;
  const auto kv = io::read_key_value(*config);
  const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.empty() || a[0] != '-'; });
  if (sub == args.end()) return args;
  std::vector<std::string> extra;
  for (const auto& [key, value] : kv) {
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given) continue;
    if (key == "config") throw InvalidParameter("config files cannot include other config files");
    extra.push_back(flag + "=" + value);
  }
  args.insert(sub + 1, extra.begin(), extra.end());
  return args;
}

void apply_workers(int flag, Context& ctx) {
  int workers = flag;
  if (workers == 0) {
    if (const char* env = std::getenv(kWorkersEnv); env && *env) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (*end != '\0' || v < 0 || v > 4096) throw InvalidParameter(std::string(kWorkersEnv) + " must be a nonnegative integer");
      workers = static_cast<int>(v);
    }
  }
  set_worker_count(workers);
  ctx.resolved["workers"] = worker_count();
}

fs::path default_manifest(const std::string& explicit_path, const std::string& output) {
  if (!explicit_path.empty()) return explicit_path;
  return fs::path(output + ".manifest.json");
}

void write_manifest(const Context& ctx, int code, const std::string& error) {
  if (ctx.manifest.empty()) return;
  Json j;
  j["command"] = ctx.command;
  j["argv"] = ctx.argv;
  j["version"] = version();
  j["parameters"] = ctx.parameters;
  j["resolved"] = ctx.resolved;
  j["inputs"] = ctx.inputs;
  j["outputs"] = ctx.outputs;
  if (ctx.seed) {
    j["seed"] = *ctx.seed;
  } else {
    j["seed"] = nullptr;
  }
  j["timings"] = ctx.timings;
  j["exit_code"] = code;
  j["status"] = code == kExitOk ? "ok" : "failed";
  if (!error.empty()) j["error"] = error;
  std::ofstream f(ctx.manifest);
  if (f) f << j.dump(2) << '\n';
}

DistributionSet distributions_for(const PointCloud& points) {
  return indicator_distributions(points.labels, points.num_distributions);
}

void cmd_embed(const EmbedArgs& a, Context& ctx) {
  EmbedConfig config = a.config;
  config.method = method_from_flag(a.method);
  config.validate();
  ctx.seed = a.seed;
  ctx.inputs["points"] = a.input;
  const PointCloud points = ctx.timed("read", [&] { return io::read_points_csv(a.input); });
  KernelOptions ko;
  ko.knn = a.knn;
  ko.epsilon = a.epsilon;
  ko.truncate = a.truncate;
  const AffinityKernel kernel = ctx.timed("kernel", [&] { return build_kernel(points, ko); });
  const DistributionSet dist = distributions_for(points);
  EngineOptions engine;
  engine.gamma = a.gamma > 0 ? a.gamma : std::max(1, points.size() / 10);
  engine.seed = a.seed;
  engine.spectral_rank = a.spectral_rank;
  ctx.stage = "embedding";
  EmbeddingRun run = compute_embedding(kernel, dist, config, engine);
  ctx.add_timings(run.timings, "embed.");
  for (const auto& w : run.warnings) *ctx.err << "warning: " << w << '\n';
  ctx.resolved["n"] = points.size();
  ctx.resolved["m"] = points.num_distributions;
  ctx.resolved["max_scale"] = run.embedding.config.max_scale;
  ctx.resolved["gamma"] = engine.gamma;
  ctx.resolved["embedding_dim"] = run.embedding.bins.cols();
  ctx.resolved["centers"] = run.stack.total_centers();
  ctx.timed("write", [&] { io::write_embedding(a.output, run.embedding); });
  ctx.outputs["embedding"] = a.output;
  ctx.outputs["metadata"] = io::metadata_path(a.output).string();
  if (!a.rank_profile.empty()) {
    io::write_rank_profile_csv(a.rank_profile, run.profile);
    ctx.outputs["rank_profile"] = a.rank_profile;
  }
  *ctx.out << "embedded " << points.num_distributions << " distributions on " << points.size() << " nodes into "
           << run.embedding.bins.cols() << " coordinates (K = " << run.embedding.config.max_scale << ")\n";
}

void cmd_distances(const MetricArgs& a, Context& ctx) {
  ctx.inputs["embedding"] = a.embedding;
  const MultiscaleEmbedding e = ctx.timed("read", [&] { return io::read_embedding(a.embedding); });
  const DistanceMatrix d = ctx.timed("distances", [&] { return pairwise_distances(e); });
  ctx.timed("write", [&] { io::write_distances_csv(a.output, d.values); });
  ctx.resolved["m"] = d.size();
  ctx.outputs["distances"] = a.output;
  *ctx.out << "wrote " << d.size() << " x " << d.size() << " distances\n";
}

void cmd_knn(const MetricArgs& a, Context& ctx) {
  ctx.inputs["embedding"] = a.embedding;
  const MultiscaleEmbedding e = ctx.timed("read", [&] { return io::read_embedding(a.embedding); });
  const int m = e.num_distributions();
  if (a.k < 1 || a.k >= m)
    throw InvalidParameter("--k must lie in [1, m - 1] = [1, " + std::to_string(m - 1) + "]");
  const auto neighbors = ctx.timed("knn", [&] { return knn_all(e.bins, a.k); });
  std::vector<std::vector<double>> dist(neighbors.size());
  for (std::size_t q = 0; q < neighbors.size(); ++q)
    for (int nb : neighbors[q]) dist[q].push_back(diffusion_emd(e.bins.row(static_cast<Eigen::Index>(q)), e.bins.row(nb)));
  ctx.timed("write", [&] { io::write_neighbors_csv(a.output, neighbors, dist); });
  ctx.resolved["m"] = m;
  ctx.outputs["neighbors"] = a.output;
  *ctx.out << "wrote " << a.k << " neighbours for " << m << " distributions\n";
}

void write_metrics_header(std::ostream& f) {
  f << "benchmark,seed,method,n,m,p_at_10,spearman,violations,centers,seconds\n";
}

void write_metrics_row(std::ostream& f, std::uint64_t seed, const MethodMetrics& r) {
  f << r.benchmark << ',' << seed << ',' << r.method << ',' << r.n << ',' << r.m << ',' << io::format_double(r.p_at_10)
    << ',' << io::format_double(r.spearman) << ',';
  if (r.violations >= 0) f << r.violations;
  f << ',' << r.centers << ',' << io::format_double(r.seconds) << '\n';
}

void cmd_benchmark(const BenchArgs& a, Context& ctx) {
  const bool line = a.kind == "line";
  const long long nodes = line ? a.n : static_cast<long long>(a.m) * a.per;
  if (nodes > kDeskScaleNodes && !a.force)
    throw InvalidParameter("benchmark with " + std::to_string(nodes) + " nodes exceeds the desk-scale guard of " +
                           std::to_string(kDeskScaleNodes) + "; pass --force to run it");
  a.config.validate();
  if (a.seeds.empty()) throw InvalidParameter("at least one seed is required");
  ctx.seed = a.seeds.front();
  ctx.resolved["nodes"] = nodes;
  if (!a.plot_dir.empty()) fs::create_directories(a.plot_dir);

  std::ofstream f(a.output, std::ios::trunc);
  if (!f) throw InvalidInput("cannot write " + a.output);
  write_metrics_header(f);
  for (std::uint64_t seed : a.seeds) {
    const std::string tag = "seed" + std::to_string(seed) + ".";
    if (line) {
      LineOptions o;
      o.n = a.n;
      o.epsilon = a.epsilon;
      o.sample = std::min(a.sample, a.n);
      o.seed = seed;
      o.config = a.config;
      if (!a.methods.empty()) o.methods = a.methods;
      ctx.stage = "line benchmark";
      const LineReport r = run_line_benchmark(o);
      ctx.add_timings(r.timings, tag);
      ctx.resolved["max_scale"] = r.max_scale;
      for (std::size_t k = 0; k < r.rows.size(); ++k) {
        write_metrics_row(f, seed, r.rows[k]);
        *ctx.out << "line n=" << a.n << " K=" << r.max_scale << " seed " << seed << " " << r.rows[k].method
                 << ": monotone violations " << r.rows[k].violations << ", spearman " << r.rows[k].spearman << '\n';
      }
      if (!a.plot_dir.empty()) {
        const fs::path p = fs::path(a.plot_dir) / ("line_profile_seed" + std::to_string(seed) + ".csv");
        std::ofstream pf(p);
        pf << "node,x";
        for (const auto& row : r.rows) pf << ',' << row.method;
        pf << '\n';
        for (Eigen::Index i = 0; i < r.positions.size(); ++i) {
          pf << i << ',' << io::format_double(r.positions(i));
          for (const auto& v : r.from_center) pf << ',' << io::format_double(v(i));
          pf << '\n';
        }
        ctx.outputs["plot:" + p.filename().string()] = p.string();
      }
    } else {
      SwissRollOptions o;
      o.m = a.m;
      o.per = a.per;
      o.noise = a.noise;
      o.seed = seed;
      o.rotate = a.rotate;
      o.knn = a.knn;
      o.config = a.config;
      o.engine.gamma = a.gamma;
      o.engine.spectral_rank = a.spectral_rank;
      if (!a.methods.empty()) o.methods = a.methods;
      ctx.stage = "swiss-roll benchmark";
      const SwissRollReport r = run_swiss_roll_benchmark(o);
      ctx.add_timings(r.timings, tag);
      for (const auto& row : r.rows) {
        write_metrics_row(f, seed, row);
        *ctx.out << "swiss-roll m=" << a.m << " per=" << a.per << " seed " << seed << " " << row.method << ": P@10 "
                 << row.p_at_10 << ", spearman " << row.spearman << ", " << row.seconds << " s\n";
        if (!a.plot_dir.empty()) {
          std::vector<io::OracleRow> pairs;
          for (int i = 0; i < a.m; ++i)
            for (int j = i + 1; j < a.m; ++j) pairs.push_back({i, j, r.oracle(i, j), row.distances(i, j)});
          const fs::path p = fs::path(a.plot_dir) / ("pairs_" + row.method + "_seed" + std::to_string(seed) + ".csv");
          io::write_oracle_csv(p, pairs);
          ctx.outputs["plot:" + p.filename().string()] = p.string();
        }
      }
    }
  }
  if (!f) throw InvalidInput("failed writing " + a.output);
  ctx.outputs["metrics"] = a.output;
}

PointCloud random_points(int n, int d, int m, std::uint64_t seed) {
  if (n < 2 || d < 1 || m < 2 || m > n) throw InvalidParameter("gradcheck needs n >= m >= 2 and d >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) x(i, c) = normal(rng);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % m;
  return PointCloud::create(std::move(x), std::move(labels), m);
}

bool cmd_gradcheck(const GradArgs& a, Context& ctx) {
  EmbedConfig config = a.config;
  config.method = EmbedMethod::exact_spectral;
  config.validate();
  ctx.seed = a.seed;
  PointCloud points;
  if (!a.input.empty()) {
    ctx.inputs["points"] = a.input;
    points = ctx.timed("read", [&] { return io::read_points_csv(a.input); });
  } else {
    points = random_points(a.n, a.d, a.m, a.seed);
  }
  if (points.size() > kGradientMaxNodes)
    throw InvalidParameter("gradcheck runs in dense mode, n <= " + std::to_string(kGradientMaxNodes));
  const DistributionSet dist = distributions_for(points);
  std::vector<int> nodes = a.nodes;
  if (nodes.empty()) {
    std::mt19937_64 rng(a.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_int_distribution<int> pick(0, points.size() - 1);
    for (int c = 0; c < a.checks; ++c) nodes.push_back(pick(rng));
  }
  for (int v : nodes)
    if (v < 0 || v >= points.size()) throw InvalidParameter("node " + std::to_string(v) + " out of range");
  std::vector<GradientReport> reports;
  ctx.timed("gradients", [&] {
    for (int v : nodes)
      reports.push_back(finite_difference_check(points, a.epsilon, config, dist, a.i, a.j, v, a.step, a.tolerance));
  });
  ctx.timed("write", [&] { io::write_gradient_csv(a.output, reports); });
  ctx.outputs["report"] = a.output;
  ctx.resolved["n"] = points.size();
  ctx.resolved["nodes"] = nodes;
  ctx.resolved["max_scale"] = config.resolved_max_scale(points.size());
  int failed = 0;
  double worst = 0.0;
  for (const auto& r : reports) {
    worst = std::max(worst, r.max_relative_error);
    if (!r.passed) ++failed;
  }
  ctx.resolved["max_relative_error"] = worst;
  *ctx.out << "gradcheck: " << reports.size() - static_cast<std::size_t>(failed) << " of " << reports.size()
           << " nodes within " << a.tolerance << " (worst " << worst << ")\n";
  return failed == 0;
}

}  // namespace

const char* version() { return DEMD_VERSION; }

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  ctx.argv = raw_args;

  CLI::App app{"Diffusion EMD: multiscale embeddings of distributions on a graph", "demd"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  std::string manifest;
  int workers = 0;

  EmbedArgs ea;
  CLI::App* embed = app.add_subcommand("embed", "Embed the distributions of a labelled point cloud");
  embed->add_option("--input", ea.input, "Point CSV with columns x0..x{d-1},label")->required();
  embed->add_option("--output", ea.output, "Embedding file; metadata goes to <output>.meta")->required();
  embed->add_option("--knn", ea.knn, "Neighbours per node; 0 keeps every pair")->capture_default_str();
  embed->add_option("--epsilon", ea.epsilon, "Fixed Gaussian bandwidth (default: adaptive kNN scales)");
  embed->add_option("--truncate", ea.truncate, "Drop affinities below this value (requires --knn 0)");
  embed->add_option("--method", ea.method, "Diffusion engine")
      ->check(CLI::IsMember({"exact", "chebyshev", "id"}))
      ->capture_default_str();
  add_embed_config(embed, ea.config);
  embed->add_option("--gamma", ea.gamma, "ID reduction threshold (default n / 10)");
  embed->add_flag("--subsample", ea.config.subsample, "Keep only ID-selected centers on the top scales");
  embed->add_option("--spectral-rank", ea.spectral_rank, "Eigenpairs for rank estimates (default 500)");
  embed->add_option("--seed", ea.seed, "Seed for randomized ID");
  embed->add_option("--rank-profile", ea.rank_profile, "CSV of approximate ranks per scale (id method)");
  add_common(embed, manifest, workers);

  MetricArgs da;
  CLI::App* distances = app.add_subcommand("distances", "All-pairs Diffusion EMD of an embedding");
  distances->add_option("--embedding", da.embedding, "Embedding file")->required();
  distances->add_option("--output", da.output, "Distance CSV")->required();
  add_common(distances, manifest, workers);

  MetricArgs ka;
  CLI::App* knn = app.add_subcommand("knn", "k nearest distributions under Diffusion EMD");
  knn->add_option("--embedding", ka.embedding, "Embedding file")->required();
  knn->add_option("--output", ka.output, "Neighbour CSV")->required();
  knn->add_option("--k", ka.k, "Neighbours per distribution");
  add_common(knn, manifest, workers);

  BenchArgs ba;
  CLI::App* bench = app.add_subcommand("benchmark", "Accuracy and time against exact EMD");
  bench->add_option("kind", ba.kind, "line or swiss-roll")->required()->check(CLI::IsMember({"line", "swiss-roll"}));
  bench->add_option("--output", ba.output, "Metrics CSV")->required();
  bench->add_option("--n", ba.n, "Line nodes");
  bench->add_option("--m", ba.m, "Swiss-roll distributions");
  bench->add_option("--per", ba.per, "Points per swiss-roll distribution");
  bench->add_option("--noise", ba.noise, "Swiss-roll blob standard deviation (flat units)");
  bench->add_option("--seeds,--seed", ba.seeds, "One run per seed");
  bench->add_option("--methods", ba.methods, "exact, chebyshev, id, subsample")
      ->check(CLI::IsMember({"exact", "chebyshev", "id", "subsample"}));
  bench->add_option("--knn", ba.knn, "Swiss-roll kNN graph degree");
  bench->add_option("--epsilon", ba.epsilon, "Line Gaussian bandwidth");
  bench->add_option("--sample", ba.sample, "Line nodes in the rank-correlation subsample");
  add_embed_config(bench, ba.config);
  bench->add_option("--gamma", ba.gamma, "ID reduction threshold (default n / 10)");
  bench->add_option("--spectral-rank", ba.spectral_rank, "Eigenpairs for rank estimates (default 500)");
  bench->add_flag("--rotate", ba.rotate, "Embed the swiss roll in 10 dimensions");
  bench->add_flag("--force", ba.force, "Allow more than 50000 nodes");
  bench->add_option("--plot-dir", ba.plot_dir, "Directory for plot-data CSVs");
  add_common(bench, manifest, workers);

  GradArgs ga;
  CLI::App* grad = app.add_subcommand("gradcheck", "Analytic gradient against central differences");
  grad->add_option("--output", ga.output, "Report CSV")->required();
  grad->add_option("--input", ga.input, "Point CSV (default: seeded Gaussian cloud)");
  grad->add_option("--n", ga.n, "Generated points");
  grad->add_option("--d", ga.d, "Generated dimension");
  grad->add_option("--m", ga.m, "Generated distributions");
  grad->add_option("--seed", ga.seed, "Seed for points and node choice");
  grad->add_option("--pair", ga.i, "First distribution");
  grad->add_option("--with", ga.j, "Second distribution");
  grad->add_option("--nodes", ga.nodes, "Nodes to check (default: --checks seeded picks)");
  grad->add_option("--checks", ga.checks, "Number of seeded nodes");
  grad->add_option("--epsilon", ga.epsilon, "Gaussian bandwidth");
  grad->add_option("--step", ga.step, "Central-difference step");
  grad->add_option("--tolerance", ga.tolerance, "Largest accepted relative error");
  ga.config.max_scale = 3;
  grad->add_option("--alpha", ga.config.alpha, "Scale weight exponent, in (0, 0.5]");
  grad->add_option("--max-scale", ga.config.max_scale, "Largest dyadic scale K");
  add_common(grad, manifest, workers);

  for (CLI::App* sub : {embed, distances, knn, bench, grad}) {
    for (CLI::Option* opt : sub->get_options()) opt->capture_default_str();
  }

  try {
    std::vector<std::string> args = merge_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const demd::ParseError& e) {
    err << "error: config: " << e.what() << '\n';
    return kExitInput;
  } catch (const demd::Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  ctx.command = active->get_name();
  ctx.parameters = describe_options(active);
  std::string output;
  if (active == embed) output = ea.output;
  if (active == distances) output = da.output;
  if (active == knn) output = ka.output;
  if (active == bench) output = ba.output;
  if (active == grad) output = ga.output;
  ctx.manifest = default_manifest(manifest, output);

  int code = kExitOk;
  std::string message;
  const auto fail = [&](int c, const std::string& text) {
    code = c;
    message = text;
    err << "error: " << text << '\n';
  };
  try {
    apply_workers(workers, ctx);
    if (active == embed) cmd_embed(ea, ctx);
    if (active == distances) cmd_distances(da, ctx);
    if (active == knn) cmd_knn(ka, ctx);
    if (active == bench) cmd_benchmark(ba, ctx);
    if (active == grad && !cmd_gradcheck(ga, ctx)) {
      code = kExitCheckFailed;
      message = "gradient check failed";
    }
  } catch (const InvalidParameter& e) {
    fail(kExitUsage, e.what());
  } catch (const UnsupportedConfiguration& e) {
    fail(kExitUsage, e.what());
  } catch (const demd::ParseError& e) {
    fail(kExitInput, e.what());
  } catch (const InvalidInput& e) {
    fail(kExitInput, e.what());
  } catch (const DegenerateNode& e) {
    fail(kExitNumerical, "numerical failure in stage '" + ctx.stage + "': " + e.what());
  } catch (const NumericalFailure& e) {
    fail(kExitNumerical, "numerical failure in stage '" + ctx.stage + "': " + e.what());
  } catch (const demd::Error& e) {
    fail(kExitNumerical, "failure in stage '" + ctx.stage + "': " + e.what());
  } catch (const fs::filesystem_error& e) {
    fail(kExitInput, e.what());
  } catch (const std::exception& e) {
    fail(1, std::string("internal error in stage '") + ctx.stage + "': " + e.what());
  }
  write_manifest(ctx, code, message);
  return code;
}

}  // namespace demd::cli
