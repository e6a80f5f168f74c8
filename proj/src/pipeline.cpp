#include "demd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "demd/error.hpp"
#include "demd/metric.hpp"
#include "demd/parallel.hpp"

namespace demd {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int precision_k(int m) { return std::min(10, m - 1); }

double p_at_k(const Matrix& approx, const Matrix& truth) {
  const int k = precision_k(static_cast<int>(truth.rows()));
  return precision_at_k(knn_from_distances(approx, k), knn_from_distances(truth, k), k);
}

EmbedConfig with_method(EmbedConfig config, const std::string& method) {
  config.subsample = false;
  if (method == "exact") {
    config.method = EmbedMethod::exact_spectral;
  } else if (method == "chebyshev") {
    config.method = EmbedMethod::chebyshev;
  } else if (method == "id") {
    config.method = EmbedMethod::interpolative;
  } else if (method == "subsample") {
    config.method = EmbedMethod::chebyshev;
    config.subsample = true;
  } else {
    throw InvalidParameter("unknown benchmark method '" + method + "'");
  }
  return config;
}

bool needs_spectrum(const EmbedConfig& config) {
  return config.subsample || config.method != EmbedMethod::chebyshev;
}

Matrix restrict_rows(const Matrix& d, const IndexList& ids) {
  Matrix out(ids.size(), ids.size());
  for (std::size_t a = 0; a < ids.size(); ++a)
    for (std::size_t b = 0; b < ids.size(); ++b) out(a, b) = d(ids[a], ids[b]);
  return out;
}

}  // namespace

AffinityKernel build_kernel(const PointCloud& points, const KernelOptions& options) {
  if (options.knn < 0) throw InvalidParameter("knn must be nonnegative");
  if (options.knn == 0) {
    if (!options.epsilon) throw InvalidParameter("a full Gaussian kernel needs epsilon");
    return gaussian_affinity(points, *options.epsilon, options.truncate);
  }
  if (options.truncate) throw InvalidParameter("truncate applies to the full Gaussian kernel (knn = 0)");
  return knn_affinity(points, options.knn,
                      options.epsilon ? BandwidthRule::fixed(*options.epsilon) : BandwidthRule::adaptive());
}

EmbeddingRun compute_embedding(const AffinityKernel& kernel, const DistributionSet& dist, const EmbedConfig& config,
                               const EngineOptions& engine, const SpectralCache* spectrum) {
  config.validate();
  if (dist.num_nodes() != kernel.size()) throw InvalidInput("distribution rows do not match the graph size");
  EmbeddingRun run;
  auto t0 = Clock::now();
  const DiffusionOperator op = build_diffusion_operator(kernel);
  run.timings.emplace_back("operator", since(t0));
  const int n = op.size();
  const int max_scale = config.resolved_max_scale(n);

  SpectralCache own;
  if (!spectrum && needs_spectrum(config)) {
    t0 = Clock::now();
    own = engine.spectral_rank > 0 ? spectral_decompose(op, engine.spectral_rank) : spectral_decompose(op);
    spectrum = &own;
    run.timings.emplace_back("spectrum", since(t0));
  }

  t0 = Clock::now();
  switch (config.method) {
    case EmbedMethod::exact_spectral:
      run.stack = diffuse_dyadic_exact(op, *spectrum, dist, max_scale);
      break;
    case EmbedMethod::chebyshev:
      run.stack = diffuse_dyadic_chebyshev(op, dist, max_scale, config.cheb_order);
      break;
    case EmbedMethod::interpolative: {
      if (config.subsample) throw UnsupportedConfiguration("subsampling applies to the exact and Chebyshev engines");
      const int gamma = engine.gamma > 0 ? engine.gamma : std::max(1, n / 10);
      IDEmbeddingResult r = id_diffusion_embedding(kernel, dist, config, gamma, engine.seed, spectrum);
      run.timings.emplace_back("diffusion", since(t0));
      run.embedding = std::move(r.embedding);
      run.stack = std::move(r.stack);
      run.profile = std::move(r.profile);
      run.warnings = std::move(r.warnings);
      return run;
    }
  }
  run.timings.emplace_back("diffusion", since(t0));

  if (config.subsample) {
    t0 = Clock::now();
    SubsampleOptions so;
    so.delta = config.rank_delta;
    so.n_scales_kept = config.n_scales_kept;
    run.stack = subsample_embedding(run.stack, *spectrum, op, so);
    run.timings.emplace_back("subsample", since(t0));
  }
  t0 = Clock::now();
  run.embedding = assemble_embedding(run.stack, config.alpha, max_scale);
  run.embedding.config = config;
  run.embedding.config.max_scale = max_scale;
  run.timings.emplace_back("assemble", since(t0));
  return run;
}

Matrix swiss_roll_oracle(const SwissRoll& roll, int m, int per) {
  if (roll.unrolled.rows() != static_cast<Eigen::Index>(m) * per) throw InvalidInput("swiss roll size does not match m * per");
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) pairs.emplace_back(i, j);
  const Vector w = Vector::Constant(per, 1.0 / per);
  Matrix d = Matrix::Zero(m, m);
  parallel_for_dynamic(static_cast<std::ptrdiff_t>(pairs.size()), [&](std::ptrdiff_t p) {
    const auto [i, j] = pairs[static_cast<std::size_t>(p)];
    const double c = exact_emd(w, w, CostMatrix::euclidean(roll.unrolled.middleRows(i * per, per),
                                                             roll.unrolled.middleRows(j * per, per)));
    d(i, j) = c;
    d(j, i) = c;
  });
  return d;
}

SwissRollReport run_swiss_roll_benchmark(const SwissRollOptions& options) {
  if (options.m < 2 || options.per < 1) throw InvalidParameter("swiss roll needs m >= 2 and per >= 1");
  std::vector<EmbedConfig> configs;
  for (const auto& name : options.methods) configs.push_back(with_method(options.config, name));

  SwissRollReport report;
  auto t0 = Clock::now();
  const SwissRoll roll = generate_swiss_roll(options.m, options.per, options.noise, options.seed, options.rotate);
  report.timings.emplace_back("generate", since(t0));
  t0 = Clock::now();
  report.oracle = swiss_roll_oracle(roll, options.m, options.per);
  report.timings.emplace_back("oracle", since(t0));
  t0 = Clock::now();
  const AffinityKernel kernel = knn_affinity(roll.points, options.knn, BandwidthRule::adaptive());
  const DistributionSet dist = indicator_distributions(roll.points.labels, options.m);
  report.timings.emplace_back("kernel", since(t0));

  SpectralCache spectrum;
  double spectrum_seconds = 0.0;
  if (std::any_of(configs.begin(), configs.end(), needs_spectrum)) {
    t0 = Clock::now();
    const DiffusionOperator op = build_diffusion_operator(kernel);
    spectrum = options.engine.spectral_rank > 0 ? spectral_decompose(op, options.engine.spectral_rank)
                                                : spectral_decompose(op);
    spectrum_seconds = since(t0);
    report.timings.emplace_back("spectrum", spectrum_seconds);
  }

  const Vector truth = upper_triangle(report.oracle);
  for (std::size_t r = 0; r < configs.size(); ++r) {
    t0 = Clock::now();
    EmbeddingRun run = compute_embedding(kernel, dist, configs[r], options.engine, needs_spectrum(configs[r]) ? &spectrum : nullptr);
    MethodMetrics row;
    row.distances = pairwise_distances(run.embedding).values;
    row.seconds = since(t0) + (needs_spectrum(configs[r]) ? spectrum_seconds : 0.0);
    row.benchmark = "swiss-roll";
    row.method = options.methods[r];
    row.n = kernel.size();
    row.m = options.m;
    row.centers = run.stack.total_centers();
    row.p_at_10 = p_at_k(row.distances, report.oracle);
    row.spearman = spearman_rho(upper_triangle(row.distances), truth);
    report.timings.emplace_back(row.method, row.seconds);
    report.rows.push_back(std::move(row));
  }
  return report;
}

DistributionSet line_distributions(const Vector& positions) {
  const Eigen::Index n = positions.size();
  if (n < 2) throw InvalidParameter("line needs at least two nodes");
  Matrix mu = Matrix::Zero(n, n + 1);
  for (Eigen::Index i = 0; i < n; ++i) mu(i, i) = 1.0;
  const auto hi = std::lower_bound(positions.data(), positions.data() + n, 0.5) - positions.data();
  if (hi == 0 || hi == n) throw InvalidInput("0.5 lies outside the line");
  if (positions(hi) == 0.5) {
    mu(hi, n) = 1.0;
  } else {
    const double t = (0.5 - positions(hi - 1)) / (positions(hi) - positions(hi - 1));
    mu(hi - 1, n) = 1.0 - t;
    mu(hi, n) = t;
  }
  return DistributionSet::from_measures(std::move(mu));
}

int monotonicity_violations(const Vector& positions, const Vector& d) {
  std::vector<int> order(static_cast<std::size_t>(positions.size()));
  std::iota(order.begin(), order.end(), 0);
  const auto gap = [&](int i) { return std::abs(positions(i) - 0.5); };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return gap(a) < gap(b); });
  int violations = 0;
  double prev_max = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < order.size();) {
    std::size_t e = s;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    while (e < order.size() && std::abs(gap(order[e]) - gap(order[s])) <= 1e-12) {
      lo = std::min(lo, d(order[e]));
      hi = std::max(hi, d(order[e]));
      ++e;
    }
    if (!(lo > prev_max)) ++violations;
    prev_max = hi;
    s = e;
  }
  return violations;
}

LineReport run_line_benchmark(const LineOptions& options) {
  if (options.sample < 3 || options.sample > options.n) throw InvalidParameter("line sample must lie in [3, n]");
  std::vector<EmbedConfig> configs;
  for (const auto& name : options.methods) {
    if (name == "id" || name == "subsample") throw InvalidParameter("line benchmark runs the exact and chebyshev engines");
    configs.push_back(with_method(options.config, name));
  }
  LineReport report;
  auto t0 = Clock::now();
  const PointCloud line = generate_line_graph(options.n);
  report.positions = line.coords.col(0);
  const AffinityKernel kernel = gaussian_affinity(line, options.epsilon);
  const DistributionSet dist = line_distributions(report.positions);
  report.max_scale = options.config.max_scale > 0 ? options.config.max_scale
                                                  : default_max_scale(build_diffusion_operator(kernel), options.mix_tol);
  for (auto& c : configs) c.max_scale = report.max_scale;
  report.timings.emplace_back("kernel", since(t0));

  std::vector<int> all(static_cast<std::size_t>(options.n));
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(all.begin(), all.end(), rng);
  report.sample.assign(all.begin(), all.begin() + options.sample);
  std::sort(report.sample.begin(), report.sample.end());

  t0 = Clock::now();
  const int s = options.sample;
  Matrix truth = Matrix::Zero(s, s);
  for (int a = 0; a < s; ++a)
    for (int b = a + 1; b < s; ++b)
      truth(a, b) = truth(b, a) = exact_emd_1d(report.positions, dist.measures.col(report.sample[static_cast<std::size_t>(a)]),
                                               dist.measures.col(report.sample[static_cast<std::size_t>(b)]));
  report.timings.emplace_back("oracle", since(t0));

  for (std::size_t r = 0; r < configs.size(); ++r) {
    t0 = Clock::now();
    EmbeddingRun run = compute_embedding(kernel, dist, configs[r]);
    const Matrix all_d = pairwise_distances(run.embedding).values;
    MethodMetrics row;
    row.seconds = since(t0);
    row.benchmark = "line";
    row.method = options.methods[r];
    row.n = options.n;
    row.m = options.n + 1;
    row.centers = run.stack.total_centers();
    const Vector center = all_d.row(options.n).head(options.n).transpose();
    row.violations = monotonicity_violations(report.positions, center);
    row.distances = restrict_rows(all_d, report.sample);
    row.p_at_10 = p_at_k(row.distances, truth);
    row.spearman = spearman_rho(upper_triangle(row.distances), upper_triangle(truth));
    report.from_center.push_back(center);
    report.timings.emplace_back(row.method, row.seconds);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace demd
