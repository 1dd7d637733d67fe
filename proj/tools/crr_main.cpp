// Command-line front end for the cluster-then-retrieve pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "crr/align.hpp"
#include "crr/binarize.hpp"
#include "crr/eval.hpp"
#include "crr/feature_store.hpp"
#include "crr/kmeans.hpp"
#include "crr/retrieval.hpp"
#include "crr/subspace.hpp"
#include "crr/synth_bench.hpp"

namespace {

constexpr const char* kFooter =
    "File formats:\n"
    "  CRFT  feature/code container: magic \"CRFT\", version 1, dtype (1 = f32\n"
    "        features, 2 = packed bit codes), dims u32 LE, rows u64 LE, payload\n"
    "        row-major (f32 LE, or 64-bit code words LSB-first).\n"
    "  CRCB  codebook: magic \"CRCB\", version 1, D u32, M u16, S u16, K u32,\n"
    "        seed u64, then per subspace [D* u32, D* channel ids u32, K x D*\n"
    "        centroids f32 LE].\n"
    "  CRIQ  ITQ model: magic \"CRIQ\", version 1, D u32, B u32, iters u32,\n"
    "        seed u64, mean/projection/rotation f64 LE row-major.\n"
    "  CRTE  toy encoder: magic \"CRTE\", version 1, input u32, hidden u32,\n"
    "        output u32, parameters f64 LE row-major.\n"
    "  Labels are UTF-8 text, one label per LF-terminated line; rankings are\n"
    "  one line per query: \"<query_index>\\t<g1> <g2> ...\".\n"
    "\n"
    "Defaults follow the reference configuration: K=32, M=2, lambda=0.2,\n"
    "ITQ iterations 50. All randomness funnels through --seed; per-subspace\n"
    "K-Means seeds derive as derive_seed(seed, subspace), the proxy model as\n"
    "derive_seed(seed, 0x9999), ITQ state as derive_seed(seed, 0x17).\n";

struct CommonIo {
  std::string format = "crft";
  bool normalize = false;
};

crr::FeatureMatrix load_matrix(const std::string& path, const CommonIo& io) {
  auto m = crr::load_features(path, crr::parse_feature_format(io.format));
  if (!io.normalize) return m;
  auto res = crr::l2_normalize(m);
  if (res.zero_rows > 0)
    std::cerr << "warning: " << res.zero_rows << " zero rows left unnormalized in "
              << path << "\n";
  return std::move(res.features);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw crr::format_error(path.string() + ": cannot open for writing");
  out << text;
  out.close();
  if (!out) throw crr::format_error(path.string() + ": write failed");
}

// ---------------------------------------------------------------- convert

int run_convert(const std::string& in, const std::string& in_format,
                const std::string& out, const std::string& out_format,
                bool normalize) {
  CommonIo io{in_format, normalize};
  const auto m = load_matrix(in, io);
  crr::save_features(m, out, crr::parse_feature_format(out_format));
  std::cerr << "wrote " << out << " (" << m.rows << " x " << m.dims << ")\n";
  return 0;
}

// ---------------------------------------------------------------- cluster

int run_cluster(const std::string& features, const CommonIo& io, std::size_t k,
                std::uint64_t seed, std::size_t max_iters, double tol,
                std::size_t threads, const std::string& out,
                const std::string& labels_path, const std::string& assignment_out) {
  const auto x = load_matrix(features, io);
  const auto fit = crr::kmeans_fit(x, k, seed, max_iters, tol, threads);
  crr::save_codebook(crr::codebook_from_kmeans(fit.model, seed), out);
  std::cerr << "k-means: k=" << k << " inertia=" << fit.model.inertia
            << " iterations=" << fit.model.iterations_run << "\n";

  if (!labels_path.empty()) {
    const auto labels = crr::load_labels(labels_path);
    if (labels.size() != x.rows)
      throw crr::format_error("label count does not match feature rows");
    const double quality_nmi = crr::nmi(fit.assignment.cluster_id, labels.ids);
    const double quality_ari = crr::ari(fit.assignment.cluster_id, labels.ids);
    std::printf("nmi=%.6f ari=%.6f\n", quality_nmi, quality_ari);
  }
  if (!assignment_out.empty()) {
    std::string text;
    for (std::uint32_t c : fit.assignment.cluster_id)
      text += std::to_string(c) + "\n";
    write_text(assignment_out, text);
  }
  return 0;
}

// ---------------------------------------------------------------- build

int run_build(const std::string& gallery, const CommonIo& io, std::size_t k,
              std::size_t m, std::size_t extra, std::uint64_t seed,
              std::size_t threads, const std::string& out,
              const std::string& proxy_out) {
  const auto x = load_matrix(gallery, io);
  const auto layout = crr::make_layout(x.dims, m, seed, extra);
  const auto cb = crr::fit_codebook(x, layout, k, seed, 100, 1e-4, threads);
  crr::save_codebook(cb, out);
  std::cerr << "codebook: D=" << x.dims << " M=" << m << " S="
            << layout.subspace_count() << " K=" << k << " -> " << out << "\n";
  if (!proxy_out.empty()) {
    const auto fit = crr::kmeans_fit(x, k, crr::derive_seed(seed, 0x9999), 100,
                                     1e-4, threads);
    crr::save_codebook(crr::codebook_from_kmeans(fit.model, seed), proxy_out);
    std::cerr << "full-space proxy model -> " << proxy_out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- retrieve

int run_retrieve(const std::string& queries_path, const std::string& gallery_path,
                 const CommonIo& io, const std::string& mode,
                 const std::string& codebook_path, double lambda, bool lambda_set,
                 std::size_t bits, std::size_t itq_iters, std::uint64_t seed,
                 std::size_t top, std::size_t threads, const std::string& out) {
  const auto queries = load_matrix(queries_path, io);
  const auto gallery = load_matrix(gallery_path, io);
  if (queries.dims != gallery.dims)
    throw crr::format_error("query and gallery dimensions differ");

  std::vector<crr::RankedList> rankings;
  if (mode == "exact") {
    rankings = crr::rank_exact_all(queries, gallery, threads);
  } else {
    if (codebook_path.empty())
      throw crr::argument_error("mode '" + mode + "' requires --codebook");
    const auto cb = crr::load_codebook(codebook_path);
    if (cb.layout.dims != gallery.dims)
      throw crr::format_error("codebook dimensionality does not match the gallery");

    if (mode == "proxy") {
      if (cb.layout.subspace_count() != 1)
        throw crr::argument_error(
            "proxy mode needs a single-subspace (full-space K-Means) codebook");
      const auto model = crr::kmeans_from_codebook(cb);
      const auto asn = crr::assign(model, gallery, threads);
      rankings = crr::centroid_proxy_rank_all(queries, model, asn, gallery, threads);
    } else if (mode == "adc") {
      if (lambda_set && lambda != 0.0)
        throw crr::argument_error(
            "adc mode implies lambda=0; fuse with lambda>0 requires mode=fused");
      const auto codes = crr::encode(cb, gallery, threads);
      rankings = crr::rank_adc_all(queries, cb, codes, threads);
    } else if (mode == "fused") {
      const auto codes = crr::encode(cb, gallery, threads);
      const auto recon = crr::reconstruct(cb, codes);
      const auto fused = crr::fuse(gallery, recon, lambda, gallery_path, codebook_path);
      rankings = crr::rank_fused_all(queries, fused, threads);
    } else if (mode == "binary") {
      const auto codes = crr::encode(cb, gallery, threads);
      const auto recon = crr::reconstruct(cb, codes);
      const std::size_t b = bits == 0 ? gallery.dims : bits;
      const auto model = crr::itq_fit(recon, b, itq_iters, seed);
      const auto gallery_codes = crr::itq_encode(model, recon, threads);
      const auto query_codes = crr::itq_encode(model, queries, threads);
      rankings = crr::hamming_rank_all(query_codes, gallery_codes, threads);
    } else {
      throw crr::argument_error("unknown mode '" + mode + "'");
    }
  }
  crr::write_rankings(out, rankings, top);
  std::cerr << "wrote " << rankings.size() << " rankings -> " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

int run_eval(const std::string& ranking_path, const std::string& gallery_labels_path,
             const std::string& query_labels_path, std::size_t prec_k,
             const std::string& out) {
  const auto rankings = crr::read_rankings(ranking_path);
  const auto gallery_labels = crr::load_labels(gallery_labels_path);
  const auto query_labels = crr::load_labels(query_labels_path);
  const auto report = crr::map_at_all(rankings, gallery_labels, query_labels, prec_k);
  const auto json = crr::report_to_json(report, gallery_labels);
  if (out.empty()) {
    std::cout << json;
  } else {
    write_text(out, json);
    std::printf("map_at_all=%.6f prec_at_%zu=%.6f skipped=%zu\n", report.map_at_all,
                report.k, report.prec_at_k, report.skipped_queries);
  }
  return 0;
}

// ---------------------------------------------------------------- hist

int run_hist(const std::string& queries_path, const std::string& gallery_path,
             const CommonIo& io, const std::string& query_labels_path,
             const std::string& gallery_labels_path, std::size_t n_pos,
             std::size_t n_neg, std::size_t bins, std::uint64_t seed,
             const std::string& out) {
  const auto queries = load_matrix(queries_path, io);
  const auto gallery = load_matrix(gallery_path, io);
  const auto query_labels = crr::load_labels(query_labels_path);
  const auto gallery_labels = crr::load_labels(gallery_labels_path);
  const auto hist = crr::distance_histogram(queries, gallery, query_labels,
                                            gallery_labels, n_pos, n_neg, bins, seed);
  write_text(out, crr::histogram_to_csv(hist));
  std::cerr << "wrote " << bins << "-bin histogram (" << n_pos << " positive, "
            << n_neg << " negative pairs) -> " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------- bench

int run_bench(const std::string& out_dir, const crr::BenchSpec& spec) {
  const auto data = crr::generate(spec);
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  crr::save_features(data.gallery, dir / "gallery.crft");
  crr::save_labels(data.gallery_labels, dir / "gallery_labels.txt");
  crr::save_features(data.queries, dir / "queries.crft");
  crr::save_labels(data.query_labels, dir / "query_labels.txt");
  std::cerr << "benchmark: " << data.gallery.rows << " gallery rows, "
            << data.queries.rows << " queries, D=" << spec.dims << " -> " << out_dir
            << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

int run_train(const std::string& images_path, const std::string& image_labels_path,
              const std::string& sketches_path, const std::string& sketch_labels_path,
              const CommonIo& io, const crr::TrainConfig& cfg,
              const std::string& out_encoder, const std::string& trace_out,
              const std::string& out_images, const std::string& out_sketches) {
  const auto images = load_matrix(images_path, io);
  const auto sketches = load_matrix(sketches_path, io);
  const auto image_labels = crr::load_labels(image_labels_path);
  const auto sketch_labels = crr::load_labels(sketch_labels_path);
  const auto result =
      crr::train_toy(images, image_labels, sketches, sketch_labels, cfg);
  if (!out_encoder.empty()) crr::save_encoder(result.encoder, out_encoder);
  if (!trace_out.empty()) write_text(trace_out, crr::trace_to_csv(result.trace));

  const auto emit = [&](const crr::FeatureMatrix& src, const std::string& path) {
    const auto encoded = result.encoder.encode_all(src);
    crr::FeatureMatrix m = crr::FeatureMatrix::zeros(src.rows, cfg.output_dim);
    for (std::size_t v = 0; v < encoded.size(); ++v)
      m.data[v] = static_cast<float>(encoded[v]);
    crr::save_features(m, path);
  };
  if (!out_images.empty()) emit(images, out_images);
  if (!out_sketches.empty()) emit(sketches, out_sketches);

  if (result.trace.epochs() > 0)
    std::printf(
        "epochs=%zu final_total=%.6f final_dist=%.6f cross_domain_pos_dist=%.6f\n",
        result.trace.epochs(), result.trace.total_loss.back(),
        result.trace.dist_loss.back(), result.trace.cross_domain_pos_dist.back());
  return 0;
}

// ---------------------------------------------------------------- ablate

struct AblationRow {
  bool kmeans, fuse_on, subspace, dist;
  std::size_t k, m;
  double lambda;
  double map, prec;
};

AblationRow run_config(const crr::FeatureMatrix& gallery,
                       const crr::FeatureMatrix& queries,
                       const crr::LabelList& gallery_labels,
                       const crr::LabelList& query_labels, bool use_kmeans,
                       bool use_fuse, bool use_subspace, bool dist_features,
                       std::size_t k, std::size_t m, double lambda,
                       std::uint64_t seed, std::size_t threads) {
  std::vector<crr::RankedList> rankings;
  const std::size_t m_eff = use_subspace ? m : 1;
  if (!use_kmeans) {
    rankings = crr::rank_exact_all(queries, gallery, threads);
  } else if (!use_fuse && !use_subspace) {
    // Pure cluster-proxy retrieval over full-space centroids.
    const auto fit = crr::kmeans_fit(gallery, k, crr::derive_seed(seed, 0x9999),
                                     100, 1e-4, threads);
    rankings = crr::centroid_proxy_rank_all(queries, fit.model, fit.assignment,
                                            gallery, threads);
  } else {
    const auto layout = crr::make_layout(gallery.dims, m_eff, seed);
    const auto cb = crr::fit_codebook(gallery, layout, k, seed, 100, 1e-4, threads);
    const auto codes = crr::encode(cb, gallery, threads);
    const auto recon = crr::reconstruct(cb, codes);
    const double l = use_fuse ? lambda : 0.0;
    const auto fused = crr::fuse(gallery, recon, l);
    rankings = crr::rank_fused_all(queries, fused, threads);
  }
  const auto report = crr::map_at_all(rankings, gallery_labels, query_labels, 100);
  return AblationRow{use_kmeans, use_fuse,   use_subspace,      dist_features,
                     k,          m_eff,      use_fuse ? lambda : 0.0,
                     report.map_at_all,      report.prec_at_k};
}

int run_ablate(const std::string& gallery_path, const std::string& queries_path,
               const CommonIo& io, const std::string& gallery_labels_path,
               const std::string& query_labels_path,
               const std::string& aligned_gallery_path,
               const std::string& aligned_queries_path, std::size_t k, std::size_t m,
               double lambda, std::uint64_t seed, const std::vector<std::size_t>& sweep,
               std::size_t threads, const std::string& out) {
  const auto gallery_labels = crr::load_labels(gallery_labels_path);
  const auto query_labels = crr::load_labels(query_labels_path);

  std::vector<AblationRow> rows;
  const auto run_set = [&](const crr::FeatureMatrix& g, const crr::FeatureMatrix& q,
                           bool dist) {
    // The Table-2 grid: {}, {K}, {K,F}, {K,S}, {K,F,S}.
    rows.push_back(run_config(g, q, gallery_labels, query_labels, false, false,
                              false, dist, k, m, lambda, seed, threads));
    rows.push_back(run_config(g, q, gallery_labels, query_labels, true, false,
                              false, dist, k, m, lambda, seed, threads));
    rows.push_back(run_config(g, q, gallery_labels, query_labels, true, true,
                              false, dist, k, m, lambda, seed, threads));
    rows.push_back(run_config(g, q, gallery_labels, query_labels, true, false,
                              true, dist, k, m, lambda, seed, threads));
    rows.push_back(run_config(g, q, gallery_labels, query_labels, true, true,
                              true, dist, k, m, lambda, seed, threads));
    for (std::size_t k_sweep : sweep)
      rows.push_back(run_config(g, q, gallery_labels, query_labels, true, true,
                                true, dist, k_sweep, m, lambda, seed, threads));
  };

  const auto gallery = load_matrix(gallery_path, io);
  const auto queries = load_matrix(queries_path, io);
  run_set(gallery, queries, false);
  if (!aligned_gallery_path.empty() != !aligned_queries_path.empty())
    throw crr::argument_error(
        "--aligned-gallery and --aligned-queries must be given together");
  if (!aligned_gallery_path.empty()) {
    const auto g2 = load_matrix(aligned_gallery_path, io);
    const auto q2 = load_matrix(aligned_queries_path, io);
    run_set(g2, q2, true);
  }

  std::string csv = "kmeans,fuse,subspace,dist,k,m,lambda,map_at_all,prec_at_100\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%zu,%zu,%.17g,%.17g,%.17g\n",
                  r.kmeans ? 1 : 0, r.fuse_on ? 1 : 0, r.subspace ? 1 : 0,
                  r.dist ? 1 : 0, r.kmeans ? r.k : 0, r.kmeans ? r.m : 0, r.lambda,
                  r.map, r.prec);
    csv += buf;
  }
  write_text(out, csv);
  std::cerr << "wrote " << rows.size() << " ablation rows -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cluster-then-retrieve vector search engine"};
  app.footer(kFooter);
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "key=value config file; one [section] per subcommand; "
                 "command-line flags take precedence");

  // convert
  std::string c_in, c_out, c_in_format = "crft", c_out_format = "crft";
  bool c_normalize = false;
  auto* convert = app.add_subcommand("convert", "convert feature files (crft/csv)");
  convert->add_option("--in", c_in, "input feature file")->required();
  convert->add_option("--in-format", c_in_format, "crft|csv");
  convert->add_option("--out", c_out, "output feature file")->required();
  convert->add_option("--out-format", c_out_format, "crft|csv");
  convert->add_flag("--normalize", c_normalize, "L2-normalize rows (opt-in)");

  // cluster
  std::string cl_features, cl_out, cl_labels, cl_assignment;
  CommonIo cl_io;
  std::size_t cl_k = 32, cl_iters = 100, cl_threads = 0;
  double cl_tol = 1e-4;
  std::uint64_t cl_seed = 0;
  auto* cluster = app.add_subcommand(
      "cluster", "full-space k-means; optional NMI/ARI against labels");
  cluster->add_option("--features", cl_features, "feature file")->required();
  cluster->add_option("--format", cl_io.format, "crft|csv");
  cluster->add_flag("--normalize", cl_io.normalize, "L2-normalize rows");
  cluster->add_option("--k", cl_k, "cluster count (default 32)");
  cluster->add_option("--seed", cl_seed, "random seed");
  cluster->add_option("--max-iters", cl_iters, "Lloyd iteration cap");
  cluster->add_option("--tol", cl_tol, "relative inertia improvement tolerance");
  cluster->add_option("--threads", cl_threads, "worker threads (0 = auto)");
  cluster->add_option("--out", cl_out, "output model (M=1 CRCB)")->required();
  cluster->add_option("--labels", cl_labels, "ground-truth labels for NMI/ARI");
  cluster->add_option("--assignment-out", cl_assignment, "write cluster ids");

  // build
  std::string b_gallery, b_out, b_proxy_out;
  CommonIo b_io;
  std::size_t b_k = 32, b_m = 2, b_extra = 0, b_threads = 0;
  std::uint64_t b_seed = 0;
  auto* build = app.add_subcommand("build", "fit a subspace codebook (CRCB)");
  build->add_option("--gallery", b_gallery, "gallery feature file")->required();
  build->add_option("--format", b_io.format, "crft|csv");
  build->add_flag("--normalize", b_io.normalize, "L2-normalize rows");
  build->add_option("--k", b_k, "centroids per subspace (default 32)");
  build->add_option("--m", b_m, "subspace count M (default 2)");
  build->add_option("--extra-subspaces", b_extra, "extra sampled subspaces");
  build->add_option("--seed", b_seed, "random seed");
  build->add_option("--threads", b_threads, "worker threads (0 = auto)");
  build->add_option("--out", b_out, "output codebook path")->required();
  build->add_option("--proxy-out", b_proxy_out,
                    "also fit/persist a full-space K-Means model for proxy mode");

  // retrieve
  std::string r_queries, r_gallery, r_codebook, r_out, r_mode = "fused";
  CommonIo r_io;
  double r_lambda = 0.2;
  std::size_t r_bits = 0, r_itq_iters = 50, r_top = 0, r_threads = 0;
  std::uint64_t r_seed = 0;
  auto* retrieve = app.add_subcommand("retrieve", "rank the gallery per query");
  retrieve->add_option("--queries", r_queries, "query feature file")->required();
  retrieve->add_option("--gallery", r_gallery, "gallery feature file")->required();
  retrieve->add_option("--format", r_io.format, "crft|csv");
  retrieve->add_flag("--normalize", r_io.normalize, "L2-normalize rows");
  retrieve->add_option("--codebook", r_codebook, "CRCB codebook");
  auto* lambda_opt = retrieve->add_option(
      "--lambda", r_lambda, "fuse coefficient in [0,1] (default 0.2)");
  retrieve->add_option("--mode", r_mode, "exact|proxy|adc|fused|binary");
  retrieve->add_option("--bits", r_bits, "ITQ code width (default: feature dims)");
  retrieve->add_option("--itq-iters", r_itq_iters, "ITQ iterations (default 50)");
  retrieve->add_option("--seed", r_seed, "random seed (binary mode)");
  retrieve->add_option("--top", r_top, "emit only the top-k indices per query");
  retrieve->add_option("--threads", r_threads, "worker threads (0 = auto)");
  retrieve->add_option("--out", r_out, "output ranking file")->required();

  // eval
  std::string e_ranking, e_gallery_labels, e_query_labels, e_out;
  std::size_t e_prec_k = 100;
  auto* eval_cmd = app.add_subcommand("eval", "score a ranking file (JSON report)");
  eval_cmd->add_option("--ranking", e_ranking, "ranking file")->required();
  eval_cmd->add_option("--gallery-labels", e_gallery_labels, "gallery labels")
      ->required();
  eval_cmd->add_option("--query-labels", e_query_labels, "query labels")->required();
  eval_cmd->add_option("--prec-k", e_prec_k, "precision cutoff (default 100)");
  eval_cmd->add_option("--out", e_out, "report path (stdout when omitted)");

  // hist
  std::string h_queries, h_gallery, h_query_labels, h_gallery_labels, h_out;
  CommonIo h_io;
  std::size_t h_pos = 1000, h_neg = 9000, h_bins = 50;
  std::uint64_t h_seed = 0;
  auto* hist = app.add_subcommand(
      "hist", "cross-domain distance histogram (sampled positive/negative pairs)");
  hist->add_option("--queries", h_queries, "query feature file")->required();
  hist->add_option("--gallery", h_gallery, "gallery feature file")->required();
  hist->add_option("--format", h_io.format, "crft|csv");
  hist->add_flag("--normalize", h_io.normalize, "L2-normalize rows");
  hist->add_option("--query-labels", h_query_labels, "query labels")->required();
  hist->add_option("--gallery-labels", h_gallery_labels, "gallery labels")->required();
  hist->add_option("--n-pos", h_pos, "positive pairs to sample (default 1000)");
  hist->add_option("--n-neg", h_neg, "negative pairs to sample (default 9000)");
  hist->add_option("--bins", h_bins, "histogram bins (default 50)");
  hist->add_option("--seed", h_seed, "sampling seed");
  hist->add_option("--out", h_out, "output CSV path")->required();

  // bench
  std::string g_out_dir;
  crr::BenchSpec spec;
  auto* bench = app.add_subcommand("bench", "generate a synthetic two-domain benchmark");
  bench->add_option("--out-dir", g_out_dir, "output directory")->required();
  bench->add_option("--classes", spec.class_count, "class count (default 25)");
  bench->add_option("--gallery-per-class", spec.gallery_per_class, "default 20");
  bench->add_option("--queries-per-class", spec.queries_per_class, "default 5");
  bench->add_option("--dims", spec.dims, "feature dims (default 512)");
  bench->add_option("--view-modes", spec.view_modes, "sub-clusters per class (default 4)");
  bench->add_option("--domain-shift", spec.domain_shift, "query domain shift magnitude");
  bench->add_option("--noise", spec.noise, "per-coordinate noise (default 0.1)");
  bench->add_option("--sketch-sparsity", spec.sketch_sparsity,
                    "fraction of query channels zeroed");
  bench->add_option("--seed", spec.seed, "generator seed");

  // train
  std::string t_images, t_image_labels, t_sketches, t_sketch_labels;
  std::string t_out_encoder, t_trace, t_out_images, t_out_sketches;
  CommonIo t_io;
  crr::TrainConfig cfg;
  auto* train = app.add_subcommand("train", "train the toy two-domain aligner");
  train->add_option("--images", t_images, "image-domain features")->required();
  train->add_option("--image-labels", t_image_labels, "image labels")->required();
  train->add_option("--sketches", t_sketches, "sketch-domain features")->required();
  train->add_option("--sketch-labels", t_sketch_labels, "sketch labels")->required();
  train->add_option("--format", t_io.format, "crft|csv");
  train->add_flag("--normalize", t_io.normalize, "L2-normalize rows");
  train->add_option("--lambda1", cfg.lambda1, "classification weight (default 1)");
  train->add_option("--lambda3", cfg.lambda3, "alignment weight (default 0.1)");
  train->add_option("--lr", cfg.learning_rate, "learning rate (default 1e-2)");
  train->add_option("--epochs", cfg.epochs, "epochs (default 200)");
  train->add_option("--batch", cfg.batch_size, "batch size (default 32)");
  train->add_option("--output-dim", cfg.output_dim, "encoder output width");
  train->add_option("--hidden-dim", cfg.hidden_dim, "tanh hidden width (0 = linear)");
  train->add_option("--seed", cfg.seed, "training seed");
  train->add_option("--out-encoder", t_out_encoder, "encoder output (CRTE)");
  train->add_option("--trace", t_trace, "per-epoch trace CSV");
  train->add_option("--out-images", t_out_images, "write encoded image features");
  train->add_option("--out-sketches", t_out_sketches, "write encoded sketch features");

  // ablate
  std::string a_gallery, a_queries, a_gallery_labels, a_query_labels;
  std::string a_aligned_gallery, a_aligned_queries, a_out;
  CommonIo a_io;
  std::size_t a_k = 32, a_m = 2, a_threads = 0;
  double a_lambda = 0.2;
  std::uint64_t a_seed = 0;
  std::vector<std::size_t> a_sweep;
  auto* ablate = app.add_subcommand("ablate", "run the module ablation grid (CSV)");
  ablate->add_option("--gallery", a_gallery, "gallery features")->required();
  ablate->add_option("--queries", a_queries, "query features")->required();
  ablate->add_option("--format", a_io.format, "crft|csv");
  ablate->add_flag("--normalize", a_io.normalize, "L2-normalize rows");
  ablate->add_option("--gallery-labels", a_gallery_labels, "gallery labels")->required();
  ablate->add_option("--query-labels", a_query_labels, "query labels")->required();
  ablate->add_option("--aligned-gallery", a_aligned_gallery,
                     "gallery features from an alignment-trained encoder");
  ablate->add_option("--aligned-queries", a_aligned_queries,
                     "query features from an alignment-trained encoder");
  ablate->add_option("--k", a_k, "centroids per subspace (default 32)");
  ablate->add_option("--m", a_m, "subspace count for subspace rows (default 2)");
  ablate->add_option("--lambda", a_lambda, "fuse coefficient (default 0.2)");
  ablate->add_option("--seed", a_seed, "random seed");
  ablate->add_option("--k-sweep", a_sweep,
                     "extra full-pipeline rows at these K values");
  ablate->add_option("--threads", a_threads, "worker threads (0 = auto)");
  ablate->add_option("--out", a_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
    if (*convert)
      return run_convert(c_in, c_in_format, c_out, c_out_format, c_normalize);
    if (*cluster)
      return run_cluster(cl_features, cl_io, cl_k, cl_seed, cl_iters, cl_tol,
                         cl_threads, cl_out, cl_labels, cl_assignment);
    if (*build)
      return run_build(b_gallery, b_io, b_k, b_m, b_extra, b_seed, b_threads, b_out,
                       b_proxy_out);
    if (*retrieve)
      return run_retrieve(r_queries, r_gallery, r_io, r_mode, r_codebook, r_lambda,
                          lambda_opt->count() > 0, r_bits, r_itq_iters, r_seed,
                          r_top, r_threads, r_out);
    if (*eval_cmd)
      return run_eval(e_ranking, e_gallery_labels, e_query_labels, e_prec_k, e_out);
    if (*hist)
      return run_hist(h_queries, h_gallery, h_io, h_query_labels, h_gallery_labels,
                      h_pos, h_neg, h_bins, h_seed, h_out);
    if (*bench) return run_bench(g_out_dir, spec);
    if (*train)
      return run_train(t_images, t_image_labels, t_sketches, t_sketch_labels, t_io,
                       cfg, t_out_encoder, t_trace, t_out_images, t_out_sketches);
    if (*ablate)
      return run_ablate(a_gallery, a_queries, a_io, a_gallery_labels, a_query_labels,
                        a_aligned_gallery, a_aligned_queries, a_k, a_m, a_lambda,
                        a_seed, a_sweep, a_threads, a_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const crr::argument_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
