#include "qhash/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>

#include "qhash/baselines.hpp"
#include "qhash/codes.hpp"
#include "qhash/harness.hpp"
#include "qhash/index.hpp"
#include "qhash/io.hpp"
#include "qhash/trainer.hpp"

namespace qhash::cli {

namespace {

// Sends output to `path` when given, else to the fallback stream.
void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError("cannot open '" + path + "' for writing");
  write(file);
  file.flush();
  if (!file) throw IoError("write to '" + path + "' failed");
}

struct GenDataArgs {
  std::size_t classes = 8;
  std::size_t per_class = 50;
  std::size_t dim = 16;
  double spread = 0.3;
  std::uint64_t seed = 0;
  std::string prefix;
};

void gen_data(const GenDataArgs& a) {
  const SyntheticDataset ds = make_blobs(a.classes, a.per_class, a.dim, a.spread, a.seed);
  io::write_embeddings(a.prefix + ".qemb", ds.features);
  io::write_labels(a.prefix + ".labels", ds.labels);
}

struct AssignArgs {
  std::string embeddings;
  std::string labels;
  std::string method = "mcf";
  std::size_t k = 1;
  std::optional<double> lambda;
  std::int64_t scale = kDefaultCostScale;
  std::optional<std::size_t> centroids;
  std::uint64_t seed = 0;
  std::string codebook_out;
  std::string out;
};

void assign(const AssignArgs& a, std::ostream& out) {
  const Matrix emb = io::read_embeddings(a.embeddings);
  std::vector<HashCode> codes;
  std::size_t dim = emb.cols();
  if (a.method == "mcf") {
    if (a.labels.empty()) throw InvalidInput("--method mcf needs --labels");
    const auto raw = io::read_labels(a.labels);
    if (raw.size() != emb.rows()) throw InvalidInput("labels and embeddings differ in length");
    const EmbeddingSet set = EmbeddingSet::from_raw_labels(emb, raw);
    AssignmentProblem p;
    p.means = class_means(set);
    p.lambda = a.lambda ? std::vector<double>(dim, *a.lambda) : default_lambda(p.means);
    p.k = a.k;
    const AssignmentSolution s = solve_assignment(p, a.scale);
    codes = expand_class_codes(s.codes, set.labels());
  } else if (a.method == "th") {
    codes = th_codes(emb, a.k);
  } else if (a.method == "vq") {
    KMeansConfig km;
    km.centroids = a.centroids.value_or(emb.cols());
    km.seed = a.seed;
    const Codebook cb = kmeans(emb, km);
    if (!a.codebook_out.empty()) io::write_embeddings(a.codebook_out, cb.centroids);
    codes = vq_codes(emb, cb, a.k);
    dim = km.centroids;
  } else {
    throw InvalidInput("unknown method '" + a.method + "' (expected mcf, th or vq)");
  }
  emit(a.out, out, [&](std::ostream& os) { io::write_codes(os, codes, dim); });
}

struct EvalArgs {
  std::string index_embeddings;
  std::string index_labels;
  std::string codes;
  std::string query_embeddings;
  std::string query_labels;
  std::string query_codes;
  std::vector<std::size_t> topk{1, 4, 16};
  std::string method = "ours";
  bool exclude_self = false;
  std::string out;
};

void evaluate_files(const EvalArgs& a, std::ostream& out) {
  Matrix base = io::read_embeddings(a.index_embeddings);
  auto labels = io::read_labels(a.index_labels);
  auto codes = io::read_codes(a.codes);
  // Omitted query files default to the index files.
  auto or_index = [](const std::string& q, const std::string& ix) { return q.empty() ? ix : q; };
  const Matrix q_emb = io::read_embeddings(or_index(a.query_embeddings, a.index_embeddings));
  const auto q_labels = io::read_labels(or_index(a.query_labels, a.index_labels));
  const auto q_codes = io::read_codes(or_index(a.query_codes, a.codes));
  if (codes.empty() || q_codes.empty()) throw InvalidInput("index and query code files must be non-empty");
  if (codes.front().dim() != q_codes.front().dim()) throw InvalidInput("index and query codes differ in d");
  for (std::size_t K : a.topk) {
    if (K == 0) throw InvalidInput("--topk values must be >= 1");
  }
  const HashIndex ix(std::move(codes), std::move(base), std::move(labels));
  const MetricRow row = evaluate(a.method, ix, q_codes, q_emb, q_labels, a.topk, a.exclude_self);
  emit(a.out, out, [&](std::ostream& os) {
    write_metric_header(os, a.topk);
    write_metric_row(os, row);
  });
}

const std::set<std::string> kTrainKeys{
    "embeddings", "labels",     "classes",  "per_class_items", "input_dim", "spread",
    "d",          "k",          "lambda",   "loss",            "margin",    "npairs_reg",
    "normalize",  "gamma",      "batch_classes", "per_class",  "max_iter",  "beta1",
    "beta2",      "adam_eps",   "step",     "cost_scale",      "codes_out"};

void train_from_config(const std::string& path, std::uint64_t seed, const std::string& out_path,
                       std::ostream& out) {
  const io::KeyValueConfig kv = io::KeyValueConfig::load(path);
  kv.reject_unknown(kTrainKeys);
  Rng root(seed);
  const std::uint64_t data_seed = root.next_u64();

  Matrix features;
  std::vector<int> labels;
  if (kv.has("embeddings")) {
    if (!kv.has("labels")) throw InvalidInput(path + ": 'embeddings' needs a matching 'labels' key");
    features = io::read_embeddings(kv.get_string("embeddings"));
    const auto raw = io::read_labels(kv.get_string("labels"));
    if (raw.size() != features.rows()) throw InvalidInput("labels and embeddings differ in length");
    labels = canonicalize_labels(raw).first;
  } else {
    const std::size_t classes = kv.get_size("classes");
    const std::size_t items = kv.has("per_class_items") ? kv.get_size("per_class_items") : 50;
    const std::size_t input_dim = kv.has("input_dim") ? kv.get_size("input_dim") : 16;
    const double spread = kv.has("spread") ? kv.get_double("spread") : 0.3;
    SyntheticDataset ds = make_blobs(classes, items, input_dim, spread, data_seed);
    features = std::move(ds.features);
    labels = std::move(ds.labels);
  }

  TrainConfig cfg;
  cfg.seed = root.next_u64();
  if (kv.has("d")) cfg.d = kv.get_size("d");
  if (kv.has("k")) cfg.k = kv.get_size("k");
  if (kv.has("lambda")) {
    cfg.lambda = kv.get_doubles("lambda");
    if (cfg.lambda.size() == 1) cfg.lambda.assign(cfg.d, cfg.lambda.front());
  }
  if (kv.has("loss")) {
    const std::string loss = kv.get_string("loss");
    if (loss == "triplet") cfg.loss_kind = LossKind::triplet;
    else if (loss == "npairs") cfg.loss_kind = LossKind::npairs;
    else throw InvalidInput(path + ": loss must be triplet or npairs, got '" + loss + "'");
  }
  if (kv.has("margin")) cfg.loss_cfg.margin_alpha = kv.get_double("margin");
  if (kv.has("npairs_reg")) cfg.loss_cfg.npairs_reg_lambda = kv.get_double("npairs_reg");
  if (kv.has("normalize")) cfg.loss_cfg.normalize = kv.get_bool("normalize");
  if (kv.has("gamma")) cfg.gamma = kv.get_double("gamma");
  if (kv.has("batch_classes")) cfg.batch_classes = kv.get_size("batch_classes");
  if (kv.has("per_class")) cfg.per_class = kv.get_size("per_class");
  else if (cfg.loss_kind == LossKind::npairs) cfg.per_class = 2;
  if (kv.has("max_iter")) cfg.max_iter = kv.get_size("max_iter");
  if (kv.has("beta1")) cfg.adam.beta1 = kv.get_double("beta1");
  if (kv.has("beta2")) cfg.adam.beta2 = kv.get_double("beta2");
  if (kv.has("adam_eps")) cfg.adam.eps = kv.get_double("adam_eps");
  if (kv.has("step")) cfg.adam.step = kv.get_double("step");
  if (kv.has("cost_scale")) cfg.cost_scale = kv.get_int("cost_scale");

  const TrainResult result = train(features, labels, cfg);
  if (kv.has("codes_out")) {
    io::write_codes(kv.get_string("codes_out"), hash_items(result.model, features, cfg.k), cfg.d);
  }
  emit(out_path, out, [&](std::ostream& os) { write_history_csv(os, result.history); });
}

struct SufArgs {
  std::size_t d = 0;
  std::size_t k = 0;
  std::optional<std::size_t> simulate;
  std::optional<std::size_t> queries;
  std::uint64_t seed = 0;
  std::string out;
};

void suf(const SufArgs& a, std::ostream& out) {
  const SufAnalysis t = theoretical_suf(a.d, a.k);
  std::optional<SufSimulation> sim;
  std::size_t queries = 0;
  if (a.simulate) {
    queries = a.queries.value_or(*a.simulate);
    Rng rng(a.seed);
    sim = simulate_suf(*a.simulate, a.d, a.k, queries, rng);
  }
  emit(a.out, out, [&](std::ostream& os) {
    const auto precision = os.precision(10);
    os << "d,k,theory_suf,p,variance_factor";
    if (sim) os << ",n,queries,measured_suf,mean_candidates,expected_candidates,standard_error";
    os << '\n' << a.d << ',' << a.k << ',' << t.suf << ',' << t.no_collision_prob << ',' << t.variance_factor;
    if (sim) {
      os << ',' << *a.simulate << ',' << queries << ',' << sim->measured_suf << ',' << sim->mean_candidates << ','
         << sim->expected_candidates << ',' << sim->standard_error;
    }
    os << '\n';
    os.precision(precision);
  });
}

struct BenchArgs {
  std::vector<std::size_t> nc_list{16, 32};
  std::vector<std::size_t> d_list{32, 64};
  std::size_t k = 1;
  std::size_t repeats = 20;
  std::uint64_t seed = 0;
  std::string out;
};

void bench(const BenchArgs& a, std::ostream& out) {
  Rng rng(a.seed);
  std::vector<BenchPoint> points;
  for (std::size_t n_c : a.nc_list) {
    for (std::size_t d : a.d_list) {
      if (a.k > d) throw InvalidInput("bench-mcf needs k <= d for every grid point");
      points.push_back(bench_assignment(n_c, d, a.k, a.repeats, rng));
    }
  }
  emit(a.out, out, [&](std::ostream& os) {
    os << "n_c,d,k,repeats,mean_seconds\n";
    for (const auto& p : points) os << p.n_c << ',' << p.d << ',' << p.k << ',' << p.repeats << ',' << p.mean_seconds << '\n';
  });
}

struct GradArgs {
  std::string loss;
  std::size_t batches = 10;
  double epsilon = 1e-5;
  GradcheckShape shape;
  std::uint64_t seed = 0;
  std::string out;
};

constexpr double kGradTolerance = 1e-3;

int gradcheck_cmd(const GradArgs& a, std::ostream& out, std::ostream& err) {
  LossKind kind;
  if (a.loss == "triplet") kind = LossKind::triplet;
  else if (a.loss == "npairs") kind = LossKind::npairs;
  else throw InvalidInput("--loss must be triplet or npairs");
  Rng rng(a.seed);
  const double worst = gradcheck(kind, a.shape, LossConfig{}, a.batches, a.epsilon, rng);
  emit(a.out, out, [&](std::ostream& os) {
    os << "loss,batches,epsilon,max_rel_error\n" << a.loss << ',' << a.batches << ',' << a.epsilon << ',' << worst << '\n';
  });
  if (worst > kGradTolerance) {
    err << "gradient check failed: max relative error " << worst << " > " << kGradTolerance << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned k-sparse hash codes with exact min-cost-flow assignment"};
  app.name("qhash");
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write Gaussian-blob features and labels");
  gen_cmd->add_option("--classes", gen.classes)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--per-class", gen.per_class)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--dim", gen.dim)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--spread", gen.spread)->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out-prefix", gen.prefix)->required();

  AssignArgs as;
  auto* assign_cmd = app.add_subcommand("assign", "Compute hash codes (mcf, th or vq)");
  assign_cmd->add_option("--embeddings", as.embeddings)->required();
  assign_cmd->add_option("--labels", as.labels);
  assign_cmd->add_option("--method", as.method)->check(CLI::IsMember({"mcf", "th", "vq"}));
  assign_cmd->add_option("--k", as.k)->check(CLI::PositiveNumber);
  assign_cmd->add_option("--lambda", as.lambda)->check(CLI::NonNegativeNumber);
  assign_cmd->add_option("--scale", as.scale)->check(CLI::PositiveNumber);
  assign_cmd->add_option("--centroids", as.centroids, "VQ codebook size (default: embedding dim)");
  assign_cmd->add_option("--seed", as.seed);
  assign_cmd->add_option("--codebook-out", as.codebook_out);
  assign_cmd->add_option("--out", as.out);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Build the index and report SUF, Pr@k and NMI");
  eval_cmd->add_option("--index-embeddings", ev.index_embeddings)->required();
  eval_cmd->add_option("--index-labels", ev.index_labels)->required();
  eval_cmd->add_option("--codes", ev.codes)->required();
  eval_cmd->add_option("--query-embeddings", ev.query_embeddings, "Default: the index embeddings");
  eval_cmd->add_option("--query-labels", ev.query_labels, "Default: the index labels");
  eval_cmd->add_option("--query-codes", ev.query_codes, "Default: the index codes");
  eval_cmd->add_option("--topk", ev.topk)->delimiter(',');
  eval_cmd->add_option("--method", ev.method);
  eval_cmd->add_flag("--exclude-self", ev.exclude_self, "Query i is index item i");
  eval_cmd->add_option("--out", ev.out);

  std::string config_path;
  std::uint64_t train_seed = 0;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "Alternating training from a key = value config");
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--out", train_out);

  SufArgs sa;
  auto* suf_cmd = app.add_subcommand("suf", "Expected speedup under uniform codes");
  suf_cmd->add_option("--d", sa.d)->required()->check(CLI::PositiveNumber);
  suf_cmd->add_option("--k", sa.k)->required()->check(CLI::PositiveNumber);
  suf_cmd->add_option("--simulate", sa.simulate, "Monte-Carlo index size n")->check(CLI::PositiveNumber);
  suf_cmd->add_option("--queries", sa.queries)->check(CLI::PositiveNumber);
  suf_cmd->add_option("--seed", sa.seed);
  suf_cmd->add_option("--out", sa.out);

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench-mcf", "Mean assignment solve time over an (n_c, d) grid");
  bench_cmd->add_option("--nc-list", ba.nc_list)->delimiter(',');
  bench_cmd->add_option("--d-list", ba.d_list)->delimiter(',');
  bench_cmd->add_option("--k", ba.k)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeats", ba.repeats)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", ba.seed);
  bench_cmd->add_option("--out", ba.out);

  GradArgs ga;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare loss gradients with central differences");
  grad_cmd->add_option("--loss", ga.loss)->required()->check(CLI::IsMember({"triplet", "npairs"}));
  grad_cmd->add_option("--batches", ga.batches)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--epsilon", ga.epsilon)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--classes", ga.shape.classes);
  grad_cmd->add_option("--per-class", ga.shape.per_class);
  grad_cmd->add_option("--dim", ga.shape.dim);
  grad_cmd->add_option("--k", ga.shape.k);
  grad_cmd->add_option("--seed", ga.seed);
  grad_cmd->add_option("--out", ga.out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (gen_cmd->parsed()) gen_data(gen);
    else if (assign_cmd->parsed()) assign(as, out);
    else if (eval_cmd->parsed()) evaluate_files(ev, out);
    else if (train_cmd->parsed()) train_from_config(config_path, train_seed, train_out, out);
    else if (suf_cmd->parsed()) suf(sa, out);
    else if (bench_cmd->parsed()) bench(ba, out);
    else if (grad_cmd->parsed()) return gradcheck_cmd(ga, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const OverflowError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace qhash::cli
