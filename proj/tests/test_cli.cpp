#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "qhash/baselines.hpp"
#include "qhash/cli.hpp"
#include "qhash/codes.hpp"
#include "qhash/io.hpp"
#include "qhash/trainer.hpp"

using namespace qhash;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// A fresh scratch directory per test case.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("qhash_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST_CASE("embedding file round trip") {
  Rng rng(80);
  Matrix m(7, 3);
  for (double& v : m.values()) v = static_cast<float>(rng.gaussian());
  std::stringstream ss;
  io::write_embeddings(ss, m);
  CHECK(ss.str().substr(0, 4) == "QEMB");
  CHECK(ss.str().size() == 4 + 2 + 4 + 4 + 7 * 3 * 4);
  CHECK(io::read_embeddings(ss) == m);

  std::stringstream bad_magic("QEMX...........");
  CHECK_THROWS_AS(io::read_embeddings(bad_magic), IoError);
  std::stringstream again;
  io::write_embeddings(again, m);
  std::string truncated = again.str();
  truncated.pop_back();
  std::stringstream t(truncated);
  CHECK_THROWS_AS(io::read_embeddings(t), IoError);
  std::stringstream trailing(again.str() + "x");
  CHECK_THROWS_AS(io::read_embeddings(trailing), IoError);
  std::stringstream sink;
  CHECK_THROWS_AS(io::write_embeddings(sink, Matrix(1, 1, NAN)), InvalidInput);
  CHECK_THROWS_AS(io::read_embeddings(std::string("/nonexistent/dir/x.qemb")), IoError);
}

TEST_CASE("label and code files round trip") {
  std::stringstream ls;
  io::write_labels(ls, {3, 0, 7});
  CHECK(io::read_labels(ls) == std::vector<int>{3, 0, 7});
  std::stringstream bad("1\nx\n");
  try {
    io::read_labels(bad, "labels.txt");
    FAIL("expected an error");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("labels.txt:2") != std::string::npos);
  }

  const std::vector<HashCode> codes{HashCode(8, {1, 5}), HashCode(8, {0, 7})};
  std::stringstream cs;
  io::write_codes(cs, codes, 8);
  CHECK(cs.str() == "# d=8 k=2\n1 5\n0 7\n");
  CHECK(io::read_codes(cs) == codes);
  std::stringstream wrong_k("# d=8 k=2\n1\n");
  CHECK_THROWS_AS(io::read_codes(wrong_k), InvalidInput);
}

TEST_CASE("key value config") {
  std::istringstream is("# comment\nd = 16\nlambda = 0.1, 0.2\nnormalize = false\n\nname = x y\n");
  const auto kv = io::KeyValueConfig::parse(is, "cfg");
  CHECK(kv.get_size("d") == 16);
  CHECK(kv.get_doubles("lambda") == std::vector<double>{0.1, 0.2});
  CHECK_FALSE(kv.get_bool("normalize"));
  CHECK(kv.get_string("name") == "x y");
  CHECK_THROWS_AS(kv.get_double("missing"), InvalidInput);
  CHECK_THROWS_AS(kv.reject_unknown({"d", "lambda"}), InvalidInput);

  std::istringstream dup("a = 1\na = 2\n");
  try {
    io::KeyValueConfig::parse(dup, "dup.cfg");
    FAIL("expected an error");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("dup.cfg:2") != std::string::npos);
  }
  std::istringstream typo("d = 1\nk = two\n");
  const auto t = io::KeyValueConfig::parse(typo, "t.cfg");
  try {
    (void)t.get_size("k");
    FAIL("expected an error");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("t.cfg:2") != std::string::npos);
  }
}

TEST_CASE("gen-data writes the requested shape deterministically") {
  TempDir dir;
  const std::vector<std::string> args{"gen-data", "--classes", "8", "--per-class", "50", "--dim", "16",
                                      "--seed", "3", "--out-prefix", dir / "a"};
  REQUIRE(run(args).code == cli::kExitOk);
  const Matrix m = io::read_embeddings(dir / "a.qemb");
  CHECK(m.rows() == 400);
  CHECK(m.cols() == 16);
  CHECK(io::read_labels(dir / "a.labels").size() == 400);
  auto again = args;
  again.back() = dir / "b";
  REQUIRE(run(again).code == cli::kExitOk);
  CHECK(slurp(dir / "a.qemb") == slurp(dir / "b.qemb"));
  CHECK(slurp(dir / "a.labels") == slurp(dir / "b.labels"));

  REQUIRE(run({"gen-data", "--spread", "0", "--out-prefix", dir / "z"}).code == cli::kExitOk);
  const Matrix z = io::read_embeddings(dir / "z.qemb");
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < z.rows(); ++i) rows.emplace(z.row(i).begin(), z.row(i).end());
  CHECK(rows.size() == 8);
}

TEST_CASE("assign: mcf on tight blobs gives one distinct bit per class") {
  TempDir dir;
  REQUIRE(run({"gen-data", "--spread", "0", "--seed", "1", "--out-prefix", dir / "d"}).code == 0);
  const auto r = run({"assign", "--embeddings", dir / "d.qemb", "--labels", dir / "d.labels", "--method", "mcf",
                      "--k", "1", "--out", dir / "mcf.codes"});
  REQUIRE(r.code == 0);
  const auto codes = io::read_codes(dir / "mcf.codes");
  CHECK(codes.size() == 400);
  const auto labels = io::read_labels(dir / "d.labels");
  std::set<HashCode> distinct;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    distinct.insert(codes[i]);
    CHECK(codes[i] == codes[static_cast<std::size_t>(labels[i]) * 50]);
  }
  CHECK(distinct.size() == 8);
}

TEST_CASE("assign: mcf with lambda 0 equals th on the class means") {
  TempDir dir;
  REQUIRE(run({"gen-data", "--spread", "0.5", "--seed", "2", "--out-prefix", dir / "d"}).code == 0);
  const auto r = run({"assign", "--embeddings", dir / "d.qemb", "--labels", dir / "d.labels", "--method", "mcf",
                      "--k", "2", "--lambda", "0"});
  REQUIRE(r.code == 0);
  std::istringstream is(r.out);
  const auto codes = io::read_codes(is);
  const EmbeddingSet e(io::read_embeddings(dir / "d.qemb"), io::read_labels(dir / "d.labels"));
  const auto th = th_codes(class_means(e), 2);
  for (std::size_t i = 0; i < codes.size(); ++i) CHECK(codes[i] == th[static_cast<std::size_t>(e.labels()[i])]);
}

TEST_CASE("assign: th and vq") {
  TempDir dir;
  REQUIRE(run({"gen-data", "--seed", "4", "--out-prefix", dir / "d"}).code == 0);
  const auto th = run({"assign", "--embeddings", dir / "d.qemb", "--labels", dir / "d.labels", "--method", "th"});
  REQUIRE(th.code == 0);
  std::istringstream ts(th.out);
  CHECK(io::read_codes(ts) == th_codes(io::read_embeddings(dir / "d.qemb"), 1));

  const auto vq = run({"assign", "--embeddings", dir / "d.qemb", "--labels", dir / "d.labels", "--method", "vq",
                       "--centroids", "16", "--seed", "5", "--codebook-out", dir / "cb.qemb"});
  REQUIRE(vq.code == 0);
  Codebook cb;
  cb.centroids = io::read_embeddings(dir / "cb.qemb");
  std::istringstream vs(vq.out);
  // The codebook went through float32; codes are recomputed from that copy.
  CHECK(io::read_codes(vs).size() == 400);
  CHECK(cb.centroids.rows() == 16);

  CHECK(run({"assign", "--embeddings", dir / "d.qemb", "--labels", dir / "d.labels", "--method", "pq"}).code ==
        cli::kExitInvalid);
}

TEST_CASE("eval: perfect codes") {
  TempDir dir;
  REQUIRE(run({"gen-data", "--spread", "0.1", "--seed", "6", "--out-prefix", dir / "d"}).code == 0);
  const auto labels = io::read_labels(dir / "d.labels");
  std::vector<HashCode> codes;
  for (int y : labels) codes.push_back(HashCode(16, {static_cast<std::uint32_t>(y)}));
  io::write_codes(dir / "p.codes", codes, 16);
  const std::vector<std::string> base{"eval", "--index-embeddings", dir / "d.qemb", "--index-labels", dir / "d.labels",
                                      "--codes", dir / "p.codes", "--topk", "1,4,16"};
  const auto r = run(base);
  REQUIRE(r.code == 0);
  CHECK(r.out == "method,k,d,SUF,pr1,pr4,pr16,nmi\nours,1,16,8,1,1,1,1\n");

  std::vector<HashCode> pile(labels.size(), HashCode(16, {0}));
  io::write_codes(dir / "pile.codes", pile, 16);
  auto pile_args = base;
  pile_args[6] = dir / "pile.codes";
  const auto p = run(pile_args);
  REQUIRE(p.code == 0);
  CHECK(p.out.find("\nours,1,16,1,") != std::string::npos);

  std::vector<HashCode> pairs;
  for (int y : labels) pairs.push_back(HashCode(16, {static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(y + 8)}));
  io::write_codes(dir / "k2.codes", pairs, 16);
  auto k2 = base;
  k2[6] = dir / "k2.codes";
  const auto q = run(k2);
  REQUIRE(q.code == 0);
  CHECK(q.out.substr(q.out.size() - 2) == ",\n");
}

TEST_CASE("suf command") {
  const auto one = run({"suf", "--d", "64", "--k", "1"});
  REQUIRE(one.code == 0);
  CHECK(one.out.find("64,1,64,") != std::string::npos);
  const auto two = run({"suf", "--d", "64", "--k", "2"});
  REQUIRE(two.code == 0);
  CHECK(two.out.find("64,2,16.128,") != std::string::npos);
  const auto sim = run({"suf", "--d", "64", "--k", "1", "--simulate", "2000", "--queries", "200", "--seed", "1"});
  REQUIRE(sim.code == 0);
  CHECK(sim.out.find("measured_suf") != std::string::npos);
  CHECK(run({"suf", "--d", "4", "--k", "5"}).code == cli::kExitInvalid);
}

TEST_CASE("train command") {
  TempDir dir;
  write_text(dir / "ok.cfg", "classes = 8\nper_class_items = 20\nmax_iter = 20\nd = 16\nk = 1\ncodes_out = " +
                                 (dir / "t.codes") + "\n");
  const auto r = run({"train", "--config", dir / "ok.cfg", "--seed", "3", "--out", dir / "h.csv"});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "h.csv");
  CHECK(csv.rfind("iter,loss,g_value,bound_gap_M\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);
  CHECK(io::read_codes(dir / "t.codes").size() == 160);
  REQUIRE(run({"train", "--config", dir / "ok.cfg", "--seed", "3", "--out", dir / "h2.csv"}).code == 0);
  CHECK(slurp(dir / "h2.csv") == csv);

  write_text(dir / "bad.cfg", "classes = 8\nmax_iterations = 20\n");
  const auto bad = run({"train", "--config", dir / "bad.cfg"});
  CHECK(bad.code == cli::kExitInvalid);
  CHECK(bad.err.find(":2") != std::string::npos);

  write_text(dir / "k.cfg", "classes = 8\nk = 0\n");
  CHECK(run({"train", "--config", dir / "k.cfg"}).code == cli::kExitInvalid);
}

TEST_CASE("bench and gradcheck commands") {
  const auto b = run({"bench-mcf", "--nc-list", "4,8", "--d-list", "8", "--repeats", "2"});
  REQUIRE(b.code == 0);
  CHECK(b.out.rfind("n_c,d,k,repeats,mean_seconds\n4,8,1,2,", 0) == 0);
  const auto g = run({"gradcheck", "--loss", "npairs", "--batches", "3", "--seed", "2"});
  REQUIRE(g.code == 0);
  CHECK(g.out.rfind("loss,batches,epsilon,max_rel_error\nnpairs,3,", 0) == 0);
}

TEST_CASE("exit codes") {
  CHECK(run({}).code == cli::kExitInvalid);
  CHECK(run({"frobnicate"}).code == cli::kExitInvalid);
  CHECK(run({"suf", "--d", "abc"}).code == cli::kExitInvalid);
  CHECK(run({"--help"}).code == cli::kExitOk);
  CHECK(run({"eval", "--index-embeddings", "/nonexistent/x.qemb", "--index-labels", "/nonexistent/x.labels",
             "--codes", "/nonexistent/x.codes"})
            .code == cli::kExitIo);
  CHECK(run({"train", "--config", "/nonexistent/cfg"}).code == cli::kExitIo);
  TempDir dir;
  CHECK(run({"gen-data", "--out-prefix", dir / "missing_dir/x"}).code == cli::kExitIo);
}
