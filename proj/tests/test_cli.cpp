#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "disco/checkpoint.hpp"
#include "disco/cli.hpp"
#include "disco/data.hpp"
#include "disco/pipeline.hpp"
#include "doctest.h"

using namespace disco;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// A scratch directory with synthetic data and a small config, built once.
struct Workspace {
  fs::path root = fs::temp_directory_path() / "disco_test_cli";

  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    const Result r = run({"synth", "--seed", "5", "--corpus-size", "256", "--triplets", "96", "--dev-pairs", "40",
                          "--test-pairs", "40", "--out", (root / "data").string()});
    REQUIRE(r.code == 0);
    write_file(root / "distill.conf",
               "batch_size = 32\nlearning_rate = 0.01\nmax_epochs = 2\neval_interval = 4\ntemperature = 0.2\n"
               "bank_capacity = 64\nteacher_dim = 16\nstudent_embed_dim = 16\nstudent_output_dim = 16\n");
    write_file(root / "finetune.conf", "batch_size = 32\nlearning_rate = 0.003\nmax_epochs = 2\neval_interval = 2\n");
    write_file(root / "zero.conf", "batch_size = 32\nmax_epochs = 0\n");
  }

  std::string data(const std::string& name) const { return (root / "data" / name).string(); }
  std::string path(const std::string& name) const { return (root / name).string(); }

  Result distill(const std::string& out, const std::string& method, std::vector<std::string> extra = {}) const {
    std::vector<std::string> args{"distill",  "--config", path("distill.conf"), "--synthetic-teacher", "5",
                                  "--init-seed", "2",     "--corpus",           data("corpus.txt"),   "--dev",
                                  data("dev.tsv"), "--method", method,          "--out",              path(out)};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }
};

const Workspace& ws() {
  static const Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit 2, help exits 0") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  const Result help = run({"--help"});
  CHECK(help.code == cli::kExitOk);
  CHECK(help.out.find("distill") != std::string::npos);
  CHECK(run({"gradcheck", "--trials", "0"}).code == cli::kExitUsage);
  CHECK(run({"gradcheck", "--loss", "mse"}).code == cli::kExitUsage);
}

TEST_CASE("distill: flag validation") {
  const Workspace& w = ws();
  const Result missing = run({"distill", "--config", w.path("distill.conf"), "--synthetic-teacher", "5", "--init-seed",
                              "2", "--dev", w.data("dev.tsv"), "--method", "ckd", "--out", w.path("x")});
  CHECK(missing.code == cli::kExitUsage);
  CHECK(missing.err.find("--corpus") != std::string::npos);

  const Result no_teacher = run({"distill", "--config", w.path("distill.conf"), "--init-seed", "2", "--corpus",
                                 w.data("corpus.txt"), "--dev", w.data("dev.tsv"), "--method", "ckd", "--out",
                                 w.path("x")});
  CHECK(no_teacher.code == cli::kExitUsage);
  CHECK(w.distill("x", "mse").code == cli::kExitUsage);

  write_file(w.path("typo.conf"), "batch_sise = 32\n");
  const Result typo = run({"distill", "--config", w.path("typo.conf"), "--synthetic-teacher", "5", "--init-seed", "2",
                           "--corpus", w.data("corpus.txt"), "--dev", w.data("dev.tsv"), "--method", "ckd", "--out",
                           w.path("x")});
  CHECK(typo.code == cli::kExitFailure);
  CHECK(typo.err.find("batch_sise") != std::string::npos);

  const Result no_file = run({"distill", "--config", w.path("distill.conf"), "--synthetic-teacher", "5", "--init-seed",
                              "2", "--corpus", w.path("nope.txt"), "--dev", w.data("dev.tsv"), "--method", "ckd",
                              "--out", w.path("x")});
  CHECK(no_file.code == cli::kExitFailure);
}

TEST_CASE("distill: artifacts, determinism, method matters") {
  const Workspace& w = ws();
  REQUIRE(w.distill("ckd_a", "ckd").code == 0);
  REQUIRE(w.distill("ckd_b", "ckd").code == 0);
  REQUIRE(w.distill("kd_a", "kd").code == 0);
  for (const char* f : {"best.ckpt", "train_log.jsonl", "reports.json", "reports.tsv", "reports.txt"}) {
    CHECK(fs::exists(fs::path(w.path("ckd_a")) / f));
  }
  CHECK(read_file(w.path("ckd_a/best.ckpt")) == read_file(w.path("ckd_b/best.ckpt")));
  CHECK(read_file(w.path("ckd_a/train_log.jsonl")) == read_file(w.path("ckd_b/train_log.jsonl")));
  CHECK(read_file(w.path("ckd_a/reports.json")) == read_file(w.path("ckd_b/reports.json")));
  CHECK(read_file(w.path("ckd_a/best.ckpt")) != read_file(w.path("kd_a/best.ckpt")));

  const auto info = nlohmann::json::parse(read_file(w.path("ckd_a/reports.json")));
  CHECK(info.at("run").at("method") == "ckd");
  CHECK(info.at("reports").size() == 1);
}

TEST_CASE("distill: --timing fills wall_ms") {
  const Workspace& w = ws();
  REQUIRE(w.distill("timed", "kd", {"--timing"}).code == 0);
  std::istringstream log(read_file(w.path("timed/train_log.jsonl")));
  std::string line;
  std::int64_t last = -1;
  while (std::getline(log, line)) last = parse_log_line(line).wall_ms;
  CHECK(last >= 0);
}

TEST_CASE("finetune") {
  const Workspace& w = ws();
  REQUIRE(w.distill("ft_src", "ckd").code == 0);
  const std::string ckpt = w.path("ft_src/best.ckpt");

  CHECK(run({"finetune", "--config", w.path("finetune.conf"), "--student", w.path("missing.ckpt"), "--triplets",
             w.data("triplets.tsv"), "--dev", w.data("dev.tsv"), "--out", w.path("ft_x")})
            .code == cli::kExitFailure);

  REQUIRE(run({"finetune", "--config", w.path("zero.conf"), "--student", ckpt, "--triplets", w.data("triplets.tsv"),
               "--dev", w.data("dev.tsv"), "--out", w.path("ft_zero")})
              .code == 0);
  CHECK(load_checkpoint(w.path("ft_zero/best.ckpt")).params == load_checkpoint(ckpt).params);

  REQUIRE(run({"finetune", "--config", w.path("finetune.conf"), "--student", ckpt, "--triplets",
               w.data("triplets.tsv"), "--dev", w.data("dev.tsv"), "--out", w.path("ft_run")})
              .code == 0);
  // 96 triplets / 32 per batch = 3 steps per epoch, 2 epochs, eval every 2 steps -> steps 0, 2, 4, 6
  std::istringstream log(read_file(w.path("ft_run/train_log.jsonl")));
  std::vector<std::size_t> steps;
  std::string line;
  while (std::getline(log, line)) steps.push_back(parse_log_line(line).step);
  CHECK(steps == std::vector<std::size_t>{0, 2, 4, 6});
  const auto info = nlohmann::json::parse(read_file(w.path("ft_run/reports.json")));
  CHECK(info.at("run").at("method") == "disco-ckd");
}

TEST_CASE("evaluate") {
  const Workspace& w = ws();
  REQUIRE(w.distill("ev_src", "kd").code == 0);
  const std::string ckpt = w.path("ev_src/best.ckpt");
  REQUIRE(run({"evaluate", "--model", ckpt, "--sts", w.data("dev.tsv"), "--sts", w.data("test.tsv"), "--out",
               w.path("ev_off")})
              .code == 0);
  const auto off = nlohmann::json::parse(read_file(w.path("ev_off/reports.json")));
  REQUIRE(off.at("reports").size() == 2);
  CHECK(off.at("reports")[1].at("dataset") == "test");
  CHECK_FALSE(off.at("reports")[0].contains("align"));
  CHECK_FALSE(off.at("reports")[0].contains("uniform"));

  const Model model = load_checkpoint(ckpt);
  const auto test = load_sts(w.data("test.tsv"), "test");
  const auto isolated = sts_evaluate(test.pairs, model_encoder(model), "test");
  CHECK(off.at("reports")[1].at("rho").get<double>() == *isolated.spearman);

  REQUIRE(run({"evaluate", "--model", ckpt, "--sts", w.data("dev.tsv"), "--diagnostics", "on", "--out",
               w.path("ev_on")})
              .code == 0);
  const auto on = nlohmann::json::parse(read_file(w.path("ev_on/reports.json")));
  CHECK(on.at("reports")[0].contains("align"));
  CHECK(on.at("reports")[0].contains("uniform"));

  CHECK(run({"evaluate", "--model", w.path("none.ckpt"), "--sts", w.data("dev.tsv"), "--out", w.path("ev_x")}).code ==
        cli::kExitFailure);
}

TEST_CASE("gradcheck") {
  const Result ok = run({"gradcheck", "--loss", "all", "--trials", "3", "--seed", "4"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("ckd: 3/3") != std::string::npos);
  const Result bad = run({"gradcheck", "--loss", "cl", "--trials", "2", "--corrupt-gradients"});
  CHECK(bad.code == cli::kExitFailure);
  CHECK(bad.err.find("worst error") != std::string::npos);
}

TEST_CASE("report") {
  const Workspace& w = ws();
  REQUIRE(w.distill("rep_a", "kd").code == 0);
  REQUIRE(w.distill("rep_b", "ckd").code == 0);
  REQUIRE(run({"report", "--runs", w.path("rep_a"), "--runs", w.path("rep_b"), "--out", w.path("rep_out")}).code == 0);
  std::istringstream csv(read_file(w.path("rep_out/comparison.csv")));
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "run,method,model,params,dev");
  CHECK(lines[1].rfind("rep_a,kd,", 0) == 0);
  CHECK(nlohmann::json::parse(read_file(w.path("rep_out/comparison.json"))).size() == 2);

  std::istringstream scatter(read_file(w.path("rep_out/align_uniform.csv")));
  std::size_t points = 0;
  for (std::string l; std::getline(scatter, l);) ++points;
  CHECK(points == 3);  // header + one point per run

  // A run with a corrupted log is skipped with a warning.
  fs::copy(w.path("rep_b"), w.path("rep_broken"), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  write_file(w.path("rep_broken/train_log.jsonl"), "{\"step\": oops\n");
  const Result partial =
      run({"report", "--runs", w.path("rep_a"), "--runs", w.path("rep_broken"), "--out", w.path("rep_out2")});
  CHECK(partial.code == 0);
  CHECK(partial.err.find("rep_broken") != std::string::npos);
  CHECK(nlohmann::json::parse(read_file(w.path("rep_out2/comparison.json"))).size() == 1);

  CHECK(run({"report", "--runs", w.path("nothing_here"), "--out", w.path("rep_out3")}).code == cli::kExitFailure);
}
