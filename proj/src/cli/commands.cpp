#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "disco/checkpoint.hpp"
#include "disco/cli.hpp"
#include "disco/data.hpp"
#include "disco/eval.hpp"
#include "disco/losses.hpp"
#include "disco/pipeline.hpp"

namespace disco::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Usage problems found after CLI11 has accepted the flags.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config keys beyond the training loop's own.

const std::set<std::string>& model_config_keys() {
  static const std::set<std::string> keys = {
      "vocab_size",         "vocab_scheme",         "teacher_dim",     "teacher_concepts", "teacher_concept_noise",
      "teacher_filler_scale", "student_embed_dim", "student_pooling", "student_blocks",   "student_output_dim"};
  return keys;
}

fs::path resolve_config(const std::string& given) {
  fs::path path(given);
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("DISCO_CONFIG_DIR"); dir && path.is_relative()) {
    fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate;
  }
  throw std::runtime_error("config file not found: " + given);
}

KeyValueConfig load_config(const std::string& given) {
  KeyValueConfig kv = KeyValueConfig::load(resolve_config(given));
  std::set<std::string> known = train_config_keys();
  known.insert(model_config_keys().begin(), model_config_keys().end());
  const auto unknown = kv.unknown_keys(known);
  if (!unknown.empty()) throw std::runtime_error("unknown config key '" + *unknown.begin() + "'");
  return kv;
}

Vocabulary vocab_from(const KeyValueConfig& kv) {
  Vocabulary v;
  v.size = kv.get_uint("vocab_size", v.size);
  v.scheme = kv.get_uint("vocab_scheme", v.scheme);
  return v;
}

LatentLayout layout_from(const KeyValueConfig& kv) {
  LatentLayout l;
  l.concepts = kv.get_uint("teacher_concepts", l.concepts);
  l.concept_noise = kv.get_double("teacher_concept_noise", l.concept_noise);
  l.filler_scale = kv.get_double("teacher_filler_scale", l.filler_scale);
  return l;
}

EncoderConfig student_config_from(const KeyValueConfig& kv) {
  EncoderConfig c;
  c.vocab = vocab_from(kv);
  c.embed_dim = kv.get_uint("student_embed_dim", c.embed_dim);
  c.pooling = parse_pooling(kv.get_string("student_pooling", std::string(pooling_name(c.pooling))));
  c.blocks = kv.get_uint("student_blocks", c.pooling == Pooling::kAttention ? 1 : 0);
  c.output_dim = kv.get_uint("student_output_dim", c.output_dim);
  return c;
}

std::string model_label(const EncoderConfig& c) {
  std::string label = std::string(pooling_name(c.pooling)) + "/e" + std::to_string(c.embed_dim);
  if (c.blocks) label += "/b" + std::to_string(c.blocks);
  return label + "/o" + std::to_string(c.output_dim);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string dataset_name(const std::string& path) { return fs::path(path).stem().string(); }

json state_json(const RunState& s) {
  json j = {{"epochs", s.epoch},
            {"global_step", s.global_step},
            {"best_step", s.best_step},
            {"stopped_early", s.stopped_early},
            {"epochs_since_improvement", s.epochs_since_improvement},
            {"evaluations", s.history.size()}};
  j["best_dev_rho"] = s.best_dev ? json(*s.best_dev) : json(nullptr);
  return j;
}

// reports.json, reports.tsv and reports.txt in `dir`.
void write_reports(const fs::path& dir, const json& run_info, const std::vector<EvalReport>& reports) {
  json j = {{"run", run_info}, {"reports", json::array()}};
  for (const auto& r : reports) j["reports"].push_back(report_to_json(r));
  write_text(dir / "reports.json", j.dump(2) + "\n");
  std::ostringstream tsv, table;
  write_report_tsv(tsv, reports);
  write_report_table(table, reports);
  write_text(dir / "reports.tsv", tsv.str());
  write_text(dir / "reports.txt", table.str());
}

EvalReport evaluate_with_diagnostics(const Model& model, const StsPairSet& set, bool diagnostics, double threshold) {
  const auto encoder = model_encoder(model);
  EvalReport report = sts_evaluate(set.pairs, encoder, set.name);
  if (diagnostics) add_diagnostics(report, set.pairs, encoder, threshold);
  return report;
}

// ---------------------------------------------------------------------------
// Commands.

struct DistillArgs {
  std::string config, teacher, corpus, dev, method, out;
  std::uint64_t synthetic_teacher = 0, init_seed = 0;
  std::string student_init;
  bool timing = false;
};

int cmd_distill(const DistillArgs& a, CLI::App& cmd, std::ostream& out) {
  const bool has_teacher_ckpt = cmd.count("--teacher") > 0;
  const bool has_teacher_seed = cmd.count("--synthetic-teacher") > 0;
  const bool has_student_ckpt = cmd.count("--student-init") > 0;
  const bool has_student_seed = cmd.count("--init-seed") > 0;
  if (has_teacher_ckpt == has_teacher_seed) throw UsageError("exactly one of --teacher or --synthetic-teacher is required");
  if (has_student_ckpt == has_student_seed) throw UsageError("exactly one of --student-init or --init-seed is required");

  const KeyValueConfig kv = load_config(a.config);
  TrainConfig cfg = TrainConfig::from(kv);
  cfg.stage = a.method == "kd" ? Stage::kDistillKd : Stage::kDistillCkd;
  cfg.checkpoint_dir = a.out;
  cfg.record_wall_time = a.timing;

  Model teacher;
  std::string teacher_label;
  if (has_teacher_ckpt) {
    teacher = load_checkpoint(a.teacher);
    if (!teacher.config.frozen) throw std::runtime_error("teacher checkpoint is not marked frozen");
    teacher_label = a.teacher;
  } else {
    teacher = make_synthetic_teacher(a.synthetic_teacher, vocab_from(kv), kv.get_uint("teacher_dim", 32), layout_from(kv));
    teacher_label = "synthetic:" + std::to_string(a.synthetic_teacher);
  }
  const Model student = has_student_ckpt ? load_checkpoint(a.student_init)
                                         : init_student(a.init_seed, student_config_from(kv), teacher.config.output_dim);

  const UnlabeledCorpus corpus = load_unlabeled(a.corpus);
  const StsPairSet dev = load_sts(a.dev, dataset_name(a.dev));
  fs::create_directories(a.out);

  const StageResult result = run_distill(teacher, student, corpus, dev.pairs, cfg);
  const EvalReport report = evaluate_with_diagnostics(result.best, dev, true, 4.0);

  json info = {{"command", "distill"},
               {"method", a.method},
               {"model", model_label(result.best.config)},
               {"params", parameter_count(result.best)},
               {"teacher", teacher_label},
               {"state", state_json(result.state)}};
  write_reports(a.out, info, {report});
  write_report_table(out, std::vector<EvalReport>{report});
  return kExitOk;
}

struct FinetuneArgs {
  std::string config, student, triplets, dev, out;
  bool timing = false;
};

int cmd_finetune(const FinetuneArgs& a, std::ostream& out) {
  const KeyValueConfig kv = load_config(a.config);
  TrainConfig cfg = TrainConfig::from(kv);
  cfg.stage = Stage::kFinetune;
  cfg.checkpoint_dir = a.out;
  cfg.record_wall_time = a.timing;

  json meta;
  if (!fs::exists(a.student)) throw std::runtime_error("missing checkpoint " + a.student);
  const Model student = load_checkpoint(a.student, &meta);
  const auto triplets = load_triplets(a.triplets);
  const StsPairSet dev = load_sts(a.dev, dataset_name(a.dev));
  fs::create_directories(a.out);

  const StageResult result = run_finetune(student, triplets, dev.pairs, cfg);
  const EvalReport report = evaluate_with_diagnostics(result.best, dev, true, 4.0);
  const std::string method = meta.value("stage", std::string("init")) == "distill-kd" ? "disco-kd"
                             : meta.value("stage", std::string("init")) == "distill-ckd" ? "disco-ckd"
                                                                                        : "finetune";
  json info = {{"command", "finetune"},
               {"method", method},
               {"model", model_label(result.best.config)},
               {"params", parameter_count(result.best)},
               {"student", a.student},
               {"state", state_json(result.state)}};
  write_reports(a.out, info, {report});
  write_report_table(out, std::vector<EvalReport>{report});
  return kExitOk;
}

struct EvaluateArgs {
  std::string model, diagnostics = "off", out;
  std::vector<std::string> sts;
  double threshold = 4.0;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  json meta;
  const Model model = load_checkpoint(a.model, &meta);
  const bool diagnostics = a.diagnostics == "on";
  std::vector<EvalReport> reports;
  for (const auto& path : a.sts) {
    reports.push_back(evaluate_with_diagnostics(model, load_sts(path, dataset_name(path)), diagnostics, a.threshold));
  }
  fs::create_directories(a.out);
  json info = {{"command", "evaluate"},
               {"method", meta.value("stage", std::string("unknown"))},
               {"model", model_label(model.config)},
               {"params", parameter_count(model)},
               {"checkpoint", a.model}};
  write_reports(a.out, info, reports);
  write_report_table(out, reports);
  return kExitOk;
}

struct GradcheckArgs {
  std::string loss = "all";
  std::size_t trials = 10;
  double tol = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 0;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::pair<std::string, LossKind>> kinds;
  if (a.loss == "kd" || a.loss == "all") kinds.emplace_back("kd", LossKind::kKd);
  if (a.loss == "ckd" || a.loss == "all") kinds.emplace_back("ckd", LossKind::kCkd);
  if (a.loss == "cl" || a.loss == "all") kinds.emplace_back("cl", LossKind::kCl);

  GradCheckOptions options;
  options.step = a.step;
  options.tolerance = a.tol;
  bool all_passed = true;
  for (const auto& [name, kind] : kinds) {
    const auto trials = gradcheck_trials(kind, a.trials, a.seed, options, a.corrupt);
    double worst = 0.0;
    const GradCheckTrial* worst_trial = &trials.front();
    std::size_t failed = 0;
    for (const auto& t : trials) {
      if (!t.report.passed) ++failed;
      if (t.report.worst_error >= worst) {
        worst = t.report.worst_error;
        worst_trial = &t;
      }
    }
    out << name << ": " << (trials.size() - failed) << "/" << trials.size() << " trials passed, worst relative error "
        << worst << "\n";
    if (failed > 0) {
      all_passed = false;
      err << name << ": worst error " << worst << " at " << worst_trial->label << " parameter '"
          << worst_trial->report.worst_param << "' entry " << worst_trial->report.worst_index << "\n";
    }
  }
  return all_passed ? kExitOk : kExitFailure;
}

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
};

struct RunSummary {
  std::string name;
  json info;
  std::vector<EvalReport> reports;
};

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string number_cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<RunSummary> runs;
  for (const auto& dir : a.runs) {
    try {
      std::ifstream in(fs::path(dir) / "reports.json");
      if (!in) throw std::runtime_error("no reports.json");
      const json j = json::parse(in);
      RunSummary run;
      run.name = fs::path(dir).filename().string();
      if (run.name.empty()) run.name = fs::path(dir).parent_path().filename().string();
      run.info = j.at("run");
      for (const auto& r : j.at("reports")) run.reports.push_back(report_from_json(r));
      const fs::path log_path = fs::path(dir) / "train_log.jsonl";
      if (fs::exists(log_path)) {
        std::ifstream log(log_path);
        std::string line;
        std::optional<double> best;
        while (std::getline(log, line)) {
          const EvalRecord rec = parse_log_line(line);
          if (rec.dev_rho && (!best || *rec.dev_rho > *best)) best = rec.dev_rho;
        }
        run.info["log_best_dev_rho"] = best ? json(*best) : json(nullptr);
      }
      runs.push_back(std::move(run));
    } catch (const std::exception& e) {
      err << "warning: skipping run " << dir << ": " << e.what() << "\n";
    }
  }
  if (runs.empty()) throw std::runtime_error("no readable runs found");

  std::set<std::string> datasets;
  for (const auto& r : runs) {
    for (const auto& rep : r.reports) datasets.insert(rep.dataset);
  }

  fs::create_directories(a.out);
  std::ostringstream csv;
  csv << "run,method,model,params";
  for (const auto& d : datasets) csv << "," << csv_cell(d);
  csv << "\n";
  json table = json::array();
  for (const auto& r : runs) {
    const std::string method = r.info.value("method", std::string("unknown"));
    const std::string model = r.info.value("model", std::string("unknown"));
    const auto params = r.info.value("params", std::size_t{0});
    csv << csv_cell(r.name) << "," << csv_cell(method) << "," << csv_cell(model) << "," << params;
    json row = {{"run", r.name}, {"method", method}, {"model", model}, {"params", params}, {"rho", json::object()}};
    for (const auto& d : datasets) {
      std::optional<double> rho;
      for (const auto& rep : r.reports) {
        if (rep.dataset == d) rho = rep.spearman;
      }
      csv << "," << number_cell(rho);
      row["rho"][d] = rho ? json(*rho) : json(nullptr);
    }
    csv << "\n";
    table.push_back(std::move(row));
  }
  write_text(fs::path(a.out) / "comparison.csv", csv.str());
  write_text(fs::path(a.out) / "comparison.json", table.dump(2) + "\n");

  std::ostringstream scatter;
  scatter << "run,method,model,dataset,align,uniform\n";
  for (const auto& r : runs) {
    for (const auto& rep : r.reports) {
      if (rep.alignment && rep.uniformity) {
        scatter << csv_cell(r.name) << "," << csv_cell(r.info.value("method", std::string("unknown"))) << ","
                << csv_cell(r.info.value("model", std::string("unknown"))) << "," << csv_cell(rep.dataset) << ","
                << number_cell(rep.alignment) << "," << number_cell(rep.uniformity) << "\n";
        break;
      }
    }
  }
  write_text(fs::path(a.out) / "align_uniform.csv", scatter.str());
  out << csv.str();
  return kExitOk;
}

struct SynthArgs {
  std::string out, config;
  std::uint64_t seed = 0;
  SynthSizes sizes;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthOptions options;
  if (!a.config.empty()) {
    const KeyValueConfig kv = load_config(a.config);
    options.vocab = vocab_from(kv);
    options.layout = layout_from(kv);
  }
  const SynthData data = synth_generate(a.seed, a.sizes, options);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_unlabeled(dir / "corpus.txt", data.corpus.sentences);
  write_triplets(dir / "triplets.tsv", data.triplets);
  write_sts(dir / "dev.tsv", data.dev.pairs);
  write_sts(dir / "test.tsv", data.test.pairs);
  out << "wrote " << data.corpus.sentences.size() << " sentences, " << data.triplets.size() << " triplets, "
      << data.dev.pairs.size() << "+" << data.test.pairs.size() << " STS pairs to " << dir.string() << "\n";
  return kExitOk;
}

Tensor random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

std::vector<GradCheckTrial> gradcheck_trials(LossKind kind, std::size_t trials, std::uint64_t seed,
                                             const GradCheckOptions& options, bool corrupt) {
  std::mt19937_64 rng(seed * 3 + static_cast<std::uint64_t>(kind));
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto temperature = [&] { return std::uniform_real_distribution<double>(0.05, 1.0)(rng); };

  std::vector<GradCheckTrial> out;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = pick(1, 4);
    const std::size_t teacher_dim = pick(2, 5);
    const bool with_projection = kind != LossKind::kCl && t % 2 == 1;
    std::size_t student_dim = teacher_dim;
    if (with_projection) {
      while (student_dim == teacher_dim) student_dim = pick(2, 5);
    }

    ParamSet params;
    LossBuilder loss;
    std::string label;
    if (kind == LossKind::kCl) {
      params.emplace("anchors", random_matrix(rng, n, teacher_dim));
      params.emplace("positives", random_matrix(rng, n, teacher_dim));
      params.emplace("negatives", random_matrix(rng, n, teacher_dim));
      const Temperature tau(temperature());
      loss = [tau](Tape&, const std::map<std::string, Var>& p) {
        return supervised_cl_loss(p.at("anchors"), p.at("positives"), p.at("negatives"), tau);
      };
      label = "cl";
    } else {
      params.emplace("student", random_matrix(rng, n, student_dim));
      if (with_projection) params.emplace("projection", random_matrix(rng, teacher_dim, student_dim, 0.7));
      const Tensor teacher = random_matrix(rng, n, teacher_dim);
      auto projection_of = [with_projection](const std::map<std::string, Var>& p) {
        return with_projection ? std::optional<Var>(p.at("projection")) : std::nullopt;
      };
      if (kind == LossKind::kKd) {
        loss = [teacher, projection_of](Tape& tape, const std::map<std::string, Var>& p) {
          return kd_mse_loss(p.at("student"), tape.constant(teacher), projection_of(p));
        };
        label = "kd";
      } else {
        MemoryBank bank(8, teacher_dim);
        const std::size_t fill = pick(0, 6);
        if (fill > 0) bank.push(random_matrix(rng, fill, teacher_dim));
        const Temperature tau(temperature());
        loss = [teacher, bank, tau, projection_of](Tape& tape, const std::map<std::string, Var>& p) {
          return ckd_loss(p.at("student"), tape.constant(teacher), bank, tau, projection_of(p));
        };
        label = fill > 0 ? "ckd+bank" : "ckd";
      }
      if (with_projection) label += "+projection";
    }
    label += " trial " + std::to_string(t);

    Gradients analytic = tape_gradients(loss, params);
    if (corrupt) {
      for (auto& [id, g] : analytic) {
        for (auto& v : g.data()) v *= 2.0;
      }
    }
    out.push_back(GradCheckTrial{label, compare_gradients(loss, params, analytic, options)});
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage sentence-embedding distillation: distill, finetune, evaluate, report."};
  app.name("disco");
  app.require_subcommand(1);

  DistillArgs distill;
  auto* distill_cmd = app.add_subcommand("distill", "Stage 1: distil a student from a frozen teacher");
  distill_cmd->add_option("--config", distill.config, "key = value config file")->required();
  distill_cmd->add_option("--teacher", distill.teacher, "frozen teacher checkpoint");
  distill_cmd->add_option("--synthetic-teacher", distill.synthetic_teacher, "seed of a synthetic teacher");
  distill_cmd->add_option("--student-init", distill.student_init, "initial student checkpoint");
  distill_cmd->add_option("--init-seed", distill.init_seed, "seed for a fresh student");
  distill_cmd->add_option("--corpus", distill.corpus, "unlabeled corpus, one sentence per line")->required();
  distill_cmd->add_option("--dev", distill.dev, "dev STS pairs (TSV)")->required();
  distill_cmd->add_option("--method", distill.method, "kd | ckd")->required()->check(CLI::IsMember({"kd", "ckd"}));
  distill_cmd->add_option("--out", distill.out, "output directory")->required();
  distill_cmd->add_flag("--timing", distill.timing, "record wall-clock milliseconds in the log");

  FinetuneArgs finetune;
  auto* finetune_cmd = app.add_subcommand("finetune", "Stage 2: supervised contrastive finetuning on triplets");
  finetune_cmd->add_option("--config", finetune.config, "key = value config file")->required();
  finetune_cmd->add_option("--student", finetune.student, "student checkpoint")->required();
  finetune_cmd->add_option("--triplets", finetune.triplets, "anchor/positive/negative TSV")->required();
  finetune_cmd->add_option("--dev", finetune.dev, "dev STS pairs (TSV)")->required();
  finetune_cmd->add_option("--out", finetune.out, "output directory")->required();
  finetune_cmd->add_flag("--timing", finetune.timing, "record wall-clock milliseconds in the log");

  EvaluateArgs evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a checkpoint on STS files");
  evaluate_cmd->add_option("--model", evaluate.model, "checkpoint")->required();
  evaluate_cmd->add_option("--sts", evaluate.sts, "STS TSV file (repeatable)")->required();
  evaluate_cmd->add_option("--diagnostics", evaluate.diagnostics, "on | off")->check(CLI::IsMember({"on", "off"}));
  evaluate_cmd->add_option("--positive-threshold", evaluate.threshold, "gold score marking a positive pair");
  evaluate_cmd->add_option("--out", evaluate.out, "output directory")->required();

  GradcheckArgs gradcheck;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Check loss gradients against central differences");
  gradcheck_cmd->add_option("--loss", gradcheck.loss, "kd | ckd | cl | all")->check(CLI::IsMember({"kd", "ckd", "cl", "all"}));
  gradcheck_cmd->add_option("--trials", gradcheck.trials, "random instances per loss")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
  gradcheck_cmd->add_option("--tol", gradcheck.tol, "relative tolerance")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--step", gradcheck.step, "finite-difference step")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "random seed");
  gradcheck_cmd->add_flag("--corrupt-gradients", gradcheck.corrupt, "double analytic gradients (detector self-test)")
      ->group("");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Aggregate run directories into comparison tables");
  report_cmd->add_option("--runs", report.runs, "run directory (repeatable)")->required();
  report_cmd->add_option("--out", report.out, "output directory")->required();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus, triplets and STS splits");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--config", synth.config, "config supplying vocabulary and teacher layout keys");
  synth_cmd->add_option("--corpus-size", synth.sizes.corpus, "unlabeled sentences");
  synth_cmd->add_option("--triplets", synth.sizes.triplets, "training triplets");
  synth_cmd->add_option("--dev-pairs", synth.sizes.dev_pairs, "dev STS pairs");
  synth_cmd->add_option("--test-pairs", synth.sizes.test_pairs, "test STS pairs");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();

  std::vector<std::string> argv_storage{"disco"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*distill_cmd) return cmd_distill(distill, *distill_cmd, out);
    if (*finetune_cmd) return cmd_finetune(finetune, out);
    if (*evaluate_cmd) return cmd_evaluate(evaluate, out);
    if (*gradcheck_cmd) return cmd_gradcheck(gradcheck, out, err);
    if (*report_cmd) return cmd_report(report, out, err);
    if (*synth_cmd) return cmd_synth(synth, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << app.get_subcommands().front()->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace disco::cli
