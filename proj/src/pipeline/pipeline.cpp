#include "disco/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "disco/checkpoint.hpp"
#include "disco/losses.hpp"
#include "disco/memory_bank.hpp"
#include "disco/ops.hpp"

namespace disco {

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kDistillKd:
      return "distill-kd";
    case Stage::kDistillCkd:
      return "distill-ckd";
    case Stage::kFinetune:
      return "finetune";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  if (name == "distill-kd" || name == "kd") return Stage::kDistillKd;
  if (name == "distill-ckd" || name == "ckd") return Stage::kDistillCkd;
  if (name == "finetune") return Stage::kFinetune;
  throw std::invalid_argument("unknown stage '" + std::string(name) + "' (distill-kd|distill-ckd|finetune)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (eval_interval < 1) throw std::invalid_argument("eval_interval must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  Temperature{temperature};
  if (stage == Stage::kDistillCkd && bank_capacity < batch_size) {
    throw std::invalid_argument("bank_capacity must be >= batch_size for contrastive distillation");
  }
}

AdamOptions TrainConfig::adam() const {
  AdamOptions opt;
  opt.learning_rate = learning_rate;
  return opt;
}

const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys = {"stage",       "batch_size",    "learning_rate", "max_epochs",
                                             "eval_interval", "patience",    "temperature",   "bank_capacity",
                                             "seed",        "checkpoint_dir", "record_wall_time"};
  return keys;
}

TrainConfig TrainConfig::from(const KeyValueConfig& kv) {
  TrainConfig cfg;
  cfg.stage = parse_stage(kv.get_string("stage", std::string(stage_name(cfg.stage))));
  cfg.batch_size = kv.get_uint("batch_size", cfg.batch_size);
  cfg.learning_rate = kv.get_double("learning_rate", cfg.learning_rate);
  cfg.max_epochs = kv.get_uint("max_epochs", cfg.max_epochs);
  cfg.eval_interval = kv.get_uint("eval_interval", cfg.eval_interval);
  cfg.patience = kv.get_uint("patience", cfg.patience);
  cfg.temperature = kv.get_double("temperature", cfg.temperature);
  cfg.bank_capacity = kv.get_uint("bank_capacity", cfg.bank_capacity);
  cfg.seed = kv.get_uint("seed", cfg.seed);
  cfg.checkpoint_dir = kv.get_string("checkpoint_dir", "");
  cfg.record_wall_time = kv.get_bool("record_wall_time", false);
  return cfg;
}

std::string log_line(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss ? nlohmann::ordered_json(*r.loss) : nlohmann::ordered_json(nullptr);
  j["dev_rho"] = r.dev_rho ? nlohmann::ordered_json(*r.dev_rho) : nlohmann::ordered_json(nullptr);
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

EvalRecord parse_log_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    EvalRecord r;
    r.step = j.at("step").get<std::size_t>();
    r.epoch = j.at("epoch").get<std::size_t>();
    if (!j.at("loss").is_null()) r.loss = j.at("loss").get<double>();
    if (!j.at("dev_rho").is_null()) r.dev_rho = j.at("dev_rho").get<double>();
    r.wall_ms = j.at("wall_ms").get<std::int64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed log record: ") + e.what());
  }
}

namespace {

// One optimisation step over the examples at `indices`; returns the batch loss.
using StepFn = std::function<double(std::span<const std::size_t> indices, Model& model, AdamState& adam)>;

class TrainLoop {
 public:
  TrainLoop(const TrainConfig& cfg, std::span<const StsPair> dev) : cfg_(cfg), dev_(dev) {
    if (!cfg.checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      log_.open(cfg.checkpoint_dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
      if (!log_) throw std::runtime_error("cannot write " + (cfg.checkpoint_dir / "train_log.jsonl").string());
    }
  }

  StageResult run(Model model, std::size_t examples, const StepFn& step) {
    start_ = std::chrono::steady_clock::now();
    StageResult result;
    result.best = model;
    RunState& state = result.state;
    AdamState adam;
    adam.options = cfg_.adam();
    std::mt19937_64 rng(cfg_.seed);

    evaluate(model, state, result.best);

    std::vector<std::size_t> order(examples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batches = examples / cfg_.batch_size;

    for (std::size_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      evaluated_ = false;
      improved_ = false;
      for (std::size_t b = 0; b < batches; ++b) {
        const std::span<const std::size_t> indices(order.data() + b * cfg_.batch_size, cfg_.batch_size);
        loss_sum_ += step(indices, model, adam);
        ++loss_count_;
        ++state.global_step;
        if (state.global_step % cfg_.eval_interval == 0) {
          state.epoch = epoch;
          evaluate(model, state, result.best);
        }
      }
      state.epoch = epoch;
      // Epochs without any evaluation do not count against the patience.
      if (evaluated_ && !improved_) ++state.epochs_since_improvement;
      if (state.epochs_since_improvement >= cfg_.patience) {
        state.stopped_early = epoch < cfg_.max_epochs;
        break;
      }
    }
    return result;
  }

 private:
  void evaluate(const Model& model, RunState& state, Model& best) {
    EvalRecord record;
    record.step = state.global_step;
    record.epoch = state.epoch;
    if (loss_count_ > 0) record.loss = loss_sum_ / static_cast<double>(loss_count_);
    loss_sum_ = 0.0;
    loss_count_ = 0;
    record.dev_rho = sts_evaluate(dev_, model_encoder(model), "dev").spearman;
    if (cfg_.record_wall_time) {
      record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_)
                           .count();
    }
    evaluated_ = true;

    const bool first = state.history.empty();
    if (record.dev_rho && (!state.best_dev || *record.dev_rho > *state.best_dev)) {
      state.best_dev = record.dev_rho;
      state.best_step = record.step;
      state.epochs_since_improvement = 0;
      improved_ = true;
      best = model;
      save_best(best, state);
    } else if (first) {
      save_best(best, state);
    }

    state.history.push_back(record);
    if (log_.is_open()) {
      log_ << log_line(record) << '\n';
      log_.flush();
    }
  }

  void save_best(const Model& best, RunState& state) {
    if (cfg_.checkpoint_dir.empty()) return;
    state.best_checkpoint = cfg_.checkpoint_dir / "best.ckpt";
    nlohmann::json meta = {{"stage", std::string(stage_name(cfg_.stage))}, {"step", state.best_step}};
    meta["dev_rho"] = state.best_dev ? nlohmann::json(*state.best_dev) : nlohmann::json(nullptr);
    save_checkpoint(state.best_checkpoint, best, meta);
  }

  const TrainConfig& cfg_;
  std::span<const StsPair> dev_;
  std::ofstream log_;
  std::chrono::steady_clock::time_point start_;
  double loss_sum_ = 0.0;
  std::size_t loss_count_ = 0;
  bool evaluated_ = false;
  bool improved_ = false;
};

Tensor encode_chunked(std::span<const std::string> sentences, const Model& model) {
  constexpr std::size_t kChunk = 256;
  const std::size_t dim = model.config.output_dim;
  Tensor out({sentences.size(), dim});
  for (std::size_t begin = 0; begin < sentences.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, sentences.size() - begin);
    const Tensor part = encode(sentences.subspan(begin, n), model);
    std::copy(part.data().begin(), part.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(begin * dim));
  }
  return out;
}

Tensor gather(const Tensor& table, std::span<const std::size_t> rows) {
  const std::size_t d = table.cols();
  Tensor out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = table.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void require_dev(std::span<const StsPair> dev) {
  if (dev.size() < 2) throw std::invalid_argument("dev set needs at least two STS pairs");
}

}  // namespace

StageResult run_distill(const Model& teacher, const Model& student, const UnlabeledCorpus& corpus,
                        std::span<const StsPair> dev, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.stage == Stage::kFinetune) throw std::invalid_argument("run_distill: stage must be distill-kd or distill-ckd");
  if (!teacher.config.frozen) throw std::invalid_argument("run_distill: teacher must be frozen");
  if (corpus.sentences.empty()) throw std::invalid_argument("run_distill: empty corpus");
  if (corpus.sentences.size() < cfg.batch_size) {
    throw std::invalid_argument("run_distill: corpus has fewer sentences than one batch");
  }
  require_dev(dev);
  teacher.validate();
  student.validate();
  const std::size_t teacher_dim = teacher.config.output_dim;
  const std::size_t student_dim = student.has_projection() ? student.config.projection_dim : student.config.output_dim;
  if (student_dim != teacher_dim) {
    throw ShapeError("run_distill: student maps to " + std::to_string(student_dim) + " dims, teacher emits " +
                     std::to_string(teacher_dim));
  }

  // The teacher is frozen, so its embeddings can be computed once.
  const Tensor teacher_embeddings = encode_chunked(corpus.sentences, teacher);
  MemoryBank bank(std::max(cfg.bank_capacity, cfg.batch_size), teacher_dim);
  const Temperature tau(cfg.temperature);

  StepFn step = [&](std::span<const std::size_t> indices, Model& model, AdamState& adam) {
    std::vector<std::string> batch;
    batch.reserve(indices.size());
    for (auto i : indices) batch.push_back(corpus.sentences[i]);
    const Tensor targets = gather(teacher_embeddings, indices);

    Tape tape;
    Var hs = encode(tape, batch, model);
    Var ht = tape.constant(targets);
    std::optional<Var> projection;
    if (model.has_projection()) {
      projection = tape.parameter(std::string(kProjectionParam), model.params.at(std::string(kProjectionParam)));
    }
    Var loss = cfg.stage == Stage::kDistillKd ? kd_mse_loss(hs, ht, projection) : ckd_loss(hs, ht, bank, tau, projection);
    adam_step(model.params, tape.backward(loss), adam);
    if (cfg.stage == Stage::kDistillCkd) bank.push(targets);
    return loss.value().item();
  };

  TrainLoop loop(cfg, dev);
  return loop.run(student, corpus.sentences.size(), step);
}

StageResult run_finetune(const Model& student, std::span<const Triplet> triplets, std::span<const StsPair> dev,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.stage != Stage::kFinetune) throw std::invalid_argument("run_finetune: stage must be finetune");
  if (triplets.empty()) throw std::invalid_argument("run_finetune: no triplets");
  if (cfg.max_epochs > 0 && triplets.size() < cfg.batch_size) {
    throw std::invalid_argument("run_finetune: fewer triplets than one batch");
  }
  require_dev(dev);
  student.validate();
  if (student.config.frozen) throw std::invalid_argument("run_finetune: student must be trainable");
  const Temperature tau(cfg.temperature);

  StepFn step = [&](std::span<const std::size_t> indices, Model& model, AdamState& adam) {
    const std::size_t n = indices.size();
    std::vector<std::string> batch;
    batch.reserve(3 * n);
    for (auto i : indices) batch.push_back(triplets[i].anchor);
    for (auto i : indices) batch.push_back(triplets[i].positive);
    for (auto i : indices) batch.push_back(triplets[i].negative);

    Tape tape;
    Var h = encode(tape, batch, model);
    Var loss = supervised_cl_loss(ops::slice_rows(h, 0, n), ops::slice_rows(h, n, n), ops::slice_rows(h, 2 * n, n), tau);
    adam_step(model.params, tape.backward(loss), adam);
    return loss.value().item();
  };

  TrainLoop loop(cfg, dev);
  return loop.run(student, triplets.size(), step);
}

StageResult run_finetune(const std::filesystem::path& checkpoint, std::span<const Triplet> triplets,
                         std::span<const StsPair> dev, const TrainConfig& cfg) {
  if (!std::filesystem::exists(checkpoint)) throw CheckpointError("missing checkpoint " + checkpoint.string());
  return run_finetune(load_checkpoint(checkpoint), triplets, dev, cfg);
}

DiscoResult run_disco(const Model& teacher, const Model& student_init, const UnlabeledCorpus& corpus,
                      std::span<const Triplet> triplets, std::span<const StsPair> dev, const TrainConfig& distill_cfg,
                      const TrainConfig& finetune_cfg) {
  distill_cfg.validate();
  finetune_cfg.validate();
  DiscoResult result;
  result.distill = run_distill(teacher, student_init, corpus, dev, distill_cfg);
  result.finetune = run_finetune(result.distill.best, triplets, dev, finetune_cfg);
  result.final_model = result.finetune.best;
  return result;
}

}  // namespace disco
