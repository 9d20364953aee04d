#pragma once

// Two-stage training: distillation from a frozen teacher on unlabeled text
// (MSE or contrastive with a memory bank), then supervised contrastive
// finetuning on triplets. Both stages share one loop: shuffled fixed-size
// mini-batches (the ragged tail is dropped), Adam, dev evaluation at step 0
// and every `eval_interval` steps, best-checkpoint tracking and
// epoch-based patience.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "disco/adam.hpp"
#include "disco/config.hpp"
#include "disco/data.hpp"
#include "disco/encoder.hpp"
#include "disco/eval.hpp"

namespace disco {

enum class Stage { kDistillKd, kDistillCkd, kFinetune };

std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);

struct TrainConfig {
  Stage stage = Stage::kDistillCkd;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 20;
  std::size_t eval_interval = 25;
  std::size_t patience = 3;
  double temperature = 0.05;
  std::size_t bank_capacity = 512;
  std::uint64_t seed = 0;
  // Empty: keep everything in memory. Otherwise best.ckpt and
  // train_log.jsonl are written here.
  std::filesystem::path checkpoint_dir;
  // wall_ms in the log is 0 unless set, which keeps logs byte-stable.
  bool record_wall_time = false;

  void validate() const;
  AdamOptions adam() const;

  /// Reads the keys listed in train_config_keys(); absent keys keep the
  /// defaults above.
  static TrainConfig from(const KeyValueConfig& kv);
};

const std::set<std::string>& train_config_keys();

struct EvalRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::optional<double> loss;  // mean training loss since the previous record
  std::optional<double> dev_rho;
  std::int64_t wall_ms = 0;
};

std::string log_line(const EvalRecord& record);
/// Throws std::invalid_argument on a malformed line.
EvalRecord parse_log_line(const std::string& line);

struct RunState {
  std::size_t epoch = 0;  // completed epochs
  std::size_t global_step = 0;
  std::optional<double> best_dev;
  std::size_t best_step = 0;
  std::filesystem::path best_checkpoint;
  std::size_t epochs_since_improvement = 0;
  bool stopped_early = false;
  std::vector<EvalRecord> history;
};

struct StageResult {
  Model best;
  RunState state;
};

StageResult run_distill(const Model& teacher, const Model& student, const UnlabeledCorpus& corpus,
                        std::span<const StsPair> dev, const TrainConfig& cfg);

StageResult run_finetune(const Model& student, std::span<const Triplet> triplets, std::span<const StsPair> dev,
                         const TrainConfig& cfg);
/// Loads the student from `checkpoint` first; a missing file is rejected.
StageResult run_finetune(const std::filesystem::path& checkpoint, std::span<const Triplet> triplets,
                         std::span<const StsPair> dev, const TrainConfig& cfg);

struct DiscoResult {
  Model final_model;
  StageResult distill;
  StageResult finetune;
};

DiscoResult run_disco(const Model& teacher, const Model& student_init, const UnlabeledCorpus& corpus,
                      std::span<const Triplet> triplets, std::span<const StsPair> dev, const TrainConfig& distill_cfg,
                      const TrainConfig& finetune_cfg);

}  // namespace disco
