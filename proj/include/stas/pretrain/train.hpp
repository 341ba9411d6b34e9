#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "stas/ad/gradcheck.hpp"
#include "stas/ad/tensor.hpp"
#include "stas/corpus/instances.hpp"
#include "stas/model/stas_model.hpp"

namespace stas::pretrain {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double encoder_lr = 4e-5;
  double decoder_lr = 4e-4;
  std::uint64_t seed = 1;
  double clip_norm = 1.0;  // <= 0 disables clipping
  // Intermediate checkpoints every this many steps (0 = final only).
  std::size_t checkpoint_every = 0;
  // Final checkpoint path; intermediate ones get a ".step<N>" suffix. Empty
  // disables writing.
  std::filesystem::path checkpoint_path;
  bool enable_msp = true;
  bool enable_ss = true;
  // Literal summed objective instead of per-token / per-sentence means.
  bool raw_sum_loss = false;
  // Linear learning-rate warmup over this many steps (0 = constant).
  std::size_t warmup_steps = 0;
  corpus::MaskingConfig masking;

  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;  // 1-based
  std::size_t epoch = 0;
  double msp_loss = 0.0;
  double ss_loss = 0.0;
  double total = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double msp_loss = 0.0;
  double ss_loss = 0.0;
  double total = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;

  // Header "step,msp_loss,ss_loss,total". The ss column is omitted when the
  // shuffling objective is disabled.
  void write_csv(std::ostream& out, bool include_ss = true) const;
};

// Masked-sentence loss of one instance: negative log-likelihood of every
// masked sentence's tokens, divided by the number of predicted tokens unless
// `raw_sum`.
ad::Tensor msp_loss(const model::StasModel& model, const corpus::MaskedInstance& instance,
                    bool raw_sum = false, const model::Dropout& dropout = {});

// Sentence-shuffling loss: teacher-forced pointer negative log-likelihood,
// divided by |D| unless `raw_sum`.
ad::Tensor ss_loss(const model::StasModel& model, const corpus::ShuffledInstance& instance,
                   bool raw_sum = false, const model::Dropout& dropout = {});

// The per-(epoch, document) generator used for instance sampling.
Rng instance_rng(std::uint64_t seed, std::size_t epoch, std::size_t doc_index);

// Runs the joint objective over `docs` in corpus order, `batch_size`
// documents per optimizer step. Each document yields one masked and one
// shuffled instance per epoch.
TrainReport train(model::StasModel& model, std::span<const corpus::EncodedDocument> docs,
                  const TrainConfig& config);

// Fraction of teacher-forced pointer steps whose argmax equals the target.
double pointer_accuracy(const model::StasModel& model,
                        std::span<const corpus::ShuffledInstance> instances);

// Finite-difference check of (msp + ss) against every parameter of a tiny
// model (d_model = 8) on a two-sentence document.
ad::GradCheckResult check_joint_loss(std::uint64_t seed, const ad::GradCheckOptions& options = {});

}  // namespace stas::pretrain
