#include "stas/pretrain/train.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>

#include <fmt/format.h>

#include "stas/ad/ops.hpp"
#include "stas/ad/optim.hpp"
#include "stas/errors.hpp"
#include "stas/model/checkpoint.hpp"

namespace stas::pretrain {

using ad::Tensor;

void TrainConfig::validate() const {
  if (!enable_msp) throw ConfigError("the masked-sentence objective cannot be disabled");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(encoder_lr > 0.0) || !(decoder_lr > 0.0)) throw ConfigError("learning rates must be positive");
  const auto& m = masking;
  if (!(m.sentence_prob > 0.0 && m.sentence_prob <= 1.0) || m.mask_prob < 0.0 || m.random_prob < 0.0 ||
      m.mask_prob + m.random_prob > 1.0) {
    throw ConfigError("inconsistent masking probabilities");
  }
}

void TrainReport::write_csv(std::ostream& out, bool include_ss) const {
  out << (include_ss ? "step,msp_loss,ss_loss,total\n" : "step,msp_loss,total\n");
  for (const auto& s : steps) {
    if (include_ss)
      out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", s.step, s.msp_loss, s.ss_loss, s.total);
    else
      out << fmt::format("{},{:.17g},{:.17g}\n", s.step, s.msp_loss, s.total);
  }
}

Tensor msp_loss(const model::StasModel& model, const corpus::MaskedInstance& instance, bool raw_sum,
                const model::Dropout& dropout) {
  if (instance.decisions.empty()) throw ContractError("msp_loss: no masked sentences");
  const auto enc = model.encode(instance.masked, dropout);
  Tensor total;
  std::size_t count = 0;
  for (std::size_t k = 0; k < instance.decisions.size(); ++k) {
    const std::size_t i = instance.decisions[k].sentence;
    const auto out = model.msp_decode(instance.targets[k], ad::slice_rows(enc.H, i, 1), dropout);
    const Tensor s = ad::sum(out.target_log_probs);
    total = total.defined() ? ad::add(total, s) : s;
    count += out.target_log_probs.numel();
  }
  return ad::scale(total, raw_sum ? -1.0 : -1.0 / static_cast<double>(count));
}

Tensor ss_loss(const model::StasModel& model, const corpus::ShuffledInstance& instance, bool raw_sum,
               const model::Dropout& dropout) {
  const auto enc = model.encode(instance.shuffled, dropout);
  const Tensor lp = model.pointer_log_probs(enc.H, instance.target, dropout);
  const Tensor s = ad::sum(ad::pick(lp, instance.target));
  const double n = static_cast<double>(instance.target.size());
  return ad::scale(s, raw_sum ? -1.0 : -1.0 / n);
}

Rng instance_rng(std::uint64_t seed, std::size_t epoch, std::size_t doc_index) {
  return Rng::stream(seed, (static_cast<std::uint64_t>(epoch) << 32) ^ doc_index);
}

namespace {

void write_checkpoint(const model::StasModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  model::save_checkpoint(path, model);
}

}  // namespace

TrainReport train(model::StasModel& model, std::span<const corpus::EncodedDocument> docs,
                  const TrainConfig& config) {
  config.validate();
  if (docs.empty()) throw DataError("training corpus is empty");
  const auto start = std::chrono::steady_clock::now();

  const corpus::SentencePool pool = corpus::SentencePool::from(docs);
  ad::ParamGroup encoder{"encoder", {}, config.encoder_lr};
  ad::ParamGroup decoder{"decoder", {}, config.decoder_lr};
  for (const auto& [name, t] : model.params().all()) {
    if (model::StasModel::is_encoder_parameter(name))
      encoder.params.push_back(t);
    else if (config.enable_ss || !model::StasModel::is_pointer_parameter(name))
      decoder.params.push_back(t);
  }
  std::vector<Tensor> trainable = encoder.params;
  trainable.insert(trainable.end(), decoder.params.begin(), decoder.params.end());
  ad::Adam adam({encoder, decoder});

  TrainReport report;
  const double p_drop = model.config().dropout;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord er{epoch + 1, 0.0, 0.0, 0.0};
    std::size_t epoch_steps = 0;
    for (std::size_t begin = 0; begin < docs.size(); begin += config.batch_size) {
      const std::size_t end = std::min(docs.size(), begin + config.batch_size);
      const double weight = config.raw_sum_loss ? 1.0 : 1.0 / static_cast<double>(end - begin);
      model.params().zero_grad();
      StepRecord rec;
      rec.step = ++step;
      rec.epoch = epoch + 1;
      for (std::size_t d = begin; d < end; ++d) {
        Rng rng = instance_rng(config.seed, epoch, d);
        const auto masked = corpus::make_masked(docs[d], pool, rng, config.masking);
        const auto shuffled = corpus::make_shuffled(docs[d], rng);
        const model::Dropout dropout{p_drop, p_drop > 0.0 ? &rng : nullptr};
        Tensor loss = msp_loss(model, masked, config.raw_sum_loss, dropout);
        rec.msp_loss += weight * loss.item();
        if (config.enable_ss) {
          const Tensor ls = ss_loss(model, shuffled, config.raw_sum_loss, dropout);
          rec.ss_loss += weight * ls.item();
          loss = ad::add(loss, ls);
        }
        ad::backward(ad::scale(loss, weight));
      }
      rec.total = rec.msp_loss + rec.ss_loss;
      ad::clip_grad_norm(trainable, config.clip_norm);
      if (config.warmup_steps > 0) {
        adam.set_lr_scale(std::min(1.0, static_cast<double>(step) /
                                            static_cast<double>(config.warmup_steps)));
      }
      adam.step();
      report.steps.push_back(rec);
      er.msp_loss += rec.msp_loss;
      er.ss_loss += rec.ss_loss;
      er.total += rec.total;
      ++epoch_steps;
      if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
          !config.checkpoint_path.empty()) {
        auto path = config.checkpoint_path;
        path += fmt::format(".step{}", step);
        write_checkpoint(model, path);
      }
    }
    const double k = static_cast<double>(epoch_steps);
    er.msp_loss /= k;
    er.ss_loss /= k;
    er.total /= k;
    report.epochs.push_back(er);
  }
  model.params().zero_grad();
  if (!config.checkpoint_path.empty()) write_checkpoint(model, config.checkpoint_path);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double pointer_accuracy(const model::StasModel& model,
                        std::span<const corpus::ShuffledInstance> instances) {
  ad::NoGradGuard guard;
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& inst : instances) {
    const auto enc = model.encode(inst.shuffled);
    const Tensor lp = model.pointer_log_probs(enc.H, inst.target);
    const std::size_t n = inst.target.size();
    for (std::size_t t = 0; t < n; ++t) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < n; ++j)
        if (lp.at(t, j) > lp.at(t, best)) best = j;
      hits += best == inst.target[t];
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

ad::GradCheckResult check_joint_loss(std::uint64_t seed, const ad::GradCheckOptions& options) {
  model::ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.token_layers = 1;
  cfg.sentence_layers = 1;
  cfg.decoder_layers = 1;
  cfg.max_tokens = 16;
  cfg.max_sentences = 4;
  cfg.vocab_size = corpus::kNumReserved + 6;
  cfg.init_range = 0.5;
  model::StasModel model(cfg, seed);

  const auto doc = corpus::EncodedDocument::from_sentences(
      {{corpus::kBos, 5, 6, 7, corpus::kEos}, {corpus::kBos, 8, 9, 10, 5, corpus::kEos}});
  const corpus::SentencePool pool = corpus::SentencePool::from(std::span(&doc, 1));
  const auto masked = corpus::apply_mask_plan(doc, {{1, corpus::MaskAction::Masked, 0}}, pool);
  const auto shuffled = corpus::apply_permutation(doc, {1, 0});

  auto loss_fn = [&] { return ad::add(msp_loss(model, masked), ss_loss(model, shuffled)); };
  return ad::check_gradients("joint_loss", loss_fn, model.params().tensors(), options);
}

}  // namespace stas::pretrain
