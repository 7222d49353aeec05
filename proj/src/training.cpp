#include <cmath>
#include <numeric>
#include <sstream>

#include "ehrsum/error.hpp"
#include "ehrsum/format.hpp"
#include "ehrsum/tagger.hpp"

namespace ehrsum {
namespace {

std::vector<Matrix> snapshot(TaggerModel& model) {
  std::vector<Matrix> values;
  for (Param* p : model.params()) values.push_back(p->value);
  return values;
}

void restore(TaggerModel& model, const std::vector<Matrix>& values) {
  auto params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !(decay > 0) || batch_size == 0 || max_epochs == 0 || patience == 0 ||
      !(clip_norm > 0)) {
    throw ValidationError("training configuration values must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  if (patience >= max_epochs) throw ValidationError("patience must be smaller than max_epochs");
}

EvalReport evaluate(const TaggerModel& model, const std::vector<LabeledDocument>& docs) {
  MetricsAccumulator acc;
  for (const auto& doc : docs) acc.add(doc.labels, model.predict(doc.tokens));
  return acc.report();
}

TrainResult train(TaggerModel& model, const TrainConfig& config, const std::vector<LabeledDocument>& train_docs,
                  const std::vector<LabeledDocument>& dev_docs) {
  config.validate();
  std::vector<const LabeledDocument*> pool;
  for (const auto& d : train_docs) {
    if (!d.tokens.empty()) pool.push_back(&d);
  }
  if (pool.empty()) throw ValidationError("training set has no non-empty documents");
  if (dev_docs.empty()) throw ValidationError("dev set is empty");

  Rng rng(config.seed);
  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  adam_config.decay = config.decay;
  const auto trainable = model.trainable_params();
  Adam adam(adam_config, trainable);

  TrainResult result;
  std::vector<Matrix> best = snapshot(model);
  double best_f1 = -1.0;
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    adam.set_epoch(epoch);
    rng.shuffle(pool.begin(), pool.end());
    double epoch_loss = 0.0;
    bool diverged = false;
    for (std::size_t start = 0; start < pool.size() && !diverged; start += config.batch_size) {
      const std::size_t stop = std::min(pool.size(), start + config.batch_size);
      model.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        batch_loss += model.loss_and_backward(*pool[k], Mode::kTrain, config.dropout, &rng);
      }
      if (!std::isfinite(batch_loss)) {
        diverged = true;
        break;
      }
      clip_global_norm(trainable, config.clip_norm);
      try {
        adam.step();
      } catch (const RuntimeFailure&) {
        diverged = true;
        break;
      }
      epoch_loss += batch_loss;
    }
    if (diverged) {
      result.diverged = true;
      break;
    }

    const EvalReport dev = evaluate(model, dev_docs);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = epoch_loss;
    rec.dev_weighted_f1 = dev.weighted_f1;
    rec.dev_accuracy = dev.accuracy;
    rec.learning_rate = adam.effective_learning_rate();
    rec.improved = dev.weighted_f1 > best_f1 + config.min_improvement;
    result.history.push_back(rec);
    if (rec.improved) {
      best_f1 = dev.weighted_f1;
      best = snapshot(model);
      result.best_epoch = rec.epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      result.stopped_early = rec.epoch < config.max_epochs;
      break;
    }
  }
  restore(model, best);
  result.best_dev_f1 = std::max(best_f1, 0.0);
  return result;
}

std::vector<AblationResult> ablation_run(const std::vector<AblationSpec>& specs, const ModelConfig& base,
                                         const TrainConfig& train_config,
                                         const std::vector<LabeledDocument>& train_docs,
                                         const std::vector<LabeledDocument>& dev_docs) {
  std::vector<AblationResult> out;
  for (const auto& spec : specs) {
    AblationResult row;
    row.name = spec.name;
    ModelConfig cfg = base;
    cfg.use_chars = spec.use_chars;
    cfg.word_mode = spec.word_mode;
    if (spec.word_mode != WordEmbeddingMode::kLearned &&
        (!spec.embeddings || !std::filesystem::exists(*spec.embeddings))) {
      row.skipped = true;
      row.note = spec.embeddings ? "missing embeddings file " + spec.embeddings->string() : "no embeddings file";
      out.push_back(std::move(row));
      continue;
    }
    ModelSetup setup;
    setup.embeddings = spec.embeddings;
    setup.extra_docs = &dev_docs;
    TaggerModel model = make_model(cfg, train_docs, train_config.seed, &setup);
    const TrainResult result = train(model, train_config, train_docs, dev_docs);
    row.dev_f1 = result.best_dev_f1;
    row.best_epoch = result.best_epoch;
    row.epochs_run = result.history.size();
    if (result.diverged) row.note = "diverged";
    if (cfg.word_mode != WordEmbeddingMode::kLearned) {
      row.note += (row.note.empty() ? "" : "; ") + std::to_string(setup.oov_rows) + " oov rows";
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationResult>& rows) {
  std::ostringstream out;
  out << "name,status,dev_f1,best_epoch,epochs_run,note\n";
  for (const auto& r : rows) {
    out << csv_escape(r.name) << ',' << (r.skipped ? "skipped" : "ok") << ','
        << (r.skipped ? "" : format_double(r.dev_f1)) << ',' << r.best_epoch << ',' << r.epochs_run << ','
        << csv_escape(r.note) << '\n';
  }
  return out.str();
}

}  // namespace ehrsum
