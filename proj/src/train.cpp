#include "hemocnn/train.hpp"

#include <cmath>
#include <cstdio>

#include "hemocnn/errors.hpp"

namespace hemocnn {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train: validation fraction must be in [0,1), got " +
                      std::to_string(validation_fraction));
  }
  optimizer.validate();
}

CsvMetricsWriter::CsvMetricsWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::trunc) {
  if (!out_) {
    throw DataError("cannot open metrics file " + path_.string());
  }
  out_ << "epoch,train_loss,train_acc,val_loss,val_acc\n";
}

void CsvMetricsWriter::on_epoch(const EpochRecord& record) {
  char row[160];
  std::snprintf(row, sizeof(row), "%zu,%.6f,%.6f,%.6f,%.6f\n", record.epoch,
                record.train_loss, record.train_acc, record.val_loss,
                record.val_acc);
  out_ << row;
  out_.flush();
  if (!out_) {
    throw DataError("write to metrics file " + path_.string() + " failed");
  }
}

EvalResult evaluate(SequentialModel<float>& model, const LabeledDataset& data,
                    std::size_t batch_size) {
  if (data.empty()) return {};

  BatchStream stream(data, batch_size, 0, 0, /*shuffle=*/false);
  Tensor<float> images, targets;
  double loss_sum = 0.0;
  double hits = 0.0;
  while (stream.next(images, targets)) {
    const Tensor<float> pred = model.predict(images);
    const auto rows = static_cast<double>(images.shape()[0]);
    loss_sum += static_cast<double>(bce_loss(pred, targets).value) * rows;
    hits += accuracy(pred, targets) * rows;
  }
  const auto n = static_cast<double>(data.size());
  return {loss_sum / n, hits / n};
}

std::vector<EpochRecord> fit(SequentialModel<float>& model,
                             const LabeledDataset& train,
                             const LabeledDataset& val,
                             const TrainConfig& config, MetricsSink* sink,
                             RmsProp<float>* optimizer) {
  config.validate();
  if (train.empty()) throw DataError("train: training set is empty");
  if (train.samples[0].image.shape() != model.input_shape()) {
    throw ShapeError("train: sample shape " +
                     train.samples[0].image.shape().str() +
                     " does not match model input " +
                     model.input_shape().str());
  }

  RmsProp<float> local(config.optimizer);
  RmsProp<float>& opt = optimizer ? *optimizer : local;

  std::vector<EpochRecord> records;
  records.reserve(config.epochs);
  Tensor<float> images, targets;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    BatchStream stream(train, config.batch_size, config.seed, epoch);
    std::size_t batch_index = 0;
    while (stream.next(images, targets)) {
      Tensor<float> pred = model.forward(images, TrainMode::training);
      LossResult<float> loss = bce_loss(pred, targets);
      if (!std::isfinite(loss.value)) {
        throw NumericError("non-finite loss at epoch " +
                           std::to_string(epoch) + " batch " +
                           std::to_string(batch_index));
      }
      model.zero_grads();
      model.backward(loss.grad);
      opt.step(model.params());
      ++batch_index;
    }

    const EvalResult on_train = evaluate(model, train, config.batch_size);
    const EvalResult on_val = evaluate(model, val, config.batch_size);
    EpochRecord record{epoch, on_train.loss, on_train.accuracy, on_val.loss,
                       on_val.accuracy};
    if (sink) sink->on_epoch(record);
    records.push_back(record);
  }
  return records;
}

}  // namespace hemocnn
