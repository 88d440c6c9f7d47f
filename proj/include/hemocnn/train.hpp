#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "hemocnn/data.hpp"
#include "hemocnn/model.hpp"
#include "hemocnn/optimize.hpp"

namespace hemocnn {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  RmsPropConfig optimizer;
  double validation_fraction = 0.2;

  // epochs and batch_size must be >= 1, validation_fraction in [0,1)
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void on_epoch(const EpochRecord& record) = 0;
};

// Streams records to a CSV file: header line
// `epoch,train_loss,train_acc,val_loss,val_acc`, then one row per epoch
// with six fractional digits on every value.
class CsvMetricsWriter : public MetricsSink {
 public:
  explicit CsvMetricsWriter(const std::filesystem::path& path);
  void on_epoch(const EpochRecord& record) override;

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Inference-mode pass over the whole set in fixed order; loss and accuracy
// are averaged over samples. An empty dataset evaluates to zeros.
EvalResult evaluate(SequentialModel<float>& model, const LabeledDataset& data,
                    std::size_t batch_size);

// Minibatch training: per epoch a reshuffle seeded from (config seed, epoch
// number), forward/backward in training mode, one RMSProp step per batch
// (the final short batch included), then full inference-mode evaluation of
// the train and validation sets for the epoch record.
//
// When `optimizer` is given its accumulator state carries across calls;
// otherwise a fresh optimizer lives for this call only.
std::vector<EpochRecord> fit(SequentialModel<float>& model,
                             const LabeledDataset& train,
                             const LabeledDataset& val,
                             const TrainConfig& config,
                             MetricsSink* sink = nullptr,
                             RmsProp<float>* optimizer = nullptr);

}  // namespace hemocnn
