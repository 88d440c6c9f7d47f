#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hemocnn/checkpoint.hpp"
#include "hemocnn/data.hpp"
#include "hemocnn/errors.hpp"
#include "hemocnn/gradcheck.hpp"
#include "hemocnn/model.hpp"
#include "hemocnn/train.hpp"

namespace fs = std::filesystem;
using namespace hemocnn;

namespace {

Shape parse_input_shape(const std::string& text) {
  std::vector<std::size_t> dims;
  std::string current;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (current.empty()) {
        throw ConfigError("--input-shape: want h,w,c, got '" + text + "'");
      }
      std::size_t pos = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(current, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != current.size() || v == 0) {
        throw ConfigError("--input-shape: bad dimension '" + current + "'");
      }
      dims.push_back(v);
      current.clear();
    } else {
      current += ch;
    }
  }
  if (dims.size() != 3) {
    throw ConfigError("--input-shape: want exactly h,w,c, got '" + text + "'");
  }
  return Shape(dims);
}

// Datasets follow <root>/TRAIN/<FOLDER>/*.ppm and <root>/TEST/...; a root
// without the split directory is used as the class-folder root itself.
fs::path resolve_split(const fs::path& root, const char* split) {
  const fs::path candidate = root / split;
  std::error_code ec;
  if (fs::is_directory(candidate, ec)) return candidate;
  return root;
}

ClassMapping load_mapping(const std::string& path) {
  if (path.empty()) return ClassMapping::defaults();
  return ClassMapping::from_json_file(path);
}

struct TrainArgs {
  std::string data;
  std::string checkpoint;
  std::string metrics_out;
  std::string class_map;
  std::string input_shape = "120,160,3";
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  double lr = 0.001;
  double val_fraction = 0.2;
};

int cmd_train(const TrainArgs& args) {
  const Shape input = parse_input_shape(args.input_shape);
  TrainConfig config;
  config.epochs = args.epochs;
  config.batch_size = args.batch_size;
  config.seed = args.seed;
  config.optimizer.learning_rate = args.lr;
  config.validation_fraction = args.val_fraction;
  config.validate();

  const ClassMapping mapping = load_mapping(args.class_map);
  const LabeledDataset all =
      load_dataset(resolve_split(args.data, "TRAIN"), mapping, input);
  const auto counts = all.class_counts();
  std::cerr << "loaded " << all.size() << " images (" << kClassNames[0] << "="
            << counts[0] << ", " << kClassNames[1] << "=" << counts[1]
            << ")\n";

  auto [train_set, val_set] =
      split_stratified(all, config.validation_fraction, config.seed);

  SequentialModel<float> model = build_bloodcell_model<float>(input, args.seed);

  std::unique_ptr<CsvMetricsWriter> csv;
  if (!args.metrics_out.empty()) {
    csv = std::make_unique<CsvMetricsWriter>(args.metrics_out);
  }

  const auto records = fit(model, train_set, val_set, config, csv.get());
  for (const auto& r : records) {
    std::printf("epoch %zu/%zu train_loss=%.6f train_acc=%.6f val_loss=%.6f "
                "val_acc=%.6f\n",
                r.epoch, config.epochs, r.train_loss, r.train_acc, r.val_loss,
                r.val_acc);
  }

  if (!args.checkpoint.empty()) {
    save_model(model, args.checkpoint);
    std::cerr << "checkpoint written to " << args.checkpoint << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string class_map;
  std::size_t batch_size = 32;
};

int cmd_eval(const EvalArgs& args) {
  SequentialModel<float> model = load_model(args.checkpoint);
  const ClassMapping mapping = load_mapping(args.class_map);
  const LabeledDataset data =
      load_dataset(resolve_split(args.data, "TEST"), mapping,
                   model.input_shape());
  if (data.empty()) {
    throw DataError("evaluation set is empty");
  }
  const EvalResult result = evaluate(model, data, args.batch_size);
  std::printf("loss=%.6f\n", result.loss);
  std::printf("accuracy=%.4f\n", result.accuracy);
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
};

int cmd_predict(const PredictArgs& args) {
  SequentialModel<float> model = load_model(args.checkpoint);
  const Shape& input = model.input_shape();

  std::vector<std::string> files;
  for (const std::string& item : args.inputs) {
    std::error_code ec;
    if (fs::is_directory(item, ec)) {
      std::vector<std::string> found;
      for (const auto& entry : fs::directory_iterator(item)) {
        if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
          found.push_back(entry.path().string());
        }
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(item, ec)) {
      files.push_back(item);
    } else {
      throw DataError("no such file or directory: " + item);
    }
  }
  if (files.empty()) {
    throw DataError("no input images given");
  }

  for (const std::string& file : files) {
    Tensor<float> img =
        resize_bilinear(read_ppm_file(file), input[0], input[1]);
    Tensor<float> batch = img.reshaped(batched(1, input));
    const Tensor<float> probs = model.predict(batch);
    const std::size_t label = probs[1] > probs[0] ? 1 : 0;
    std::printf("%s,%s,%.6f,%.6f\n", file.c_str(), kClassNames[label],
                static_cast<double>(probs[0]), static_cast<double>(probs[1]));
  }
  return 0;
}

struct GradCheckArgs {
  std::string input_shape = "12,16,3";
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 42;
};

int cmd_gradcheck(const GradCheckArgs& args) {
  const Shape input = parse_input_shape(args.input_shape);
  SequentialModel<double> model = build_compact_model<double>(input, args.seed);

  Rng rng(derive_seed(args.seed, 99));
  const std::size_t batch = 2;
  Tensor<double> x(batched(batch, input));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0, 255.0);
  Tensor<double> t(Shape{batch, 2});
  for (std::size_t b = 0; b < batch; ++b) t[b * 2 + rng.below(2)] = 1.0;

  GradCheckOptions options;
  options.epsilon = args.epsilon;
  options.seed = args.seed;
  const GradCheckReport report = finite_difference_check(model, x, t, options);

  for (const auto& entry : report.entries) {
    std::printf("%-14s entries=%-5zu max_rel_err=%.3e\n", entry.name.c_str(),
                entry.checked, entry.max_rel_err);
  }
  std::printf("max_rel_err=%.3e tolerance=%.3e\n", report.max_rel_err,
              args.tolerance);
  if (!report.within(args.tolerance)) {
    std::cerr << "gradient check failed tolerance\n";
    return 3;
  }
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"blood cell classifier: train, evaluate and inspect the CNN"};
  app.require_subcommand(1);

  auto* summary = app.add_subcommand("summary", "print the layer table");
  std::string summary_shape = "120,160,3";
  std::uint64_t summary_seed = 42;
  summary->add_option("--input-shape", summary_shape, "input as h,w,c");
  summary->add_option("--seed", summary_seed, "weight init seed");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train on a dataset directory");
  train->add_option("--data", train_args.data, "dataset root")->required();
  train->add_option("--checkpoint", train_args.checkpoint,
                    "write the trained model here");
  train->add_option("--metrics-out", train_args.metrics_out,
                    "write per-epoch CSV here");
  train->add_option("--class-map", train_args.class_map,
                    "JSON folder-to-class override");
  train->add_option("--input-shape", train_args.input_shape, "input as h,w,c");
  train->add_option("--epochs", train_args.epochs, "training epochs");
  train->add_option("--batch-size", train_args.batch_size, "minibatch size");
  train->add_option("--seed", train_args.seed, "run seed");
  train->add_option("--lr", train_args.lr, "learning rate");
  train->add_option("--val-fraction", train_args.val_fraction,
                    "validation split fraction");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--data", eval_args.data, "dataset root")->required();
  eval->add_option("--checkpoint", eval_args.checkpoint, "model to load")
      ->required();
  eval->add_option("--class-map", eval_args.class_map,
                   "JSON folder-to-class override");
  eval->add_option("--batch-size", eval_args.batch_size, "minibatch size");

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "classify images");
  predict->add_option("--checkpoint", predict_args.checkpoint, "model to load")
      ->required();
  predict->add_option("inputs", predict_args.inputs,
                      "image files or directories")
      ->required();

  GradCheckArgs gc_args;
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of the backward pass");
  gradcheck->add_option("--input-shape", gc_args.input_shape, "input as h,w,c");
  gradcheck->add_option("--epsilon", gc_args.epsilon, "perturbation size");
  gradcheck->add_option("--tolerance", gc_args.tolerance,
                        "max relative error allowed");
  gradcheck->add_option("--seed", gc_args.seed, "probe seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (summary->parsed()) {
    auto model = build_bloodcell_model<float>(parse_input_shape(summary_shape),
                                              summary_seed);
    std::cout << model.summary();
    return 0;
  }
  if (train->parsed()) return cmd_train(train_args);
  if (eval->parsed()) return cmd_eval(eval_args);
  if (predict->parsed()) return cmd_predict(predict_args);
  if (gradcheck->parsed()) return cmd_gradcheck(gc_args);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
