// Command-line front end: describe / count-params / train / eval / bench /
// classify / make-synth / meta over the nulite library.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>

#include "nulite/checkpoint.hpp"
#include "nulite/data.hpp"
#include "nulite/graph.hpp"
#include "nulite/model.hpp"
#include "nulite/train.hpp"

namespace fs = std::filesystem;
using namespace nulite;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

Dataset load_dataset(const std::string& path) {
  if (fs::is_directory(path)) return ingest_folder(path);
  return load_native(path);
}

int cmd_describe(const std::string& arch, int classes) {
  const NetGraph g = build_arch(arch, classes);
  std::cout << describe(g);
  return 0;
}

int cmd_count_params(const std::string& arch, int classes, bool csv) {
  const NetGraph g = build_arch(arch, classes);
  const CostReport report = count_params(g);
  if (csv) {
    std::cout << "layer,kind,out_c,out_h,out_w,params,macs\n";
    for (const CostRow& r : report.rows) {
      std::cout << r.id << "," << kind_name(r.kind) << "," << r.out.c << ","
                << r.out.h << "," << r.out.w << "," << r.params << "," << r.macs
                << "\n";
    }
  } else {
    std::cout << describe(g);
  }
  char mstr[32];
  std::snprintf(mstr, sizeof(mstr), "%.2f",
                static_cast<double>(report.total_params) / 1e6);
  std::cout << "total_params=" << report.total_params << " (" << mstr << "M)\n";
  std::cout << "total_macs=" << report.total_macs << "\n";
  return 0;
}

struct TrainFlags {
  std::string data;
  std::string arch = "nu-lite-a";
  std::string out;
  int folds = 0;
  TrainConfig cfg;
};

int run_one_training(const std::string& tag, const Dataset& ds,
                     const std::vector<int>& train_idx,
                     const std::vector<int>& eval_idx, const TrainFlags& flags,
                     EpochRecord& final_rec) {
  Model model(build_arch(flags.arch, ds.num_classes()), flags.cfg.seed);

  const fs::path csv_path = fs::path(flags.out) / (tag + ".csv");
  std::ofstream csv(csv_path);
  if (!csv) throw DataError("cannot open '" + csv_path.string() + "' for writing");
  csv << epoch_csv_header() << "\n";

  const auto records = train_model(
      model, ds, train_idx, eval_idx, flags.cfg, [&](const EpochRecord& r) {
        csv << epoch_csv_row(r) << "\n";
        std::cout << tag << " " << epoch_csv_row(r) << "\n";
        return true;
      });
  csv.close();

  save_checkpoint(snapshot(model), (fs::path(flags.out) / (tag + ".nult")).string());
  final_rec = records.back();
  return 0;
}

int cmd_train(const TrainFlags& flags) {
  std::printf("config: lr=%g momentum=%g batch=%d wd=%g epochs=%d seed=%llu\n",
              static_cast<double>(flags.cfg.lr0),
              static_cast<double>(flags.cfg.momentum), flags.cfg.batch_size,
              static_cast<double>(flags.cfg.weight_decay), flags.cfg.epochs,
              static_cast<unsigned long long>(flags.cfg.seed));

  const Dataset ds = load_dataset(flags.data);
  ds.validate();
  fs::create_directories(flags.out);

  if (flags.folds == 0) {
    // no held-out protocol: report accuracy on the training set itself
    std::vector<int> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    EpochRecord last;
    run_one_training("model", ds, all, all, flags, last);
    std::printf("final top1=%.6f top5=%.6f\n", last.top1, last.top5);
    return 0;
  }

  const auto splits = kfold_split(ds, flags.folds, flags.cfg.seed);
  double top1 = 0.0, top5 = 0.0;
  for (int f = 0; f < flags.folds; ++f) {
    char tag[32];
    std::snprintf(tag, sizeof(tag), "fold_%02d", f);
    EpochRecord last;
    run_one_training(tag, ds, splits[static_cast<std::size_t>(f)].first,
                     splits[static_cast<std::size_t>(f)].second, flags, last);
    top1 += last.top1;
    top5 += last.top5;
  }
  std::printf("mean over %d folds: top1=%.6f top5=%.6f\n", flags.folds,
              top1 / flags.folds, top5 / flags.folds);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path) {
  Model model = restore_model(load_checkpoint(model_path));
  const Dataset ds = load_dataset(data_path);
  ds.validate();
  if (ds.num_classes() != model.graph().num_classes) {
    throw DataError("class count mismatch: dataset has " +
                    std::to_string(ds.num_classes()) + " classes, model '" +
                    model.graph().arch_id + "' expects " +
                    std::to_string(model.graph().num_classes));
  }
  std::vector<int> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  const EvalResult ev = evaluate(model, ds, all);
  std::printf("samples=%zu top1=%.6f top5=%.6f loss=%.6f\n", ds.size(), ev.top1,
              ev.top5, ev.mean_loss);
  return 0;
}

int cmd_bench(const std::string& model_path, int repeat) {
  Model model = restore_model(load_checkpoint(model_path));
  Rng rng(0);
  const Tensor4 input = Tensor4::randn({1, 3, 224, 224}, 1.0f, rng);

  for (int i = 0; i < 3; ++i) model.logits(input, BnMode::eval);  // warmup
  std::vector<double> ms;
  for (int i = 0; i < repeat; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    model.logits(input, BnMode::eval);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / repeat;
  const double median = ms[static_cast<std::size_t>(repeat) / 2];
  const CostReport report = count_macs(model.graph());
  std::printf("runs=%d min_ms=%.3f median_ms=%.3f mean_ms=%.3f macs=%lld\n",
              repeat, ms.front(), median, mean,
              static_cast<long long>(report.total_macs));
  return 0;
}

int cmd_classify(const std::string& model_path, const std::string& image_path,
                 int topk, const std::string& labels_path) {
  Model model = restore_model(load_checkpoint(model_path));
  const Image image = resize_to_dataset(load_ppm(image_path));
  AugmentConfig center;
  center.enabled = false;
  Rng unused(0);
  const Tensor4 probs = model.predict(augment(image, center, unused));

  const int classes = model.graph().num_classes;
  // checkpoints carry no class-name table; an optional dataset supplies one
  std::vector<std::string> names;
  if (!labels_path.empty()) {
    names = load_dataset(labels_path).class_names;
    if (static_cast<int>(names.size()) != classes) {
      throw DataError("label source has " + std::to_string(names.size()) +
                      " classes, model expects " + std::to_string(classes));
    }
  } else {
    for (int c = 0; c < classes; ++c) names.push_back("class " + std::to_string(c));
  }
  if (topk > classes) {
    std::fprintf(stderr, "warning: topk %d clamped to %d classes\n", topk, classes);
    topk = classes;
  }
  std::vector<int> order(static_cast<std::size_t>(classes));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probs.at(0, a, 0, 0) > probs.at(0, b, 0, 0);
  });
  for (int i = 0; i < topk; ++i) {
    const int c = order[static_cast<std::size_t>(i)];
    std::printf("%s %.6f\n", names[static_cast<std::size_t>(c)].c_str(),
                static_cast<double>(probs.at(0, c, 0, 0)));
  }
  return 0;
}

int cmd_make_synth(int classes, int per_class, std::uint64_t seed,
                   const std::string& out) {
  Rng rng(seed);
  save_native(synth_dataset(classes, per_class, rng), out);
  std::printf("wrote %d samples (%d classes) to %s\n", classes * per_class,
              classes, out.c_str());
  return 0;
}

int cmd_meta(const std::string& model_path, bool json) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  if (json) {
    std::cout << checkpoint_meta_json(ckpt) << "\n";
  } else {
    std::uint64_t elements = 0;
    for (const TensorEntry& t : ckpt.tensors) elements += t.data.size();
    std::printf("arch=%s classes=%u tensors=%zu elements=%llu\n",
                ckpt.arch_id.c_str(), ckpt.num_classes, ckpt.tensors.size(),
                static_cast<unsigned long long>(elements));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NU-LiteNet CNN library CLI"};
  app.require_subcommand(1);

  std::string arch = "nu-lite-a", data, out, model_path, image_path;
  int classes = 50, per_class = 10, folds = 0, repeat = 50, topk = 5;
  bool csv = false, json_meta = false;
  TrainFlags train_flags;

  auto* describe_cmd = app.add_subcommand("describe", "Print the per-layer table");
  describe_cmd->add_option("--arch", arch)->required();
  describe_cmd->add_option("--classes", classes);

  auto* count_cmd = app.add_subcommand("count-params", "Parameter / MAC accounting");
  count_cmd->add_option("--arch", arch)->required();
  count_cmd->add_option("--classes", classes);
  count_cmd->add_flag("--csv", csv);

  auto* train_cmd = app.add_subcommand("train", "Train from scratch");
  train_cmd->add_option("--data", train_flags.data)->required();
  train_cmd->add_option("--arch", train_flags.arch);
  train_cmd->add_option("--folds", train_flags.folds);
  train_cmd->add_option("--epochs", train_flags.cfg.epochs);
  train_cmd->add_option("--batch", train_flags.cfg.batch_size);
  train_cmd->add_option("--lr", train_flags.cfg.lr0);
  train_cmd->add_option("--momentum", train_flags.cfg.momentum);
  train_cmd->add_option("--weight-decay", train_flags.cfg.weight_decay);
  train_cmd->add_option("--seed", train_flags.cfg.seed);
  train_cmd->add_option("--out", train_flags.out)->required();

  auto* eval_cmd = app.add_subcommand("eval", "Top-1/top-5 on a dataset");
  eval_cmd->add_option("--model", model_path)->required();
  eval_cmd->add_option("--data", data)->required();

  auto* bench_cmd = app.add_subcommand("bench", "Single-image forward latency");
  bench_cmd->add_option("--model", model_path)->required();
  bench_cmd->add_option("--repeat", repeat);

  auto* classify_cmd = app.add_subcommand("classify", "Rank classes for one image");
  classify_cmd->add_option("--model", model_path)->required();
  classify_cmd->add_option("--image", image_path)->required();
  classify_cmd->add_option("--topk", topk);
  std::string labels_path;
  classify_cmd->add_option("--labels", labels_path,
                           "dataset file supplying class names");

  auto* synth_cmd = app.add_subcommand("make-synth", "Generate a synthetic dataset");
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--classes", classes)->required();
  synth_cmd->add_option("--per-class", per_class)->required();
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--out", out)->required();

  auto* meta_cmd = app.add_subcommand("meta", "Checkpoint header metadata");
  meta_cmd->add_option("--model", model_path)->required();
  meta_cmd->add_flag("--json-meta", json_meta);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (describe_cmd->parsed()) return cmd_describe(arch, classes);
    if (count_cmd->parsed()) return cmd_count_params(arch, classes, csv);
    if (train_cmd->parsed()) {
      if (train_flags.folds < 0 || train_flags.folds == 1) {
        std::fprintf(stderr, "error: --folds must be 0 (off) or >= 2\n");
        return kExitUsage;
      }
      return cmd_train(train_flags);
    }
    if (eval_cmd->parsed()) return cmd_eval(model_path, data);
    if (bench_cmd->parsed()) {
      if (repeat < 1) {
        std::fprintf(stderr, "error: --repeat must be >= 1\n");
        return kExitUsage;
      }
      return cmd_bench(model_path, repeat);
    }
    if (classify_cmd->parsed()) {
      if (topk < 1) {
        std::fprintf(stderr, "error: --topk must be >= 1\n");
        return kExitUsage;
      }
      return cmd_classify(model_path, image_path, topk, labels_path);
    }
    if (synth_cmd->parsed()) return cmd_make_synth(classes, per_class, synth_seed, out);
    if (meta_cmd->parsed()) return cmd_meta(model_path, json_meta);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
