#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "maskroute/analysis.hpp"
#include "maskroute/checkpoint.hpp"
#include "maskroute/config.hpp"
#include "maskroute/errors.hpp"
#include "maskroute/mask_io.hpp"
#include "maskroute/rng.hpp"
#include "maskroute/router.hpp"
#include "maskroute/training.hpp"

namespace maskroute::cli {
namespace {

namespace fs = std::filesystem;

// Precedence: explicit flag, then config file key, then built-in default.
class Settings {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& flag, T& var, std::string key,
                   const std::string& help) {
    CLI::Option* opt = app->add_option(flag, var, help + " [" + key + "]")->capture_default_str();
    fill_.push_back([opt, &var, key](const Config& cfg) {
      if (opt->count() > 0) return;
      const auto value = cfg.get(key);
      if (!value) return;
      if constexpr (std::is_same_v<T, std::string>) {
        var = *value;
      } else if constexpr (std::is_floating_point_v<T>) {
        var = parse_double(*value, key);
      } else {
        var = static_cast<T>(parse_u64(*value, key));
      }
    });
    return opt;
  }

  void apply(const std::string& config_file) const {
    const Config cfg = config_file.empty() ? Config{} : Config::load(config_file);
    for (const auto& f : fill_) f(cfg);
  }

 private:
  std::vector<std::function<void(const Config&)>> fill_;
};

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    write_text(path, text);
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

struct FinetuneArgs {
  std::string backbone, data, task, out;
  std::string mode = "mask", scope = "ffn", init = "ori";
  double sparsity = 0.1;
  double lr = 5e-5;
  std::size_t steps = 2000, batch = 16, eval_interval = 100;
  std::uint64_t seed = 0;

  void add(CLI::App* app, Settings& s, bool with_mode) {
    app->add_option("--backbone", backbone, "Pretrained backbone file")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--data", data, "Dataset directory from gen")
        ->required()
        ->check(CLI::ExistingDirectory);
    app->add_option("--task", task, "Task id")->required();
    if (with_mode) s.add(app, "--mode", mode, "finetune.mode", "weight|mask|head");
    s.add(app, "--sparsity", sparsity, "finetune.sparsity", "Fraction of masked weights zeroed");
    s.add(app, "--scope", scope, "finetune.scope", "ffn|sa|both|groups=BITS");
    s.add(app, "--init", init, "finetune.init", "ri|wmi|ori");
    s.add(app, "--steps", steps, "finetune.steps", "Optimizer steps");
    s.add(app, "--lr", lr, "finetune.lr", "Peak learning rate");
    s.add(app, "--batch", batch, "finetune.batch_size", "Batch size");
    s.add(app, "--eval-interval", eval_interval, "finetune.eval_interval", "Steps between metrics rows");
    s.add(app, "--seed", seed, "finetune.seed", "Run seed");
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.mode = parse_train_mode(mode);
    c.sparsity = sparsity;
    c.scope = MaskScope::parse(scope);
    c.init = parse_init_scheme(init);
    c.steps = steps;
    c.peak_lr = lr;
    c.batch_size = batch;
    c.eval_interval = eval_interval;
    c.seed = seed;
    c.validate();
    return c;
  }
};

TaskHead task_head(const Backbone& bb, const TaskDataset& task, std::uint64_t seed) {
  return make_head(bb.config.d_model, task.n_classes, Rng::derive(seed, task.task_id));
}

// Slot description written next to finetune artifacts so route can reassemble it.
void write_slot_info(const fs::path& path, const TrainedTaskSlot& slot) {
  Config cfg;
  cfg.set("mode", to_string(slot.mode));
  cfg.set("scope", slot.scope.to_string());
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", slot.budget.sparsity);
  cfg.set("sparsity", buf);
  write_text(path, cfg.to_text());
}

TrainedTaskSlot read_slot(const fs::path& dir, const std::string& id) {
  const Config info = Config::load(dir / (id + ".slot.cfg"));
  TrainedTaskSlot slot;
  slot.mode = parse_train_mode(info.get_string("mode", "mask"));
  if (slot.mode != TrainMode::kMaskFt)
    throw ContractError("slot " + id + " was trained in mode " + to_string(slot.mode) +
                        "; only mask slots can be routed");
  slot.scope = MaskScope::parse(info.get_string("scope", "ffn"));
  slot.budget = SparsityBudget(info.get_double("sparsity", 0.0));
  slot.masks = load_masks(dir / (id + ".mask"));
  slot.head = load_head(dir / (id + ".head"));
  if (fs::exists(dir / (id + ".scores"))) slot.scores = load_scores(dir / (id + ".scores"));
  return slot;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"maskroute: binary-mask finetuning, routing and analysis on a frozen backbone"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "maskroute 0.1.0");
  app.fallthrough();
  Settings settings;
  std::string config_file;
  app.add_option("--config", config_file, "key=value config file; flags override it")
      ->check(CLI::ExistingFile);
  std::function<void()> action;

  // gen ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Generate synthetic multi-task datasets");
  GenSpec spec;
  std::string spec_file, gen_out;
  gen->add_option("--spec", spec_file, "Generator spec file ([gen] keys)")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory")->required();
  settings.add(gen, "--tasks", spec.n_tasks, "gen.n_tasks", "Number of tasks");
  settings.add(gen, "--vocab", spec.vocab_size, "gen.vocab_size", "Shared vocabulary size");
  settings.add(gen, "--inventory", spec.inventory_size, "gen.inventory_size", "Tokens per task");
  settings.add(gen, "--classes", spec.n_classes, "gen.n_classes", "Classes per task (even)");
  settings.add(gen, "--seq-len", spec.seq_len, "gen.seq_len", "Sequence length");
  settings.add(gen, "--train", spec.train_per_task, "gen.train_per_task", "Training examples per task");
  settings.add(gen, "--eval", spec.eval_per_task, "gen.eval_per_task", "Eval examples per task");
  settings.add(gen, "--pretrain", spec.pretrain_per_task, "gen.pretrain_per_task",
               "Pooled pretraining examples per task");
  settings.add(gen, "--pretrain-eval", spec.pretrain_eval_per_task, "gen.pretrain_eval_per_task",
               "Pooled eval examples per task");
  settings.add(gen, "--overlap-min", spec.overlap_min, "gen.overlap_min", "Smallest neighbour overlap");
  settings.add(gen, "--overlap-max", spec.overlap_max, "gen.overlap_max", "Largest neighbour overlap");
  settings.add(gen, "--seed", spec.seed, "gen.seed", "Generator seed");
  gen->callback([&] {
    action = [&] {
      const auto data = gen_data(spec);
      write_dataset_dir(data, spec.vocab_size, gen_out);
      for (const auto& t : data.tasks)
        out << t.task_id << " oracle_accuracy=" << fixed(bigram_oracle_accuracy(t, t.eval), 4)
            << '\n';
    };
  });

  // pretrain ----------------------------------------------------------
  auto* pre = app.add_subcommand("pretrain", "Train the shared backbone on pooled data, then freeze it");
  ModelConfig model;
  PretrainOptions popt;
  std::string pre_data, pre_out;
  pre->add_option("--data", pre_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--out", pre_out, "Backbone file to write")->required();
  settings.add(pre, "--d-model", model.d_model, "model.d_model", "Hidden size");
  settings.add(pre, "--heads", model.n_heads, "model.n_heads", "Attention heads");
  settings.add(pre, "--blocks", model.n_blocks, "model.n_blocks", "Transformer blocks");
  settings.add(pre, "--ffn-mult", model.ffn_mult, "model.ffn_mult", "FFN width multiplier");
  settings.add(pre, "--max-seq-len", model.max_seq_len, "model.max_seq_len", "Longest sequence");
  settings.add(pre, "--model-seed", model.seed, "model.seed", "Initialization seed");
  settings.add(pre, "--steps", popt.steps, "pretrain.steps", "Pretraining steps");
  settings.add(pre, "--batch", popt.batch_size, "pretrain.batch_size", "Batch size");
  settings.add(pre, "--lr", popt.peak_lr, "pretrain.lr", "Peak learning rate");
  settings.add(pre, "--seed", popt.seed, "pretrain.seed", "Run seed");
  pre->callback([&] {
    action = [&] {
      const auto dir = read_dataset_dir(pre_data);
      model.vocab_size = dir.vocab_size;
      model.validate();
      const auto r = pretrain_surrogate(model, dir.pooled, popt);
      save_backbone(r.backbone, pre_out);
      out << "params=" << r.backbone.parameter_count()
          << " pooled_accuracy=" << fixed(r.eval_accuracy, 4) << '\n';
    };
  });

  // finetune ----------------------------------------------------------
  auto* ft = app.add_subcommand("finetune", "Train one task slot");
  FinetuneArgs fa;
  fa.add(ft, settings, true);
  ft->add_option("--out", fa.out, "Artifact directory")->required();
  ft->callback([&] {
    action = [&] {
      const auto cfg = fa.train_config();
      if (cfg.mode == TrainMode::kPruneTwoPhase)
        throw ConfigError("use the prune subcommand for two-phase pruning");
      const auto data = read_dataset_dir(fa.data);
      const auto& task = data.task(fa.task);
      const Backbone frozen = load_backbone(fa.backbone);
      const Backbone backbone =
          cfg.mode == TrainMode::kWeightFt ? frozen.trainable_copy() : frozen;
      const auto r = train(backbone, task_head(backbone, task, cfg.seed), cfg, task);
      const fs::path dir = fa.out;
      fs::create_directories(dir);
      write_text(dir / (fa.task + ".metrics.csv"), metrics_csv(r.log));
      save_head(r.slot.head, dir / (fa.task + ".head"));
      if (!r.slot.masks.layers.empty()) save_masks(r.slot.masks, dir / (fa.task + ".mask"));
      if (!r.slot.scores.empty()) save_scores(r.slot.scores, dir / (fa.task + ".scores"));
      if (r.slot.weights) save_backbone(*r.slot.weights, dir / (fa.task + ".weights.bin"));
      write_slot_info(dir / (fa.task + ".slot.cfg"), r.slot);
      out << "task=" << fa.task << " mode=" << to_string(cfg.mode)
          << " accuracy=" << fixed(r.final_eval.accuracy) << " loss=" << fixed(r.final_eval.loss)
          << '\n';
    };
  });

  // sweep -------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "Mask finetuning over a list of sparsities");
  FinetuneArgs sa;
  std::string sparsities = "0,0.05,0.1,0.2,0.5,1", sweep_out;
  std::size_t jobs = 1;
  bool timing = false;
  sa.add(sw, settings, false);
  settings.add(sw, "--sparsities", sparsities, "sweep.sparsities", "Comma-separated list");
  sw->add_option("--jobs", jobs, "Parallel sweep points")->check(CLI::PositiveNumber);
  sw->add_flag("--timing", timing, "Fill the runtime column (output is then not reproducible)");
  sw->add_option("--out", sweep_out, "CSV file (stdout if omitted)");
  sw->callback([&] {
    action = [&] {
      auto cfg = sa.train_config();
      cfg.mode = TrainMode::kMaskFt;
      std::vector<double> points;
      for (const auto& s : split_list(sparsities)) points.push_back(parse_double(s, "sparsity"));
      const auto data = read_dataset_dir(sa.data);
      const auto& task = data.task(sa.task);
      const Backbone bb = load_backbone(sa.backbone);
      const auto r = sparsity_sweep(bb, task_head(bb, task, cfg.seed), cfg, task, points, jobs, timing);
      emit(sweep_out, r.csv(), out);
    };
  });

  // prune -------------------------------------------------------------
  auto* pr = app.add_subcommand("prune", "Two-phase pruning with the one-shot magnitude baseline");
  FinetuneArgs pa;
  std::string prune_out;
  pa.add(pr, settings, false);
  pr->add_option("--out", prune_out, "CSV file (stdout if omitted)");
  pr->callback([&] {
    action = [&] {
      auto cfg = pa.train_config();
      cfg.mode = TrainMode::kPruneTwoPhase;
      const auto data = read_dataset_dir(pa.data);
      const auto& task = data.task(pa.task);
      const Backbone bb = load_backbone(pa.backbone);
      const auto r = prune_two_phase(bb, task_head(bb, task, cfg.seed), cfg, task);
      std::ostringstream csv;
      csv << "task,sparsity,phase1_accuracy,omp_accuracy,pruned_accuracy\n"
          << pa.task << ',' << fixed(cfg.sparsity, 4) << ',' << fixed(r.phase1_eval.accuracy) << ','
          << fixed(r.omp_eval.accuracy) << ',' << fixed(r.pruned.final_eval.accuracy) << '\n';
      emit(prune_out, csv.str(), out);
    };
  });

  // route -------------------------------------------------------------
  auto* rt = app.add_subcommand("route", "Build a mask registry or evaluate one of its tasks");
  std::vector<std::string> register_ids;
  std::string manifest, from_dir, eval_id, input_file, predictions_out;
  FinetuneArgs ra;
  rt->add_option("--manifest", manifest, "Registry manifest to write or read")->required();
  rt->add_option("--register", register_ids, "Task ids to add to a new registry")->expected(1, -1);
  rt->add_option("--from", from_dir, "Directory of finetune artifacts")->check(CLI::ExistingDirectory);
  rt->add_option("--backbone", ra.backbone, "Backbone file")->check(CLI::ExistingFile);
  rt->add_option("--data", ra.data, "Dataset directory (to train slots)")->check(CLI::ExistingDirectory);
  settings.add(rt, "--sparsity", ra.sparsity, "finetune.sparsity", "Sparsity of trained slots");
  settings.add(rt, "--scope", ra.scope, "finetune.scope", "Scope of trained slots");
  settings.add(rt, "--init", ra.init, "finetune.init", "Init of trained slots");
  settings.add(rt, "--steps", ra.steps, "finetune.steps", "Steps of trained slots");
  settings.add(rt, "--lr", ra.lr, "finetune.lr", "Peak learning rate of trained slots");
  settings.add(rt, "--batch", ra.batch, "finetune.batch_size", "Batch size");
  settings.add(rt, "--seed", ra.seed, "finetune.seed", "Run seed");
  rt->add_option("--eval", eval_id, "Task to switch to and evaluate");
  rt->add_option("--input", input_file, "Examples to evaluate (tokens TAB label)")
      ->check(CLI::ExistingFile);
  rt->add_option("--predictions", predictions_out, "Write one predicted class per line");
  rt->callback([&] {
    action = [&] {
      if (register_ids.empty() && eval_id.empty())
        throw ConfigError("route needs --register and/or --eval");
      if (!register_ids.empty()) {
        if (ra.backbone.empty()) throw ConfigError("--register needs --backbone");
        auto shared = std::make_shared<const Backbone>(load_backbone(ra.backbone));
        MaskRegistry reg(shared);
        std::optional<DatasetDir> data;
        for (const auto& id : register_ids) {
          if (!from_dir.empty()) {
            reg.add_slot(id, read_slot(from_dir, id));
            continue;
          }
          if (ra.data.empty()) throw ConfigError("--register needs --from or --data");
          if (!data) data = read_dataset_dir(ra.data);
          auto cfg = ra.train_config();
          const auto& task = data->task(id);
          reg.register_task(id, task_head(*shared, task, cfg.seed), cfg, task);
        }
        write_registry(reg, manifest);
        out << storage_report(reg).to_text();
      }
      if (!eval_id.empty()) {
        if (input_file.empty()) throw ConfigError("--eval needs --input");
        const auto reg = read_registry(manifest);
        const auto model = reg.switch_task(eval_id);
        const auto examples = read_examples(input_file);
        const auto r = model.evaluate(examples);
        if (!predictions_out.empty()) {
          std::string text;
          for (const int p : model.predict(examples)) text += std::to_string(p) + '\n';
          write_text(predictions_out, text);
        }
        out << "task=" << eval_id << " examples=" << examples.size()
            << " accuracy=" << fixed(r.accuracy) << " loss=" << fixed(r.loss) << '\n';
        if (register_ids.empty()) out << storage_report(reg).to_text();
      }
    };
  });

  // analyze -----------------------------------------------------------
  auto* an = app.add_subcommand("analyze", "Correlate mask similarity with inventory similarity");
  std::string an_manifest, inventories, an_out, per_layer_out;
  std::size_t layer = 0;
  an->add_option("--manifest", an_manifest, "Registry manifest")->required()->check(CLI::ExistingFile);
  an->add_option("--inventories", inventories, "Inventory vectors file")
      ->required()
      ->check(CLI::ExistingFile);
  settings.add(an, "--layer", layer, "analyze.layer", "Index into the masked layers");
  an->add_option("--out", an_out, "Report CSV (stdout if omitted)");
  an->add_option("--per-layer", per_layer_out, "Per-layer correlation CSV");
  an->callback([&] {
    action = [&] {
      const auto reg = read_registry(an_manifest);
      const auto rep = correlation_report(reg, read_inventories(inventories), layer);
      emit(an_out, rep.csv(), out);
      if (!per_layer_out.empty()) write_text(per_layer_out, rep.per_layer_csv());
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    settings.apply(config_file);
    if (!spec_file.empty()) {
      // --spec is the generator's own config file; global --config still applies first.
      settings.apply(spec_file);
      if (!config_file.empty()) settings.apply(config_file);
    }
    action();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BudgetError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const LookupError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const ContractError& e) {
    err << "contract violation: " << e.what() << '\n';
    return kExitContract;
  } catch (const MaskError& e) {
    err << "contract violation: " << e.what() << '\n';
    return kExitContract;
  } catch (const ShapeError& e) {
    err << "contract violation: " << e.what() << '\n';
    return kExitContract;
  } catch (const RegistryError& e) {
    err << "contract violation: " << e.what() << '\n';
    return kExitContract;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace maskroute::cli
