// usaad command-line interface: dataset synthesis, training, inference,
// evaluation, ablation presets, and loss-curve inspection.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "usaad/blursynth.hpp"
#include "usaad/core/errors.hpp"
#include "usaad/imaging.hpp"
#include "usaad/kvconfig.hpp"
#include "usaad/metrics.hpp"
#include "usaad/plot.hpp"
#include "usaad/trainer.hpp"

namespace fs = std::filesystem;

namespace {

bool g_verbose = false;

void apply_kv(usaad::TrainConfig& c, const std::string& k, const std::string& v) {
  try {
    if (k == "n_scales") c.n_scales = std::stoi(v);
    else if (k == "image_size") c.image_size = std::stoi(v);
    else if (k == "fusion") c.fusion = usaad::parse_fusion(v);
    else if (k == "lambda_adv") c.lambda_adv = std::stod(v);
    else if (k == "lambda_cyc") c.lambda_cyc = std::stod(v);
    else if (k == "batch_size") c.batch_size = std::stoi(v);
    else if (k == "iterations") c.iterations = std::stoi(v);
    else if (k == "learning_rate") c.learning_rate = std::stod(v);
    else if (k == "beta1") c.beta1 = std::stod(v);
    else if (k == "beta2") c.beta2 = std::stod(v);
    else if (k == "seed") c.seed = std::stoull(v);
    else if (k == "checkpoint_every") c.checkpoint_every = std::stoi(v);
    else if (k == "blur_dir") c.blur_dir = v;
    else if (k == "sharp_dir") c.sharp_dir = v;
    else if (k == "out_dir") c.out_dir = v;
    else if (k == "image_channels") c.image_channels = std::stoi(v);
    else if (k == "base_width") c.base_width = std::stoi(v);
    else if (k == "sb_width") c.sb_width = std::stoi(v);
    else if (k == "d_width") c.d_width = std::stoi(v);
    else if (k == "reduction") c.reduction = std::stoi(v);
    else if (k == "init") c.init = v;
    else throw usaad::UsageError("unknown config key: " + k);
  } catch (const std::invalid_argument&) {
    throw usaad::UsageError("bad value for config key " + k + ": " + v);
  } catch (const std::out_of_range&) {
    throw usaad::UsageError("bad value for config key " + k + ": " + v);
  }
}

std::string effective_config_line(const usaad::TrainConfig& c) {
  std::string line = "config:";
  for (const auto& [k, v] : c.to_json().items()) {
    line += " " + k + "=";
    line += v.is_string() ? v.get<std::string>() : v.dump();
  }
  return line;
}

void write_config_kv(const usaad::TrainConfig& c, const fs::path& path) {
  std::ofstream f(path);
  for (const auto& [k, v] : c.to_json().items()) {
    f << k << " = " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
  }
}

// Collects flag values for TrainConfig fields; only flags the user actually
// passed override the config file, which overrides defaults.
struct TrainFlags {
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    auto opt = [this, cmd](const std::string& key, const std::string& desc) {
      cmd->add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { values[key] = v; }, desc);
    };
    opt("n-scales", "number of pyramid scales (1-3)");
    opt("image-size", "training resolution M");
    opt("fusion", "none|add|concat|channel_attention|spatial_attention|saam");
    opt("lambda-adv", "adversarial loss weight");
    opt("lambda-cyc", "cycle-consistency loss weight");
    opt("batch-size", "images per step from each group");
    opt("iterations", "total training iterations");
    opt("learning-rate", "Adam learning rate");
    opt("beta1", "Adam beta1");
    opt("beta2", "Adam beta2");
    opt("checkpoint-every", "checkpoint interval in iterations");
    opt("blur-dir", "directory with the blurred group");
    opt("sharp-dir", "directory with the sharp group");
    opt("out-dir", "output directory (checkpoints, history.csv)");
    opt("image-channels", "1 for grayscale, 3 for RGB");
    opt("base-width", "generator stem width (features are 4x)");
    opt("sb-width", "reblur network width");
    opt("d-width", "discriminator base width");
    opt("reduction", "attention bottleneck reduction ratio");
    opt("init", "standard|near_identity");
  }

  void apply(usaad::TrainConfig& c) const {
    for (const auto& [k, v] : values) {
      std::string key = k;
      for (char& ch : key)
        if (ch == '-') ch = '_';
      apply_kv(c, key, v);
    }
  }
};

usaad::TrainConfig resolve_config(usaad::TrainConfig base, const std::string& config_file,
                                  const TrainFlags& flags,
                                  const std::optional<std::uint64_t>& seed) {
  if (!config_file.empty()) {
    for (const auto& [k, v] : usaad::parse_kv_file(config_file)) apply_kv(base, k, v);
  }
  flags.apply(base);
  if (seed) base.seed = *seed;
  return base;
}

int run_training(const usaad::TrainConfig& cfg, bool dry_run, const std::string& resume) {
  std::cout << effective_config_line(cfg) << "\n";
  cfg.validate();
  if (dry_run) return 0;
  fs::create_directories(cfg.out_dir);
  write_config_kv(cfg, fs::path(cfg.out_dir) / "config.kv");
  usaad::FitResult result = usaad::fit(cfg, resume.empty() ? fs::path{} : fs::path(resume));
  std::cout << "history: " << result.history_csv.string() << "\n";
  std::cout << "checkpoint: " << result.final_checkpoint.string() << "\n";
  if (!result.history.empty()) {
    std::cout << "final total loss: " << result.history.back().total() << "\n";
  }
  return 0;
}

void cmd_make_dataset(CLI::App& app, std::optional<std::uint64_t>& seed_flag) {
  auto* cmd = app.add_subcommand("make-dataset", "split sources and synthesize the blurred half");
  auto src = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(0);
  auto ksize = std::make_shared<int>(21);
  auto intensity = std::make_shared<double>(0.5);
  auto pre_blurred = std::make_shared<bool>(false);
  auto blur_src = std::make_shared<std::string>();
  cmd->add_option("--src", *src, "directory of source images")->required();
  cmd->add_option("--out", *out, "output corpus directory")->required();
  cmd->add_option("--seed", *seed, "split/kernel seed");
  cmd->add_option("--kernel-size", *ksize, "odd blur kernel size");
  cmd->add_option("--intensity", *intensity, "blur intensity in [0,1]");
  cmd->add_flag("--pre-blurred", *pre_blurred, "sources are already blurred; apply no kernel");
  cmd->add_option("--blur-src", *blur_src,
                  "directory of pre-blurred images used as the blur half");
  cmd->callback([=, &seed_flag] {
    std::uint64_t s = seed_flag.value_or(*seed);
    std::cout << "config: src=" << *src << " out=" << *out << " seed=" << s
              << " kernel_size=" << *ksize << " intensity=" << *intensity
              << " pre_blurred=" << (*pre_blurred ? "true" : "false")
              << " blur_src=" << *blur_src << "\n";
    usaad::KernelConfig kc{*ksize, *intensity};
    auto corpus = usaad::build_corpus(*src, *out, s, kc, *pre_blurred,
                                      blur_src->empty() ? fs::path{} : fs::path(*blur_src));
    std::cout << "manifest: " << corpus.manifest_path.string() << "\n";
  });
}

void cmd_train(CLI::App& app, std::optional<std::uint64_t>& seed_flag) {
  auto* cmd = app.add_subcommand("train", "train the deblurring model on an unpaired corpus");
  auto flags = std::make_shared<TrainFlags>();
  auto config_file = std::make_shared<std::string>();
  auto resume = std::make_shared<std::string>();
  auto dry = std::make_shared<bool>(false);
  cmd->add_option("--config", *config_file, "key = value config file");
  cmd->add_option("--resume", *resume, "checkpoint to resume from");
  cmd->add_flag("--dry-run", *dry, "print the resolved config and exit");
  flags->attach(cmd);
  cmd->callback([=, &seed_flag] {
    usaad::TrainConfig cfg = resolve_config(usaad::TrainConfig{}, *config_file, *flags, seed_flag);
    run_training(cfg, *dry, *resume);
  });
}

void cmd_ablate(CLI::App& app, std::optional<std::uint64_t>& seed_flag) {
  auto* cmd = app.add_subcommand("ablate", "train one of the Net1-Net8 ablation presets");
  auto preset = std::make_shared<std::string>();
  auto flags = std::make_shared<TrainFlags>();
  auto config_file = std::make_shared<std::string>();
  auto dry = std::make_shared<bool>(false);
  cmd->add_option("--preset", *preset, "Net1..Net8")->required();
  cmd->add_option("--config", *config_file, "key = value config file");
  cmd->add_flag("--dry-run", *dry, "print the resolved config and exit");
  flags->attach(cmd);
  cmd->callback([=, &seed_flag] {
    usaad::TrainConfig cfg = usaad::ablation_preset(*preset);
    cfg = resolve_config(cfg, *config_file, *flags, seed_flag);
    std::cout << "preset: " << *preset << "\n";
    run_training(cfg, *dry, "");
  });
}

void cmd_deblur(CLI::App& app) {
  auto* cmd = app.add_subcommand("deblur", "restore every image in a directory");
  auto ckpt = std::make_shared<std::string>();
  auto in_dir = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  cmd->add_option("--ckpt", *ckpt, "trained checkpoint")->required();
  cmd->add_option("--in", *in_dir, "directory of blurred images")->required();
  cmd->add_option("--out", *out_dir, "output directory")->required();
  cmd->callback([=] {
    std::cout << "config: ckpt=" << *ckpt << " in=" << *in_dir << " out=" << *out_dir << "\n";
    usaad::Checkpoint ck = usaad::Checkpoint::load(*ckpt);
    usaad::TrainState st = usaad::checkpoint_to_state(ck);
    auto files = usaad::list_image_files(*in_dir);
    if (files.empty()) throw usaad::DataError("no images in " + *in_dir);
    fs::create_directories(*out_dir);
    for (const auto& f : files) {
      usaad::ImageBatch img = usaad::load_image(f, st.cfg.image_channels);
      usaad::ImageBatch restored = usaad::run_inference(st.models, st.cfg.n_scales, img);
      fs::path dst = fs::path(*out_dir) / (f.stem().string() + ".png");
      usaad::save_image_png(dst, restored);
      if (g_verbose) std::cout << f.filename().string() << " -> " << dst.string() << "\n";
    }
    std::cout << "restored " << files.size() << " images to " << *out_dir << "\n";
  });
}

void cmd_eval(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval", "PSNR and no-reference quality report");
  auto test_dir = std::make_shared<std::string>();
  auto ref_dir = std::make_shared<std::string>();
  auto out_csv = std::make_shared<std::string>();
  auto pristine_dir = std::make_shared<std::string>();
  auto model_file = std::make_shared<std::string>();
  auto features_json = std::make_shared<std::string>();
  auto channels = std::make_shared<int>(3);
  cmd->add_option("--test", *test_dir, "directory of images to score")->required();
  cmd->add_option("--ref", *ref_dir, "directory of reference images (matched by filename)");
  cmd->add_option("--out", *out_csv, "output CSV path")->required();
  cmd->add_option("--pristine", *pristine_dir, "pristine corpus for fallback NR statistics");
  cmd->add_option("--model", *model_file, "NR scoring model JSON (pristine stats or linear)");
  cmd->add_option("--features", *features_json, "also dump 36-dim feature vectors to this JSON");
  cmd->add_option("--channels", *channels, "image channels (1 or 3)");
  cmd->callback([=] {
    std::cout << "config: test=" << *test_dir << " ref=" << *ref_dir << " out=" << *out_csv
              << " pristine=" << *pristine_dir << " model=" << *model_file
              << " channels=" << *channels << "\n";
    auto files = usaad::list_image_files(*test_dir);
    if (files.empty()) throw usaad::DataError("no images in " + *test_dir);

    std::optional<usaad::NrModel> nr_model;
    if (!model_file->empty()) {
      nr_model = usaad::load_nr_model(*model_file);
    } else if (!pristine_dir->empty()) {
      std::vector<std::array<double, 36>> feats;
      for (const auto& f : usaad::list_image_files(*pristine_dir))
        feats.push_back(usaad::nr_features(usaad::load_image(f, *channels)));
      usaad::NrModel m;
      m.pristine = usaad::fit_pristine(feats);
      nr_model = std::move(m);
    }

    usaad::MetricReport report;
    nlohmann::json feature_dump = nlohmann::json::object();
    for (const auto& f : files) {
      usaad::ImageBatch img = usaad::load_image(f, *channels);
      usaad::MetricRecord rec;
      rec.path = f.string();
      if (!ref_dir->empty()) {
        fs::path ref = fs::path(*ref_dir) / f.filename();
        if (!fs::exists(ref))
          throw usaad::DataError("missing reference for " + f.filename().string());
        rec.psnr_db = usaad::psnr(img, usaad::load_image(ref, *channels));
      }
      rec.features = usaad::nr_features(img);
      if (nr_model) rec.nr = nr_model->score(rec.features);
      rec.piqe = usaad::piqe_score(img);
      if (!features_json->empty())
        feature_dump[f.string()] =
            std::vector<double>(rec.features.begin(), rec.features.end());
      report.records.push_back(std::move(rec));
    }
    usaad::write_report_csv(report, *out_csv);
    if (!features_json->empty()) {
      std::ofstream jf(*features_json);
      jf << feature_dump.dump(2) << "\n";
    }
    std::cout << "report: " << *out_csv << "\n";
  });
}

void cmd_inspect(CLI::App& app) {
  auto* cmd = app.add_subcommand("inspect", "render a loss-curve PNG from a history CSV");
  auto history = std::make_shared<std::string>();
  auto out_png = std::make_shared<std::string>();
  cmd->add_option("--history", *history, "history.csv from a training run")->required();
  cmd->add_option("--out", *out_png, "output PNG path")->required();
  cmd->callback([=] {
    std::cout << "config: history=" << *history << " out=" << *out_png << "\n";
    usaad::plot_history_csv(*history, *out_png);
    std::cout << "plot: " << *out_png << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unsupervised scale-adaptive attention deblurring"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed_flag;
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t v) { seed_flag = v; }, "override the config seed");
  app.add_flag("--verbose", g_verbose, "chatty per-file output");

  cmd_make_dataset(app, seed_flag);
  cmd_train(app, seed_flag);
  cmd_ablate(app, seed_flag);
  cmd_deblur(app);
  cmd_eval(app);
  cmd_inspect(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const usaad::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const usaad::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const usaad::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
