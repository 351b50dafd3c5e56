// Command-line front end for the cross-modal generation toolkit.
//
// Exit codes: 0 success, 2 usage error, 3 input validation error,
// 4 runtime/training fault.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "xmdg/dataset.hpp"
#include "xmdg/evaluation.hpp"
#include "xmdg/signal.hpp"
#include "xmdg/training.hpp"

namespace fs = std::filesystem;
using namespace xmdg;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kValidation = 3;
constexpr int kRuntime = 4;

std::string data_dir_default() {
  const char* env = std::getenv("XMDG_DATA_DIR");
  return env ? env : "data";
}

data::DatasetManifest load_manifest_or_throw(const std::string& dataset_dir) {
  const fs::path path = fs::path(dataset_dir) / "manifest.txt";
  if (!fs::exists(path))
    throw data::import_error("no manifest at " + path.string() + " (run prepare-data first)");
  return data::load_manifest(path.string());
}

std::string default_classifier_path(const std::string& data_dir, data::Modality modality) {
  const char* name = modality == data::Modality::visual ? "classifier_visual.ckpt"
                                                        : "classifier_tactile.ckpt";
  return (fs::path(data_dir) / name).string();
}

train::ClassifierArtifacts load_classifier_or_throw(const std::string& path,
                                                    const char* stage_hint) {
  if (!fs::exists(path))
    throw data::import_error("no classifier checkpoint at " + path + " (" + stage_hint + ")");
  return train::load_classifier(path);
}

void write_snapshot(const fs::path& path, const std::string& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << body;
}

struct PrepareArgs {
  std::string source = "synthetic";
  std::string out;
  std::string lmt_dir;
  int classes = 3;
  int originals = 6;
  int reps = 10;
  int image_size = 64;
  std::uint64_t seed = 0;
  bool full_scale = false;
};

int run_prepare(const PrepareArgs& a) {
  data::PrepareConfig cfg;
  if (a.full_scale) cfg = data::full_scale_prepare_config();
  cfg.reps = a.reps;
  cfg.seed = a.seed;
  if (!a.full_scale) {
    cfg.image_size = a.image_size;
    // Keep spectrogram payloads square: a window of 2*size - 2 yields exactly
    // `size` frequency bins.
    const int window = 2 * a.image_size - 2;
    cfg.stft = signal::StftConfig{window, std::min(64, window)};
  }

  data::Pool visual, tactile;
  if (a.source == "lmt") {
    if (a.lmt_dir.empty())
      throw std::invalid_argument("--source lmt requires --lmt-dir");
    std::tie(visual, tactile) = data::import_lmt(a.lmt_dir);
  } else {
    std::tie(visual, tactile) =
        data::synth_corpus(a.classes, a.originals, cfg.image_size, a.seed, a.out);
  }

  std::ostringstream snap;
  snap << "command prepare-data\nsource " << a.source << "\nclasses " << a.classes
       << "\noriginals " << a.originals << "\nreps " << cfg.reps << "\nimage_size "
       << cfg.image_size << "\nseed " << cfg.seed << "\n";
  write_snapshot(fs::path(a.out) / "prepare_config.txt", snap.str());

  auto manifest = data::prepare_dataset(visual, tactile, cfg, a.out);
  std::cout << "prepared " << manifest.pairs.size() << " weak pairs over "
            << manifest.classes.size() << " classes\n"
            << "manifest " << (fs::path(a.out) / "manifest.txt").string() << "\n"
            << "digest " << data::manifest_digest(manifest) << "\n";
  return kOk;
}

int run_pretrain(const std::string& data_dir, const std::string& modality_name, int epochs,
                 std::uint64_t seed, const std::string& out_path) {
  auto manifest = load_manifest_or_throw(data_dir);
  const data::Modality modality =
      modality_name == "visual" ? data::Modality::visual : data::Modality::tactile;
  auto art = train::pretrain_classifier(modality, manifest, epochs, seed);
  std::string path = out_path.empty() ? default_classifier_path(data_dir, modality) : out_path;
  train::save_classifier(art, path);
  std::cout << "classifier " << path << "\n"
            << "val_accuracy " << art.val_accuracy << "\n"
            << "test_accuracy " << art.test_accuracy << "\n";
  return kOk;
}

train::TrainConfig make_train_config(const std::string& direction, const std::string& variant,
                                     int steps, int batch, std::uint64_t seed, double alpha,
                                     double beta, int base_channels, int critic_channels) {
  train::TrainConfig cfg;
  cfg.direction = train::direction_from_string(direction);
  cfg.variant = train::variant_from_string(variant);
  cfg.apply_direction_defaults();
  if (alpha >= 0) cfg.loss.alpha = alpha;
  if (beta >= 0) cfg.loss.beta = beta;
  cfg.steps = steps;
  cfg.batch_size = batch;
  cfg.seed = seed;
  if (base_channels > 0) cfg.base_channels = base_channels;
  if (critic_channels > 0) cfg.critic_base_channels = critic_channels;
  return cfg;
}

int run_train(const std::string& data_dir, const train::TrainConfig& cfg,
              const std::string& classifier_path, const std::string& run_dir, bool overwrite,
              bool resume, bool plots) {
  auto manifest = load_manifest_or_throw(data_dir);
  std::string cls_path = classifier_path;
  if (cls_path.empty())
    cls_path = default_classifier_path(
        data_dir, cfg.direction == train::Direction::t2v ? data::Modality::tactile
                                                         : data::Modality::visual);
  auto classifier = load_classifier_or_throw(cls_path, "run pretrain-classifier first");
  auto artifacts = train::train_gan(cfg, manifest, classifier, run_dir, overwrite, resume);
  if (plots && !artifacts.log.empty()) {
    std::vector<double> totals;
    for (const auto& r : artifacts.log) totals.push_back(r.l_total);
    train::write_loss_curve_pgm((fs::path(run_dir) / "loss_curve.pgm").string(), totals);
  }
  std::cout << "run " << artifacts.run_dir << "\n"
            << "steps " << artifacts.steps_done << "\n"
            << "generator_checkpoint " << artifacts.final_generator_checkpoint << "\n";
  return kOk;
}

int run_generate(const std::string& run_dir, const std::string& input_path,
                 const std::string& output_path, bool invert_to_signal, int gl_iters,
                 std::uint64_t seed) {
  Array input = load_array(input_path);
  auto out = train::generate_from_run(run_dir, input);
  save_array(out.payload, output_path);
  std::cout << "output " << output_path << "\n"
            << "max_softmax " << out.max_softmax << "\n";
  if (out.out_of_distribution)
    std::cout << "warning: input looks out-of-distribution for this run's classifier\n";
  if (invert_to_signal) {
    auto spec = signal::spectrogram_from_array(out.payload, signal::SpecScale::log);
    auto amp = signal::unlog_scale(spec);
    // Desk runs use the 126/64 analysis window, so a 64-row payload is a
    // full-height spectrogram; anything larger follows the 512/128 geometry.
    signal::StftConfig stft;
    if (amp.n_bins <= 64) stft = signal::StftConfig{126, 64};
    auto gl = signal::invert_spectrogram(amp, stft, gl_iters, seed);
    const fs::path sig_path = fs::path(output_path).replace_extension(".signal.xmdg");
    save_array(signal::trace_to_array(gl.trace), sig_path.string());
    std::cout << "signal " << sig_path.string() << "\n"
              << "gl_consistency " << gl.consistency.back() << "\n";
  }
  return kOk;
}

int run_invert(const std::string& input_path, const std::string& output_path, int gl_iters,
               std::uint64_t seed, bool log_scaled) {
  Array input = load_array(input_path);
  auto spec = signal::spectrogram_from_array(
      input, log_scaled ? signal::SpecScale::log : signal::SpecScale::amplitude);
  if (log_scaled) spec = signal::unlog_scale(spec);
  signal::StftConfig stft;
  if (spec.n_bins <= 64) stft = signal::StftConfig{126, 64};
  auto gl = signal::invert_spectrogram(spec, stft, gl_iters, seed);
  save_array(signal::trace_to_array(gl.trace), output_path);
  std::cout << "output " << output_path << "\n"
            << "samples " << gl.trace.samples.size() << "\n"
            << "gl_consistency " << gl.consistency.back() << "\n";
  return kOk;
}

std::vector<double> load_sequence(const std::string& path) {
  Array a = load_array(path);
  return std::vector<double>(a.data.begin(), a.data.end());
}

int run_evaluate(const std::string& metric, const std::string& data_dir,
                 const std::string& run_dir, const std::string& classifier_path,
                 const std::string& file_a, const std::string& file_b,
                 const std::vector<std::string>& inputs) {
  if (metric == "dtw") {
    if (file_a.empty() || file_b.empty())
      throw std::invalid_argument("--metric dtw requires --a and --b signal files");
    std::cout << "dtw " << eval::dtw_distance(load_sequence(file_a), load_sequence(file_b))
              << "\n";
    return kOk;
  }
  if (metric == "icv") {
    if (inputs.size() < 2)
      throw std::invalid_argument("--metric icv requires at least two --input files");
    std::vector<std::vector<double>> samples;
    for (const auto& p : inputs) samples.push_back(load_sequence(p));
    std::cout << "intra_class_variance " << eval::intra_class_variance(samples) << "\n";
    return kOk;
  }

  // accuracy / fid: evaluate a trained run on the test split with the
  // target-modality classifier.
  auto manifest = load_manifest_or_throw(data_dir);
  std::string cls_path = classifier_path;
  if (cls_path.empty()) {
    const auto meta = models::peek_checkpoint_meta(
        (fs::path(run_dir) / "checkpoints" / "latest_g.ckpt").string());
    std::string direction;
    for (const auto& [k, v] : meta.extra)
      if (k == "direction") direction = v;
    cls_path = default_classifier_path(
        data_dir, direction == "t2v" ? data::Modality::visual : data::Modality::tactile);
  }
  auto classifier =
      load_classifier_or_throw(cls_path, "pretrain a classifier for the generated modality");
  auto result = train::evaluate_run(run_dir, manifest, classifier);
  std::vector<std::string> names;
  for (const auto& c : manifest.classes) names.push_back(c.name);
  if (metric == "fid") {
    std::cout << "fid " << result.report.fid << "\n"
              << "noise_baseline_fid " << result.noise_baseline_fid << "\n";
  } else {
    std::cout << eval::report_to_text(result.report, names) << "noise_baseline_fid "
              << result.noise_baseline_fid << "\n";
  }
  return kOk;
}

int run_ablate(const std::string& data_dir, const std::string& directions,
               const std::string& variants, int steps, int batch, std::uint64_t seed,
               const std::string& out_dir, const std::string& csv_name) {
  auto manifest = load_manifest_or_throw(data_dir);
  std::vector<std::string> dirs;
  if (directions == "both") {
    dirs = {"t2v", "v2t"};
  } else {
    dirs = {directions};
  }
  std::vector<std::string> vars;
  for (std::stringstream ss(variants); ss.good();) {
    std::string v;
    std::getline(ss, v, ',');
    if (!v.empty()) vars.push_back(v);
  }
  if (vars.empty()) throw std::invalid_argument("no variants listed");

  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / csv_name).string();
  std::ofstream csv(csv_path);
  if (!csv) throw io_error("cannot write " + csv_path);
  csv << "variant,direction,accuracy,fid\n";

  for (const auto& direction : dirs) {
    const bool t2v = direction == "t2v";
    auto source_cls = load_classifier_or_throw(
        default_classifier_path(data_dir,
                                t2v ? data::Modality::tactile : data::Modality::visual),
        "pretrain classifiers for both modalities first");
    auto target_cls = load_classifier_or_throw(
        default_classifier_path(data_dir,
                                t2v ? data::Modality::visual : data::Modality::tactile),
        "pretrain classifiers for both modalities first");
    for (const auto& variant : vars) {
      auto cfg = make_train_config(direction, variant, steps, batch, seed, -1, -1, 0, 0);
      const std::string run_dir = (fs::path(out_dir) / (variant + "_" + direction)).string();
      train::train_gan(cfg, manifest, source_cls, run_dir, /*overwrite=*/true);
      auto result = train::evaluate_run(run_dir, manifest, target_cls);
      csv << variant << "," << direction << "," << result.report.accuracy << ","
          << result.report.fid << "\n";
      csv.flush();
      std::cout << "variant " << variant << " " << direction << " accuracy "
                << result.report.accuracy << " fid " << result.report.fid << "\n";
    }
  }
  std::cout << "table " << csv_path << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-way texture/vibration cross-modal generation toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Structured-text config file; flags take precedence");

  std::string data_dir = data_dir_default();
  app.add_option("--data-dir", data_dir,
                 "Dataset directory (default $XMDG_DATA_DIR or ./data)");

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "Build the weakly paired dataset");
  PrepareArgs pa;
  prep->add_option("--source", pa.source, "Corpus source")
      ->check(CLI::IsMember({"synthetic", "lmt"}));
  prep->add_option("--out", pa.out, "Output dataset directory (default: the data dir)");
  prep->add_option("--lmt-dir", pa.lmt_dir, "Recording corpus directory for --source lmt");
  prep->add_option("--classes", pa.classes, "Synthetic corpus: class count")
      ->check(CLI::PositiveNumber);
  prep->add_option("--originals", pa.originals, "Synthetic corpus: originals per class")
      ->check(CLI::PositiveNumber);
  prep->add_option("--reps", pa.reps, "Augmented copies per original")
      ->check(CLI::PositiveNumber);
  prep->add_option("--image-size", pa.image_size, "Square payload size")
      ->check(CLI::PositiveNumber);
  prep->add_option("--seed", pa.seed, "Pipeline seed");
  prep->add_flag("--full-scale", pa.full_scale,
                 "Full-scale pipeline settings (256 px, 512/128 analysis)");

  // pretrain-classifier
  auto* pre = app.add_subcommand("pretrain-classifier",
                                 "Train the frozen label-feature classifier");
  std::string pre_modality = "tactile", pre_out, pre_data;
  int pre_epochs = 10;
  std::uint64_t pre_seed = 0;
  pre->add_option("--modality", pre_modality, "visual or tactile")
      ->check(CLI::IsMember({"visual", "tactile"}));
  pre->add_option("--data", pre_data, "Dataset directory");
  pre->add_option("--epochs", pre_epochs, "Training epochs")->check(CLI::PositiveNumber);
  pre->add_option("--seed", pre_seed, "Training seed");
  pre->add_option("--out", pre_out, "Checkpoint path");

  // train
  auto* tr = app.add_subcommand("train", "Train a generation model");
  std::string tr_direction = "t2v", tr_variant = "E", tr_run = "runs/run", tr_classifier,
              tr_data;
  int tr_steps = 2000, tr_batch = 8, tr_base = 0, tr_critic_base = 0;
  std::uint64_t tr_seed = 0;
  double tr_alpha = -1, tr_beta = -1;
  bool tr_overwrite = false, tr_resume = false, tr_plots = false;
  tr->add_option("--direction", tr_direction, "t2v (spectrogram->texture) or v2t")
      ->check(CLI::IsMember({"t2v", "v2t"}));
  tr->add_option("--variant", tr_variant, "Model variant A..E (E = full model)")
      ->check(CLI::IsMember({"A", "B", "C", "D", "E"}));
  tr->add_option("--data", tr_data, "Dataset directory");
  tr->add_option("--steps", tr_steps, "Generator steps")->check(CLI::NonNegativeNumber);
  tr->add_option("--batch", tr_batch, "Batch size")->check(CLI::PositiveNumber);
  tr->add_option("--seed", tr_seed, "Training seed");
  tr->add_option("--alpha", tr_alpha, "Feature-matching weight override");
  tr->add_option("--beta", tr_beta, "Perceptual weight override");
  tr->add_option("--base-channels", tr_base, "Generator base channel width");
  tr->add_option("--critic-channels", tr_critic_base, "Critic base channel width");
  tr->add_option("--out,--run-dir", tr_run, "Run directory");
  tr->add_option("--classifier", tr_classifier, "Classifier checkpoint path");
  tr->add_flag("--overwrite", tr_overwrite, "Replace an existing run directory");
  tr->add_flag("--resume", tr_resume, "Resume from the latest checkpoint");
  tr->add_flag("--plots", tr_plots, "Render a loss-curve image");

  // generate
  auto* gen = app.add_subcommand("generate", "Run a trained model on one input payload");
  std::string gen_run = "runs/run", gen_in, gen_out = "generated.xmdg";
  bool gen_invert = false;
  int gen_gl_iters = 60;
  std::uint64_t gen_seed = 0;
  gen->add_option("--ckpt,--run-dir", gen_run, "Run directory");
  gen->add_option("--input", gen_in, "Input array container")->required();
  gen->add_option("--out,--output", gen_out, "Output array container");
  gen->add_flag("--invert-to-signal", gen_invert,
                "Phase-reconstruct a generated spectrogram into an acceleration signal");
  gen->add_option("--gl-iters", gen_gl_iters, "Phase reconstruction iterations")
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Phase init seed");

  // invert
  auto* inv = app.add_subcommand("invert", "Phase-reconstruct a spectrogram container");
  std::string inv_in, inv_out = "inverted.xmdg";
  int inv_iters = 100;
  std::uint64_t inv_seed = 0;
  bool inv_log = false;
  inv->add_option("--spec,--input", inv_in, "Spectrogram container")->required();
  inv->add_option("--out,--output", inv_out, "Signal container");
  inv->add_option("--iters,--gl-iters", inv_iters, "Iterations")->check(CLI::PositiveNumber);
  inv->add_option("--seed", inv_seed, "Phase init seed");
  inv->add_flag("--log-scaled", inv_log, "Input is log-scaled (undo before inversion)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluation metrics");
  std::string ev_metric = "accuracy", ev_run = "runs/run", ev_classifier, ev_a, ev_b, ev_data;
  std::vector<std::string> ev_inputs;
  ev->add_option("--metric", ev_metric, "accuracy | fid | dtw | icv")
      ->check(CLI::IsMember({"accuracy", "fid", "dtw", "icv"}));
  ev->add_option("--data", ev_data, "Dataset directory");
  ev->add_option("--ckpt,--run-dir", ev_run, "Run directory (accuracy/fid)");
  ev->add_option("--classifier", ev_classifier,
                 "Classifier checkpoint for the generated modality");
  ev->add_option("--a", ev_a, "First signal file (dtw)");
  ev->add_option("--b", ev_b, "Second signal file (dtw)");
  ev->add_option("--input", ev_inputs, "Sample files (icv; repeatable)");

  // ablate
  auto* ab = app.add_subcommand("ablate",
                                "Train and evaluate the model-variant matrix");
  std::string ab_directions = "both", ab_variants = "A,B,C,D,E", ab_out = "runs/ablation",
              ab_csv = "ablation.csv", ab_data;
  int ab_steps = 200, ab_batch = 8;
  std::uint64_t ab_seed = 0;
  ab->add_option("--directions", ab_directions, "both | t2v | v2t")
      ->check(CLI::IsMember({"both", "t2v", "v2t"}));
  ab->add_option("--variants", ab_variants, "Comma-separated variant list");
  ab->add_option("--data", ab_data, "Dataset directory");
  ab->add_option("--steps", ab_steps, "Generator steps per variant")
      ->check(CLI::NonNegativeNumber);
  ab->add_option("--batch", ab_batch, "Batch size")->check(CLI::PositiveNumber);
  ab->add_option("--seed", ab_seed, "Training seed");
  ab->add_option("--out,--out-dir", ab_out, "Parent directory for the variant runs");
  ab->add_option("--csv", ab_csv, "Summary table file name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (prep->parsed()) {
      if (pa.out.empty()) pa.out = data_dir;
      return run_prepare(pa);
    }
    if (pre->parsed())
      return run_pretrain(pre_data.empty() ? data_dir : pre_data, pre_modality, pre_epochs,
                          pre_seed, pre_out);
    if (tr->parsed()) {
      auto cfg = make_train_config(tr_direction, tr_variant, tr_steps, tr_batch, tr_seed,
                                   tr_alpha, tr_beta, tr_base, tr_critic_base);
      return run_train(tr_data.empty() ? data_dir : tr_data, cfg, tr_classifier, tr_run,
                       tr_overwrite, tr_resume, tr_plots);
    }
    if (gen->parsed())
      return run_generate(gen_run, gen_in, gen_out, gen_invert, gen_gl_iters, gen_seed);
    if (inv->parsed()) return run_invert(inv_in, inv_out, inv_iters, inv_seed, inv_log);
    if (ev->parsed())
      return run_evaluate(ev_metric, ev_data.empty() ? data_dir : ev_data, ev_run,
                          ev_classifier, ev_a, ev_b, ev_inputs);
    if (ab->parsed())
      return run_ablate(ab_data.empty() ? data_dir : ab_data, ab_directions, ab_variants,
                        ab_steps, ab_batch, ab_seed, ab_out, ab_csv);
  } catch (const signal::precondition_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const signal::validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const data::import_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const train::training_fault& e) {
    std::cerr << "fault: " << e.what() << "\n";
    if (!e.last_good_checkpoint.empty())
      std::cerr << "last good checkpoint: " << e.last_good_checkpoint << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
