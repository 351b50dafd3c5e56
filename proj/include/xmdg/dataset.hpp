#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xmdg/image.hpp"
#include "xmdg/signal.hpp"

namespace xmdg::data {

struct import_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Modality { visual, tactile };

struct MaterialClass {
  int id = 0;
  std::string name;
};

struct SampleRecord {
  Modality modality = Modality::visual;
  int class_id = 0;
  int source_id = 0;               // index of the original within its class
  std::uint64_t augment_seed = 0;  // 0 for raw originals
  std::string payload_path;
};

// Raw originals for one modality, grouped by class id.
struct Pool {
  std::vector<MaterialClass> classes;
  std::vector<SampleRecord> records;

  std::vector<const SampleRecord*> class_records(int class_id) const;
};

struct WeaklyPairedSample {
  SampleRecord visual;
  SampleRecord tactile;
  int class_id = 0;
};

enum class Split { train, val, test };

struct NormStats {
  double lo = -1.0;
  double hi = 1.0;
};

struct DatasetManifest {
  std::vector<MaterialClass> classes;
  std::vector<WeaklyPairedSample> pairs;
  std::vector<Split> split;  // parallel to pairs
  NormStats visual_stats;
  NormStats tactile_stats;
  int image_size = 64;
  signal::StftConfig stft;
  std::uint64_t seed = 0;
  std::string root_dir;  // not serialized; set on load

  std::vector<std::size_t> split_indices(Split s) const;
};

// Within-class random pairing of `reps` augmented copies per original.
// Pair count = classes x originals x reps; augment seeds are fresh per copy.
std::vector<WeaklyPairedSample> build_weak_pairs(const Pool& visual_pool,
                                                 const Pool& tactile_pool, int reps,
                                                 std::uint64_t seed);

// Per-class stratified split with largest-remainder rounding.
DatasetManifest split_manifest(const std::vector<MaterialClass>& classes,
                               std::vector<WeaklyPairedSample> pairs,
                               std::array<int, 3> ratios, std::uint64_t seed);

// Procedural desk-scale corpus: class-keyed stripe textures and band-limited
// noise traces (10 kHz, 4.8 s) whose dominant band tracks the stripe frequency.
// Originals are written under out_dir/originals/.
std::pair<Pool, Pool> synth_corpus(int n_classes, int originals_per_class, int desk_size,
                                   std::uint64_t seed, const std::string& out_dir);

// Per-class visual stripe frequency (cycles per image) and tactile band [lo, hi) in Hz.
double synth_visual_frequency(int class_id, int n_classes);
std::pair<double, double> synth_tactile_band(int class_id, int n_classes);

// Directory layout: <dir>/<class-name>/{visual,tactile}/ with array containers
// (traces may also be plain text, one sample per line, 10 kHz assumed).
std::pair<Pool, Pool> import_lmt(const std::string& dir);

struct PrepareConfig {
  int reps = 25;
  std::array<int, 3> ratios{8, 1, 1};
  std::uint64_t seed = 0;
  int image_size = 64;                   // square crop target for both modalities
  signal::StftConfig stft{126, 64};      // 64 bins for the desk scale
  double trim_drop_seconds = 1.0;
  double trim_keep_seconds = 3.8;
  signal::AugmentLimits augment_limits;
};

PrepareConfig full_scale_prepare_config();

// Runs the full preparation pipeline: weak pairing, materialized augmented
// payloads, stratified split, and train-split normalization stats.
DatasetManifest prepare_dataset(const Pool& visual_pool, const Pool& tactile_pool,
                                const PrepareConfig& cfg, const std::string& out_dir);

std::string manifest_to_text(const DatasetManifest& m);
DatasetManifest manifest_from_text(const std::string& text);
void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

std::string manifest_digest(const DatasetManifest& m);

}  // namespace xmdg::data
