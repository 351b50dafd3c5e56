#include "xmdg/dataset.hpp"

#include <fftw3.h>

#include "xmdg/digest.hpp"
#include "xmdg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

namespace fs = std::filesystem;

namespace xmdg::data {

namespace {

void require_same_classes(const Pool& a, const Pool& b) {
  if (a.classes.size() != b.classes.size())
    throw std::invalid_argument("visual and tactile pools cover different class sets");
  for (std::size_t i = 0; i < a.classes.size(); ++i)
    if (a.classes[i].id != b.classes[i].id)
      throw std::invalid_argument("visual and tactile pools cover different class sets");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw import_error("unknown split label: " + s);
}

}  // namespace

std::vector<const SampleRecord*> Pool::class_records(int class_id) const {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records)
    if (r.class_id == class_id) out.push_back(&r);
  return out;
}

std::vector<std::size_t> DatasetManifest::split_indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

std::vector<WeaklyPairedSample> build_weak_pairs(const Pool& visual_pool,
                                                 const Pool& tactile_pool, int reps,
                                                 std::uint64_t seed) {
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");
  require_same_classes(visual_pool, tactile_pool);

  std::vector<WeaklyPairedSample> pairs;
  for (const auto& cls : visual_pool.classes) {
    const auto visuals = visual_pool.class_records(cls.id);
    const auto tactiles = tactile_pool.class_records(cls.id);
    if (visuals.empty() || tactiles.empty())
      throw std::invalid_argument("class " + cls.name + " lacks originals in one modality");

    std::vector<SampleRecord> v_items, t_items;
    for (std::size_t o = 0; o < visuals.size(); ++o)
      for (int r = 0; r < reps; ++r) {
        SampleRecord rec = *visuals[o];
        rec.augment_seed = mix_seed(seed, cls.id, 0, o, r);
        v_items.push_back(rec);
      }
    for (std::size_t o = 0; o < tactiles.size(); ++o)
      for (int r = 0; r < reps; ++r) {
        SampleRecord rec = *tactiles[o];
        rec.augment_seed = mix_seed(seed, cls.id, 1, o, r);
        t_items.push_back(rec);
      }

    std::mt19937_64 rng(mix_seed(seed, cls.id, 2, 0));
    std::shuffle(t_items.begin(), t_items.end(), rng);
    for (std::size_t i = 0; i < v_items.size(); ++i) {
      WeaklyPairedSample p;
      p.visual = v_items[i];
      p.tactile = t_items.size() == v_items.size()
                      ? t_items[i]
                      : t_items[std::uniform_int_distribution<std::size_t>(
                            0, t_items.size() - 1)(rng)];
      p.class_id = cls.id;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

DatasetManifest split_manifest(const std::vector<MaterialClass>& classes,
                               std::vector<WeaklyPairedSample> pairs,
                               std::array<int, 3> ratios, std::uint64_t seed) {
  const int ratio_sum = ratios[0] + ratios[1] + ratios[2];
  if (ratio_sum <= 0 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
    throw std::invalid_argument("split ratios must be non-negative with a positive sum");

  DatasetManifest m;
  m.classes = classes;
  m.pairs = std::move(pairs);
  m.split.assign(m.pairs.size(), Split::train);
  m.seed = seed;

  for (const auto& cls : classes) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m.pairs.size(); ++i)
      if (m.pairs[i].class_id == cls.id) idx.push_back(i);
    if (idx.empty()) throw std::invalid_argument("class " + cls.name + " has no pairs");

    std::mt19937_64 rng(mix_seed(seed, cls.id, 3, 0));
    std::shuffle(idx.begin(), idx.end(), rng);

    // Largest-remainder apportionment of idx.size() over the three splits.
    const double n = static_cast<double>(idx.size());
    std::array<std::size_t, 3> count;
    std::array<double, 3> frac;
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = n * ratios[s] / ratio_sum;
      count[s] = static_cast<std::size_t>(std::floor(exact));
      frac[s] = exact - std::floor(exact);
      assigned += count[s];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < idx.size(); ++k, ++assigned) ++count[order[k % 3]];

    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < count[s]; ++k) m.split[idx[pos++]] = static_cast<Split>(s);
  }
  return m;
}

double synth_visual_frequency(int class_id, int n_classes) {
  if (n_classes < 2) return 20.0;
  return 4.0 + 40.0 * class_id / (n_classes - 1);  // cycles per image
}

std::pair<double, double> synth_tactile_band(int class_id, int n_classes) {
  const double span = 4200.0;
  const double width = std::min(300.0, span / n_classes * 0.5);
  const double center = n_classes < 2 ? 2500.0 : 400.0 + span * class_id / (n_classes - 1) + width;
  return {center - width / 2, center + width / 2};
}

namespace {

signal::TextureImage synth_texture(int size, double freq, double theta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double phase = uni(rng) * 2.0 * std::numbers::pi;
  std::normal_distribution<double> noise(0.0, 0.03);

  signal::TextureImage img(size, size, signal::ImageScale::unit);
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double u = (c * ct + r * st) / size;
      double v = 0.5 + 0.35 * std::sin(2.0 * std::numbers::pi * freq * u + phase) + noise(rng);
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  return img;
}

signal::AccelerationTrace synth_trace(double f_lo, double f_hi, std::uint64_t seed) {
  const int rate = 10000;
  const int n = rate * 48 / 10;  // 4.8 s
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // White noise band-limited by zeroing spectrum outside [f_lo, f_hi).
  std::vector<double> x(n);
  for (auto& v : x) v = gauss(rng);
  std::vector<std::complex<double>> spec(n / 2 + 1);
  fftw_plan fwd = fftw_plan_dft_r2c_1d(n, x.data(), reinterpret_cast<fftw_complex*>(spec.data()),
                                       FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);
  const int k_lo = static_cast<int>(std::ceil(f_lo * n / rate));
  const int k_hi = static_cast<int>(std::floor(f_hi * n / rate));
  for (int k = 0; k < static_cast<int>(spec.size()); ++k)
    if (k < k_lo || k > k_hi) spec[k] = 0.0;
  fftw_plan bwd = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(spec.data()), x.data(),
                                       FFTW_ESTIMATE);
  fftw_execute(bwd);
  fftw_destroy_plan(bwd);

  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / n);
  signal::AccelerationTrace t;
  t.sample_rate_hz = rate;
  t.samples.resize(n);
  for (int i = 0; i < n; ++i) t.samples[i] = x[i] / (rms > 0 ? rms : 1.0);
  return t;
}

}  // namespace

std::pair<Pool, Pool> synth_corpus(int n_classes, int originals_per_class, int desk_size,
                                   std::uint64_t seed, const std::string& out_dir) {
  if (n_classes < 2) throw std::invalid_argument("synth_corpus needs at least 2 classes");
  if (originals_per_class < 1) throw std::invalid_argument("originals_per_class must be >= 1");
  if (desk_size < 16) throw std::invalid_argument("desk_size must be >= 16");

  const int image_size = desk_size + 32;  // slack for the random crop
  Pool visual, tactile;
  for (int c = 0; c < n_classes; ++c) {
    MaterialClass cls{c, "S" + std::to_string(c)};
    visual.classes.push_back(cls);
    tactile.classes.push_back(cls);

    const fs::path vdir = fs::path(out_dir) / "originals" / "visual" / cls.name;
    const fs::path tdir = fs::path(out_dir) / "originals" / "tactile" / cls.name;
    fs::create_directories(vdir);
    fs::create_directories(tdir);

    const double freq = synth_visual_frequency(c, n_classes);
    // Stripe orientation is class-keyed too, so the cross-modal coupling is a
    // learnable (near-deterministic) map instead of a one-to-many relation.
    const double theta = std::numbers::pi * (0.1 + 0.8 * c / n_classes);
    const auto [f_lo, f_hi] = synth_tactile_band(c, n_classes);
    for (int o = 0; o < originals_per_class; ++o) {
      const auto img = synth_texture(image_size, freq, theta, mix_seed(seed, c, 10, o));
      const auto vpath = (vdir / ("orig_" + std::to_string(o) + ".xmdg")).string();
      save_array(signal::image_to_array(img), vpath);
      visual.records.push_back({Modality::visual, c, o, 0, vpath});

      const auto trace = synth_trace(f_lo, f_hi, mix_seed(seed, c, 11, o));
      const auto tpath = (tdir / ("orig_" + std::to_string(o) + ".xmdg")).string();
      save_array(signal::trace_to_array(trace), tpath);
      tactile.records.push_back({Modality::tactile, c, o, 0, tpath});
    }
  }
  return {visual, tactile};
}

std::pair<Pool, Pool> import_lmt(const std::string& dir) {
  if (!fs::is_directory(dir)) throw import_error("not a directory: " + dir);
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw import_error("no class directories under " + dir);

  auto sorted_files = [](const fs::path& p) {
    std::vector<fs::path> files;
    if (!fs::is_directory(p)) throw import_error("missing directory: " + p.string());
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
  };

  Pool visual, tactile;
  int class_id = 0;
  for (const auto& cdir : class_dirs) {
    MaterialClass cls{class_id, cdir.filename().string()};
    visual.classes.push_back(cls);
    tactile.classes.push_back(cls);

    int source = 0;
    for (const auto& f : sorted_files(cdir / "visual")) {
      Array a;
      try {
        a = load_array(f.string());
      } catch (const io_error& e) {
        throw import_error("unreadable image " + f.string() + ": " + e.what());
      }
      if (a.rank() != 2) throw import_error("image is not rank 2: " + f.string());
      visual.records.push_back({Modality::visual, class_id, source++, 0, f.string()});
    }

    source = 0;
    for (const auto& f : sorted_files(cdir / "tactile")) {
      signal::AccelerationTrace trace;
      if (f.extension() == ".txt") {
        std::ifstream in(f);
        if (!in) throw import_error("unreadable trace " + f.string());
        std::string line;
        trace.sample_rate_hz = 10000;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          if (line[0] == '#') {
            const auto pos = line.find("sample_rate_hz:");
            if (pos != std::string::npos)
              trace.sample_rate_hz = std::stoi(line.substr(pos + 15));
            continue;
          }
          trace.samples.push_back(std::stod(line));
        }
      } else {
        Array a;
        try {
          a = load_array(f.string());
        } catch (const io_error& e) {
          throw import_error("unreadable trace " + f.string() + ": " + e.what());
        }
        if (a.rank() != 1) throw import_error("trace is not rank 1: " + f.string());
        trace = signal::trace_from_array(a);
      }
      if (trace.sample_rate_hz != 10000)
        throw import_error("trace is not 10 kHz: " + f.string());
      if (trace.samples.size() < 48000)
        throw import_error("trace shorter than 4.8 s: " + f.string());
      tactile.records.push_back({Modality::tactile, class_id, source++, 0, f.string()});
    }
    ++class_id;
  }
  return {visual, tactile};
}

PrepareConfig full_scale_prepare_config() {
  PrepareConfig cfg;
  cfg.reps = 100;
  cfg.image_size = 256;
  cfg.stft = signal::StftConfig{512, 128};
  return cfg;
}

DatasetManifest prepare_dataset(const Pool& visual_pool, const Pool& tactile_pool,
                                const PrepareConfig& cfg, const std::string& out_dir) {
  auto pairs = build_weak_pairs(visual_pool, tactile_pool, cfg.reps, cfg.seed);
  DatasetManifest m = split_manifest(visual_pool.classes, std::move(pairs), cfg.ratios, cfg.seed);
  m.image_size = cfg.image_size;
  m.stft = cfg.stft;
  m.root_dir = out_dir;

  const fs::path vdir = fs::path(out_dir) / "payloads" / "visual";
  const fs::path tdir = fs::path(out_dir) / "payloads" / "tactile";
  fs::create_directories(vdir);
  fs::create_directories(tdir);

  // Originals are shared across reps; cache their loaded/derived forms.
  std::unordered_map<std::string, signal::TextureImage> image_cache;
  std::unordered_map<std::string, signal::Spectrogram> spec_cache;

  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    auto& pair = m.pairs[i];

    auto img_it = image_cache.find(pair.visual.payload_path);
    if (img_it == image_cache.end()) {
      auto img = signal::image_from_array(load_array(pair.visual.payload_path),
                                          signal::ImageScale::unit);
      img_it = image_cache.emplace(pair.visual.payload_path, std::move(img)).first;
    }
    const auto params = signal::draw_augment_params(img_it->second.height, img_it->second.width,
                                                    cfg.image_size, pair.visual.augment_seed,
                                                    cfg.augment_limits);
    const auto augmented = signal::augment_image(img_it->second, params);
    const auto vpath = (vdir / ("p" + std::to_string(i) + ".xmdg")).string();
    save_array(signal::image_to_array(augmented), vpath);
    pair.visual.payload_path = fs::relative(vpath, out_dir).string();

    auto spec_it = spec_cache.find(pair.tactile.payload_path);
    if (spec_it == spec_cache.end()) {
      auto trace = signal::trace_from_array(load_array(pair.tactile.payload_path));
      trace = signal::trim_and_crop(trace, cfg.trim_drop_seconds, cfg.trim_keep_seconds);
      auto spec = signal::log_scale(signal::compute_spectrogram(trace, cfg.stft));
      spec_it = spec_cache.emplace(pair.tactile.payload_path, std::move(spec)).first;
    }
    const auto cropped =
        signal::crop_time(spec_it->second, cfg.image_size, splitmix64(pair.tactile.augment_seed));
    const auto tpath = (tdir / ("p" + std::to_string(i) + ".xmdg")).string();
    save_array(signal::spectrogram_to_array(cropped), tpath);
    pair.tactile.payload_path = fs::relative(tpath, out_dir).string();
  }

  // Normalization stats come from the training split only.
  auto scan = [&](Modality mod) {
    NormStats stats{std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity()};
    for (std::size_t i : m.split_indices(Split::train)) {
      const auto& rec = mod == Modality::visual ? m.pairs[i].visual : m.pairs[i].tactile;
      const Array a = load_array((fs::path(out_dir) / rec.payload_path).string());
      for (float v : a.data) {
        stats.lo = std::min(stats.lo, static_cast<double>(v));
        stats.hi = std::max(stats.hi, static_cast<double>(v));
      }
    }
    if (!(stats.hi > stats.lo)) stats = NormStats{0.0, 1.0};
    return stats;
  };
  m.visual_stats = scan(Modality::visual);
  m.tactile_stats = scan(Modality::tactile);

  save_manifest(m, (fs::path(out_dir) / "manifest.txt").string());
  return m;
}

namespace {

std::string manifest_body(const DatasetManifest& m) {
  std::ostringstream out;
  out << "xmdg-manifest 1\n";
  out << "seed " << m.seed << "\n";
  out << "image_size " << m.image_size << "\n";
  out << "stft " << m.stft.window_len << " " << m.stft.hop << "\n";
  out << "visual_stats " << fmt_double(m.visual_stats.lo) << " " << fmt_double(m.visual_stats.hi)
      << "\n";
  out << "tactile_stats " << fmt_double(m.tactile_stats.lo) << " "
      << fmt_double(m.tactile_stats.hi) << "\n";
  out << "classes " << m.classes.size() << "\n";
  for (const auto& c : m.classes) out << "class " << c.id << " " << c.name << "\n";
  out << "pairs " << m.pairs.size() << "\n";
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    const auto& p = m.pairs[i];
    out << "pair " << p.class_id << " " << p.visual.source_id << " " << p.visual.augment_seed
        << " " << (p.visual.payload_path.empty() ? "-" : p.visual.payload_path) << " "
        << p.tactile.source_id << " " << p.tactile.augment_seed << " "
        << (p.tactile.payload_path.empty() ? "-" : p.tactile.payload_path) << " "
        << split_name(m.split[i]) << "\n";
  }
  return out.str();
}

}  // namespace

std::string manifest_digest(const DatasetManifest& m) {
  const std::string body = manifest_body(m);
  return sha256_hex(body.data(), body.size());
}

std::string manifest_to_text(const DatasetManifest& m) {
  const std::string body = manifest_body(m);
  std::string::size_type first_eol = body.find('\n');
  return body.substr(0, first_eol + 1) + "digest " + sha256_hex(body.data(), body.size()) + "\n" +
         body.substr(first_eol + 1);
}

DatasetManifest manifest_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  DatasetManifest m;
  std::string stored_digest;
  std::size_t n_classes = 0, n_pairs = 0;

  auto next = [&](const char* expect) {
    if (!std::getline(in, line)) throw import_error(std::string("manifest truncated before ") + expect);
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != expect) throw import_error("manifest: expected '" + std::string(expect) + "', got '" + key + "'");
    return ls;
  };

  {
    auto ls = next("xmdg-manifest");
    int version = 0;
    ls >> version;
    if (version != 1) throw import_error("unsupported manifest version");
  }
  next("digest") >> stored_digest;
  next("seed") >> m.seed;
  next("image_size") >> m.image_size;
  {
    auto ls = next("stft");
    ls >> m.stft.window_len >> m.stft.hop;
  }
  {
    auto ls = next("visual_stats");
    ls >> m.visual_stats.lo >> m.visual_stats.hi;
  }
  {
    auto ls = next("tactile_stats");
    ls >> m.tactile_stats.lo >> m.tactile_stats.hi;
  }
  next("classes") >> n_classes;
  for (std::size_t i = 0; i < n_classes; ++i) {
    auto ls = next("class");
    MaterialClass c;
    ls >> c.id;
    std::getline(ls, c.name);
    if (!c.name.empty() && c.name.front() == ' ') c.name.erase(0, 1);
    m.classes.push_back(std::move(c));
  }
  next("pairs") >> n_pairs;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    auto ls = next("pair");
    WeaklyPairedSample p;
    std::string vpath, tpath, split;
    ls >> p.class_id >> p.visual.source_id >> p.visual.augment_seed >> vpath >>
        p.tactile.source_id >> p.tactile.augment_seed >> tpath >> split;
    p.visual.modality = Modality::visual;
    p.tactile.modality = Modality::tactile;
    p.visual.class_id = p.tactile.class_id = p.class_id;
    if (vpath != "-") p.visual.payload_path = vpath;
    if (tpath != "-") p.tactile.payload_path = tpath;
    m.pairs.push_back(std::move(p));
    m.split.push_back(split_from_name(split));
  }

  if (manifest_digest(m) != stored_digest)
    throw import_error("manifest digest mismatch (file edited or corrupted)");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write manifest: " + path);
  out << manifest_to_text(m);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read manifest: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  DatasetManifest m = manifest_from_text(buf.str());
  m.root_dir = fs::path(path).parent_path().string();
  return m;
}

}  // namespace xmdg::data
