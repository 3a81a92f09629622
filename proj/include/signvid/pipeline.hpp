#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <optional>

#include "signvid/config.hpp"
#include "signvid/metrics.hpp"

namespace signvid::pipeline {

// ---------------------------------------------------------------------------
// Checkpoint metadata. Each stage checkpoint carries the hash of the config
// prefix it depends on (corpus + stages up to its own), bit-cast into a
// scalar tensor, so cross-stage compatibility is checkable from the file
// alone and an upstream checkpoint stays valid when only downstream knobs
// change.
// ---------------------------------------------------------------------------

inline std::uint64_t stage_prefix_hash(const ExperimentConfig& cfg, int stage) {
  nlohmann::json full = to_json(cfg);
  nlohmann::json p;
  p["init"] = full["init"];
  p["corpus"] = full["corpus"];
  if (stage >= 1) p["stage1"] = full["stage1"];
  if (stage >= 2) p["stage2"] = full["stage2"];
  if (stage >= 3) p["stage3"] = full["stage3"];
  return fnv1a(p.dump());
}

inline void add_meta(NamedParams& params, const ExperimentConfig& cfg, int stage) {
  params.emplace_back("meta.config_hash",
                      Tensor::scalar(std::bit_cast<double>(stage_prefix_hash(cfg, stage))));
  params.emplace_back("meta.stage", Tensor::scalar(static_cast<double>(stage)));
}

inline std::uint64_t checkpoint_hash(const NamedParams& loaded) {
  return std::bit_cast<std::uint64_t>(find_tensor(loaded, "meta.config_hash").item());
}

inline void require_stage_hash(const NamedParams& loaded, const ExperimentConfig& cfg, int stage,
                               const std::string& what) {
  const std::uint64_t got = checkpoint_hash(loaded);
  const std::uint64_t want = stage_prefix_hash(cfg, stage);
  if (got != want)
    throw CompatError(what + ": config hash mismatch (checkpoint " + hex_u64(got) + ", config " +
                      hex_u64(want) + ")");
  const double stage_tag = find_tensor(loaded, "meta.stage").item();
  if (stage_tag != static_cast<double>(stage))
    throw CompatError(what + ": wrong stage tag in checkpoint");
}

/// The generated corpus must match the configuration in use.
inline void require_corpus_match(const corpus::Corpus& data, const ExperimentConfig& cfg) {
  if (corpus::params_to_json(data.params) != corpus::params_to_json(cfg.corpus))
    throw CompatError("corpus directory was generated with different parameters");
}

// ---------------------------------------------------------------------------
// Model construction / loading
// ---------------------------------------------------------------------------

inline diffusion::SignVideoDiffusion build_stage1(const ExperimentConfig& cfg) {
  Rng rng = Rng(cfg.stage1.seed).split(0x01);
  return diffusion::SignVideoDiffusion(cfg.stage1, cfg.cond_channels(), rng);
}

inline diffusion::SignVideoDiffusion load_stage1(const ExperimentConfig& cfg,
                                                 const std::filesystem::path& path) {
  diffusion::SignVideoDiffusion model = build_stage1(cfg);
  NamedParams loaded = load_checkpoint(path);
  require_stage_hash(loaded, cfg, 1, "stage1 checkpoint");
  assign_params(model.named_params(), loaded);
  return model;
}

/// Stage-II artifact: the frozen condition encoder plus the trained
/// compression/quantization autoencoder. Self-contained tokenizer.
struct TokenizerStack {
  diffusion::MultiConditionEncoder encoder;
  fsqae::FsqAutoencoder ae;

  TokenizerStack(const ExperimentConfig& cfg, Rng rng)
      : encoder(cfg.cond_channels(), cfg.stage1.ch1, cfg.stage1.d_embed, rng),
        ae(cfg.stage2, cfg.stage1.d_embed, cfg.embed_hw(), cfg.embed_hw(), rng) {}

  Tensor embeddings_for(const corpus::ConditionSequence& cond) const {
    return encoder.forward(corpus::conditions_tensor(cond));
  }

  quant::TokenGrid tokens_for(const corpus::ConditionSequence& cond) const {
    return ae.encode_tokens(embeddings_for(cond));
  }

  NamedParams named_params() const {
    NamedParams out = ae.named_params();
    encoder.params(out, "frozen_encoder");
    return out;
  }
};

inline TokenizerStack build_stage2(const ExperimentConfig& cfg) {
  return TokenizerStack(cfg, Rng(cfg.stage2.seed).split(0x02));
}

inline TokenizerStack load_stage2(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  TokenizerStack stack = build_stage2(cfg);
  NamedParams loaded = load_checkpoint(path);
  require_stage_hash(loaded, cfg, 2, "stage2 checkpoint");
  assign_params(stack.named_params(), loaded);
  return stack;
}

inline translator::Translator build_stage3(const ExperimentConfig& cfg) {
  Rng rng = Rng(cfg.stage3.seed).split(0x03);
  return translator::Translator(cfg.derived_stage3(), rng);
}

inline translator::Translator load_stage3(const ExperimentConfig& cfg,
                                          const std::filesystem::path& path) {
  translator::Translator model = build_stage3(cfg);
  NamedParams loaded = load_checkpoint(path);
  require_stage_hash(loaded, cfg, 3, "stage3 checkpoint");
  assign_params(model.named_params(), loaded);
  return model;
}

// ---------------------------------------------------------------------------
// Stage manifest
// ---------------------------------------------------------------------------

struct StageRecord {
  std::string name;
  std::string config_hash;
  std::string checkpoint;
  std::string metrics;
  double wall_time_s = 0.0;
  std::vector<std::string> deviations;
};

struct StageManifest {
  std::string config_hash;
  std::vector<StageRecord> stages;

  const StageRecord* find(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }
};

inline nlohmann::json manifest_to_json(const StageManifest& m) {
  nlohmann::json j;
  j["config_hash"] = m.config_hash;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : m.stages)
    j["stages"].push_back({{"name", s.name},
                           {"config_hash", s.config_hash},
                           {"checkpoint", s.checkpoint},
                           {"metrics", s.metrics},
                           {"wall_time_s", s.wall_time_s},
                           {"deviations", s.deviations}});
  return j;
}

inline void save_manifest(const StageManifest& m, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("manifest: cannot write " + path.string());
  f << manifest_to_json(m).dump(2) << "\n";
}

inline StageManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw StateError("manifest: missing " + path.string());
  nlohmann::json j;
  f >> j;
  StageManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& js : j.at("stages")) {
    StageRecord r;
    r.name = js.at("name").get<std::string>();
    r.config_hash = js.at("config_hash").get<std::string>();
    r.checkpoint = js.at("checkpoint").get<std::string>();
    r.metrics = js.at("metrics").get<std::string>();
    r.wall_time_s = js.at("wall_time_s").get<double>();
    r.deviations = js.at("deviations").get<std::vector<std::string>>();
    m.stages.push_back(std::move(r));
  }
  return m;
}

namespace detail {

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses,
                           const std::string& hash, std::uint64_t seed) {
  CsvWriter csv(path);
  csv.header({"step", "loss", "config_hash", "seed"});
  for (std::size_t i = 0; i < losses.size(); ++i)
    csv.row({std::to_string(i), CsvWriter::num(losses[i]), hash, std::to_string(seed)});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage runners
// ---------------------------------------------------------------------------

inline StageRecord run_gen_corpus(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  detail::StageTimer timer;
  corpus::Corpus data = corpus::build_corpus(cfg.corpus);
  corpus::save_corpus(data, out / "corpus");
  StageRecord rec;
  rec.name = "corpus";
  rec.config_hash = config_hash_hex(cfg);
  rec.checkpoint = "corpus";
  rec.wall_time_s = timer.seconds();
  return rec;
}

inline StageRecord run_stage1(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  detail::StageTimer timer;
  const auto corpus_dir = out / "corpus";
  corpus::Corpus data = corpus::load_corpus(corpus_dir);
  require_corpus_match(data, cfg);
  diffusion::SignVideoDiffusion model = build_stage1(cfg);
  if (cfg.stage1.video_ae == "tiny")
    diffusion::train_video_ae(model.video_ae, data, cfg.stage1.steps, cfg.stage1.lr,
                              cfg.stage1.seed ^ 0xaeaeull);
  diffusion::TrainResult res = diffusion::train_diffusion(model, data, cfg.stage1.steps, cfg.stage1.lr);
  NamedParams params = model.named_params();
  add_meta(params, cfg, 1);
  save_checkpoint(out / "stage1.svck", params);
  detail::write_loss_csv(out / "stage1_losses.csv", res.losses, config_hash_hex(cfg), cfg.stage1.seed);
  StageRecord rec;
  rec.name = "stage1";
  rec.config_hash = config_hash_hex(cfg);
  rec.checkpoint = "stage1.svck";
  rec.metrics = "stage1_losses.csv";
  rec.wall_time_s = timer.seconds();
  rec.deviations = {"toy-scale training budget: steps=" + std::to_string(cfg.stage1.steps) +
                    " lr=" + CsvWriter::num(cfg.stage1.lr),
                    "random weight init (uniform_fan_in); no pretrained weights"};
  return rec;
}

inline StageRecord run_stage2(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  detail::StageTimer timer;
  const auto stage1_path = out / "stage1.svck";
  if (!std::filesystem::exists(stage1_path))
    throw StateError("stage2 requires the stage1 checkpoint at " + stage1_path.string());
  corpus::Corpus data = corpus::load_corpus(out / "corpus");
  require_corpus_match(data, cfg);
  diffusion::SignVideoDiffusion stage1 = load_stage1(cfg, stage1_path);

  TokenizerStack stack = build_stage2(cfg);
  // freeze the stage-I condition encoder into the tokenizer artifact
  {
    NamedParams src, dst;
    stage1.cond_encoder.params(src, "frozen_encoder");
    stack.encoder.params(dst, "frozen_encoder");
    assign_params(dst, src);
  }
  std::vector<Tensor> embeddings;
  embeddings.reserve(data.samples.size());
  for (const corpus::Sample& s : data.samples) embeddings.push_back(stack.embeddings_for(s.conditions));
  fsqae::FsqTrainResult res = fsqae::train_fsqae(stack.ae, embeddings, cfg.stage2.steps, cfg.stage2.lr);

  NamedParams params = stack.named_params();
  add_meta(params, cfg, 2);
  save_checkpoint(out / "stage2.svck", params);
  detail::write_loss_csv(out / "stage2_losses.csv", res.recon_losses, config_hash_hex(cfg),
                         cfg.stage2.seed);
  StageRecord rec;
  rec.name = "stage2";
  rec.config_hash = config_hash_hex(cfg);
  rec.checkpoint = "stage2.svck";
  rec.metrics = "stage2_losses.csv";
  rec.wall_time_s = timer.seconds();
  rec.deviations = {"toy-scale training budget: steps=" + std::to_string(cfg.stage2.steps) +
                    " lr=" + CsvWriter::num(cfg.stage2.lr)};
  return rec;
}

inline std::vector<translator::TranslationPair> tokenize_corpus(const TokenizerStack& stack,
                                                                const corpus::Corpus& data) {
  std::vector<translator::TranslationPair> pairs;
  pairs.reserve(data.samples.size());
  for (const corpus::Sample& s : data.samples)
    pairs.push_back({s.sentence, stack.tokens_for(s.conditions)});
  return pairs;
}

inline StageRecord run_stage3(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  detail::StageTimer timer;
  const auto stage2_path = out / "stage2.svck";
  if (!std::filesystem::exists(stage2_path))
    throw StateError("stage3 requires the stage2 checkpoint at " + stage2_path.string());
  corpus::Corpus data = corpus::load_corpus(out / "corpus");
  require_corpus_match(data, cfg);
  TokenizerStack stack = load_stage2(cfg, stage2_path);
  std::vector<translator::TranslationPair> pairs = tokenize_corpus(stack, data);
  translator::Translator model = build_stage3(cfg);
  translator::TranslatorTrainResult res = translator::train_translator(
      model, pairs, cfg.stage3.steps, cfg.stage3.lr, std::max<std::size_t>(1, cfg.stage3.steps / 4));

  NamedParams params = model.named_params();
  add_meta(params, cfg, 3);
  save_checkpoint(out / "stage3.svck", params);
  detail::write_loss_csv(out / "stage3_losses.csv", res.losses, config_hash_hex(cfg), cfg.stage3.seed);
  {
    CsvWriter csv(out / "stage3_accuracy.csv");
    csv.header({"eval", "token_accuracy", "config_hash", "seed"});
    for (std::size_t i = 0; i < res.token_accuracy.size(); ++i)
      csv.row({std::to_string(i), CsvWriter::num(res.token_accuracy[i]), config_hash_hex(cfg),
               std::to_string(cfg.stage3.seed)});
  }
  StageRecord rec;
  rec.name = "stage3";
  rec.config_hash = config_hash_hex(cfg);
  rec.checkpoint = "stage3.svck";
  rec.metrics = "stage3_losses.csv";
  rec.wall_time_s = timer.seconds();
  rec.deviations = {"toy-scale training budget: steps=" + std::to_string(cfg.stage3.steps) +
                    " lr=" + CsvWriter::num(cfg.stage3.lr)};
  return rec;
}

/// Full Step I -> II -> III pipeline; writes the manifest after each stage.
inline StageManifest run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  save_config(cfg, out / "config.json");
  StageManifest manifest;
  manifest.config_hash = config_hash_hex(cfg);
  const auto checkpoint = [&](StageRecord rec) {
    manifest.stages.push_back(std::move(rec));
    save_manifest(manifest, out / "manifest.json");
  };
  checkpoint(run_gen_corpus(cfg, out));
  checkpoint(run_stage1(cfg, out));
  checkpoint(run_stage2(cfg, out));
  checkpoint(run_stage3(cfg, out));
  return manifest;
}

// ---------------------------------------------------------------------------
// Inference: text -> tokens -> embeddings -> video
// ---------------------------------------------------------------------------

struct InferResult {
  quant::TokenGrid tokens;
  Tensor embeddings;       // decoded condition embeddings
  corpus::VideoClip video; // clamped to [0, 1]
};

inline corpus::VideoClip latents_to_clip(const Tensor& latents) {
  corpus::VideoClip clip = corpus::video_from_tensor(latents);
  for (double& p : clip.pixels) p = std::clamp(p, 0.0, 1.0);
  return clip;
}

/// Every stage checkpoint must carry the same config hash; identity enters
/// only through the reference image.
inline InferResult infer(const ExperimentConfig& cfg, const diffusion::SignVideoDiffusion& stage1,
                         const TokenizerStack& stage2, const translator::Translator& stage3,
                         const std::vector<int>& sentence, const corpus::Identity& identity,
                         std::uint64_t seed) {
  InferResult res;
  translator::GenerateOptions opts;
  opts.max_frames = cfg.stage3.max_frames;
  res.tokens = translator::generate(stage3, sentence, opts);
  if (res.tokens.frames == 0) {
    // an empty generation decodes to a single zero-token frame (documented)
    res.tokens.frames = 1;
    res.tokens.indices.assign(res.tokens.tokens_per_frame, 0);
  }
  res.embeddings = stage2.ae.decode_tokens(res.tokens);
  Tensor reference = corpus::video_tensor(corpus::render_reference(identity, cfg.corpus));
  Tensor latents = diffusion::ddim_sample(stage1, reference, res.embeddings, cfg.sampling.ddim_steps,
                                          cfg.sampling.cfg_scale, seed);
  res.video = latents_to_clip(stage1.decode_video(latents));
  return res;
}

inline void write_pgm(const std::filesystem::path& path, const double* pixels, std::size_t h,
                      std::size_t w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_pgm: cannot open " + path.string());
  f << "P5\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v = std::clamp(pixels[i], 0.0, 1.0);
    f.put(static_cast<char>(std::lround(v * 255.0)));
  }
}

inline void dump_video_pgm(const corpus::VideoClip& clip, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t fidx = 0; fidx < clip.frames; ++fidx) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.pgm", fidx);
    write_pgm(dir / name, clip.pixels.data() + fidx * clip.h * clip.w, clip.h, clip.w);
  }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Per-frame embedding sequence (flattened) for DTW comparisons.
inline metrics::Sequence embedding_sequence(const Tensor& e) {
  const std::size_t F = e.dim(0), row = e.size() / e.dim(0);
  metrics::Sequence seq(F, std::vector<double>(row));
  for (std::size_t f = 0; f < F; ++f)
    std::copy_n(e.data().data() + f * row, row, seq[f].data());
  return seq;
}

/// Mean normalized DTW between translated-and-decoded embeddings and the
/// ground-truth embeddings of the frozen encoder, over the given samples.
inline double eval_translation_dtw(const TokenizerStack& stack, const translator::Translator& model,
                                   const corpus::Corpus& data, std::size_t max_samples) {
  double total = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.samples.size() && i < max_samples; ++i) {
    const corpus::Sample& s = data.samples[i];
    translator::GenerateOptions opts;
    opts.max_frames = model.cfg.max_frames;
    quant::TokenGrid gen = translator::generate(model, s.sentence, opts);
    if (gen.frames == 0) {
      gen.frames = 1;
      gen.indices.assign(gen.tokens_per_frame, 0);
    }
    metrics::Sequence got = embedding_sequence(stack.ae.decode_tokens(gen));
    metrics::Sequence want = embedding_sequence(stack.embeddings_for(s.conditions));
    total += metrics::dtw(got, want).normalized;
    ++n;
  }
  if (n == 0) throw StateError("eval_translation_dtw: no samples");
  return total / static_cast<double>(n);
}

/// Mean generation MSE against ground-truth videos when a fraction of the
/// condition embeddings is replaced with donor frames at evaluation time.
inline double eval_generation_mse(const ExperimentConfig& cfg,
                                  const diffusion::SignVideoDiffusion& model,
                                  const corpus::Corpus& data, double corrupt_p,
                                  std::size_t max_samples, std::size_t ddim_steps,
                                  std::uint64_t eval_seed) {
  double total = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.samples.size() && i < max_samples; ++i) {
    const corpus::Sample& s = data.samples[i];
    Tensor e = model.encode_conditions(corpus::conditions_tensor(s.conditions));
    if (corrupt_p > 0.0) {
      Rng rng(splitmix64(eval_seed ^ (0xc0de + i)));
      std::vector<Tensor> donors;
      for (int d = 0; d < 4; ++d) donors.push_back(diffusion::draw_donor_embedding(model, data, rng));
      e = diffusion::condition_augment(e, corrupt_p, donors, rng);
    }
    Tensor reference = corpus::video_tensor(s.reference);
    Tensor latents = diffusion::ddim_sample(model, reference, e, ddim_steps, cfg.sampling.cfg_scale,
                                            splitmix64(eval_seed ^ (0xd1ce + i)));
    corpus::VideoClip got = latents_to_clip(model.decode_video(latents));
    total += metrics::video_mse(got, s.video);
    ++n;
  }
  if (n == 0) throw StateError("eval_generation_mse: no samples");
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepAxis { kCompression, kCondAug, kSchedSampling, kFsqVsVq };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "compression") return SweepAxis::kCompression;
  if (s == "cond_aug") return SweepAxis::kCondAug;
  if (s == "sched_sampling") return SweepAxis::kSchedSampling;
  if (s == "fsq_vs_vq") return SweepAxis::kFsqVsVq;
  throw ConfigError("run_sweep: unknown axis '" + s + "'");
}

inline std::string sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::kCompression: return "compression";
    case SweepAxis::kCondAug: return "cond_aug";
    case SweepAxis::kSchedSampling: return "sched_sampling";
    case SweepAxis::kFsqVsVq: return "fsq_vs_vq";
  }
  return "?";
}

struct SweepItem {
  double level = 0.0;
  std::uint64_t seed = 0;
};

/// FSQ vs VQ usage and paired-autoencoder reconstruction at one vocabulary
/// bucket; the embedding stream is drawn from a frozen random condition
/// encoder applied to corpus conditions, plus a dispersed gaussian stream
/// for the usage measurement.
inline std::vector<std::vector<std::string>> sweep_item_fsq_vs_vq(const ExperimentConfig& cfg,
                                                                  const corpus::Corpus& data,
                                                                  const SweepItem& item) {
  const std::size_t bucket = static_cast<std::size_t>(item.level);
  const std::vector<int> levels = quant::levels_for_vocab_bucket(bucket);
  quant::FsqSpec spec(levels);
  const std::size_t vocab = spec.vocab_size();
  const std::size_t d = spec.channels();
  Rng rng(splitmix64(cfg.corpus.seed ^ item.seed ^ bucket));

  // usage on a dispersed gaussian stream: 10^4 embedding samples of 16
  // positions each
  std::vector<std::size_t> fsq_stream;
  fsq_stream.reserve(10000 * 16);
  quant::VqCodebook frozen(vocab, d, rng);
  std::vector<std::size_t> vq_stream;
  vq_stream.reserve(10000 * 16);
  std::vector<double> z(d);
  for (int i = 0; i < 10000 * 16; ++i) {
    std::vector<int> codes(d);
    for (std::size_t c = 0; c < d; ++c) {
      z[c] = rng.normal(0.0, 3.0);
      codes[c] = quant::fsq_quantize_scalar(z[c], levels[c]);
    }
    fsq_stream.push_back(quant::pack(codes, spec));
    vq_stream.push_back(quant::vq_nearest(frozen, z.data()));
  }
  const double fsq_usage = quant::codebook_usage(fsq_stream, vocab);
  const double vq_usage = quant::codebook_usage(vq_stream, vocab);

  // paired reconstruction trainings at equal vocab on frozen-encoder
  // embeddings of the corpus conditions
  Rng enc_rng(splitmix64(cfg.stage1.seed ^ 0xfe));
  diffusion::MultiConditionEncoder frozen_enc(cfg.cond_channels(), cfg.stage1.ch1, cfg.stage1.d_embed,
                                              enc_rng);
  std::vector<Tensor> embeddings;
  for (const corpus::Sample& s : data.samples)
    embeddings.push_back(frozen_enc.forward(corpus::conditions_tensor(s.conditions)));

  const auto train_recon = [&](const std::string& quantizer) {
    fsqae::FsqAeConfig ae_cfg = cfg.stage2;
    ae_cfg.levels = levels;
    ae_cfg.quantizer = quantizer;
    ae_cfg.seed = splitmix64(item.seed ^ fnv1a(quantizer));
    Rng ae_rng(ae_cfg.seed);
    fsqae::FsqAutoencoder ae(ae_cfg, cfg.stage1.d_embed, cfg.embed_hw(), cfg.embed_hw(), ae_rng);
    fsqae::FsqTrainResult res = fsqae::train_fsqae(ae, embeddings, cfg.stage2.steps, cfg.stage2.lr);
    const std::size_t tail = std::min<std::size_t>(25, res.recon_losses.size());
    double mean = 0;
    for (std::size_t i = res.recon_losses.size() - tail; i < res.recon_losses.size(); ++i)
      mean += res.recon_losses[i];
    return mean / static_cast<double>(tail);
  };
  const double fsq_recon = train_recon("fsq");
  const double vq_recon = train_recon("vq");

  const std::string hash = config_hash_hex(cfg);
  const std::string seed_s = std::to_string(item.seed);
  return {
      {std::to_string(vocab), "fsq", CsvWriter::num(fsq_usage), CsvWriter::num(fsq_recon), hash, seed_s},
      {std::to_string(vocab), "vq", CsvWriter::num(vq_usage), CsvWriter::num(vq_recon), hash, seed_s},
  };
}

/// Per-item experiment config with the axis level and the seed offset
/// applied (stage seeds shift together; the corpus stays fixed).
inline ExperimentConfig sweep_variant(const ExperimentConfig& base, SweepAxis axis,
                                      const SweepItem& item) {
  ExperimentConfig cfg = base;
  cfg.stage1.seed = splitmix64(base.stage1.seed ^ (item.seed * 2654435761ull + 1));
  cfg.stage2.seed = splitmix64(base.stage2.seed ^ (item.seed * 2654435761ull + 2));
  cfg.stage3.seed = splitmix64(base.stage3.seed ^ (item.seed * 2654435761ull + 3));
  switch (axis) {
    case SweepAxis::kCompression:
      cfg.stage2.rate = static_cast<std::size_t>(item.level);
      break;
    case SweepAxis::kCondAug:
      cfg.stage1.cond_aug_p = item.level;
      break;
    case SweepAxis::kSchedSampling:
      cfg.stage3.sched_r = item.level;
      break;
    case SweepAxis::kFsqVsVq:
      break;
  }
  cfg.validate();
  return cfg;
}

/// One sweep measurement. Stage-II/III axes retrain downstream stages on a
/// shared stage-I model; the condition-augmentation axis retrains stage I.
inline std::vector<std::vector<std::string>> run_sweep_item(
    const ExperimentConfig& base, SweepAxis axis, const SweepItem& item, const corpus::Corpus& data,
    const diffusion::SignVideoDiffusion* stage1 /* null unless needed */) {
  if (axis == SweepAxis::kFsqVsVq) return sweep_item_fsq_vs_vq(base, data, item);

  const ExperimentConfig cfg = sweep_variant(base, axis, item);
  const std::string hash = config_hash_hex(base);
  const std::string seed_s = std::to_string(item.seed);
  const std::string axis_s = sweep_axis_name(axis);
  const std::string id = axis_s + "_l" + CsvWriter::num(item.level) + "_s" + seed_s;

  if (axis == SweepAxis::kCondAug) {
    diffusion::SignVideoDiffusion model = build_stage1(cfg);
    diffusion::train_diffusion(model, data, cfg.stage1.steps, cfg.stage1.lr);
    const double mse = eval_generation_mse(cfg, model, data, 0.05, 8,
                                           std::min<std::size_t>(cfg.sampling.ddim_steps, 20),
                                           0xe5a1 ^ item.seed);
    return {{id, hash, "gen_mse_corrupt5", axis_s, CsvWriter::num(item.level), CsvWriter::num(mse),
             seed_s}};
  }

  if (!stage1) throw StateError("run_sweep_item: this axis needs a trained stage1 model");

  // rebuild the tokenizer on the shared frozen encoder
  TokenizerStack stack = build_stage2(cfg);
  {
    NamedParams src, dst;
    stage1->cond_encoder.params(src, "frozen_encoder");
    stack.encoder.params(dst, "frozen_encoder");
    assign_params(dst, src);
  }
  std::vector<Tensor> embeddings;
  for (const corpus::Sample& s : data.samples) embeddings.push_back(stack.embeddings_for(s.conditions));
  fsqae::train_fsqae(stack.ae, embeddings, cfg.stage2.steps, cfg.stage2.lr);

  std::vector<translator::TranslationPair> pairs = tokenize_corpus(stack, data);
  translator::Translator model = build_stage3(cfg);
  translator::train_translator(model, pairs, cfg.stage3.steps, cfg.stage3.lr);
  const double dtw = eval_translation_dtw(stack, model, data, 10);
  return {{id, hash, "norm_dtw", axis_s, CsvWriter::num(item.level), CsvWriter::num(dtw), seed_s}};
}

struct SweepRequest {
  SweepAxis axis = SweepAxis::kSchedSampling;
  std::vector<double> grid;
  std::size_t seeds = 3;
  std::size_t jobs = 1;
};

/// Grid x seeds sweep with optional process-parallel execution. Each item is
/// pure given (config, axis, level, seed); shards merge in item order so the
/// output is byte-stable regardless of the job count.
inline void run_sweep(const ExperimentConfig& cfg, const SweepRequest& req,
                      const std::filesystem::path& workdir, const std::filesystem::path& out_csv) {
  if (req.grid.empty()) throw ConfigError("run_sweep: empty grid");
  corpus::Corpus data = corpus::load_corpus(workdir / "corpus");
  require_corpus_match(data, cfg);

  std::optional<diffusion::SignVideoDiffusion> stage1;
  if (req.axis == SweepAxis::kCompression || req.axis == SweepAxis::kSchedSampling) {
    const auto p = workdir / "stage1.svck";
    if (!std::filesystem::exists(p))
      throw StateError("run_sweep: axis '" + sweep_axis_name(req.axis) +
                       "' needs a stage1 checkpoint in the workdir");
    stage1.emplace(load_stage1(cfg, p));
  }

  std::vector<SweepItem> items;
  for (double level : req.grid)
    for (std::size_t s = 0; s < req.seeds; ++s) items.push_back({level, s});

  std::vector<std::vector<std::vector<std::string>>> results(items.size());
  const auto compute = [&](std::size_t i) {
    return run_sweep_item(cfg, req.axis, items[i], data, stage1 ? &*stage1 : nullptr);
  };

  if (out_csv.has_parent_path()) std::filesystem::create_directories(out_csv.parent_path());
  if (req.jobs <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) results[i] = compute(i);
  } else {
    // fork a bounded pool; children write one shard file each
    const auto shard_path = [&](std::size_t i) {
      return out_csv.parent_path() / (".shard_" + std::to_string(i) + ".csv");
    };
    std::size_t next = 0, active = 0;
    const auto reap_one = [&]() {
      int status = 0;
      pid_t pid = ::wait(&status);
      if (pid < 0 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw Error("run_sweep: worker process failed");
      --active;
    };
    std::fflush(nullptr);
    while (next < items.size() || active > 0) {
      while (next < items.size() && active < req.jobs) {
        const std::size_t idx = next++;
        pid_t pid = ::fork();
        if (pid < 0) throw Error("run_sweep: fork failed");
        if (pid == 0) {
          try {
            auto rows = compute(idx);
            std::ofstream shard(shard_path(idx));
            for (const auto& row : rows) {
              for (std::size_t c = 0; c < row.size(); ++c) shard << (c ? "," : "") << row[c];
              shard << "\n";
            }
            shard.close();
            ::_exit(shard ? 0 : 1);
          } catch (...) {
            ::_exit(1);
          }
        }
        ++active;
      }
      if (active > 0) reap_one();
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::ifstream shard(shard_path(i));
      if (!shard) throw Error("run_sweep: missing shard for item " + std::to_string(i));
      std::string line;
      while (std::getline(shard, line)) {
        std::vector<std::string> row;
        std::size_t pos = 0;
        while (true) {
          const std::size_t comma = line.find(',', pos);
          row.push_back(line.substr(pos, comma - pos));
          if (comma == std::string::npos) break;
          pos = comma + 1;
        }
        results[i].push_back(std::move(row));
      }
      std::filesystem::remove(shard_path(i));
    }
  }

  CsvWriter csv(out_csv);
  if (req.axis == SweepAxis::kFsqVsVq)
    csv.header({"vocab_size", "method", "usage", "recon_loss", "config_hash", "seed"});
  else
    csv.header({"experiment_id", "config_hash", "metric", "perturbation_axis", "level", "value",
                "seed"});
  for (const auto& item_rows : results)
    for (const auto& row : item_rows) csv.row(row);
}

// ---------------------------------------------------------------------------
// Order-preserving evaluation report (CSV form)
// ---------------------------------------------------------------------------

inline void write_order_preserving_csv(const ExperimentConfig& cfg, const TokenizerStack& stack,
                                       const corpus::Corpus& data,
                                       const std::vector<double>& sigma_grid,
                                       const std::vector<double>& p_grid, std::uint64_t seed,
                                       const std::filesystem::path& out_csv) {
  metrics::ConditionEmbedder embed = [&](const corpus::ConditionSequence& cond) {
    return embedding_sequence(stack.embeddings_for(cond));
  };
  auto rows = metrics::order_preserving_report(data, embed, sigma_grid, p_grid, seed);
  CsvWriter csv(out_csv);
  csv.header({"experiment_id", "config_hash", "metric", "perturbation_axis", "level", "value",
              "seed"});
  const std::string hash = config_hash_hex(cfg);
  for (const auto& r : rows) {
    const std::string id = "order_preserving_" + r.axis + "_" + CsvWriter::num(r.level);
    csv.row({id, hash, "norm_dtw", r.axis, CsvWriter::num(r.level), CsvWriter::num(r.dtw_distance),
             std::to_string(seed)});
    csv.row({id, hash, "psnr_db", r.axis, CsvWriter::num(r.level), CsvWriter::num(r.psnr_db),
             std::to_string(seed)});
  }
}

}  // namespace signvid::pipeline
