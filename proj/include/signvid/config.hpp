#pragma once

#include "signvid/corpus.hpp"
#include "signvid/diffusion.hpp"
#include "signvid/fsq_autoencoder.hpp"
#include "signvid/translator.hpp"

#include <json.hpp>

namespace signvid::pipeline {

struct SamplingConfig {
  double cfg_scale = 3.5;
  std::size_t ddim_steps = 50;
  std::uint64_t seed = 4;
};

/// Whole-experiment configuration. Every field has a recorded default; the
/// JSON form rejects unknown keys so sweep typos fail loudly.
struct ExperimentConfig {
  std::string init = "uniform_fan_in";  // weight init scheme (only option)
  corpus::CorpusParams corpus;
  diffusion::DiffusionConfig stage1;
  fsqae::FsqAeConfig stage2;
  translator::TranslatorConfig stage3;
  SamplingConfig sampling;

  /// Condition raster after the stage-I encoder (4x downsampling).
  std::size_t embed_hw() const { return corpus.cond_size / 4; }
  std::size_t cond_channels() const { return corpus.joints + corpus.hand_params; }

  void validate() const {
    if (init != "uniform_fan_in") throw ConfigError("config: unsupported init scheme '" + init + "'");
    if (corpus.cond_size % 4 != 0) throw ConfigError("config: cond_size must be divisible by 4");
    if (corpus.video_size != 2 * corpus.cond_size)
      throw ConfigError("config: video_size must be 2 * cond_size");
    if (corpus.v_gloss < 2) throw ConfigError("config: need at least 2 glosses");
    if (corpus.hand_params > 4) throw ConfigError("config: at most 4 hand parameters are rendered");
    const std::size_t positions = embed_hw() * embed_hw();
    if (positions % stage2.rate != 0)
      throw ConfigError("config: compression rate must divide the embedding positions");
    if (stage3.sched_r < 0.0 || stage3.sched_r > 1.0)
      throw ConfigError("config: sched_r must be in [0, 1]");
    if (stage1.cond_aug_p < 0.0 || stage1.cond_aug_p > 1.0)
      throw ConfigError("config: cond_aug_p must be in [0, 1]");
    if (sampling.ddim_steps < 1 || sampling.ddim_steps > stage1.t_train)
      throw ConfigError("config: ddim_steps must be in [1, t_train]");
    if (sampling.cfg_scale < 0.0) throw ConfigError("config: cfg_scale must be >= 0");
    if (stage1.video_ae != "identity" && stage1.video_ae != "tiny")
      throw ConfigError("config: video_ae must be 'identity' or 'tiny'");
    try {
      quant::FsqSpec spec(stage2.levels);
      (void)spec.vocab_size();
    } catch (const Error& e) {
      throw ConfigError(std::string("config: bad FSQ levels: ") + e.what());
    }
  }

  /// Fill the translator fields that are derived from the other sections.
  translator::TranslatorConfig derived_stage3() const {
    translator::TranslatorConfig t = stage3;
    t.v_gloss = corpus.v_gloss;
    t.vocab = quant::FsqSpec(stage2.levels).vocab_size();
    t.tokens_per_frame = embed_hw() * embed_hw() / stage2.rate;
    t.max_text = std::max(t.max_text, corpus.max_sentence);
    return t;
  }
};

// ---------------------------------------------------------------------------
// JSON (strict: unknown keys are configuration errors)
// ---------------------------------------------------------------------------

namespace cfg_detail {

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                       const std::string& section) {
  if (!j.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in section '" + section + "'");
  }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace cfg_detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["init"] = c.init;
  j["corpus"] = corpus::params_to_json(c.corpus);
  j["stage1"] = {{"steps", c.stage1.steps},     {"lr", c.stage1.lr},
                 {"d_embed", c.stage1.d_embed}, {"ch1", c.stage1.ch1},
                 {"ch2", c.stage1.ch2},         {"temb_dim", c.stage1.temb_dim},
                 {"t_train", c.stage1.t_train}, {"beta_min", c.stage1.beta_min},
                 {"beta_max", c.stage1.beta_max}, {"cond_aug_p", c.stage1.cond_aug_p},
                 {"cfg_dropout", c.stage1.cfg_dropout}, {"seed", c.stage1.seed},
                 {"video_ae", c.stage1.video_ae}};
  j["stage2"] = {{"levels", c.stage2.levels},   {"rate", c.stage2.rate}, {"ch", c.stage2.ch},
                 {"steps", c.stage2.steps},     {"lr", c.stage2.lr},     {"seed", c.stage2.seed},
                 {"quantizer", c.stage2.quantizer}, {"dequant", c.stage2.dequant}};
  j["stage3"] = {{"d_model", c.stage3.d_model}, {"layers", c.stage3.layers},
                 {"d_token", c.stage3.d_token}, {"head_chunks", c.stage3.head_chunks},
                 {"max_text", c.stage3.max_text}, {"max_frames", c.stage3.max_frames},
                 {"sched_r", c.stage3.sched_r}, {"steps", c.stage3.steps},
                 {"lr", c.stage3.lr},           {"batch", c.stage3.batch},
                 {"seed", c.stage3.seed}};
  j["sampling"] = {{"cfg_scale", c.sampling.cfg_scale},
                   {"ddim_steps", c.sampling.ddim_steps},
                   {"seed", c.sampling.seed}};
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using cfg_detail::check_keys;
  using cfg_detail::get_if;
  check_keys(j, {"init", "corpus", "stage1", "stage2", "stage3", "sampling"}, "<root>");
  ExperimentConfig c;
  get_if(j, "init", c.init);
  if (j.contains("corpus")) {
    const auto& jc = j.at("corpus");
    check_keys(jc,
               {"seed", "v_gloss", "n_sentences", "n_identities", "min_sentence", "max_sentence",
                "joints", "hand_params", "cond_size", "video_size", "min_traj", "max_traj",
                "blend_frames", "delta_max", "blob_sigma_cond", "blob_sigma_video"},
               "corpus");
    get_if(jc, "seed", c.corpus.seed);
    get_if(jc, "v_gloss", c.corpus.v_gloss);
    get_if(jc, "n_sentences", c.corpus.n_sentences);
    get_if(jc, "n_identities", c.corpus.n_identities);
    get_if(jc, "min_sentence", c.corpus.min_sentence);
    get_if(jc, "max_sentence", c.corpus.max_sentence);
    get_if(jc, "joints", c.corpus.joints);
    get_if(jc, "hand_params", c.corpus.hand_params);
    get_if(jc, "cond_size", c.corpus.cond_size);
    get_if(jc, "video_size", c.corpus.video_size);
    get_if(jc, "min_traj", c.corpus.min_traj);
    get_if(jc, "max_traj", c.corpus.max_traj);
    get_if(jc, "blend_frames", c.corpus.blend_frames);
    get_if(jc, "delta_max", c.corpus.delta_max);
    get_if(jc, "blob_sigma_cond", c.corpus.blob_sigma_cond);
    get_if(jc, "blob_sigma_video", c.corpus.blob_sigma_video);
  }
  if (j.contains("stage1")) {
    const auto& js = j.at("stage1");
    check_keys(js,
               {"steps", "lr", "d_embed", "ch1", "ch2", "temb_dim", "t_train", "beta_min",
                "beta_max", "cond_aug_p", "cfg_dropout", "seed", "video_ae"},
               "stage1");
    get_if(js, "steps", c.stage1.steps);
    get_if(js, "lr", c.stage1.lr);
    get_if(js, "d_embed", c.stage1.d_embed);
    get_if(js, "ch1", c.stage1.ch1);
    get_if(js, "ch2", c.stage1.ch2);
    get_if(js, "temb_dim", c.stage1.temb_dim);
    get_if(js, "t_train", c.stage1.t_train);
    get_if(js, "beta_min", c.stage1.beta_min);
    get_if(js, "beta_max", c.stage1.beta_max);
    get_if(js, "cond_aug_p", c.stage1.cond_aug_p);
    get_if(js, "cfg_dropout", c.stage1.cfg_dropout);
    get_if(js, "seed", c.stage1.seed);
    get_if(js, "video_ae", c.stage1.video_ae);
  }
  if (j.contains("stage2")) {
    const auto& js = j.at("stage2");
    check_keys(js, {"levels", "rate", "ch", "steps", "lr", "seed", "quantizer", "dequant"}, "stage2");
    get_if(js, "levels", c.stage2.levels);
    get_if(js, "rate", c.stage2.rate);
    get_if(js, "ch", c.stage2.ch);
    get_if(js, "steps", c.stage2.steps);
    get_if(js, "lr", c.stage2.lr);
    get_if(js, "seed", c.stage2.seed);
    get_if(js, "quantizer", c.stage2.quantizer);
    get_if(js, "dequant", c.stage2.dequant);
  }
  if (j.contains("stage3")) {
    const auto& js = j.at("stage3");
    check_keys(js,
               {"d_model", "layers", "d_token", "head_chunks", "max_text", "max_frames", "sched_r",
                "steps", "lr", "batch", "seed"},
               "stage3");
    get_if(js, "d_model", c.stage3.d_model);
    get_if(js, "layers", c.stage3.layers);
    get_if(js, "d_token", c.stage3.d_token);
    get_if(js, "head_chunks", c.stage3.head_chunks);
    get_if(js, "max_text", c.stage3.max_text);
    get_if(js, "max_frames", c.stage3.max_frames);
    get_if(js, "sched_r", c.stage3.sched_r);
    get_if(js, "steps", c.stage3.steps);
    get_if(js, "lr", c.stage3.lr);
    get_if(js, "batch", c.stage3.batch);
    get_if(js, "seed", c.stage3.seed);
  }
  if (j.contains("sampling")) {
    const auto& js = j.at("sampling");
    check_keys(js, {"cfg_scale", "ddim_steps", "seed"}, "sampling");
    get_if(js, "cfg_scale", c.sampling.cfg_scale);
    get_if(js, "ddim_steps", c.sampling.ddim_steps);
    get_if(js, "seed", c.sampling.seed);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: invalid JSON in " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("config: cannot write " + path.string());
  f << to_json(c).dump(2) << "\n";
}

/// Canonical hash over the full effective configuration (defaults included),
/// embedded in every checkpoint and CSV row.
inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a(to_json(c).dump()); }

inline std::string config_hash_hex(const ExperimentConfig& c) { return hex_u64(config_hash(c)); }

}  // namespace signvid::pipeline
