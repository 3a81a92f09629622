// signvid command-line interface: corpus generation, the three training
// stages, end-to-end inference, evaluation reports, and experiment sweeps.
//
// Exit codes: 0 ok, 2 configuration error, 3 stage failure, 4 compatibility
// error. When SIGNVID_OUT is set, relative output/workdir paths resolve
// under it.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "signvid/pipeline.hpp"

using namespace signvid;
using pipeline::ExperimentConfig;

namespace {

std::filesystem::path resolve_out(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("SIGNVID_OUT")) return std::filesystem::path(root) / p;
  return p;
}

ExperimentConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) {
    ExperimentConfig cfg;
    cfg.validate();
    return cfg;
  }
  return pipeline::load_config(resolve_out(config_path));
}

std::vector<int> parse_sentence(const std::string& text) {
  std::vector<int> ids;
  std::istringstream ss(text);
  int v;
  while (ss >> v) ids.push_back(v);
  if (ids.empty()) throw ConfigError("sentence: expected space-separated gloss ids, got '" + text + "'");
  return ids;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) grid.push_back(std::stod(tok));
  }
  if (grid.empty()) throw ConfigError("grid: expected comma-separated numbers, got '" + text + "'");
  return grid;
}

corpus::Identity identity_for(const ExperimentConfig& cfg, std::size_t id) {
  if (id >= cfg.corpus.n_identities)
    throw ConfigError("identity index " + std::to_string(id) + " out of range [0, " +
                      std::to_string(cfg.corpus.n_identities) + ")");
  Rng id_rng = Rng(cfg.corpus.seed).split(2);
  return corpus::make_identity(id_rng.split(id), cfg.corpus);
}

void save_single_tensor(const std::filesystem::path& path, const std::string& name, const Tensor& t) {
  NamedParams params;
  params.emplace_back(name, t);
  save_checkpoint(path, params);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete multi-condition tokenization pipeline for toy sign-video generation"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "experiment config JSON (defaults used when omitted)");

  // ---- gen-corpus ----
  auto* gen = app.add_subcommand("gen-corpus", "generate the deterministic synthetic corpus");
  std::uint64_t gen_seed = 0;
  std::size_t gen_glosses = 0, gen_sentences = 0;
  std::string gen_out = "work";
  bool gen_seed_set = false, gen_glosses_set = false, gen_sentences_set = false;
  gen->add_option("--seed", gen_seed, "corpus seed")->each([&](const std::string&) { gen_seed_set = true; });
  gen->add_option("--glosses", gen_glosses, "gloss vocabulary size")
      ->each([&](const std::string&) { gen_glosses_set = true; });
  gen->add_option("--sentences", gen_sentences, "number of sentences")
      ->each([&](const std::string&) { gen_sentences_set = true; });
  gen->add_option("--out", gen_out, "output directory (corpus/ is created inside)");

  // ---- train-diffusion ----
  auto* td = app.add_subcommand("train-diffusion", "train the stage-I conditional video diffusion model");
  std::string td_corpus, td_out = "work/stage1.svck";
  td->add_option("--corpus", td_corpus, "corpus directory")->required();
  td->add_option("--out-checkpoint", td_out, "checkpoint output path");

  // ---- train-fsqae ----
  auto* tf = app.add_subcommand("train-fsqae", "train the stage-II compression/quantization autoencoder");
  std::string tf_stage1, tf_out = "work/stage2.svck", tf_levels, tf_corpus;
  std::size_t tf_rate = 0;
  bool tf_rate_set = false;
  tf->add_option("--stage1-checkpoint", tf_stage1, "stage-I checkpoint")->required();
  tf->add_option("--corpus", tf_corpus, "corpus directory")->required();
  tf->add_option("--rate", tf_rate, "spatial compression rate {1,2,4,8,16}")
      ->each([&](const std::string&) { tf_rate_set = true; });
  tf->add_option("--levels", tf_levels, "comma-separated quantization levels, e.g. 5,5,5,5");
  tf->add_option("--out", tf_out, "checkpoint output path");

  // ---- train-translator ----
  auto* tt = app.add_subcommand("train-translator", "train the stage-III autoregressive token translator");
  std::string tt_stage2, tt_corpus, tt_out = "work/stage3.svck";
  double tt_r = -1.0;
  tt->add_option("--stage2-checkpoint", tt_stage2, "stage-II checkpoint")->required();
  tt->add_option("--corpus", tt_corpus, "corpus directory")->required();
  tt->add_option("--r", tt_r, "scheduled-sampling corruption ratio");
  tt->add_option("--out", tt_out, "checkpoint output path");

  // ---- run-pipeline ----
  auto* rp = app.add_subcommand("run-pipeline", "corpus + all three training stages, with manifest");
  std::string rp_out = "work";
  rp->add_option("--out", rp_out, "working directory");

  // ---- translate ----
  auto* tr = app.add_subcommand("translate", "text -> multi-condition tokens");
  std::string tr_ckpt, tr_sentence, tr_out = "tokens.bin";
  std::size_t tr_max_frames = 64, tr_topk = 0;
  std::uint64_t tr_seed = 0;
  tr->add_option("--checkpoint", tr_ckpt, "stage-III checkpoint")->required();
  tr->add_option("--sentence", tr_sentence, "space-separated gloss ids, e.g. \"3 7 1\"")->required();
  tr->add_option("--max-frames", tr_max_frames, "generation cap");
  tr->add_option("--top-k", tr_topk, "top-k sampling (0 = greedy)");
  tr->add_option("--seed", tr_seed, "sampling seed (top-k only)");
  tr->add_option("--out", tr_out, "token file output path");

  // ---- sample ----
  auto* sm = app.add_subcommand("sample", "tokens or conditions -> video via the diffusion model");
  std::string sm_ckpt, sm_tokens, sm_conditions, sm_stage2, sm_reference, sm_out = "sampled";
  std::uint64_t sm_seed = 0;
  std::size_t sm_steps = 0;
  double sm_cfg_scale = -1.0;
  long long sm_identity = -1;
  bool sm_pgm = false;
  sm->add_option("--checkpoint", sm_ckpt, "stage-I checkpoint")->required();
  sm->add_option("--tokens", sm_tokens, "token file (requires --stage2-checkpoint)");
  sm->add_option("--stage2-checkpoint", sm_stage2, "stage-II checkpoint for token decoding");
  sm->add_option("--conditions", sm_conditions, "tensor file with a 'conditions' tensor");
  sm->add_option("--reference", sm_reference, "tensor file with a 'reference' tensor");
  sm->add_option("--identity", sm_identity, "render the reference from this corpus identity");
  sm->add_option("--seed", sm_seed, "sampling seed");
  sm->add_option("--steps", sm_steps, "denoising steps (default from config)");
  sm->add_option("--cfg", sm_cfg_scale, "guidance scale (default from config)");
  sm->add_flag("--pgm", sm_pgm, "also dump frames as PGM images");
  sm->add_option("--out", sm_out, "output directory");

  // ---- infer ----
  auto* in = app.add_subcommand("infer", "text -> tokens -> embeddings -> video, all intermediates kept");
  std::string in_workdir = "work", in_sentence;
  std::uint64_t in_seed = 0;
  long long in_identity = 0;
  std::string in_out = "infer_out";
  in->add_option("--workdir", in_workdir, "directory with stage1/2/3 checkpoints + corpus");
  in->add_option("--sentence", in_sentence, "space-separated gloss ids")->required();
  in->add_option("--identity", in_identity, "corpus identity index for the reference image");
  in->add_option("--seed", in_seed, "sampling seed");
  in->add_option("--out", in_out, "output directory");

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "order-preserving perturbation report + translation DTW");
  std::vector<std::string> ev_stack;
  std::string ev_corpus, ev_report = "report.csv", ev_sigma = "0,0.05,0.1,0.2", ev_p = "0,0.1,0.2,0.4";
  std::uint64_t ev_seed = 11;
  ev->add_option("--stack-checkpoints", ev_stack, "stage1 stage2 stage3 checkpoint paths")
      ->expected(3)
      ->required();
  ev->add_option("--corpus", ev_corpus, "corpus directory")->required();
  ev->add_option("--sigma-grid", ev_sigma, "spatial perturbation grid");
  ev->add_option("--p-grid", ev_p, "temporal perturbation grid");
  ev->add_option("--seed", ev_seed, "perturbation seed");
  ev->add_option("--report", ev_report, "CSV output path");

  // ---- run-sweep ----
  auto* rs = app.add_subcommand("run-sweep", "grid x seeds experiment sweep, tidy CSV output");
  std::string rs_axis, rs_grid, rs_workdir = "work", rs_out = "sweep.csv";
  std::size_t rs_seeds = 3, rs_jobs = 1;
  rs->add_option("--axis", rs_axis, "compression | cond_aug | sched_sampling | fsq_vs_vq")->required();
  rs->add_option("--grid", rs_grid, "comma-separated levels")->required();
  rs->add_option("--seeds", rs_seeds, "seeds per grid point");
  rs->add_option("--jobs", rs_jobs, "parallel worker processes");
  rs->add_option("--workdir", rs_workdir, "directory with corpus (+ stage1.svck where needed)");
  rs->add_option("--out", rs_out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = load_or_default(config_path);

    if (gen->parsed()) {
      if (gen_seed_set) cfg.corpus.seed = gen_seed;
      if (gen_glosses_set) cfg.corpus.v_gloss = gen_glosses;
      if (gen_sentences_set) cfg.corpus.n_sentences = gen_sentences;
      cfg.validate();
      const auto out = resolve_out(gen_out);
      pipeline::StageRecord rec = pipeline::run_gen_corpus(cfg, out);
      std::cout << "corpus written to " << (out / "corpus").string() << " ("
                << cfg.corpus.n_sentences << " sentences, " << rec.wall_time_s << " s)\n";
      return 0;
    }

    if (td->parsed()) {
      const auto corpus_dir = resolve_out(td_corpus);
      const auto out_path = resolve_out(td_out);
      // train via the stage runner layout: corpus dir's parent is the workdir
      corpus::Corpus data = corpus::load_corpus(corpus_dir);
      pipeline::require_corpus_match(data, cfg);
      diffusion::SignVideoDiffusion model = pipeline::build_stage1(cfg);
      if (cfg.stage1.video_ae == "tiny")
        diffusion::train_video_ae(model.video_ae, data, cfg.stage1.steps, cfg.stage1.lr,
                                  cfg.stage1.seed ^ 0xaeaeull);
      diffusion::TrainResult res =
          diffusion::train_diffusion(model, data, cfg.stage1.steps, cfg.stage1.lr);
      NamedParams params = model.named_params();
      pipeline::add_meta(params, cfg, 1);
      save_checkpoint(out_path, params);
      std::cout << "stage1 checkpoint written to " << out_path.string() << " (final loss "
                << res.losses.back() << ")\n";
      return 0;
    }

    if (tf->parsed()) {
      if (tf_rate_set) cfg.stage2.rate = tf_rate;
      if (!tf_levels.empty()) {
        cfg.stage2.levels.clear();
        for (double v : parse_grid(tf_levels)) cfg.stage2.levels.push_back(static_cast<int>(v));
      }
      cfg.validate();
      corpus::Corpus data = corpus::load_corpus(resolve_out(tf_corpus));
      pipeline::require_corpus_match(data, cfg);
      const auto s1 = resolve_out(tf_stage1);
      if (!std::filesystem::exists(s1))
        throw StateError("train-fsqae requires the stage1 checkpoint at " + s1.string());
      diffusion::SignVideoDiffusion stage1 = pipeline::load_stage1(cfg, s1);
      pipeline::TokenizerStack stack = pipeline::build_stage2(cfg);
      {
        NamedParams src, dst;
        stage1.cond_encoder.params(src, "frozen_encoder");
        stack.encoder.params(dst, "frozen_encoder");
        assign_params(dst, src);
      }
      std::vector<Tensor> embeddings;
      for (const corpus::Sample& s : data.samples)
        embeddings.push_back(stack.embeddings_for(s.conditions));
      fsqae::FsqTrainResult res =
          fsqae::train_fsqae(stack.ae, embeddings, cfg.stage2.steps, cfg.stage2.lr);
      NamedParams params = stack.named_params();
      pipeline::add_meta(params, cfg, 2);
      const auto out_path = resolve_out(tf_out);
      save_checkpoint(out_path, params);
      std::cout << "stage2 checkpoint written to " << out_path.string() << " (final recon loss "
                << res.recon_losses.back() << ", " << stack.ae.tokens_per_frame()
                << " tokens/frame, vocab " << stack.ae.vocab_size() << ")\n";
      return 0;
    }

    if (tt->parsed()) {
      if (tt_r >= 0.0) cfg.stage3.sched_r = tt_r;
      cfg.validate();
      corpus::Corpus data = corpus::load_corpus(resolve_out(tt_corpus));
      pipeline::require_corpus_match(data, cfg);
      const auto s2 = resolve_out(tt_stage2);
      if (!std::filesystem::exists(s2))
        throw StateError("train-translator requires the stage2 checkpoint at " + s2.string());
      pipeline::TokenizerStack stack = pipeline::load_stage2(cfg, s2);
      auto pairs = pipeline::tokenize_corpus(stack, data);
      translator::Translator model = pipeline::build_stage3(cfg);
      auto res = translator::train_translator(model, pairs, cfg.stage3.steps, cfg.stage3.lr,
                                              std::max<std::size_t>(1, cfg.stage3.steps / 4));
      NamedParams params = model.named_params();
      pipeline::add_meta(params, cfg, 3);
      const auto out_path = resolve_out(tt_out);
      save_checkpoint(out_path, params);
      std::cout << "stage3 checkpoint written to " << out_path.string()
                << " (teacher-forced token accuracy " << res.token_accuracy.back() << ")\n";
      return 0;
    }

    if (rp->parsed()) {
      const auto out = resolve_out(rp_out);
      pipeline::StageManifest manifest = pipeline::run_pipeline(cfg, out);
      std::cout << "pipeline complete; manifest at " << (out / "manifest.json").string() << "\n";
      for (const auto& s : manifest.stages)
        std::cout << "  " << s.name << ": " << s.wall_time_s << " s\n";
      return 0;
    }

    if (tr->parsed()) {
      translator::Translator model = pipeline::load_stage3(cfg, resolve_out(tr_ckpt));
      translator::GenerateOptions opts;
      opts.max_frames = tr_max_frames;
      opts.top_k = tr_topk;
      opts.seed = tr_seed;
      quant::TokenGrid grid = translator::generate(model, parse_sentence(tr_sentence), opts);
      fsqae::write_tokens(resolve_out(tr_out), grid);
      std::cout << "translated " << grid.frames << " frames (" << grid.tokens_per_frame
                << " tokens/frame) to " << resolve_out(tr_out).string() << "\n";
      return 0;
    }

    if (sm->parsed()) {
      diffusion::SignVideoDiffusion model = pipeline::load_stage1(cfg, resolve_out(sm_ckpt));
      Tensor embeddings;
      if (!sm_tokens.empty()) {
        if (sm_stage2.empty())
          throw ConfigError("sample: --tokens requires --stage2-checkpoint for decoding");
        pipeline::TokenizerStack stack = pipeline::load_stage2(cfg, resolve_out(sm_stage2));
        embeddings = stack.ae.decode_tokens(fsqae::read_tokens(resolve_out(sm_tokens)));
      } else if (!sm_conditions.empty()) {
        NamedParams t = load_checkpoint(resolve_out(sm_conditions));
        embeddings = model.encode_conditions(find_tensor(t, "conditions"));
      } else {
        throw ConfigError("sample: provide --tokens or --conditions");
      }
      Tensor reference;
      if (!sm_reference.empty()) {
        NamedParams t = load_checkpoint(resolve_out(sm_reference));
        reference = find_tensor(t, "reference");
      } else if (sm_identity >= 0) {
        reference = corpus::video_tensor(corpus::render_reference(
            identity_for(cfg, static_cast<std::size_t>(sm_identity)), cfg.corpus));
      } else {
        throw ConfigError("sample: provide --reference or --identity");
      }
      const std::size_t steps = sm_steps ? sm_steps : cfg.sampling.ddim_steps;
      const double scale = sm_cfg_scale >= 0.0 ? sm_cfg_scale : cfg.sampling.cfg_scale;
      Tensor latents = diffusion::ddim_sample(model, reference, embeddings, steps, scale, sm_seed);
      corpus::VideoClip clip = pipeline::latents_to_clip(model.decode_video(latents));
      const auto out = resolve_out(sm_out);
      std::filesystem::create_directories(out);
      save_single_tensor(out / "video.svt", "video", corpus::video_tensor(clip));
      if (sm_pgm) pipeline::dump_video_pgm(clip, out / "frames");
      std::cout << "sampled " << clip.frames << " frames to " << out.string() << "\n";
      return 0;
    }

    if (in->parsed()) {
      const auto workdir = resolve_out(in_workdir);
      diffusion::SignVideoDiffusion stage1 = pipeline::load_stage1(cfg, workdir / "stage1.svck");
      pipeline::TokenizerStack stage2 = pipeline::load_stage2(cfg, workdir / "stage2.svck");
      translator::Translator stage3 = pipeline::load_stage3(cfg, workdir / "stage3.svck");
      corpus::Identity identity = identity_for(cfg, static_cast<std::size_t>(in_identity));
      pipeline::InferResult res = pipeline::infer(cfg, stage1, stage2, stage3,
                                                  parse_sentence(in_sentence), identity, in_seed);
      const auto out = resolve_out(in_out);
      std::filesystem::create_directories(out);
      fsqae::write_tokens(out / "tokens.bin", res.tokens);
      save_single_tensor(out / "embeddings.svt", "embeddings", res.embeddings);
      save_single_tensor(out / "video.svt", "video", corpus::video_tensor(res.video));
      save_single_tensor(out / "reference.svt", "reference",
                         corpus::video_tensor(corpus::render_reference(identity, cfg.corpus)));
      pipeline::dump_video_pgm(res.video, out / "frames");
      std::cout << "inference wrote " << res.video.frames << " frames to " << out.string() << "\n";
      return 0;
    }

    if (ev->parsed()) {
      corpus::Corpus data = corpus::load_corpus(resolve_out(ev_corpus));
      pipeline::require_corpus_match(data, cfg);
      pipeline::TokenizerStack stage2 = pipeline::load_stage2(cfg, resolve_out(ev_stack[1]));
      translator::Translator stage3 = pipeline::load_stage3(cfg, resolve_out(ev_stack[2]));
      // stage1 is loaded to enforce the full-stack compatibility contract
      diffusion::SignVideoDiffusion stage1 = pipeline::load_stage1(cfg, resolve_out(ev_stack[0]));
      const auto report = resolve_out(ev_report);
      pipeline::write_order_preserving_csv(cfg, stage2, data, parse_grid(ev_sigma), parse_grid(ev_p),
                                           ev_seed, report);
      const double dtw = pipeline::eval_translation_dtw(stage2, stage3, data, 10);
      std::ofstream append(report, std::ios::app);
      append << "translation,"
             << pipeline::config_hash_hex(cfg) << ",norm_dtw,none,0," << CsvWriter::num(dtw) << ","
             << ev_seed << "\n";
      std::cout << "evaluation report written to " << report.string() << " (translation DTW " << dtw
                << ")\n";
      return 0;
    }

    if (rs->parsed()) {
      pipeline::SweepRequest req;
      req.axis = pipeline::sweep_axis_from_string(rs_axis);
      req.grid = parse_grid(rs_grid);
      req.seeds = rs_seeds;
      req.jobs = rs_jobs;
      const auto out = resolve_out(rs_out);
      pipeline::run_sweep(cfg, req, resolve_out(rs_workdir), out);
      std::cout << "sweep CSV written to " << out.string() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CompatError& e) {
    std::cerr << "compatibility error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
