#pragma once

#include "signvid/nn.hpp"
#include "signvid/quantize.hpp"

namespace signvid::translator {

using quant::TokenGrid;

struct TranslatorConfig {
  std::size_t v_gloss = 10;
  std::size_t vocab = 625;          // token vocabulary (without EOS; stopping is a dedicated head)
  std::size_t tokens_per_frame = 2; // K parallel heads
  std::size_t d_model = 128;
  std::size_t layers = 4;
  std::size_t d_token = 32;         // token embedding width before the mixer
  std::size_t head_chunks = 4;      // hidden-state chunks each head attends over
  std::size_t max_text = 8;
  std::size_t max_frames = 64;
  double sched_r = 0.4;             // scheduled-sampling corruption ratio
  std::size_t steps = 500;
  double lr = 1e-3;
  std::size_t batch = 8;
  std::uint64_t seed = 3;
};

/// One (sentence, token grid) training pair; grids come from the frozen
/// stage-II encoder.
struct TranslationPair {
  std::vector<int> sentence;
  TokenGrid tokens;
};

// ---------------------------------------------------------------------------
// Scheduled sampling
// ---------------------------------------------------------------------------

/// Each input token is independently replaced with a uniformly drawn
/// vocabulary index with probability r. The draw may select the original
/// token, so the effective corruption rate is r * (1 - 1/vocab). Targets are
/// never touched; callers corrupt only the teacher-forcing inputs.
inline TokenGrid scheduled_sampling_corrupt(const TokenGrid& grid, double r, std::size_t vocab,
                                            Rng& rng) {
  if (r < 0.0 || r > 1.0) throw ValueError("scheduled_sampling_corrupt: r must be in [0, 1]");
  TokenGrid out = grid;
  if (r == 0.0) return out;
  for (auto& t : out.indices)
    if (rng.uniform() < r) t = static_cast<std::uint32_t>(rng.uniform_index(vocab));
  return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Linear + LayerNorm + GELU over the concatenated per-frame token
/// embeddings, producing one input hidden state per frame.
struct FrameMixer {
  Linear proj;
  LayerNormLayer ln;

  FrameMixer() = default;
  FrameMixer(std::size_t k, std::size_t d_token, std::size_t d_model, Rng& rng)
      : proj(k * d_token, d_model, rng), ln(d_model) {}

  Tensor forward(const Tensor& flat_tokens) const { return gelu(ln.forward(proj.forward(flat_tokens))); }

  void params(NamedParams& out, const std::string& prefix) const {
    proj.params(out, prefix + ".proj");
    ln.params(out, prefix + ".ln");
  }
};

/// Pre-norm transformer block (single-head attention, 4x GELU MLP).
struct DecoderBlock {
  LayerNormLayer ln1, ln2;
  Attention attn;
  Linear fc1, fc2;

  DecoderBlock() = default;
  DecoderBlock(std::size_t d, Rng& rng)
      : ln1(d), ln2(d), attn(d, rng), fc1(d, 4 * d, rng), fc2(4 * d, d, rng) {}

  Tensor forward(const Tensor& x, const Tensor& mask) const {  // x: [S x D]
    const std::size_t S = x.dim(0), D = x.dim(1);
    Tensor a = attn.self_forward(reshape(ln1.forward(x), {1, S, D}), &mask);
    Tensor h = add(x, reshape(a, {S, D}));
    Tensor m = fc2.forward(gelu(fc1.forward(ln2.forward(h))));
    return add(h, m);
  }

  void params(NamedParams& out, const std::string& prefix) const {
    ln1.params(out, prefix + ".ln1");
    ln2.params(out, prefix + ".ln2");
    attn.params(out, prefix + ".attn");
    fc1.params(out, prefix + ".fc1");
    fc2.params(out, prefix + ".fc2");
  }
};

/// One prediction head: a learned query cross-attends over chunks of the
/// frame's hidden state, then projects to vocabulary logits. Heads share
/// nothing, so within a frame each head's output depends only on the
/// backbone hidden state and its own parameters.
struct PredictionHead {
  Tensor query;  // [1 x 1 x d_head]
  Attention attn;
  LayerNormLayer ln;
  Linear out;

  PredictionHead() = default;
  PredictionHead(std::size_t d_head, std::size_t vocab, Rng& rng)
      : query(randn({1, 1, d_head}, rng, true)), attn(d_head, rng), ln(d_head), out(d_head, vocab, rng) {}

  Tensor forward(const Tensor& h, std::size_t chunks) const {  // h: [B x d_model]
    const std::size_t B = h.dim(0), d_head = h.dim(1) / chunks;
    Tensor kv = reshape(h, {B, chunks, d_head});
    Tensor ctx = attn.forward(tile_batch(query, B), kv);  // [B x 1 x d_head]
    return out.forward(ln.forward(reshape(ctx, {B, d_head})));
  }

  void params(NamedParams& out_params, const std::string& prefix) const {
    append_param(out_params, prefix + ".query", query);
    attn.params(out_params, prefix + ".attn");
    ln.params(out_params, prefix + ".ln");
    out.params(out_params, prefix + ".out");
  }
};

struct ForwardOutput {
  std::vector<Tensor> head_logits;  // K tensors of [F x vocab]
  Tensor stop_logits;               // [(F+1) x 2], class 1 = stop
};

struct Translator {
  TranslatorConfig cfg;
  Embedding text_emb;    // gloss table standing in for the text encoder
  Embedding token_emb;
  Tensor bos;            // learned first frame-slot input, [1 x d_model]
  Tensor pos_text;       // [max_text x d_model]
  Tensor pos_frames;     // [(max_frames + 1) x d_model]
  FrameMixer mixer;
  std::vector<DecoderBlock> blocks;
  LayerNormLayer final_ln;
  std::vector<PredictionHead> heads;
  Linear stop_head;      // frame-level stop classifier

  explicit Translator(const TranslatorConfig& config, Rng& rng)
      : cfg(config),
        text_emb(config.v_gloss, config.d_model, rng),
        token_emb(config.vocab, config.d_token, rng),
        bos(randn({1, config.d_model}, rng, true)),
        pos_text(init_uniform_fan_in({config.max_text, config.d_model}, config.d_model, rng)),
        pos_frames(init_uniform_fan_in({config.max_frames + 1, config.d_model}, config.d_model, rng)),
        mixer(config.tokens_per_frame, config.d_token, config.d_model, rng),
        final_ln(config.d_model),
        stop_head(config.d_model, 2, rng) {
    if (config.d_model % config.head_chunks != 0)
      throw ValueError("Translator: d_model must be divisible by head_chunks");
    for (std::size_t l = 0; l < config.layers; ++l) blocks.emplace_back(config.d_model, rng);
    for (std::size_t k = 0; k < config.tokens_per_frame; ++k)
      heads.emplace_back(config.d_model / config.head_chunks, config.vocab, rng);
  }

  NamedParams named_params() const {
    NamedParams out;
    text_emb.params(out, "translator.text_emb");
    token_emb.params(out, "translator.token_emb");
    append_param(out, "translator.bos", bos);
    append_param(out, "translator.pos_text", pos_text);
    append_param(out, "translator.pos_frames", pos_frames);
    mixer.params(out, "translator.mixer");
    for (std::size_t l = 0; l < blocks.size(); ++l)
      blocks[l].params(out, "translator.block" + std::to_string(l));
    final_ln.params(out, "translator.final_ln");
    for (std::size_t k = 0; k < heads.size(); ++k)
      heads[k].params(out, "translator.head" + std::to_string(k));
    stop_head.params(out, "translator.stop");
    return out;
  }

  /// Mixer input for one frame of tokens.
  Tensor mix_frame(const TokenGrid& grid, std::size_t frame) const {
    std::vector<int> ids(cfg.tokens_per_frame);
    for (std::size_t k = 0; k < cfg.tokens_per_frame; ++k)
      ids[k] = static_cast<int>(grid.at(frame, k));
    Tensor emb = token_emb.forward(ids);  // [K x d_token]
    return mixer.forward(reshape(emb, {1, cfg.tokens_per_frame * cfg.d_token}));
  }

  /// Backbone hidden states for the frame slots. Slot i predicts frame i;
  /// its input is BOS for i = 0 and the (possibly corrupted) tokens of
  /// frame i-1 otherwise. Returns [(F+1) x d_model], slots 0..F.
  Tensor frame_hiddens(const std::vector<int>& sentence, const TokenGrid& inputs) const {
    const std::size_t S = sentence.size();
    if (S == 0) throw ValueError("translator: sentence must be nonempty");
    if (S > cfg.max_text) throw ValueError("translator: sentence longer than max_text");
    const std::size_t F = inputs.frames;
    if (F + 1 > cfg.max_frames + 1) throw ValueError("translator: too many frames");

    Tensor text = add(text_emb.forward(sentence), slice_rows(pos_text, 0, S));
    Tensor seq = text;  // [S x D]
    for (std::size_t i = 0; i <= F; ++i) {
      Tensor inp = (i == 0) ? bos : mix_frame(inputs, i - 1);
      inp = add(inp, slice_rows(pos_frames, i, i + 1));
      seq = concat_rows(seq, inp);
    }
    Tensor mask = causal_mask(S + F + 1);
    for (const DecoderBlock& b : blocks) seq = b.forward(seq, mask);
    seq = final_ln.forward(seq);
    return slice_rows(seq, S, S + F + 1);  // frame-slot hiddens only
  }

  /// Teacher-forced logits for frames 0..F-1 plus the stop column 0..F.
  ForwardOutput forward_teacher_forced(const std::vector<int>& sentence, const TokenGrid& inputs) const {
    inputs.validate(cfg.vocab);
    if (inputs.tokens_per_frame != cfg.tokens_per_frame && inputs.frames > 0)
      throw ValueError("translator: grid tokens-per-frame mismatch");
    const std::size_t F = inputs.frames;
    Tensor hidden = frame_hiddens(sentence, inputs);  // [(F+1) x D]
    ForwardOutput out;
    if (F > 0) {
      Tensor token_hidden = slice_rows(hidden, 0, F);
      for (const PredictionHead& head : heads)
        out.head_logits.push_back(head.forward(token_hidden, cfg.head_chunks));
    }
    out.stop_logits = stop_head.forward(hidden);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Loss: mean over F+1 frames; within a frame the K token heads and the stop
// head average together, and the final frame contributes the stop term only.
// ---------------------------------------------------------------------------

inline Tensor translation_loss(const ForwardOutput& out, const TokenGrid& targets) {
  const std::size_t F = targets.frames;
  const std::size_t K = out.head_logits.size();
  const double f1 = static_cast<double>(F + 1);
  Tensor eos_row = slice_rows(out.stop_logits, F, F + 1);
  Tensor loss = scale(cross_entropy(eos_row, {1}), 1.0 / f1);
  if (F == 0) return loss;

  const double within = static_cast<double>(K + 1);
  std::vector<int> stop_targets(F, 0);
  Tensor lead_rows = slice_rows(out.stop_logits, 0, F);
  // cross_entropy returns a mean over rows; scale back up by F
  Tensor stop_term = scale(cross_entropy(lead_rows, stop_targets), static_cast<double>(F) / (within * f1));
  loss = add(loss, stop_term);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<int> tgt(F);
    for (std::size_t i = 0; i < F; ++i) tgt[i] = static_cast<int>(targets.at(i, k));
    loss = add(loss, scale(cross_entropy(out.head_logits[k], tgt),
                           static_cast<double>(F) / (within * f1)));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenerateOptions {
  std::size_t max_frames = 64;
  std::size_t top_k = 0;       // 0 = greedy
  std::uint64_t seed = 0;      // used only when top_k > 0
};

/// Frame-by-frame decoding; stops when the stop head fires or at max_frames.
/// Greedy decoding is deterministic.
inline TokenGrid generate(const Translator& model, const std::vector<int>& sentence,
                          const GenerateOptions& opts) {
  TokenGrid grid;
  grid.frames = 0;
  grid.tokens_per_frame = model.cfg.tokens_per_frame;
  Rng rng(opts.seed);
  const std::size_t cap = std::min<std::size_t>(opts.max_frames, model.cfg.max_frames);
  for (std::size_t step = 0; step <= cap; ++step) {
    Tensor hidden = model.frame_hiddens(sentence, grid);  // [(step+1) x D]
    Tensor last = slice_rows(hidden, grid.frames, grid.frames + 1);
    Tensor stop_logits = model.stop_head.forward(last);
    const bool stop = stop_logits[1] > stop_logits[0];
    if (stop || grid.frames >= cap) break;
    for (std::size_t k = 0; k < model.cfg.tokens_per_frame; ++k) {
      Tensor logits = model.heads[k].forward(last, model.cfg.head_chunks);  // [1 x vocab]
      std::size_t pick = 0;
      if (opts.top_k == 0) {
        for (std::size_t v = 1; v < model.cfg.vocab; ++v)
          if (logits[v] > logits[pick]) pick = v;
      } else {
        // restrict to the top_k logits, sample proportionally to softmax
        const std::size_t kk = std::min<std::size_t>(opts.top_k, model.cfg.vocab);
        std::vector<std::size_t> order(model.cfg.vocab);
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                          [&](std::size_t x, std::size_t y) { return logits[x] > logits[y]; });
        double mx = logits[order[0]], z = 0;
        std::vector<double> p(kk);
        for (std::size_t i = 0; i < kk; ++i) {
          p[i] = std::exp(logits[order[i]] - mx);
          z += p[i];
        }
        double u = rng.uniform() * z, acc = 0;
        pick = order[kk - 1];
        for (std::size_t i = 0; i < kk; ++i) {
          acc += p[i];
          if (u <= acc) {
            pick = order[i];
            break;
          }
        }
      }
      grid.indices.push_back(static_cast<std::uint32_t>(pick));
    }
    grid.frames += 1;
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TranslatorTrainResult {
  std::vector<double> losses;
  std::vector<double> token_accuracy;  // teacher-forced, one entry per eval
};

/// Teacher-forced token accuracy over a dataset (argmax across every frame
/// and head of every pair).
inline double token_accuracy(const Translator& model, const std::vector<TranslationPair>& data) {
  std::size_t correct = 0, total = 0;
  for (const TranslationPair& pair : data) {
    ForwardOutput out = model.forward_teacher_forced(pair.sentence, pair.tokens);
    for (std::size_t k = 0; k < out.head_logits.size(); ++k)
      for (std::size_t f = 0; f < pair.tokens.frames; ++f) {
        const double* row = out.head_logits[k].data().data() + f * model.cfg.vocab;
        std::size_t arg = 0;
        for (std::size_t v = 1; v < model.cfg.vocab; ++v)
          if (row[v] > row[arg]) arg = v;
        correct += (arg == pair.tokens.at(f, k)) ? 1 : 0;
        ++total;
      }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

inline TranslatorTrainResult train_translator(Translator& model,
                                              const std::vector<TranslationPair>& data,
                                              std::size_t steps, double lr,
                                              std::size_t eval_every = 0) {
  if (data.empty()) throw StateError("train_translator: empty dataset");
  NamedParams np = model.named_params();
  auto params = param_tensors(np);
  Adam opt(lr);
  Rng rng = Rng(model.cfg.seed).split(0x7a);
  TranslatorTrainResult res;
  res.losses.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    Tape tape;
    Tensor batch_loss = Tensor::scalar(0.0);
    for (std::size_t b = 0; b < model.cfg.batch; ++b) {
      const TranslationPair& pair = data[rng.uniform_index(data.size())];
      TokenGrid inputs = scheduled_sampling_corrupt(pair.tokens, model.cfg.sched_r, model.cfg.vocab, rng);
      ForwardOutput out = model.forward_teacher_forced(pair.sentence, inputs);
      batch_loss = add(batch_loss, translation_loss(out, pair.tokens));
    }
    batch_loss = scale(batch_loss, 1.0 / static_cast<double>(model.cfg.batch));
    res.losses.push_back(batch_loss.item());
    tape.backward(batch_loss);
    opt.step(params);
    if (eval_every > 0 && (step + 1) % eval_every == 0)
      res.token_accuracy.push_back(token_accuracy(model, data));
  }
  return res;
}

}  // namespace signvid::translator
