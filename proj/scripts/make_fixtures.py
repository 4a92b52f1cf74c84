#!/usr/bin/env python3
"""Builds every committed test fixture under tests/fixtures/.

Outputs:
  tiny_gpt2/   trained GPT-2-style checkpoint in the canonical weight format,
               tokenizer (vocab.json + merges.txt), reference ids/logits/logprobs
  tiny_llama/  random rotary/SiLU-gated checkpoint + reference outputs
  blimp_toy/   English-like minimal-pair benchmark (BLiMP JSONL layout)
  multi/<lang>/ toy-language benchmarks
  lexicon.tsv, annotations.jsonl   lexical-substitution control inputs
  features.csv, distances.csv      typology vectors and precomputed distances

Requires torch, transformers, tokenizers, safetensors. Deterministic for a
fixed --seed on a single CPU thread.
"""

import argparse
import collections
import hashlib
import json
import math
import os
import random
import sys
import time

import numpy as np
import torch
from safetensors.numpy import save_file
from tokenizers import ByteLevelBPETokenizer
from transformers import GPT2Config, GPT2LMHeadModel, LlamaConfig, LlamaForCausalLM

sys.path.insert(0, os.path.dirname(__file__))
import grammar  # noqa: E402

BOS = "<|endoftext|>"


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def unique_pairs(fn, rng, n):
    pairs, seen = [], set()
    attempts = 0
    while len(pairs) < n:
        attempts += 1
        if attempts > n * 200:
            raise RuntimeError("cannot draw enough unique pairs")
        g, b = fn(rng)
        gs, bs = g.render(), b.render()
        if gs == bs or gs in seen:
            continue
        seen.add(gs)
        pairs.append((g, b))
    return pairs


def build_benchmark(outdir, phenomena, n_pairs, rng, annotate=None, language="en"):
    os.makedirs(outdir, exist_ok=True)
    categories = {}
    for uid, category, fn in phenomena:
        pairs = unique_pairs(fn, rng, n_pairs)
        rows = []
        for i, (g, b) in enumerate(pairs):
            rows.append({
                "sentence_good": g.render(),
                "sentence_bad": b.render(),
                "field": "syntax",
                "linguistics_term": category,
                "UID": uid,
                "pairID": str(i),
            })
            if annotate is not None:
                annotate(uid, str(i), g)
        write_jsonl(os.path.join(outdir, f"{uid}.jsonl"), rows)
        categories[uid] = category
    with open(os.path.join(outdir, "categories.json"), "w") as fh:
        json.dump({"language": language, "categories": categories}, fh, indent=2, sort_keys=True)
        fh.write("\n")


class HubTokenizer:
    """Reloads the saved vocab/merges so ids come from the reference library."""

    def __init__(self, vocab, merges):
        self.impl = ByteLevelBPETokenizer(vocab, merges)

    def __len__(self):
        return self.impl.get_vocab_size()

    def encode(self, text):
        return self.impl.encode(text).ids

    def convert_tokens_to_ids(self, token):
        return self.impl.token_to_id(token)


def train_tokenizer(corpus, outdir, vocab_size):
    tok = ByteLevelBPETokenizer()
    tok.train_from_iterator(corpus, vocab_size=vocab_size, min_frequency=2,
                            special_tokens=[BOS], show_progress=False)
    os.makedirs(outdir, exist_ok=True)
    tok.save_model(outdir)
    return HubTokenizer(os.path.join(outdir, "vocab.json"),
                        os.path.join(outdir, "merges.txt"))


def encode_batch(tok, sentences, bos_id, max_len):
    # BOS doubles as the end-of-text target.
    seqs = [[bos_id] + tok.encode(s) + [bos_id] for s in sentences]
    width = max(len(s) for s in seqs)
    assert width <= max_len
    ids = torch.full((len(seqs), width), bos_id, dtype=torch.long)
    labels = torch.full((len(seqs), width), -100, dtype=torch.long)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = torch.tensor(s)
        labels[i, 1:len(s)] = torch.tensor(s[1:])
    return ids, labels


def train_gpt2(tok, corpus, args):
    bos_id = tok.convert_tokens_to_ids(BOS)
    cfg = GPT2Config(vocab_size=len(tok), n_positions=args.max_positions,
                     n_embd=args.hidden, n_layer=args.layers, n_head=args.heads,
                     resid_pdrop=0.0, embd_pdrop=0.0, attn_pdrop=0.0,
                     layer_norm_epsilon=1e-5, bos_token_id=bos_id,
                     eos_token_id=bos_id, activation_function="gelu_new")
    model = GPT2LMHeadModel(cfg)
    opt = torch.optim.AdamW(model.parameters(), lr=args.lr, weight_decay=0.01)
    sched = torch.optim.lr_scheduler.OneCycleLR(opt, max_lr=args.lr,
                                                total_steps=args.steps,
                                                pct_start=0.05)
    rng = random.Random(args.seed + 1)
    model.train()
    start = time.time()
    for step in range(args.steps):
        batch = [corpus[rng.randrange(len(corpus))] for _ in range(args.batch)]
        ids, labels = encode_batch(tok, batch, bos_id, args.max_positions)
        out = model(input_ids=ids, labels=labels)
        opt.zero_grad()
        out.loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
        opt.step()
        sched.step()
        if step % 200 == 0 or step == args.steps - 1:
            print(f"step {step:5d} loss {out.loss.item():.4f} "
                  f"({time.time() - start:.0f}s)", flush=True)
    model.eval()
    return model


def f32(t):
    return t.detach().to(torch.float32).contiguous().numpy()


def export_gpt2(model, path):
    cfg = model.config
    sd = model.state_dict()
    h = cfg.n_embd
    tensors = {
        "tok_embed.weight": f32(sd["transformer.wte.weight"]),
        "pos_embed.weight": f32(sd["transformer.wpe.weight"]),
        "final_norm.weight": f32(sd["transformer.ln_f.weight"]),
        "final_norm.bias": f32(sd["transformer.ln_f.bias"]),
        "lm_head.weight": f32(sd["lm_head.weight"]),
    }
    for i in range(cfg.n_layer):
        p = f"transformer.h.{i}."
        q = f"layers.{i}."
        tensors[q + "attn_norm.weight"] = f32(sd[p + "ln_1.weight"])
        tensors[q + "attn_norm.bias"] = f32(sd[p + "ln_1.bias"])
        tensors[q + "mlp_norm.weight"] = f32(sd[p + "ln_2.weight"])
        tensors[q + "mlp_norm.bias"] = f32(sd[p + "ln_2.bias"])
        # GPT-2 Conv1D stores [in, out]; the canonical layout is [out, in].
        w = sd[p + "attn.c_attn.weight"].T
        b = sd[p + "attn.c_attn.bias"]
        for j, name in enumerate(["q_proj", "k_proj", "v_proj"]):
            tensors[q + f"attn.{name}.weight"] = f32(w[j * h:(j + 1) * h])
            tensors[q + f"attn.{name}.bias"] = f32(b[j * h:(j + 1) * h])
        tensors[q + "attn.o_proj.weight"] = f32(sd[p + "attn.c_proj.weight"].T)
        tensors[q + "attn.o_proj.bias"] = f32(sd[p + "attn.c_proj.bias"])
        tensors[q + "mlp.up_proj.weight"] = f32(sd[p + "mlp.c_fc.weight"].T)
        tensors[q + "mlp.up_proj.bias"] = f32(sd[p + "mlp.c_fc.bias"])
        tensors[q + "mlp.down_proj.weight"] = f32(sd[p + "mlp.c_proj.weight"].T)
        tensors[q + "mlp.down_proj.bias"] = f32(sd[p + "mlp.c_proj.bias"])
    config = {
        "architecture": "gpt2",
        "n_layers": cfg.n_layer,
        "hidden": cfg.n_embd,
        "n_heads": cfg.n_head,
        "intermediate": 4 * cfg.n_embd,
        "vocab_size": cfg.vocab_size,
        "max_positions": cfg.n_positions,
        "layernorm_epsilon": cfg.layer_norm_epsilon,
        "activation": "gelu",
        "position_scheme": "learned-absolute",
        "norm_scheme": "pre-norm",
        "norm_type": "layernorm",
        "rope_theta": 10000.0,
        "bos_token_id": cfg.bos_token_id,
        "use_bias": True,
    }
    save_canonical(tensors, config, path)


def export_llama(model, path):
    cfg = model.config
    sd = model.state_dict()
    tensors = {
        "tok_embed.weight": f32(sd["model.embed_tokens.weight"]),
        "final_norm.weight": f32(sd["model.norm.weight"]),
        "lm_head.weight": f32(sd["lm_head.weight"]),
    }
    for i in range(cfg.num_hidden_layers):
        p = f"model.layers.{i}."
        q = f"layers.{i}."
        tensors[q + "attn_norm.weight"] = f32(sd[p + "input_layernorm.weight"])
        tensors[q + "mlp_norm.weight"] = f32(sd[p + "post_attention_layernorm.weight"])
        for name in ["q_proj", "k_proj", "v_proj", "o_proj"]:
            tensors[q + f"attn.{name}.weight"] = f32(sd[p + f"self_attn.{name}.weight"])
        for name in ["gate_proj", "up_proj", "down_proj"]:
            tensors[q + f"mlp.{name}.weight"] = f32(sd[p + f"mlp.{name}.weight"])
    config = {
        "architecture": "llama",
        "n_layers": cfg.num_hidden_layers,
        "hidden": cfg.hidden_size,
        "n_heads": cfg.num_attention_heads,
        "intermediate": cfg.intermediate_size,
        "vocab_size": cfg.vocab_size,
        "max_positions": cfg.max_position_embeddings,
        "layernorm_epsilon": cfg.rms_norm_eps,
        "activation": "silu-gated",
        "position_scheme": "rotary",
        "norm_scheme": "pre-norm",
        "norm_type": "rmsnorm",
        "rope_theta": float(getattr(cfg, "rope_theta", None)
                            or cfg.rope_parameters["rope_theta"]),
        "bos_token_id": cfg.bos_token_id,
        "use_bias": False,
    }
    save_canonical(tensors, config, path)


def save_canonical(tensors, config, path):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    metadata = {
        "format": "synloc-weights",
        "version": "1",
        "config": json.dumps(config, sort_keys=True),
    }
    # name order in the header is sorted by safetensors itself
    save_file(tensors, path, metadata=metadata)


REFERENCE_SENTENCES = [
    "The dogs near the tree sleep.",
    "The dog near the trees sleeps.",
    "These women find this small waiter.",
    "The boy sees himself.",
    "The girls that like the book run.",
    "A book breaks those windows.",
    "Lo nuz dodima lo tus.",
    "Ka ren sunoret.",
    "Di duz liloko di ked.",
    "it's 42 o'clock, we'll see!",
    "Über naïve café",
    "東京 🚀  end",
    "x",
]


def reference_outputs(model, tok, bos_id, outdir):
    os.makedirs(outdir, exist_ok=True)
    logits = {}
    rows = []
    for i, text in enumerate(REFERENCE_SENTENCES):
        ids = tok.encode(text)
        full = torch.tensor([[bos_id] + ids])
        with torch.no_grad():
            out = model(input_ids=full).logits[0].to(torch.float64)
        logp = torch.log_softmax(out, dim=-1)
        total = sum(logp[t - 1, full[0, t]].item() for t in range(1, full.shape[1]))
        logits[f"sentence.{i}"] = out.to(torch.float32).numpy()
        rows.append({"index": i, "text": text, "ids": ids, "logprob": total})
    save_file(logits, os.path.join(outdir, "logits.safetensors"))
    with open(os.path.join(outdir, "sentences.json"), "w", encoding="utf-8") as fh:
        json.dump({"bos_token_id": bos_id, "sentences": rows}, fh,
                  ensure_ascii=False, indent=1)
        fh.write("\n")


def zipf(count, total):
    return math.log10(count / total * 1e9)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..",
                                                  "tests", "fixtures"))
    ap.add_argument("--seed", type=int, default=1234)
    ap.add_argument("--corpus", type=int, default=240000)
    ap.add_argument("--pairs", type=int, default=600)
    ap.add_argument("--toy-pairs", type=int, default=300)
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--layers", type=int, default=8)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--max-positions", type=int, default=64)
    ap.add_argument("--vocab", type=int, default=1024)
    ap.add_argument("--noise", type=float, default=0.1,
                    help="share of ungrammatical training documents")
    ap.add_argument("--followup", type=float, default=0.5,
                    help="chance a grammatical document continues")
    args = ap.parse_args()

    torch.set_num_threads(1)
    torch.manual_seed(args.seed)
    rng = random.Random(args.seed)
    out = os.path.abspath(args.out)
    os.makedirs(out, exist_ok=True)

    # Training corpus: English-like 70%, toy languages 10% each. A document is
    # one sentence, optionally followed by a pronoun sentence about its
    # subject, then the end-of-text token. A small share of documents is an
    # ungrammatical sentence (the bad side of a random minimal pair) that
    # never continues, so the state at the final period has to register both
    # the subject's features and whether the sentence was well formed.
    corpus = []
    for _ in range(args.corpus):
        r = rng.random()
        if r < 0.7:
            builders = [fn for _, _, fn in grammar.EN_PHENOMENA]
            sentence, followup = grammar.en_sentence, grammar.en_followup
        else:
            lang = grammar.TOY_LANGUAGES[min(2, int((r - 0.7) / 0.1))]
            builders = [fn for _, _, fn in lang.phenomena()]
            sentence, followup = lang.sentence, lang.followup
        if rng.random() < args.noise:
            corpus.append(rng.choice(builders)(rng)[1].render())
            continue
        s = sentence(rng)
        text = s.render()
        if rng.random() < args.followup:
            text += " " + followup(rng, s.topic).render()
        corpus.append(text)

    # Benchmarks and lexical-control annotations.
    words = collections.Counter(w.strip(".") for s in corpus for w in s.split())
    total = sum(words.values())
    annotations = []

    def annotate(uid, pair_id, sent):
        for pos in ("noun", "verb"):
            span = sent.first_span(pos)
            if span is None:
                continue
            start, end, surface = span
            count = words.get(surface.lower(), 0) or words.get(surface, 1)
            annotations.append({
                "pair_id": f"{uid}/{pair_id}", "span_start": start,
                "span_end": end, "pos": pos,
                "zipf": round(zipf(count, total), 4), "length": len(surface),
            })

    build_benchmark(os.path.join(out, "blimp_toy"), grammar.EN_PHENOMENA,
                    args.pairs, random.Random(args.seed + 10), annotate)
    write_jsonl(os.path.join(out, "annotations.jsonl"), annotations)
    for lang in grammar.TOY_LANGUAGES:
        build_benchmark(os.path.join(out, "multi", lang.code), lang.phenomena(),
                        args.toy_pairs, random.Random(args.seed + lang.seed),
                        language=lang.code)

    with open(os.path.join(out, "lexicon.tsv"), "w", encoding="utf-8") as fh:
        fh.write("lemma\tpos\tzipf\tlength\n")
        extra = {"noun": ["giraffe", "pebble", "lantern", "ox", "violin"],
                 "verb": ["dances", "whistles", "juggles", "nods", "hums"]}
        for pos, forms in (("noun", grammar.en_nouns()), ("verb", grammar.en_verbs())):
            for w in forms:
                fh.write(f"{w}\t{pos}\t{zipf(words.get(w, 1), total):.4f}\t{len(w)}\n")
            for w in extra[pos]:
                fh.write(f"{w}\t{pos}\t{zipf(3, total):.4f}\t{len(w)}\n")

    # Typology vectors: four modelled languages plus languages without
    # benchmarks, one incomplete and one duplicating qaa's vector.
    feats = dict(grammar.FEATURES)
    feats["qad"] = [1, 0, "--", 0, 1, 0, 1, 0]
    feats["qae"] = list(grammar.FEATURES["qaa"])
    with open(os.path.join(out, "features.csv"), "w") as fh:
        fh.write("lang," + ",".join(grammar.FEATURE_NAMES) + "\n")
        for code in sorted(feats):
            fh.write(code + "," + ",".join(str(v) for v in feats[code]) + "\n")
    with open(os.path.join(out, "distances.csv"), "w") as fh:
        fh.write("lang_a,lang_b,distance\n")
        complete = sorted(c for c, v in feats.items() if "--" not in v)
        for i, a in enumerate(complete):
            for b in complete[i + 1:]:
                va = np.array(feats[a], float)
                vb = np.array(feats[b], float)
                d = 1.0 - va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb))
                if (a, b) == ("qab", "qac"):
                    d = 0.0  # injected placeholder artifact
                fh.write(f"{a},{b},{d:.17g}\n")

    # Tokenizer and model.
    tok = train_tokenizer(corpus, os.path.join(out, "tokenizer"), args.vocab)
    bos_id = tok.convert_tokens_to_ids(BOS)
    print(f"vocab {len(tok)} bos {bos_id}", flush=True)

    model = train_gpt2(tok, corpus, args)
    export_gpt2(model, os.path.join(out, "tiny_gpt2", "model.safetensors"))
    reference_outputs(model, tok, bos_id, os.path.join(out, "tiny_gpt2", "reference"))

    torch.manual_seed(args.seed + 2)
    lcfg = LlamaConfig(vocab_size=len(tok), hidden_size=64, intermediate_size=160,
                       num_hidden_layers=2, num_attention_heads=4,
                       num_key_value_heads=4, max_position_embeddings=64,
                       rms_norm_eps=1e-5, initializer_range=0.1,
                       tie_word_embeddings=False, bos_token_id=bos_id,
                       eos_token_id=bos_id, attention_bias=False, mlp_bias=False)
    llama = LlamaForCausalLM(lcfg).eval()
    with torch.no_grad():
        for name, p in llama.named_parameters():
            if name.endswith("norm.weight"):
                p.uniform_(0.5, 1.5)
    export_llama(llama, os.path.join(out, "tiny_llama", "model.safetensors"))
    reference_outputs(llama, tok, bos_id, os.path.join(out, "tiny_llama", "reference"))

    digests = {}
    for root, _, files in os.walk(out):
        for f in sorted(files):
            p = os.path.join(root, f)
            with open(p, "rb") as fh:
                digests[os.path.relpath(p, out)] = hashlib.sha256(fh.read()).hexdigest()
    with open(os.path.join(out, "DIGESTS.json"), "w") as fh:
        digests.pop("DIGESTS.json", None)
        json.dump(dict(sorted(digests.items())), fh, indent=1)
        fh.write("\n")
    print("done", flush=True)


if __name__ == "__main__":
    main()
