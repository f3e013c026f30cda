#!/usr/bin/env python3
"""Regenerate the reference fixtures used by the Rust test suite.

Produces, under crates/core/tests/fixtures/:

  tokenizer_reference.json   token ids from the Hugging Face GPT-2 tokenizer
                             for a fixed list of strings, using the vocabulary
                             shipped in crates/core/assets/gpt2/
  tiny_gpt2/model.safetensors, config.json, expected.json
                             a tiny randomly initialised GPT-2 (HF GPT2Model,
                             standard tensor names) plus activations recorded
                             with forward hooks

Requires: torch, transformers, safetensors (all CPU).
"""

import json
import os

import torch
from safetensors.torch import save_file
from transformers import GPT2Config, GPT2Model, GPT2Tokenizer

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "crates", "core", "tests", "fixtures")

TOKENIZER_STRINGS = [
    "",
    "a",
    " Australia",
    "Australia",
    " Obama",
    "Obama",
    " Maryland",
    " Odin",
    " slavery",
    " Seattle",
    " Himalayan",
    " Revolutionary War",
    " Dutch",
    "The Great Barrier Reef is located off the coast of",
    "The largest coral reef system in the world is located off the coast of",
    "Barack Obama was a member of the",
    "The God of Thunder is the son of",
    " The Great Barrier Reef",
    " Thor",
    " Abraham Lincoln",
    " Bill Gates",
    " Mount Everest",
    "The country of citizenship of the director of Lilli's Marriage is",
    "The place of birth of Dušan Hanák is",
    "The employer of Éric Rohmer is",
    " Cahiers du cinéma",
    "it's we're they've I'm you'll he'd",
    "Hello  world\n\nfoo   bar ",
    "   leading spaces",
    "trailing spaces   ",
    "tabs\tand\r\nnewlines\n",
    "numbers 12345 and 3.14159",
    "punctuation!!! ??? ... --- (parens) [brackets]",
    "émojis 😀🎉 and CJK 日本語",
    "mixed nbsp",
    "<|endoftext|>",
    "x" * 64,
    "Supercalifragilisticexpialidocious antidisestablishmentarianism",
]


def tokenizer_fixture():
    tok = GPT2Tokenizer(
        os.path.join(ROOT, "crates", "core", "assets", "gpt2", "vocab.json"),
        os.path.join(ROOT, "crates", "core", "assets", "gpt2", "merges.txt"),
    )
    cases = []
    for s in TOKENIZER_STRINGS:
        # split_special_tokens keeps "<|endoftext|>" as plain text, which is
        # what the Rust encoder does.
        ids = tok.encode(s, split_special_tokens=True)
        cases.append({"text": s, "ids": ids})
    with open(os.path.join(FIXTURES, "tokenizer_reference.json"), "w", encoding="utf-8") as f:
        json.dump({"vocab_size": len(tok), "cases": cases}, f, ensure_ascii=False, indent=1)


def tiny_model_fixture():
    torch.manual_seed(1234)
    cfg = GPT2Config(
        vocab_size=11,
        n_positions=16,
        n_embd=8,
        n_layer=2,
        n_head=2,
        n_inner=16,
        activation_function="gelu_new",
        layer_norm_epsilon=1e-5,
        attn_implementation="eager",
    )
    model = GPT2Model(cfg).eval()
    # Default init (std 0.02) makes every activation nearly zero; widen it so
    # the fixture actually exercises each term.
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("ln_1.weight") or name.endswith("ln_2.weight") or name == "ln_f.weight":
                p.copy_(1.0 + 0.3 * torch.randn_like(p))
            else:
                p.copy_(0.5 * torch.randn_like(p))

    records = {}

    def keep(key):
        def hook(_module, _inp, out):
            t = out[0] if isinstance(out, tuple) else out
            records[key] = t.detach()[0].tolist()

        return hook

    for i, block in enumerate(model.h):
        block.attn.register_forward_hook(keep(f"attn_out.{i}"))
        block.mlp.register_forward_hook(keep(f"mlp_out.{i}"))
        block.register_forward_hook(keep(f"resid_post.{i}"))

    sequences = [[3], [1, 4, 1, 5, 9], [0, 10, 2], [7, 7, 7, 7]]
    cases = []
    for seq in sequences:
        records.clear()
        ids = torch.tensor([seq])
        with torch.no_grad():
            out = model(ids, output_attentions=True, output_hidden_states=True)
            final = out.last_hidden_state[0]
            logits = final @ model.wte.weight.T
        cases.append(
            {
                "tokens": seq,
                "embed": out.hidden_states[0][0].tolist(),
                "attn_out": [records[f"attn_out.{i}"] for i in range(cfg.n_layer)],
                "mlp_out": [records[f"mlp_out.{i}"] for i in range(cfg.n_layer)],
                "resid_post": [records[f"resid_post.{i}"] for i in range(cfg.n_layer)],
                "patterns": [a[0].tolist() for a in out.attentions],
                "logits": logits.tolist(),
            }
        )

    out_dir = os.path.join(FIXTURES, "tiny_gpt2")
    os.makedirs(out_dir, exist_ok=True)
    state = {k: v.contiguous() for k, v in model.state_dict().items()}
    save_file(state, os.path.join(out_dir, "model.safetensors"))
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(
            {
                "model_type": "gpt2",
                "vocab_size": cfg.vocab_size,
                "n_positions": cfg.n_positions,
                "n_embd": cfg.n_embd,
                "n_layer": cfg.n_layer,
                "n_head": cfg.n_head,
                "n_inner": cfg.n_inner,
                "layer_norm_epsilon": cfg.layer_norm_epsilon,
            },
            f,
            indent=2,
        )
    with open(os.path.join(out_dir, "expected.json"), "w") as f:
        json.dump({"cases": cases}, f)


if __name__ == "__main__":
    os.makedirs(FIXTURES, exist_ok=True)
    tokenizer_fixture()
    tiny_model_fixture()
    print("fixtures written to", FIXTURES)
