#!/usr/bin/env python3
"""Write a GPT-2 checkpoint in the layout `memhop` loads.

    python scripts/convert_checkpoint.py gpt2 /models/gpt2-small
    python scripts/convert_checkpoint.py /path/to/hf/snapshot /models/gpt2-small

SOURCE is anything `transformers` can open (hub id or local directory,
PyTorch or safetensors weights). The output directory gets:

  model.safetensors  f32 tensors named as in GPT2Model (wte.weight,
                     h.{i}.attn.c_attn.weight, ln_f.bias, ...); Conv1D
                     weights keep their (in, out) layout; lm_head.weight is
                     written only when it is not tied to wte
  config.json        n_layer, n_head, n_embd, n_inner, n_positions,
                     vocab_size, layer_norm_epsilon
  vocab.json, merges.txt

Then: MEMHOP_MODEL_DIR=/models/gpt2-small cargo test --release --test acceptance
"""

import argparse
import json
import os
import shutil

import torch
from safetensors.torch import save_file
from transformers import GPT2LMHeadModel


def fetch(source: str, name: str, out: str) -> bool:
    if os.path.isdir(source):
        path = os.path.join(source, name)
        if not os.path.isfile(path):
            return False
    else:
        from huggingface_hub import hf_hub_download

        try:
            path = hf_hub_download(source, name)
        except Exception:
            return False
    shutil.copyfile(path, os.path.join(out, name))
    return True


def convert(source: str, out: str) -> None:
    model = GPT2LMHeadModel.from_pretrained(source, torch_dtype=torch.float32)
    model.eval()
    cfg = model.config
    state = model.transformer.state_dict()
    tensors = {
        name: t.detach().to(torch.float32).contiguous()
        for name, t in state.items()
        # causal-mask buffers, not weights
        if not name.endswith(".attn.bias") and not name.endswith(".attn.masked_bias")
    }
    lm_head = model.lm_head.weight.detach().to(torch.float32)
    if not torch.equal(lm_head, tensors["wte.weight"]):
        tensors["lm_head.weight"] = lm_head.contiguous()

    os.makedirs(out, exist_ok=True)
    save_file(tensors, os.path.join(out, "model.safetensors"), metadata={"format": "pt"})
    config = {
        "n_layer": cfg.n_layer,
        "n_head": cfg.n_head,
        "n_embd": cfg.n_embd,
        "n_inner": cfg.n_inner or 4 * cfg.n_embd,
        "n_positions": cfg.n_positions,
        "vocab_size": cfg.vocab_size,
        "layer_norm_epsilon": cfg.layer_norm_epsilon,
        "activation_function": cfg.activation_function,
    }
    with open(os.path.join(out, "config.json"), "w") as f:
        json.dump(config, f, indent=2)
    copied = [name for name in ("vocab.json", "merges.txt") if fetch(source, name, out)]
    if len(copied) < 2:
        print("no vocab.json/merges.txt at source; the bundled GPT-2 vocabulary will be used")
    n_params = sum(t.numel() for t in tensors.values())
    print(f"wrote {len(tensors)} tensors ({n_params / 1e6:.1f}M parameters) to {out}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("source")
    parser.add_argument("out")
    args = parser.parse_args()
    convert(args.source, args.out)


if __name__ == "__main__":
    main()
