#!/usr/bin/env python3
"""Line-oriented JSON bridge between the qag C++ tools and HuggingFace models.

Usage: hf_bridge.py seq2seq

Each request is one JSON object on stdin, each reply one JSON object on
stdout with "ok": true|false. Library chatter goes to stderr.
"""

import copy
import json
import math
import os
import random
import sys

REPLY = os.fdopen(os.dup(sys.stdout.fileno()), "w", buffering=1)
sys.stdout = sys.stderr


def reply(obj):
    REPLY.write(json.dumps(obj) + "\n")
    REPLY.flush()


def finite_or_none(x):
    return x if x is not None and math.isfinite(x) else None


class Seq2Seq:
    def __init__(self):
        self.model = None
        self.tokenizer = None
        self.max_input_tokens = 512

    def load(self, msg):
        import torch
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        torch.set_num_threads(max(1, os.cpu_count() or 1))
        name = msg["model"]
        self.max_input_tokens = int(msg.get("max_input_tokens", 512))
        cache_dir = msg.get("cache_dir")
        if name == "tiny-random-t5":
            from transformers import ByT5Tokenizer, T5Config, T5ForConditionalGeneration

            torch.manual_seed(0)
            self.tokenizer = ByT5Tokenizer()
            config = T5Config(
                vocab_size=len(self.tokenizer),
                d_model=128,
                d_ff=256,
                d_kv=32,
                num_layers=2,
                num_decoder_layers=2,
                num_heads=4,
                decoder_start_token_id=self.tokenizer.pad_token_id,
                pad_token_id=self.tokenizer.pad_token_id,
                eos_token_id=self.tokenizer.eos_token_id,
            )
            self.model = T5ForConditionalGeneration(config)
        else:
            self.tokenizer = AutoTokenizer.from_pretrained(name, cache_dir=cache_dir)
            self.model = AutoModelForSeq2SeqLM.from_pretrained(name, cache_dir=cache_dir)
            if "<hl>" not in self.tokenizer.get_vocab():
                self.tokenizer.add_special_tokens({"additional_special_tokens": ["<hl>"]})
                self.model.resize_token_embeddings(len(self.tokenizer))
        self.model.eval()
        return {}

    def count_tokens(self, msg):
        return {"counts": [len(self.tokenizer(t).input_ids) for t in msg["texts"]]}

    def generate(self, msg):
        import torch

        results = []
        for index, req in enumerate(msg["requests"]):
            try:
                enc = self.tokenizer(
                    [req["input_text"]],
                    return_tensors="pt",
                    truncation=True,
                    max_length=self.max_input_tokens,
                )
                beams = int(req["num_beams"])
                n = int(req["num_return_sequences"])
                with torch.no_grad():
                    out = self.model.generate(
                        **enc,
                        max_new_tokens=int(req["max_output_tokens"]),
                        num_beams=beams,
                        num_return_sequences=n,
                        do_sample=False,
                        output_scores=True,
                        return_dict_in_generate=True,
                    )
                if beams > 1:
                    scores = out.sequences_scores.tolist()
                else:
                    trans = self.model.compute_transition_scores(
                        out.sequences, out.scores, normalize_logits=True
                    )
                    scores = [float(t[torch.isfinite(t)].sum()) for t in trans]
                texts = self.tokenizer.batch_decode(out.sequences, skip_special_tokens=True)
                pairs = sorted(zip(texts, scores), key=lambda p: -p[1])
                results.append({"outputs": [[t, float(s)] for t, s in pairs]})
            except Exception as e:  # noqa: BLE001
                return {"ok": False, "error": str(e), "index": index}
        return {"results": results}

    def _batches(self, examples, batch_size, rng):
        order = list(range(len(examples)))
        rng.shuffle(order)
        for i in range(0, len(order), batch_size):
            yield [examples[k] for k in order[i : i + batch_size]]

    def _loss(self, batch, max_output, label_smoothing):
        import torch

        enc = self.tokenizer(
            [b[0] for b in batch],
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self.max_input_tokens,
        )
        labels = self.tokenizer(
            [b[1] for b in batch],
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=max_output,
        ).input_ids
        labels[labels == self.tokenizer.pad_token_id] = -100
        logits = self.model(**enc, labels=labels).logits
        return torch.nn.functional.cross_entropy(
            logits.view(-1, logits.size(-1)),
            labels.view(-1),
            ignore_index=-100,
            label_smoothing=label_smoothing,
        )

    def train(self, msg):
        import torch

        seed = int(msg["seed"])
        random.seed(seed)
        torch.manual_seed(seed)
        rng = random.Random(seed)
        train = msg["train"]
        validation = msg.get("validation") or []
        max_output = int(msg["max_output_tokens"])
        ls = float(msg["label_smoothing"])
        opt = torch.optim.AdamW(self.model.parameters(), lr=float(msg["learning_rate"]))
        epoch_losses, val_losses = [], []
        best, best_epoch = None, None
        for epoch in range(int(msg["epochs"])):
            self.model.train()
            total, count = 0.0, 0
            for batch in self._batches(train, int(msg["batch_size"]), rng):
                loss = self._loss(batch, max_output, ls)
                if not torch.isfinite(loss):
                    epoch_losses.append(None)
                    return {"epoch_losses": epoch_losses, "validation_losses": val_losses,
                            "best_epoch": best_epoch}
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(batch)
                count += len(batch)
            epoch_losses.append(finite_or_none(total / max(count, 1)))
            if validation:
                self.model.eval()
                vt, vc = 0.0, 0
                with torch.no_grad():
                    for batch in self._batches(validation, int(msg["batch_size"]), random.Random(0)):
                        vt += float(self._loss(batch, max_output, 0.0)) * len(batch)
                        vc += len(batch)
                v = vt / max(vc, 1)
                val_losses.append(finite_or_none(v))
                if best is None or v < best[0]:
                    best = (v, copy.deepcopy(self.model.state_dict()))
                    best_epoch = epoch
            print(f"epoch {epoch} loss {epoch_losses[-1]}", file=sys.stderr)
        if best is not None:
            self.model.load_state_dict(best[1])
        self.model.eval()
        return {"epoch_losses": epoch_losses, "validation_losses": val_losses,
                "best_epoch": best_epoch}

    def save(self, msg):
        os.makedirs(msg["path"], exist_ok=True)
        self.model.save_pretrained(msg["path"])
        self.tokenizer.save_pretrained(msg["path"])
        return {}


def main():
    if len(sys.argv) < 2 or sys.argv[1] != "seq2seq":
        print("usage: hf_bridge.py seq2seq", file=sys.stderr)
        return 2
    server = Seq2Seq()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            handler = getattr(server, msg["op"], None)
            if handler is None or msg["op"].startswith("_"):
                raise ValueError("unknown op " + str(msg["op"]))
            out = handler(msg)
            if "ok" not in out:
                out["ok"] = True
            reply(out)
        except Exception as e:  # noqa: BLE001
            reply({"ok": False, "error": f"{type(e).__name__}: {e}"})
    return 0


if __name__ == "__main__":
    sys.exit(main())
