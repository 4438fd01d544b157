"""Command-line pipeline with file-based stage handoffs.

Every command is a pure function of (config file, input artifact bytes,
seed): artifact names are fixed inside the output directory, writes are
atomic, and each command records a provenance JSON with the content
hashes of everything it read and wrote.  Commands that consume artifacts
verify those hashes and refuse mismatched inputs.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 provenance
hash mismatch.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import zlib

import numpy as np

from . import __version__, storage
from .attention import (
    AttentionParams,
    TrainConfig,
    evaluate,
    iterations_to_within,
    load_attention,
    save_attention,
    train,
    write_metrics_csv,
)
from .avp import MaskedLinearAvp, avp_train, load_avp, save_avp
from .boed import (
    EpeMap,
    epe_map,
    export_heatmap,
    load_records,
    make_supervision_set,
    save_records,
)
from .completion import CompletionParams, RetrievalCompleter, load_pca_bank, pca_fit, save_pca_bank
from .core import ArtifactHashError, ConfigError, EMPTY_HISTORY, SeededRng
from .optim import AdamState
from .storage import BankImageStore
from .world import WorldConfig, build_world, load_dataset, load_world, sample_dataset, save_dataset, save_world

DEFAULTS = {
    "seed": 0,
    "out": None,
    "world": {
        "k": 10, "m": 4, "h": 32, "w": 32, "g": 8, "s": 4,
        "blobs": 3, "blob_size": 5, "jitter": 1, "noise": 0.02,
        "confuser": None,
        "splits": {"avp_train": 2000, "avp_val": 400, "bank": 2000,
                   "train": 2000, "val": 400},
    },
    "avp": {"epochs": 20, "batch": 64, "lr": 1e-3, "t": 5},
    "pca": {"dim": 64, "flip": False},
    "boed": {
        "n": 200, "k1": 1000, "k2": 200,
        "sigma_p": 80.0 / 255.0, "sigma_q": "adaptive",
        "schedule": "fixed", "resampling": "multinomial",
        "count": 400, "t": 5, "handcrafted": None, "keep_maps": False,
    },
    "attention": {
        "t": 5, "batch": 64, "lr": 1e-3, "epochs": 60,
        "sup_fraction": 0.5, "baseline_weight": 1.0,
        "eval_every": 1, "eval_episodes": 4,
        "d_e": 32, "d_h": 64,
        "reinforce_through_core": False,
        "pretrain_epochs": 0, "freeze_after_pretrain": False,
    },
}

# stage constants XORed into the global seed so stages draw independent streams
STAGE_SEEDS = {
    "world-gen": 0x1,
    "avp-train": 0x2A57,
    "pca-fit": 0x9CA0,
    "annotate": 0xA770,
    "attn-train": 0x7124,
    "eval": 0xE7A1,
    "heatmap": 0x8EA7,
}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    cfg = {}
    for key, default in DEFAULTS.items():
        if isinstance(default, dict):
            section = dict(default)
            user = raw.get(key, {})
            if not isinstance(user, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            unknown = set(user) - set(default)
            if unknown:
                raise ConfigError(f"unknown keys in section {key!r}: {sorted(unknown)}")
            section.update(user)
            cfg[key] = section
        else:
            cfg[key] = raw.get(key, default)
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    return cfg


class Workspace:
    """Output directory plus provenance bookkeeping for one command."""

    def __init__(self, out_dir, config_path, seed, command):
        self.dir = os.fspath(out_dir)
        if not os.path.isdir(self.dir):
            raise OSError(f"output directory {self.dir!r} does not exist")
        self.seed = seed
        self.command = command
        self.inputs = {}
        if config_path is not None:
            self.inputs["__config__"] = storage.sha256_file(config_path)
        self.outputs = []

    def path(self, name):
        return os.path.join(self.dir, name)

    def read_input(self, name):
        """Register an input artifact (hash + chain verification)."""
        p = self.path(name)
        if not os.path.exists(p):
            raise OSError(f"missing upstream artifact {p!r}")
        self.inputs[name] = storage.sha256_file(p)
        self._verify_chain(name, self.inputs[name])
        return p

    def _verify_chain(self, name, current_hash):
        for prov_path in sorted(glob.glob(os.path.join(self.dir, "*.prov.json"))):
            with open(prov_path) as fh:
                prov = json.load(fh)
            recorded = prov.get("outputs", {}).get(name)
            if recorded is None:
                continue
            if recorded != current_hash:
                raise ArtifactHashError(
                    f"{name}: bytes differ from the hash recorded in {os.path.basename(prov_path)}"
                )
            for up_name, up_hash in prov.get("inputs", {}).items():
                if up_name == "__config__":
                    continue
                up_path = self.path(up_name)
                if os.path.exists(up_path) and storage.sha256_file(up_path) != up_hash:
                    raise ArtifactHashError(
                        f"{up_name}: upstream bytes changed since {name} was produced"
                    )

    def wrote(self, name):
        self.outputs.append(name)

    def finish(self, tag):
        prov = {
            "command": self.command,
            "version": __version__,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": {n: storage.sha256_file(self.path(n)) for n in self.outputs},
        }
        storage.atomic_write_text(self.path(f"{tag}.prov.json"), storage.canonical_json(prov))


def _stage_rng(seed, stage) -> SeededRng:
    return SeededRng(seed ^ STAGE_SEEDS[stage])


def _split_rng(seed, name) -> SeededRng:
    return SeededRng(seed ^ STAGE_SEEDS["world-gen"] ^ zlib.crc32(name.encode()))


def cmd_world_gen(cfg, ws):
    w = cfg["world"]
    wc = WorldConfig(k=w["k"], m=w["m"], h=w["h"], w=w["w"], g=w["g"], s=w["s"],
                     blobs=w["blobs"], blob_size=w["blob_size"], jitter=w["jitter"],
                     noise=w["noise"], confuser=w["confuser"], seed=ws.seed)
    world = build_world(wc)
    save_world(world, ws.path("world"))
    ws.wrote("world.glb")
    ws.wrote("world.json")
    for name, size in w["splits"].items():
        ds = sample_dataset(world, int(size), _split_rng(ws.seed, name), name)
        save_dataset(ds, ws.path(name), w["g"], w["s"])
        ws.wrote(f"{name}.glb")
        ws.wrote(f"{name}.json")
    ws.finish("world_gen")
    return 0


def cmd_avp_train(cfg, ws):
    ws.read_input("world.glb"); ws.read_input("world.json")
    ws.read_input("avp_train.glb"); ws.read_input("avp_train.json")
    ws.read_input("avp_val.glb"); ws.read_input("avp_val.json")
    world = load_world(ws.path("world"))
    train_ds = load_dataset(ws.path("avp_train"))
    val_ds = load_dataset(ws.path("avp_val"))
    a = cfg["avp"]
    model = MaskedLinearAvp(world.k, world.grid.h, world.grid.w)
    adam = AdamState.for_params(model.params(), lr=a["lr"])
    rng = _stage_rng(ws.seed, "avp-train")
    best, history = avp_train(model, train_ds, val_ds, a["t"], world.grid,
                              a["epochs"], a["batch"], adam, rng)
    save_avp(best, ws.path("avp.ckpt"))
    ws.wrote("avp.ckpt")
    rows = ["epoch,train_loss,val_xent"] + [
        f"{h['epoch']},{h['train_loss']!r},{h['val_xent']!r}" for h in history
    ]
    storage.atomic_write_text(ws.path("avp_metrics.csv"), "\n".join(rows) + "\n")
    ws.wrote("avp_metrics.csv")
    ws.finish("avp_train")
    return 0


def cmd_pca_fit(cfg, ws):
    ws.read_input("bank.glb"); ws.read_input("bank.json")
    images, _, _, _, _ = storage.read_bank(ws.path("bank.glb"))
    p = cfg["pca"]
    bank = pca_fit(images, p["dim"], flip=p["flip"])
    save_pca_bank(bank, ws.path("pca.bank"))
    ws.wrote("pca.bank")
    ws.finish("pca_fit")
    return 0


def _completion_params(cfg) -> CompletionParams:
    b = cfg["boed"]
    return CompletionParams(k1=b["k1"], k2=b["k2"], sigma_p=b["sigma_p"],
                            sigma_q=b["sigma_q"], schedule=b["schedule"],
                            resampling=b["resampling"])


def _load_boed_stack(cfg, ws):
    ws.read_input("avp.ckpt")
    ws.read_input("pca.bank")
    ws.read_input("bank.glb")
    avp = load_avp(ws.path("avp.ckpt"))
    bank = load_pca_bank(ws.path("pca.bank"))
    store = BankImageStore(ws.path("bank.glb"))
    completer = RetrievalCompleter(bank, store, _completion_params(cfg))
    return avp, completer


def cmd_annotate(cfg, ws, kind, workers):
    b = cfg["boed"]
    ws.read_input("world.glb"); ws.read_input("world.json")
    ws.read_input("train.glb"); ws.read_input("train.json")
    world = load_world(ws.path("world"))
    dataset = load_dataset(ws.path("train"))
    rng = _stage_rng(ws.seed, "annotate").derive(zlib.crc32(kind.encode()))

    if kind == "hgs":
        if not b["handcrafted"]:
            raise ConfigError("kind=hgs requires boed.handcrafted = [[gx,gy], ...]")
        records = make_supervision_set(dataset, "handcrafted", b["count"], b["t"],
                                       world.grid, fixed_locs=b["handcrafted"])
    elif kind in ("h1", "h5"):
        avp, completer = _load_boed_stack(cfg, ws)
        records = make_supervision_set(dataset, "heuristic", b["count"], b["t"],
                                       world.grid, avp=avp, completer=completer,
                                       n_completions=b["n"], rng=rng,
                                       inv_gamma=float(kind[1:]))
    elif kind == "nogs":
        avp, completer = _load_boed_stack(cfg, ws)
        records = make_supervision_set(dataset, "nogs", b["count"], b["t"],
                                       world.grid, avp=avp, completer=completer,
                                       n_completions=b["n"], rng=rng,
                                       keep_maps=b["keep_maps"], workers=workers)
    else:
        raise ConfigError(f"unknown annotation kind {kind!r}")

    save_records(records, ws.path(f"sup_{kind}.jsonl"))
    ws.wrote(f"sup_{kind}.jsonl")
    ws.finish(f"annotate_{kind}")
    return 0


METHOD_KINDS = {"ps-nogs": "nogs", "ps-h1": "h1", "ps-h5": "h5", "ps-hgs": "hgs"}


def cmd_attn_train(cfg, ws, method, sup_path):
    a = cfg["attention"]
    ws.read_input("world.glb"); ws.read_input("world.json")
    ws.read_input("train.glb"); ws.read_input("train.json")
    ws.read_input("val.glb"); ws.read_input("val.json")
    world = load_world(ws.path("world"))
    dataset = load_dataset(ws.path("train"))
    val = load_dataset(ws.path("val"))

    records = []
    if method == "ram":
        if sup_path:
            print("warning: method=ram ignores the supervision file", file=sys.stderr)
    else:
        if method not in METHOD_KINDS:
            raise ConfigError(f"unknown training method {method!r}")
        name = sup_path or f"sup_{METHOD_KINDS[method]}.jsonl"
        ws.read_input(name)
        records = load_records(ws.path(name), world.grid)

    tc = TrainConfig(t=a["t"], batch_size=a["batch"], lr=a["lr"], epochs=a["epochs"],
                     sup_fraction=a["sup_fraction"] if records else 0.0,
                     baseline_weight=a["baseline_weight"], eval_every=a["eval_every"],
                     eval_episodes=a["eval_episodes"],
                     reinforce_through_core=a["reinforce_through_core"],
                     pretrain_epochs=a["pretrain_epochs"],
                     freeze_after_pretrain=a["freeze_after_pretrain"])
    rng = _stage_rng(ws.seed, "attn-train").derive(zlib.crc32(method.encode()))
    params = AttentionParams.init_random(world.k, world.grid, a["d_e"], a["d_h"],
                                         rng.derive(0x1217))
    adam = AdamState.for_params(params.as_dict(), lr=a["lr"])
    params, result = train(params, dataset, records, tc, adam, rng, val_dataset=val)

    save_attention(params, ws.path(f"attn_{method}.ckpt"))
    ws.wrote(f"attn_{method}.ckpt")
    write_metrics_csv(result["rows"], ws.path(f"attn_{method}_metrics.csv"))
    ws.wrote(f"attn_{method}_metrics.csv")
    val_rows = [r for r in result["rows"] if r["split"] == "val"]
    best = max((r["accuracy"] for r in val_rows), default=float("nan"))
    summary = {
        "method": method,
        "iterations": result["iters"],
        "iters_to_within_1pct": iterations_to_within(result["rows"]) if val_rows else None,
        "best_val_accuracy": best,
        "final_val_accuracy": val_rows[-1]["accuracy"] if val_rows else None,
        "reinforce_batches": result["reinforce_batches"],
        "supervised_batches": result["supervised_batches"],
    }
    storage.atomic_write_text(ws.path(f"attn_{method}_summary.json"),
                              storage.canonical_json(summary))
    ws.wrote(f"attn_{method}_summary.json")
    ws.finish(f"attn_train_{method}")
    return 0


def cmd_eval(cfg, ws, method, split):
    a = cfg["attention"]
    ws.read_input(f"attn_{method}.ckpt")
    ws.read_input(f"{split}.glb"); ws.read_input(f"{split}.json")
    params = load_attention(ws.path(f"attn_{method}.ckpt"))
    dataset = load_dataset(ws.path(split))
    rng = _stage_rng(ws.seed, "eval").derive(zlib.crc32(f"{method}:{split}".encode()))
    res = evaluate(params, dataset, a["t"], rng, episodes=a["eval_episodes"])
    out = {"method": method, "split": split, "accuracy": res.accuracy, "xent": res.xent}
    storage.atomic_write_text(ws.path(f"eval_{method}_{split}.json"),
                              storage.canonical_json(out))
    ws.wrote(f"eval_{method}_{split}.json")
    for t in range(res.freq.shape[0]):
        m = EpeMap(values=res.freq[t], counts=np.full(res.freq[t].shape, len(dataset)),
                   t=t, grid=params.grid)
        stem = f"eval_{method}_{split}_t{t + 1}"
        export_heatmap(m, ws.path(stem + ".csv"), ws.path(stem + ".pgm"))
        ws.wrote(stem + ".csv")
        ws.wrote(stem + ".pgm")
    ws.finish(f"eval_{method}_{split}")
    return 0


def cmd_heatmap(cfg, ws, image_id, split):
    b = cfg["boed"]
    ws.read_input("world.glb"); ws.read_input("world.json")
    ws.read_input(f"{split}.glb"); ws.read_input(f"{split}.json")
    world = load_world(ws.path("world"))
    dataset = load_dataset(ws.path(split))
    avp, completer = _load_boed_stack(cfg, ws)
    by_id = {it.id: it for it in dataset.items}
    if image_id not in by_id:
        raise ConfigError(f"image id {image_id} not in split {split!r}")
    image = by_id[image_id].image
    rng = _stage_rng(ws.seed, "heatmap").derive(image_id)
    comps, weights = completer.complete(image, EMPTY_HISTORY, b["n"], rng)
    m = epe_map(avp, comps, EMPTY_HISTORY, world.grid, weights)
    stem = f"heatmap_{split}_{image_id}"
    export_heatmap(m, ws.path(stem + ".csv"), ws.path(stem + ".pgm"))
    ws.wrote(stem + ".csv")
    ws.wrote(stem + ".pgm")
    ws.finish(stem)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glimpsekit",
                                 description="glimpse-sequence design pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="RunConfig JSON path")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed override (u64)")

    common(sub.add_parser("world-gen", help="generate the world and dataset splits"))
    common(sub.add_parser("avp-train", help="train the posterior classifier"))
    common(sub.add_parser("pca-fit", help="fit the PCA retrieval bank"))
    p = sub.add_parser("annotate", help="create supervision sequences")
    common(p)
    p.add_argument("--kind", required=True, choices=["nogs", "h1", "h5", "hgs"])
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("attn-train", help="train the hard attention network")
    common(p)
    p.add_argument("--method", required=True,
                   choices=["ram", "ps-nogs", "ps-h1", "ps-h5", "ps-hgs"])
    p.add_argument("--sup", help="supervision records path (defaults by method)")
    p = sub.add_parser("eval", help="evaluate a trained attention network")
    common(p)
    p.add_argument("--method", required=True)
    p.add_argument("--split", default="val")
    p = sub.add_parser("heatmap", help="export an empty-history EPE map")
    common(p)
    p.add_argument("--image-id", type=int, required=True)
    p.add_argument("--split", default="train")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    out = args.out or cfg.get("out")
    if not out:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    seed = args.seed if args.seed is not None else int(cfg["seed"])
    parts = [args.command]
    for extra in ("kind", "method", "split", "image_id"):
        if getattr(args, extra, None) is not None:
            parts.append(f"{extra}={getattr(args, extra)}")
    ws = Workspace(out, args.config, seed, " ".join(parts))

    if args.command == "world-gen":
        return cmd_world_gen(cfg, ws)
    if args.command == "avp-train":
        return cmd_avp_train(cfg, ws)
    if args.command == "pca-fit":
        return cmd_pca_fit(cfg, ws)
    if args.command == "annotate":
        return cmd_annotate(cfg, ws, args.kind, args.workers)
    if args.command == "attn-train":
        return cmd_attn_train(cfg, ws, args.method, args.sup)
    if args.command == "eval":
        return cmd_eval(cfg, ws, args.method, args.split)
    if args.command == "heatmap":
        return cmd_heatmap(cfg, ws, args.image_id, args.split)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ArtifactHashError as exc:
        print(f"provenance error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
