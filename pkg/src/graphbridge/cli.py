"""Command-line operator surface.

Subcommands: gen-data, train-ae, train-bridge, sample, eval, recon-report.
Every command writes a run directory containing its artifacts, the fully
resolved configuration, and a manifest (seeds, input hashes, wall clock).

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 numeric abort,
5 precondition failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from .errors import (ConfigError, DataFormatError, GenerationError,
                     NumericError, PreconditionError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_PRECONDITION = 5

PACKAGE_VERSION = "0.1.0"


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_hash(cfg: dict, extra: str = "") -> str:
    from .config import format_config
    return hashlib.sha256((format_config(cfg) + extra).encode()).hexdigest()[:10]


class RunContext:
    """Run directory plus manifest bookkeeping for one command."""

    def __init__(self, command, args, cfg):
        from .config import format_config
        run_id = args.run_id or f"{command}-{_config_hash(cfg, command)}"
        self.dir = Path(args.out) / run_id
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "command": command,
            "argv": sys.argv[1:],
            "run_id": run_id,
            "resolved_config": cfg,
            "input_hashes": {},
            "artifacts": [],
            "version": PACKAGE_VERSION,
        }
        self.cfg = cfg
        self.t0 = time.time()
        (self.dir / "config.txt").write_text(format_config(cfg))

    def record_input(self, path):
        path = str(path)
        self.manifest["input_hashes"][path] = _sha256_file(path)

    def artifact(self, name) -> Path:
        self.manifest["artifacts"].append(name)
        return self.dir / name

    def finish(self):
        self.manifest["wall_clock_sec"] = round(time.time() - self.t0, 3)
        cfg = self.manifest["resolved_config"]
        self.manifest["resolved_config"] = {
            s: {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in entries.items()}
            for s, entries in cfg.items()
        }
        (self.dir / "manifest.json").write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")
        print(f"run directory: {self.dir}")


def _resolve(args):
    from .config import resolve_config
    overrides = []
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got '{item}'")
        dotted, value = item.split("=", 1)
        overrides.append((dotted.strip(), value.strip()))
    return resolve_config(args.config, overrides)


def _feature_spec(cfg, graphs):
    from .features import FeatureSpec
    dx = max(g.dx for g in graphs)
    de = max(g.de for g in graphs)
    fc = cfg["features"]
    return FeatureSpec(dx=dx, de=de, k_eig=fc["k_eig"],
                       degree_onehot=fc["degree_onehot"],
                       degree_clamp=fc["degree_clamp"])


def _net_config(cfg, section, fspec, qspec):
    from .nn import GraphTransformerConfig
    sec = cfg[section]
    return GraphTransformerConfig(
        num_layers=sec["num_layers"], num_heads=sec["num_heads"],
        hidden_x=sec["hidden_x"], hidden_e=sec["hidden_e"],
        hidden_y=sec["hidden_y"], latent_f=qspec.f,
        dx=fspec.dx, de=fspec.de, in_x=fspec.x_dim, in_y=fspec.y_dim,
        time_dim=sec.get("time_dim", 0))


def _schedule(cfg):
    from .bridges import BridgeSchedule
    sc = cfg["schedule"]
    return BridgeSchedule(sigma_min=sc["sigma_min"], sigma_max=sc["sigma_max"],
                          T=sc["horizon"], steps=sc["steps"])


def _train_config(cfg):
    from .training import TrainConfig
    tc = cfg["train"]
    return TrainConfig(
        seed=tc["seed"], ae_lr=tc["ae_lr"], ae_batch_size=tc["ae_batch_size"],
        ae_epochs=tc["ae_epochs"], bridge_lr_min=tc["bridge_lr_min"],
        bridge_lr_max=tc["bridge_lr_max"],
        bridge_batch_size=tc["bridge_batch_size"],
        bridge_epochs=tc["bridge_epochs"], loss_variant=tc["loss_variant"],
        x_acc_target=tc["x_acc_target"] or None,
        e_acc_target=tc["e_acc_target"] or None)


def _write_metrics_csv(path, metrics):
    if not metrics:
        path.write_text("")
        return
    keys = list(metrics[0])
    lines = [",".join(keys)]
    for row in metrics:
        lines.append(",".join(f"{row[k]:.8g}" if isinstance(row[k], float)
                              else str(row[k]) for k in keys))
    path.write_text("\n".join(lines) + "\n")


# -- commands -------------------------------------------------------------

def cmd_gen_data(args):
    from .generators import CommunityParams, extract_ego_graphs, generate_community_small
    from .graph_io import load_graphs, save_graphs
    cfg = _resolve(args)
    if args.count is not None:
        cfg["data"]["count"] = args.count
    if args.seed is not None:
        cfg["data"]["seed"] = args.seed
    cfg["data"]["dataset"] = args.dataset
    ctx = RunContext("gen-data", args, cfg)
    count, seed = cfg["data"]["count"], cfg["data"]["seed"]
    if args.dataset == "community-small":
        graphs = generate_community_small(count, seed, CommunityParams())
    elif args.dataset == "ego-small":
        base_path = args.base or cfg["data"]["ego_base"]
        if not base_path:
            raise ConfigError("ego-small requires --base <graph file>")
        ctx.record_input(base_path)
        bases = load_graphs(base_path)
        if not bases:
            raise PreconditionError(f"no graphs in base file {base_path}")
        graphs = extract_ego_graphs(bases[0], cfg["data"]["ego_radius"],
                                    count, seed)
    else:
        raise ConfigError(f"unknown dataset '{args.dataset}'")
    save_graphs(graphs, ctx.artifact("graphs.jsonl"))
    print(f"wrote {len(graphs)} graphs")
    ctx.finish()


def _load_data(ctx, path):
    from .graph_io import load_graphs
    ctx.record_input(path)
    graphs = load_graphs(path)
    if not graphs:
        raise PreconditionError(f"no graphs in {path}")
    return graphs


def cmd_train_ae(args):
    from .checkpoint import save_checkpoint
    from .fsq import QuantizationSpec
    from .training import train_autoencoder
    cfg = _resolve(args)
    ctx = RunContext("train-ae", args, cfg)
    graphs = _load_data(ctx, args.data)
    qspec = QuantizationSpec(cfg["quantization"]["levels"])
    fspec = _feature_spec(cfg, graphs)
    enc_cfg = _net_config(cfg, "encoder", fspec, qspec)
    dec_cfg = _net_config(cfg, "decoder", fspec, qspec)
    result = train_autoencoder(graphs, fspec, enc_cfg, dec_cfg, qspec,
                               _train_config(cfg), quantized=not args.unquantized)
    meta = {
        "encoder_config": enc_cfg.to_dict(),
        "decoder_config": dec_cfg.to_dict(),
        "levels": list(qspec.levels),
        "feature_spec": {
            "dx": fspec.dx, "de": fspec.de, "k_eig": fspec.k_eig,
            "degree_onehot": fspec.degree_onehot,
            "degree_clamp": fspec.degree_clamp,
        },
        "quantized": not args.unquantized,
        "final_metrics": result.metrics[-1],
    }
    save_checkpoint(ctx.artifact("ae.npz"), result.stores, meta)
    _write_metrics_csv(ctx.artifact("train_ae.csv"), result.metrics)
    last = result.metrics[-1]
    print(f"stage 1 done: epochs={last['epoch'] + 1} "
          f"x_acc={last['x_acc']:.4f} e_acc={last['e_acc']:.4f}")
    ctx.finish()


def _restore_ae(path):
    from .checkpoint import load_checkpoint
    from .features import FeatureSpec
    from .fsq import QuantizationSpec
    from .nn import GraphTransformerConfig
    stores, meta = load_checkpoint(path)
    enc_cfg = GraphTransformerConfig.from_dict(meta["encoder_config"])
    dec_cfg = GraphTransformerConfig.from_dict(meta["decoder_config"])
    fs = meta["feature_spec"]
    fspec = FeatureSpec(dx=fs["dx"], de=fs["de"], k_eig=fs["k_eig"],
                        degree_onehot=fs["degree_onehot"],
                        degree_clamp=fs["degree_clamp"])
    qspec = QuantizationSpec(tuple(meta["levels"]))
    return stores, meta, enc_cfg, dec_cfg, fspec, qspec


def cmd_train_bridge(args):
    from .bridges import PriorSpec
    from .checkpoint import save_checkpoint
    from .training import (encode_dataset, encode_dataset_raw, latent_box,
                           train_bridge)
    cfg = _resolve(args)
    ctx = RunContext("train-bridge", args, cfg)
    graphs = _load_data(ctx, args.data)
    ctx.record_input(args.ae_ckpt)
    stores, meta, enc_cfg, dec_cfg, fspec, qspec = _restore_ae(args.ae_ckpt)
    quantized = meta.get("quantized", True)
    drift_cfg = _net_config(cfg, "drift", fspec, qspec)
    prior = PriorSpec(cfg["sample"]["prior"])
    box = None
    if quantized:
        latents, hist = encode_dataset(stores["encoder"], enc_cfg, graphs,
                                       fspec, qspec)
    else:
        latents, hist = encode_dataset_raw(stores["encoder"], enc_cfg, graphs,
                                           fspec)
        box = latent_box(latents)
    result = train_bridge(latents, _train_config(cfg), _schedule(cfg), qspec,
                          drift_cfg, prior=prior,
                          mean_form=cfg["sample"]["bridge_mean"], box=box)
    bridge_meta = {
        "drift_config": drift_cfg.to_dict(),
        "schedule": _schedule(cfg).to_dict(),
        "levels": list(qspec.levels),
        "prior": prior.kind,
        "bridge_mean": cfg["sample"]["bridge_mean"],
        "node_count_histogram": {str(k): v for k, v in hist.probs.items()},
        "quantized": quantized,
        "box": None if box is None else {"l_min": list(box.l_min),
                                         "l_max": list(box.l_max)},
        "final_loss": result.metrics[-1]["loss"],
    }
    save_checkpoint(ctx.artifact("bridge.npz"), result.stores, bridge_meta)
    _write_metrics_csv(ctx.artifact("train_bridge.csv"), result.metrics)
    print(f"stage 2 done: final loss {result.metrics[-1]['loss']:.6f}")
    ctx.finish()


def cmd_sample(args):
    from .bridges import BridgeSchedule, ContinuousDomainSpec, PriorSpec
    from .checkpoint import load_checkpoint
    from .graph_io import save_graphs
    from .nn import GraphTransformerConfig
    from .training import NodeCountHistogram, decode_latents, sample_graph_latents
    import numpy as np
    cfg = _resolve(args)
    if args.count is not None:
        cfg["sample"]["count"] = args.count
    if args.seed is not None:
        cfg["sample"]["seed"] = args.seed
    if args.snap is not None:
        cfg["sample"]["snap"] = args.snap == "true"
    ctx = RunContext("sample", args, cfg)
    ctx.record_input(args.ae_ckpt)
    ctx.record_input(args.bridge_ckpt)
    ae_stores, _, _, dec_cfg, _, qspec = _restore_ae(args.ae_ckpt)
    bridge_stores, bmeta = load_checkpoint(args.bridge_ckpt)
    drift_cfg = GraphTransformerConfig.from_dict(bmeta["drift_config"])
    sched = BridgeSchedule.from_dict(bmeta["schedule"])
    prior = PriorSpec(bmeta["prior"])
    hist = NodeCountHistogram(
        {int(k): float(v) for k, v in bmeta["node_count_histogram"].items()})
    box = None
    if bmeta.get("box"):
        box = ContinuousDomainSpec(l_min=tuple(bmeta["box"]["l_min"]),
                                   l_max=tuple(bmeta["box"]["l_max"]))
    count, seed = cfg["sample"]["count"], cfg["sample"]["seed"]
    rng = np.random.default_rng(seed)
    node_counts = [hist.sample(rng) for _ in range(count)]
    latents = sample_graph_latents(
        bridge_stores["drift"], drift_cfg, node_counts, sched, qspec, prior,
        seed=seed + 1, snap=cfg["sample"]["snap"], box=box)
    graphs = decode_latents(ae_stores["decoder"], dec_cfg, latents, node_counts)
    save_graphs(graphs, ctx.artifact("generated.jsonl"))
    print(f"sampled {len(graphs)} graphs")
    ctx.finish()


def cmd_eval(args):
    from .metrics import eval_generic, uniqueness_novelty, validity_fraction, ValenceTable
    cfg = _resolve(args)
    ctx = RunContext("eval", args, cfg)
    generated = _load_data(ctx, args.generated)
    which = [m.strip() for m in args.metrics.split(",")]
    out = {"n_generated": len(generated)}
    if "generic" in which:
        if not args.test:
            raise ConfigError("--test is required for generic metrics")
        test = _load_data(ctx, args.test)
        out.update(eval_generic(generated, test))
    if "validity" in which:
        max_dx = max(g.dx for g in generated)
        max_de = max(g.de for g in generated)
        table = ValenceTable(max_valence=(4,) * max_dx,
                             bond_order=tuple(range(max_de)))
        out["validity"] = validity_fraction(generated, table)
    if "uniqueness" in which:
        train = _load_data(ctx, args.train) if args.train else []
        uniq, nov = uniqueness_novelty(generated, train)
        out["uniqueness"] = uniq
        if args.train:
            out["novelty"] = nov
    path = ctx.artifact("metrics.json")
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out, sort_keys=True))
    ctx.finish()


def cmd_recon_report(args):
    from .training import reconstruction_report
    cfg = _resolve(args)
    ctx = RunContext("recon-report", args, cfg)
    graphs = _load_data(ctx, args.data)
    ctx.record_input(args.ae_ckpt)
    stores, meta, enc_cfg, dec_cfg, fspec, qspec = _restore_ae(args.ae_ckpt)
    report = {"data": reconstruction_report(
        stores["encoder"], stores["decoder"], enc_cfg, dec_cfg, graphs,
        fspec, qspec, quantized=meta.get("quantized", True))}
    if args.heldout:
        heldout = _load_data(ctx, args.heldout)
        report["heldout"] = reconstruction_report(
            stores["encoder"], stores["decoder"], enc_cfg, dec_cfg, heldout,
            fspec, qspec, quantized=meta.get("quantized", True))
    path = ctx.artifact("recon_report.json")
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report["data"], sort_keys=True))
    ctx.finish()


# -- argument parsing ------------------------------------------------------

def _add_common(parser):
    parser.add_argument("--out", default="runs", help="output root directory")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--set", action="append", metavar="section.key=value",
                        help="override a single config entry")
    parser.add_argument("--run-id", default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP threads")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="graphbridge",
        description="Quantized-latent graph generation with diffusion bridges")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate or extract a graph dataset")
    p.add_argument("--dataset", required=True,
                   choices=["community-small", "ego-small"])
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--base", default=None, help="base graph file for ego-small")
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-ae", help="stage 1: train the graph autoencoder")
    p.add_argument("--data", required=True)
    p.add_argument("--unquantized", action="store_true",
                   help="identity bottleneck (ablation)")
    _add_common(p)
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train-bridge", help="stage 2: train the bridge drift")
    p.add_argument("--data", required=True)
    p.add_argument("--ae-ckpt", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train_bridge)

    p = sub.add_parser("sample", help="sample new graphs from a trained model")
    p.add_argument("--ae-ckpt", required=True)
    p.add_argument("--bridge-ckpt", required=True)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--snap", choices=["true", "false"], default=None)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="evaluate a generated set")
    p.add_argument("--generated", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--train", default=None)
    p.add_argument("--metrics", default="generic",
                   help="comma list: generic,validity,uniqueness")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("recon-report", help="reconstruction accuracy report")
    p.add_argument("--ae-ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--heldout", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_recon_report)
    return parser


def _fail(exc, code):
    line = json.dumps({"error": type(exc).__name__, "message": str(exc),
                       "exit_code": code})
    print(line, file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None):
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        args.func(args)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except (DataFormatError, FileNotFoundError, OSError) as exc:
        return _fail(exc, EXIT_IO)
    except NumericError as exc:
        return _fail(exc, EXIT_NUMERIC)
    except (PreconditionError, GenerationError) as exc:
        return _fail(exc, EXIT_PRECONDITION)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
