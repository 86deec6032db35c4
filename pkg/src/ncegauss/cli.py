"""Experiment runner: dataset generation, training sweeps, diagnostics,
sphere-CLT studies, and channel-mildness estimation.

All artifacts are plot-ready CSV/JSON files stamped with the config hash
and seed that regenerate them.  Exit codes: 0 success, 2 usage error,
3 format error, 4 numerical failure.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from itertools import product
from typing import List, Optional

import numpy as np

from ._util import config_hash, derive_rng, write_csv
from .embedfile import FormatError, read_embeddings, write_embeddings
from .encoder import forward, init_encoder, load_encoder, save_encoder
from .gaussdiag import coordinate_report, negative_cosine_stats
from .hgr import eta2_binned, eta2_from_joint, eta2_gaussian
from .spherestats import empirical_gauss_distance, scaled_projection_grid, tv_rate_bound
from .synthdata import (AugmentationChannel, Dataset, Jitter, augment_pair,
                        sample_gmm, sample_laplace, sample_sparse_binary)
from .trainer import AdamState, TrainConfig, TrainHistory, TrainingDiverged, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NUMERIC = 4


# ---------------------------------------------------------------------------
# Config files: flat key = value lines ("TOML-style").
# Grammar: one `key = value` per line; `#` starts a comment; values are
# true/false, integers, floats, [comma, separated, lists], quoted or bare
# strings.  Keys must be identifiers.  No sections, no nesting.
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        if not key.isidentifier():
            raise ValueError(f"config line {lineno}: bad key {key!r}")
        out[key] = _parse_value(val.strip(), lineno)
    return out


def _parse_value(token: str, lineno: int):
    if token.startswith("[") and token.endswith("]"):
        inner = token[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(part.strip(), lineno) for part in inner.split(",")]
    if token in ("true", "false"):
        return token == "true"
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "\"'":
        return token[1:-1]
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    if not token:
        raise ValueError(f"config line {lineno}: empty value")
    return token


@dataclass
class ExperimentConfig:
    """Dataset, channel, optimizer, and sweep-grid settings for cmd_train."""

    kind: str = "laplace"
    n_samples: int = 25000
    d_data: int = 1024
    density: float = 0.01
    gmm_k: int = 25
    data_seed: int = 1
    channel: str = "gaussian_mix"
    mix_a: float = 0.6
    noise_std: float = 0.0
    dropout_p: float = 0.0
    log_scale_std: float = 0.0
    flip_fraction: float = 0.001
    d_grid: List[int] = field(default_factory=lambda: [64])
    batch_grid: List[int] = field(default_factory=lambda: [128])
    hidden: Optional[int] = None
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    weight_decay: float = 1e-4
    epochs: int = 150
    tau: float = 0.1
    beta: float = 0.0
    lam: float = 1.0
    eval_every: int = 25
    seed: int = 0
    out_dir: str = "runs/experiment"

    @classmethod
    def from_file(cls, path: str, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            values = parse_config_text(fh.read())
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self):
        if not self.d_grid or not self.batch_grid:
            raise ValueError("d_grid and batch_grid must be non-empty")
        if self.kind not in ("laplace", "gmm", "sparse_binary"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def make_dataset(self) -> Dataset:
        if self.kind == "laplace":
            return sample_laplace(self.n_samples, self.d_data, self.data_seed)
        if self.kind == "gmm":
            return sample_gmm(self.n_samples, self.d_data, self.gmm_k, self.data_seed)
        return sample_sparse_binary(self.n_samples, self.d_data, self.density, self.data_seed)

    def make_channel(self) -> AugmentationChannel:
        jitter = Jitter(noise_std=self.noise_std, dropout_p=self.dropout_p,
                        log_scale_std=self.log_scale_std)
        return AugmentationChannel(kind=self.channel, mix_coefficient=self.mix_a,
                                   jitter=jitter, flip_fraction=self.flip_fraction)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "laplace":
        ds = sample_laplace(args.n, args.d_data, args.seed)
    elif args.kind == "gmm":
        ds = sample_gmm(args.n, args.d_data, args.gmm_k, args.seed)
    else:
        ds = sample_sparse_binary(args.n, args.d_data, args.density, args.seed)
    data_path = os.path.join(args.out, "data.nceb")
    write_embeddings(data_path, ds.samples)
    meta = {
        "kind": ds.kind,
        "n": ds.n,
        "d_data": ds.d_data,
        "seed": args.seed,
        "density": ds.density,
        "gmm_k": args.gmm_k if args.kind == "gmm" else None,
        "config_hash": config_hash(vars(args)),
    }
    if ds.gmm_means is not None:
        meta["gmm_means"] = ds.gmm_means.tolist()
        meta["gmm_labels"] = ds.gmm_labels.tolist()
    with open(os.path.join(args.out, "data.meta.json"), "w") as fh:
        json.dump(meta, fh)
    print(data_path)
    return EXIT_OK


def load_dataset(data_path: str) -> Dataset:
    samples, _ = read_embeddings(data_path)
    meta_path = data_path.rsplit(".", 1)[0] + ".meta.json"
    if not os.path.exists(meta_path):
        raise FormatError(f"{meta_path}: dataset metadata not found")
    with open(meta_path) as fh:
        meta = json.load(fh)
    means = np.asarray(meta["gmm_means"]) if meta.get("gmm_means") is not None else None
    labels = np.asarray(meta["gmm_labels"]) if meta.get("gmm_labels") is not None else None
    return Dataset(samples=samples, kind=meta["kind"], seed=meta["seed"],
                   density=meta.get("density"), gmm_means=means, gmm_labels=labels)


def cmd_train(args) -> int:
    overrides = {k: getattr(args, k) for k in ("epochs", "seed", "out_dir") if getattr(args, k) is not None}
    cfg = ExperimentConfig.from_file(args.config, **overrides)
    os.makedirs(cfg.out_dir, exist_ok=True)
    chash = config_hash(cfg.to_dict())
    dataset = cfg.make_dataset()
    channel = cfg.make_channel()
    summary = []
    for idx, (d, batch) in enumerate(product(cfg.d_grid, cfg.batch_grid)):
        cell_dir = os.path.join(cfg.out_dir, f"d{d}_N{batch}")
        os.makedirs(cell_dir, exist_ok=True)
        cell_seed = int(np.random.SeedSequence(entropy=cfg.seed,
                                               spawn_key=(idx,)).generate_state(1, np.uint64)[0])
        tconf = TrainConfig(
            lr=cfg.lr, adam_betas=(cfg.adam_beta1, cfg.adam_beta2),
            weight_decay=cfg.weight_decay, batch_size=batch, epochs=cfg.epochs,
            tau=cfg.tau, beta=cfg.beta, lam=cfg.lam, seed=cell_seed,
            eval_every=cfg.eval_every)
        enc_path = os.path.join(cell_dir, "encoder.nceck")
        state_path = os.path.join(cell_dir, "state.npz")
        start_epoch, adam_state, history = 0, None, None
        if args.resume and os.path.exists(state_path):
            encoder = load_encoder(enc_path)
            start_epoch, adam_state = _load_train_state(state_path, encoder)
            history = _load_history(os.path.join(cell_dir, "history.jsonl"))
        else:
            encoder = init_encoder(dataset.d_data, d, hidden=cfg.hidden,
                                   activation="relu" if cfg.hidden else "none",
                                   seed=cell_seed)
        if start_epoch < cfg.epochs or start_epoch == 0:
            encoder, history = train(dataset, channel, encoder, tconf,
                                     start_epoch=start_epoch,
                                     adam_state=adam_state, history=history)
            save_encoder(enc_path, encoder)
            _save_train_state(state_path, cfg.epochs, history.adam_state)
            history.to_jsonl(os.path.join(cell_dir, "history.jsonl"))
        final = history.final()
        report = {
            "config_hash": chash, "seed": cell_seed, "d": d, "batch_size": batch,
            "epoch": final.epoch,
            "loss": json.loads(final.loss.to_json()),
            "diagnostics": final.diagnostics.to_dict(),
        }
        with open(os.path.join(cell_dir, "report.json"), "w") as fh:
            json.dump(report, fh, indent=1)
        diag = final.diagnostics
        summary.append([d, batch, diag.cv, diag.mean_norm, diag.ad_avg,
                        diag.ad_pass_fraction, diag.dp_avg_p, diag.dp_pass_fraction,
                        diag.alignment_mean, final.loss.uniformity_potential,
                        chash, cell_seed])
    write_csv(os.path.join(cfg.out_dir, "summary.csv"),
              ["d", "batch_size", "cv", "mean_norm", "ad_avg", "ad_pass_fraction",
               "dp_avg_p", "dp_pass_fraction", "alignment", "uniformity_potential",
               "config_hash", "seed"],
              summary)
    print(os.path.join(cfg.out_dir, "summary.csv"))
    return EXIT_OK


def _save_train_state(path, epoch, state: AdamState):
    arrays = {f"m{i}": m for i, m in enumerate(state.m)}
    arrays.update({f"v{i}": v for i, v in enumerate(state.v)})
    np.savez(path, epoch=epoch, t=state.t, n_params=len(state.m), **arrays)


def _load_train_state(path, encoder):
    data = np.load(path)
    n = int(data["n_params"])
    state = AdamState(m=[data[f"m{i}"] for i in range(n)],
                      v=[data[f"v{i}"] for i in range(n)], t=int(data["t"]))
    return int(data["epoch"]), state


def _load_history(path) -> Optional[TrainHistory]:
    if not os.path.exists(path):
        return None
    from .gaussdiag import DiagnosticsReport
    from .objective import LossReport
    from .trainer import EvalRecord
    history = TrainHistory()
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            history.append(EvalRecord(
                epoch=rec["epoch"],
                loss=LossReport(**rec["loss"]),
                diagnostics=DiagnosticsReport(**rec["diagnostics"])))
    return history


def cmd_diagnose(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.embeddings:
        z, _ = read_embeddings(args.embeddings)
        seed = args.seed
    else:
        if not (args.checkpoint and args.data):
            raise ValueError("need --embeddings, or --checkpoint with --data")
        encoder = load_encoder(args.checkpoint)
        dataset = load_dataset(args.data)
        z = forward(encoder, dataset.samples).raw
        seed = args.seed
    norms = np.linalg.norm(z, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    normalized = z / safe[:, None]
    normalized[norms == 0, 0] = 1.0
    report = coordinate_report(z, normalized, eta2=args.eta2)
    payload = report.to_dict()
    payload["config_hash"] = config_hash(vars(args))
    payload["seed"] = seed
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=1)
    _write_hist_csv(os.path.join(args.out, "norm_hist.csv"), norms, 100,
                    payload["config_hash"], seed)
    cos_sample = _negative_cosine_sample(normalized)
    _write_hist_csv(os.path.join(args.out, "cos_hist.csv"), cos_sample, 100,
                    payload["config_hash"], seed)
    print(json.dumps(payload))
    return EXIT_OK


def _negative_cosine_sample(normalized, max_pairs=200_000):
    from ._util import pair_indices
    i, j = pair_indices(normalized.shape[0], max_pairs)
    return np.sum(normalized[i] * normalized[j], axis=1)


def _write_hist_csv(path, values, bins, chash, seed):
    counts, edges = np.histogram(values, bins=bins)
    rows = [[edges[b], edges[b + 1], int(counts[b]), chash, seed] for b in range(bins)]
    write_csv(path, ["bin_left", "bin_right", "count", "config_hash", "seed"], rows)


def cmd_clt(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    d_grid = sorted(args.d_grid)
    for d in d_grid:
        if args.k > d - 4:
            raise ValueError(f"k={args.k} needs d >= k + 4, got d={d}")
    chash = config_hash(vars(args))
    projections = scaled_projection_grid(args.n, d_grid, args.k, seed=args.seed)
    rows = []
    for d in d_grid:
        dist = empirical_gauss_distance(projections[d])
        rows.append([d, args.k, dist["ks"], dist["tv_hist"],
                     tv_rate_bound(args.k, d), chash, args.seed])
    out_path = os.path.join(args.out, "clt.csv")
    write_csv(out_path, ["d", "k", "ks", "tv_hist", "tv_bound", "config_hash", "seed"],
              rows)
    print(out_path)
    return EXIT_OK


def cmd_hgr(args) -> int:
    if args.channel is None:
        raise ValueError("missing channel spec: pass --channel")
    rng = derive_rng(args.seed)
    result = {"channel": args.channel, "n": args.n, "bins": args.bins,
              "seed": args.seed, "config_hash": config_hash(vars(args))}
    if args.channel == "gaussian_mix":
        a = args.mix_a
        x0 = rng.standard_normal(args.n)
        x = a * x0 + np.sqrt(max(0.0, 1.0 - a * a)) * rng.standard_normal(args.n)
        if args.noise_std > 0:
            x = x + args.noise_std * rng.standard_normal(args.n)
        if args.dropout_p > 0:
            x = x * (rng.random(args.n) >= args.dropout_p)
        if args.log_scale_std > 0:
            x = x * np.exp(args.log_scale_std * rng.standard_normal(args.n))
        est = eta2_binned(x, x0, bins=args.bins)
        result["analytic_eta2"] = eta2_gaussian(a)
    elif args.channel == "bit_flip":
        q, f = args.density, args.flip_fraction
        x0 = (rng.random(args.n) < q).astype(float)
        flips = rng.random(args.n) < f
        x = np.where((x0 == 0) & flips, 1.0, x0)
        est = eta2_binned(x, x0, bins=args.bins)
        joint = np.array([[(1 - q) * (1 - f), (1 - q) * f], [0.0, q]])
        result["analytic_eta2"] = eta2_from_joint(joint)
    else:
        raise ValueError(f"unsupported channel for hgr: {args.channel!r}")
    result.update(est.to_dict())
    print(json.dumps(result))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "hgr.json"), "w") as fh:
            json.dump(result, fh, indent=1)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncegauss",
                                     description="InfoNCE Gaussianity laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--kind", required=True, choices=["laplace", "gmm", "sparse_binary"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d-data", type=int, required=True, dest="d_data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=0.01)
    p.add_argument("--gmm-k", type=int, default=25, dest="gmm_k")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train encoders over a (d, N) grid")
    p.add_argument("--config", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None, dest="out_dir")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("diagnose", help="diagnostics for embeddings or checkpoint+data")
    p.add_argument("--embeddings")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--eta2", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("clt", help="spherical CLT study: ks/tv vs the rate bound")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--d-grid", type=int, nargs="+", required=True, dest="d_grid")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("hgr", help="estimate channel mildness eta2")
    p.add_argument("--channel", choices=["gaussian_mix", "bit_flip"], default=None)
    p.add_argument("--mix-a", type=float, default=0.6, dest="mix_a")
    p.add_argument("--noise-std", type=float, default=0.0, dest="noise_std")
    p.add_argument("--dropout-p", type=float, default=0.0, dest="dropout_p")
    p.add_argument("--log-scale-std", type=float, default=0.0, dest="log_scale_std")
    p.add_argument("--density", type=float, default=0.01)
    p.add_argument("--flip-fraction", type=float, default=0.001, dest="flip_fraction")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_hgr)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (TrainingDiverged, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
