"""Command-line entry point: ``fascon <subcommand> ...``.

Trainers read an optional JSON config file; explicit flags override it.
Every configuration is validated before any data is read or generated.
"""
import argparse
import dataclasses
import datetime
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy.stats import kurtosis

from . import cd, datagen, fileio, oracle, pseudolikelihood as pl, render, simple
from .errors import FasError, InvalidInputError
from .numerics import make_rng


def _load_config(cls, path, overrides):
    """Merge a JSON config file with flag overrides into a validated dataclass."""
    values = {}
    if path:
        try:
            values = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"config {path}: {exc}") from exc
        if not isinstance(values, dict):
            raise InvalidInputError(f"config {path} must hold a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    for f in dataclasses.fields(cls):
        if f.name in values and f.type in (int, "int") and isinstance(values[f.name], float):
            if not values[f.name].is_integer():
                raise InvalidInputError(f"{f.name} must be an integer")
            values[f.name] = int(values[f.name])
    return cls(**values)


def _created(args):
    if getattr(args, "record_time", False):
        return datetime.datetime.now(datetime.timezone.utc).isoformat()
    return None


def _write_trace(path, columns, rows):
    if path:
        fileio.write_csv(path, columns, rows)


def _edge_params(args):
    return datagen.EdgeImageParams(
        width=args.width or args.size,
        height=args.height or args.size,
        blend_slope=args.blend_slope,
        noise_self=0.0 if args.no_noise else args.noise_self,
        noise_neighbor=0.0 if args.no_noise else args.noise_neighbor,
        circular_mask=args.circular_mask,
    )


# -- subcommands -----------------------------------------------------------

def cmd_gen_edges(args):
    params = _edge_params(args)
    if args.count < 0:
        raise InvalidInputError("--count must be non-negative")
    values = datagen.generate_edge_batch(params, args.count, make_rng(args.seed, 0))
    meta = {"kind": "edges", "params": params.to_dict(), "seed": args.seed, "width": params.width,
            "height": params.height}
    fileio.save_batch(values.reshape(args.count, params.n), args.out, meta)
    if args.pgm_dir:
        Path(args.pgm_dir).mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(values[: args.pgm_count]):
            fileio.write_pgm(img.reshape(params.height, params.width), Path(args.pgm_dir) / f"edge{i:05d}.pgm")


def cmd_extract_patches(args):
    if args.count < 0:
        raise InvalidInputError("--count must be non-negative")
    images = [fileio.read_pgm(p) for p in args.images]
    noise = None if args.no_noise else (args.noise_self, args.noise_neighbor)
    values = datagen.extract_patches(images, args.patch_side, args.count, make_rng(args.seed, 0), noise)
    meta = {"kind": "patches", "sources": [str(p) for p in args.images], "seed": args.seed,
            "width": args.patch_side, "height": args.patch_side, "noise": list(noise) if noise else None}
    fileio.save_batch(values.reshape(args.count, args.patch_side ** 2), args.out, meta)


def cmd_train_simple(args):
    config = _load_config(simple.SimpleTrainConfig, args.config, {
        "learning_rate": args.learning_rate, "momentum": args.momentum, "batch_size": args.batch_size,
        "updates": args.updates, "experts": args.experts, "k": args.k, "seed": args.seed,
        "reweight_by_energy": False if args.no_reweight else None,
    })
    if args.data:
        data, _ = fileio.load_batch(args.data)
        source = data
        n = data.shape[1]
        origin = {"data": str(args.data)}
    else:
        params = _edge_params(args)
        n = params.n
        source = lambda rng, size: datagen.generate_edge_batch(params, size, rng)  # noqa: E731
        origin = {"edges": params.to_dict()}
    model = simple.init_student_t(n, config.experts, config.k, make_rng(config.seed, 0))
    model, trace = simple.train_simple(model, source, config, rng=make_rng(config.seed, 1))
    fileio.save_model(model, args.out, {**config.to_dict(), **origin}, _created(args))
    _write_trace(args.trace, ["update", "mean_energy"], [(i, float(e)) for i, e in enumerate(trace)])


def cmd_train_pl(args):
    config = _load_config(pl.PlTrainConfig, args.config, {
        "learning_rate": args.learning_rate, "momentum": args.momentum, "iterations": args.iterations,
        "method": args.method, "experts": args.experts, "levels": args.levels, "k": args.k,
        "seed": args.seed, "line_search": False if args.no_line_search else None,
    })
    data, _ = fileio.load_batch(args.data)
    space = pl.QuantizedSpace.uniform(config.levels)
    data, snap = space.snap(data)
    print(f"snapped data to {config.levels} levels, max snap distance {snap!r}", file=sys.stderr)
    model = pl.init_pl(data.shape[1], config.experts, space, config.k, make_rng(config.seed, 0))
    model, trace = pl.train_pl(model, data, config)
    fileio.save_model(model, args.out, {**config.to_dict(), "data": str(args.data), "max_snap": snap},
                      _created(args))
    _write_trace(args.trace, ["iteration", "log_pseudo_likelihood"], [(i, float(f)) for i, f in enumerate(trace)])


def _augment_flag(value):
    return {"auto": "auto", "always": True, "never": False, None: None}[value]


def cmd_train_cd(args):
    config = _load_config(cd.CdTrainConfig, args.config, {
        "learning_rate": args.learning_rate, "momentum": args.momentum, "batch_size": args.batch_size,
        "updates": args.updates, "experts": args.experts, "lam_scale": args.lam_scale,
        "mix_scale": args.mix_scale, "var_scale": args.var_scale, "augment": _augment_flag(args.augment),
        "checkpoint_every": args.checkpoint_every, "init": args.init, "seed": args.seed,
    })
    data, _ = fileio.load_batch(args.data)
    saved = {**config.to_dict(), "data": str(args.data)}
    out = Path(args.out)

    def checkpoint(update, model):
        fileio.save_model(model, out.with_name(f"{out.stem}.ckpt{update:06d}{out.suffix}"), saved, _created(args))

    model = cd.init_mixture(data.shape[1], config.experts, make_rng(config.seed, 0), init=config.init)
    model, trace = cd.train_cd(model, data, config, rng=make_rng(config.seed, 1), checkpoint=checkpoint)
    fileio.save_model(model, out, saved, _created(args))
    _write_trace(args.trace, list(cd.TRACE_FIELDS), [[row[f] for f in cd.TRACE_FIELDS] for row in trace])


def _load_typed(path, kind):
    model, doc = fileio.load_model(path)
    if kind and doc["method"] not in kind:
        raise InvalidInputError(f"{path} holds a {doc['method']!r} model, expected {' or '.join(kind)}")
    return model, doc


def cmd_sample_gibbs(args):
    model, _ = _load_typed(args.model, ("pl",))
    rng = make_rng(args.seed, 0)
    start = model.space.levels[rng.integers(model.space.a, size=model.n)]
    samples = pl.gibbs_chain(model, start, args.sweeps, rng, burn_in=args.burn_in,
                             random_scan=args.random_scan, thin=args.thin)
    fileio.save_batch(samples, args.out, {"kind": "gibbs", "model": str(args.model), "seed": args.seed,
                                          "burn_in": args.burn_in, "thin": args.thin})


def cmd_reconstruct(args):
    model, _ = _load_typed(args.model, ("cd",))
    data, meta = fileio.load_batch(args.data)
    rec = cd.reconstruct(model, data, make_rng(args.seed, 0), _augment_flag(args.augment) or "auto")
    d_hat = np.atleast_2d(rec.d_hat)
    fileio.save_batch(d_hat[:, : model.n], args.out, {
        "kind": "reconstruction", "model": str(args.model), "seed": args.seed,
        "augmented": bool(d_hat.shape[1] > model.n),
        **{k: meta[k] for k in ("width", "height") if k in meta},
    })
    err = np.linalg.norm(data - d_hat[:, : model.n], axis=1)
    print(f"mean reconstruction error {float(err.mean())!r}")


def _patch_shape(n, height, width):
    if height and width:
        return height, width
    side = math.isqrt(n)
    if side * side != n:
        raise InvalidInputError(f"filter length {n} is not square; pass --height and --width")
    return side, side


def cmd_render_filters(args):
    model, _ = _load_typed(args.model, None)
    filters = render.model_filters(model)
    if args.limit:
        filters = filters[: args.limit]
    height, width = _patch_shape(filters.shape[1], args.height, args.width)
    mosaic = render.render_filter_mosaic(filters, height, width, args.cols)
    fileio.write_pgm(mosaic, args.out, args.maxval)


def cmd_histogram(args):
    model, _ = _load_typed(args.model, None)
    data, _ = fileio.load_batch(args.data)
    hist = render.violation_histogram(model, data, args.bins)
    fileio.write_csv(args.out, ["bin_low", "bin_high", "count"], hist.rows())
    values = render.filter_outputs(model, data).ravel()
    print(f"outputs {values.size} excess_kurtosis {float(kurtosis(values))!r}")


def cmd_oracle_check(args):
    model = oracle.reference_model(seed=args.seed)
    results = oracle.run_oracle_checks(model, oracle.reference_batch(model, seed=args.seed))
    failed = False
    for name, (dev, tol) in results.items():
        ok = dev <= tol
        failed |= not ok
        print(f"{name:20s} max deviation {dev:.3e}  tolerance {tol:.0e}  {'ok' if ok else 'FAIL'}")
    return 1 if failed else 0


# -- parser ----------------------------------------------------------------

def _add_edge_flags(p):
    p.add_argument("--size", type=int, default=16, help="square image side (default 16)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--blend-slope", type=float, default=2.0)
    p.add_argument("--noise-self", type=float, default=0.4)
    p.add_argument("--noise-neighbor", type=float, default=0.1)
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--circular-mask", action="store_true")


def _add_common(p, seed=True):
    if seed:
        p.add_argument("--seed", type=int, help="root random seed")
    p.add_argument("--out", required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="fascon", description="Learn frequently approximately satisfied constraints.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-edges", help="generate noisy synthetic edge images")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--pgm-dir", help="also write the first --pgm-count images as PGM files here")
    p.add_argument("--pgm-count", type=int, default=16)
    _add_edge_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_gen_edges, seed_default=0)

    p = sub.add_parser("extract-patches", help="cut random square patches from PGM images")
    p.add_argument("images", nargs="+", type=Path)
    p.add_argument("--patch-side", type=int, default=16)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--noise-self", type=float, default=0.4)
    p.add_argument("--noise-neighbor", type=float, default=0.1)
    p.add_argument("--no-noise", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_extract_patches, seed_default=0)

    p = sub.add_parser("train-simple", help="fit student-t constraints by reweighted gradient descent")
    p.add_argument("--config")
    p.add_argument("--data", help="batch file; edge images are generated on the fly when omitted")
    p.add_argument("--experts", type=int)
    p.add_argument("--k", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--updates", type=int)
    p.add_argument("--no-reweight", action="store_true")
    p.add_argument("--trace")
    p.add_argument("--record-time", action="store_true")
    _add_edge_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train_simple)

    p = sub.add_parser("train-pl", help="fit constraints by maximising pseudo-likelihood")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--experts", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--k", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--method", choices=["momentum", "cg"])
    p.add_argument("--no-line-search", action="store_true")
    p.add_argument("--trace")
    p.add_argument("--record-time", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_train_pl)

    p = sub.add_parser("train-cd", help="fit mixture experts by contrastive divergence")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--experts", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--updates", type=int)
    p.add_argument("--lam-scale", type=float)
    p.add_argument("--mix-scale", type=float)
    p.add_argument("--var-scale", type=float)
    p.add_argument("--augment", choices=["auto", "always", "never"])
    p.add_argument("--init", choices=["orthonormal", "gaussian"])
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--trace")
    p.add_argument("--record-time", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_train_cd)

    p = sub.add_parser("sample-gibbs", help="draw lattice samples from a pseudo-likelihood model")
    p.add_argument("--model", required=True)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--random-scan", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_sample_gibbs, seed_default=0)

    p = sub.add_parser("reconstruct", help="one-step reconstructions from a CD model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--augment", choices=["auto", "always", "never"])
    _add_common(p)
    p.set_defaults(func=cmd_reconstruct, seed_default=0)

    p = sub.add_parser("render-filters", help="tile model filters into a PGM mosaic")
    p.add_argument("--model", required=True)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--limit", type=int)
    p.add_argument("--maxval", type=int, default=255)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_render_filters)

    p = sub.add_parser("histogram", help="histogram of pooled filter outputs as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--bins", type=int, default=64)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("oracle-check", help="compare pseudo-likelihood code with exact enumeration")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def _validate(args):
    for name in ("count", "sweeps", "burn_in", "bins", "patch_side", "pgm_count", "cols", "limit"):
        value = getattr(args, name, None)
        if value is not None and value < 0:
            raise InvalidInputError(f"--{name.replace('_', '-')} must be non-negative")
    for name in ("thin", "bins", "patch_side"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            raise InvalidInputError(f"--{name.replace('_', '-')} must be positive")
    if hasattr(args, "seed_default") and args.seed is None:
        args.seed = args.seed_default


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
        status = args.func(args)
    except (FasError, ValueError, OSError) as exc:
        print(f"fascon {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
