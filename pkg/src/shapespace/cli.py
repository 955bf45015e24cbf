"""Command-line entry point.

Pipeline: ``synth-corpus`` or your own OBJ directory -> ``ingest`` ->
``train`` -> ``generate`` / ``interpolate`` / ``embed`` / ``explore`` /
``eval`` / ``serve``. Report-style subcommands (``embed``, ``eval``)
write a tab-separated table and a PNG figure side by side under the
output directory. A flat ``key = value`` config file can pre-seed any
flag; explicit flags win. ``SHAPESPACE_LOG`` sets the log level.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import ops, report
from .container import ContainerError
from .corpus import (
    corpus_bbox_diagonal,
    ingest,
    load_corpus,
    per_vertex_error,
    save_corpus,
    synthesize_corpus,
)
from .mesh import MeshError, connectivity_key, load_obj, save_obj
from .rimd import (
    FeatureError,
    ReferenceGeometry,
    read_feature,
    write_feature,
)
from .synth import SYNTH_KINDS
from .vae import (
    TrainingConfig,
    TrainingError,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("shapespace.cli")

_ERRORS = (MeshError, FeatureError, ContainerError, TrainingError,
           ValueError, OSError)


def _floats(text):
    return [float(tok) for tok in text.split(",") if tok.strip() != ""]


def _ints(text):
    return [int(tok) for tok in text.split(",") if tok.strip() != ""]


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_pair(checkpoint_path, corpus_path):
    checkpoint = load_checkpoint(checkpoint_path)
    corpus = load_corpus(corpus_path)
    if corpus.connectivity != checkpoint.connectivity:
        raise MeshError("corpus and checkpoint connectivity differ")
    return checkpoint, corpus


def _sigma_vector(spec_text, latent_dim):
    vals = _floats(spec_text)
    if not vals:
        raise ValueError("--sigma-object needs at least one value")
    if len(vals) > latent_dim:
        raise ValueError(f"--sigma-object has {len(vals)} values for {latent_dim} dims")
    vals = vals + [vals[-1]] * (latent_dim - len(vals))
    return tuple(vals)


def _condition(args, checkpoint):
    if getattr(args, "condition", None) is None:
        return None
    return [tok.strip() for tok in args.condition.split(",")]


# -- subcommands ------------------------------------------------------------


def cmd_synth_corpus(args):
    out = _out_dir(args)
    paths = synthesize_corpus(args.kind, args.count, args.seed, out,
                              rings=args.rings, segments=args.segments)
    print(f"wrote {len(paths)} models to {out}")
    return 0


def cmd_ingest(args):
    out = _out_dir(args)
    corpus = ingest(args.dir, base_index=args.base_index, split=args.split,
                    seed=args.seed)
    cache = out / "corpus.sspc"
    save_corpus(corpus, cache)
    print(f"{corpus.size} models ({len(corpus.train_idx)} train / "
          f"{len(corpus.heldout_idx)} held out), feature length "
          f"{corpus.features.shape[1]} -> {cache}")
    return 0


def cmd_encode(args):
    out = _out_dir(args)
    reference = load_obj(args.reference)
    deformed = load_obj(args.deformed)
    geom = ReferenceGeometry(reference)
    feature = geom.encode(deformed)
    path = out / args.name
    write_feature(feature, geom.key, path)
    print(f"feature length {len(feature)} -> {path}")
    return 0


def cmd_decode(args):
    out = _out_dir(args)
    reference = load_obj(args.reference)
    geom = ReferenceGeometry(reference)
    feature, digest = read_feature(args.feature)
    if digest != geom.key:
        raise FeatureError("feature was encoded against a different connectivity")
    mesh = geom.reconstruct(feature)
    path = out / args.name
    save_obj(mesh, path)
    print(f"decoded mesh -> {path}")
    return 0


def cmd_train(args):
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    if args.condition_files:
        labels = []
        for fname in args.condition_files.split(","):
            tokens = [ln.strip() for ln in
                      Path(fname).read_text(encoding="utf-8").splitlines()
                      if ln.strip()]
            if len(tokens) != corpus.size:
                raise ValueError(f"{fname}: {len(tokens)} labels for "
                                 f"{corpus.size} models")
            labels.append(tokens)
        corpus.labels = labels
        corpus.vocabularies = [sorted(set(t)) for t in labels]
    prior = None
    if args.sigma_object:
        prior = _sigma_vector(args.sigma_object, args.latent_dim)
    config = TrainingConfig(
        latent_dim=args.latent_dim,
        hidden=tuple(_ints(args.hidden)),
        recon_weight=args.alpha,
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        sigma_max=args.sigma_max,
        prior_sigma=prior,
    )
    checkpoint = train(config, corpus, use_conditions=not args.unconditional)
    path = out / args.name
    save_checkpoint(checkpoint, path)
    report.loss_figure(out / "training_loss.png", checkpoint.loss_history)
    report.write_table(out / "training_loss.tsv",
                       ["epoch", "total", "reconstruction", "kl"],
                       [(i + 1, *row) for i, row in
                        enumerate(checkpoint.loss_history)])
    final = checkpoint.loss_history[-1]
    print(f"trained {config.epochs} epochs, final loss {final[0]:.6g} "
          f"(recon {final[1]:.6g}, kl {final[2]:.6g}) -> {path}")
    return 0


def cmd_generate(args):
    out = _out_dir(args)
    checkpoint, corpus = _load_pair(args.checkpoint, args.corpus)
    condition = _condition(args, checkpoint)
    if args.mean:
        code = np.zeros(checkpoint.latent_dim)
        meshes = [ops.decode_mesh(checkpoint, corpus.base_mesh, code, condition)]
        codes = code[None, :]
    else:
        meshes, codes = ops.generate(checkpoint, corpus.base_mesh, args.count,
                                     args.seed, condition)
    for k, mesh in enumerate(meshes):
        save_obj(mesh, out / f"gen_{k:03d}.obj")
    report.write_table(out / "codes.tsv",
                       ["index"] + [f"z{i}" for i in range(codes.shape[1])],
                       [(k, *row) for k, row in enumerate(codes)])
    print(f"wrote {len(meshes)} meshes to {out}")
    return 0


def cmd_interpolate(args):
    out = _out_dir(args)
    checkpoint, corpus = _load_pair(args.checkpoint, args.corpus)
    mesh_a = load_obj(args.a)
    mesh_b = load_obj(args.b)
    condition = _condition(args, checkpoint)
    frames = ops.interpolate(checkpoint, corpus.base_mesh, mesh_a, mesh_b,
                             args.steps, condition, condition)
    for k, mesh in enumerate(frames):
        save_obj(mesh, out / f"frame_{k:03d}.obj")
    print(f"wrote {len(frames)} frames to {out}")
    return 0


def cmd_embed(args):
    out = _out_dir(args)
    checkpoint, corpus = _load_pair(args.checkpoint, args.corpus)
    coords = ops.embed(checkpoint, corpus, args.dims)
    labels = corpus.labels[0] if corpus.labels else [""] * corpus.size
    report.write_table(
        out / "embedding.tsv",
        ["index", "name", "label"] + [f"dim{i + 1}" for i in range(args.dims)],
        [(k, corpus.names[k], labels[k], *coords[k]) for k in range(corpus.size)])
    if args.dims >= 2:
        report.embedding_figure(out / "embedding.png", coords,
                                corpus.labels[0] if corpus.labels else None)
    print(f"embedded {corpus.size} models -> {out / 'embedding.tsv'}")
    return 0


def cmd_explore(args):
    out = _out_dir(args)
    checkpoint, corpus = _load_pair(args.checkpoint, args.corpus)
    dims = _ints(args.dims)
    if len(dims) != 2:
        raise ValueError("--dims needs exactly two comma-separated indices")
    rng_lo, rng_hi = _floats(args.range)
    base = np.zeros(checkpoint.latent_dim)
    if args.base_code:
        vals = _floats(args.base_code)
        if len(vals) > checkpoint.latent_dim:
            raise ValueError("--base-code longer than the latent dimension")
        base[:len(vals)] = vals
    condition = _condition(args, checkpoint)
    grid = ops.explore_grid(checkpoint, corpus.base_mesh, (dims[0], dims[1]),
                            base, (rng_lo, rng_hi), args.resolution, condition)
    for i, row in enumerate(grid):
        for j, mesh in enumerate(row):
            save_obj(mesh, out / f"cell_{i:02d}_{j:02d}.obj")
    print(f"wrote {args.resolution}x{args.resolution} grid to {out}")
    return 0


def cmd_eval(args):
    out = _out_dir(args)
    checkpoint, corpus = _load_pair(args.checkpoint, args.corpus)
    session = ops.SessionGeometry(checkpoint, corpus.geometry)
    diag = corpus_bbox_diagonal(corpus)
    conds = corpus.condition_indices(range(corpus.size))
    rows = []
    for k in corpus.heldout_idx:
        cond = tuple(conds[k]) if conds is not None and checkpoint.vocabularies else None
        mu = session.posterior_mean(corpus.features[k], cond)
        rec = session.decode(mu, cond)
        err = per_vertex_error(rec, corpus.meshes[k])
        rows.append((int(k), corpus.names[k], err, err / diag))
    mean_err = sum(r[2] for r in rows) / len(rows)
    report.write_table(out / "eval.tsv",
                       ["index", "name", "per_vertex_error", "relative_to_diag"],
                       rows)
    report.error_figure(out / "eval.png", [r[1] for r in rows],
                        [r[2] for r in rows], diag)
    width = max(len(r[1]) for r in rows)
    print(f"held-out per-vertex reconstruction error (bbox diagonal {diag:.6g}):")
    for k, name, err, rel in rows:
        print(f"  {name:<{width}}  {err:.6e}  ({100 * rel:.3f}% of diagonal)")
    print(f"  mean: {mean_err:.6e} ({100 * mean_err / diag:.3f}% of diagonal)")
    return 0


def cmd_serve(args):
    from . import service  # deferred: pulls in fastapi

    checkpoint, corpus = _load_pair(args.checkpoint, args.corpus)
    service.serve(checkpoint, corpus, host=args.host, port=args.port,
                  ui_dir=args.ui)
    return 0


# -- parser -----------------------------------------------------------------


def _add_common(sp, *, corpus=True):
    sp.add_argument("--checkpoint", required=True, help="checkpoint file")
    if corpus:
        sp.add_argument("--corpus", required=True, help="corpus cache file")


def build_parser():
    p = argparse.ArgumentParser(
        prog="shapespace",
        description="Latent spaces for collections of deforming meshes.")
    p.add_argument("--config", help="flat key = value file pre-seeding flags")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth-corpus", help="generate a synthetic tube corpus")
    sp.add_argument("--kind", choices=SYNTH_KINDS, required=True)
    sp.add_argument("--count", type=int, default=80)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rings", type=int, default=20)
    sp.add_argument("--segments", type=int, default=20)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_synth_corpus)

    sp = sub.add_parser("ingest", help="encode an OBJ directory into a corpus cache")
    sp.add_argument("--dir", required=True)
    sp.add_argument("--base-index", type=int, default=0)
    sp.add_argument("--split", type=float, default=0.9)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_ingest)

    sp = sub.add_parser("encode", help="feature file from a mesh pair")
    sp.add_argument("--reference", required=True)
    sp.add_argument("--deformed", required=True)
    sp.add_argument("--name", default="feature.rimd")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_encode)

    sp = sub.add_parser("decode", help="mesh from a feature file")
    sp.add_argument("--reference", required=True)
    sp.add_argument("--feature", required=True)
    sp.add_argument("--name", default="decoded.obj")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_decode)

    sp = sub.add_parser("train", help="train a model on a corpus cache")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--alpha", type=float, default=1e6,
                    help="reconstruction loss weight")
    sp.add_argument("--latent-dim", type=int, default=128)
    sp.add_argument("--hidden", default="1024,512")
    sp.add_argument("--sigma-object", default="",
                    help="per-dimension prior deviations, short lists pad "
                         "with the last value")
    sp.add_argument("--sigma-max", type=float, default=2.0)
    sp.add_argument("--lr", type=float, default=0.001)
    sp.add_argument("--epochs", type=int, default=500)
    sp.add_argument("--batch", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--condition-files", default="",
                    help="comma-separated label files, one token per line")
    sp.add_argument("--unconditional", action="store_true",
                    help="ignore corpus labels during training")
    sp.add_argument("--name", default="model.ckpt")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("generate", help="sample new meshes from the prior")
    _add_common(sp)
    sp.add_argument("--count", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--condition", default=None)
    sp.add_argument("--mean", action="store_true",
                    help="decode the zero code instead of sampling")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_generate)

    sp = sub.add_parser("interpolate", help="latent path between two meshes")
    _add_common(sp)
    sp.add_argument("--a", required=True, help="first OBJ")
    sp.add_argument("--b", required=True, help="second OBJ")
    sp.add_argument("--steps", type=int, default=10)
    sp.add_argument("--condition", default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_interpolate)

    sp = sub.add_parser("embed", help="posterior-mean embedding table + figure")
    _add_common(sp)
    sp.add_argument("--dims", type=int, default=2)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_embed)

    sp = sub.add_parser("explore", help="decode a lattice over two latent dims")
    _add_common(sp)
    sp.add_argument("--dims", default="0,1", help="two 0-based dims, e.g. 0,1")
    sp.add_argument("--range", default="-2,2")
    sp.add_argument("--resolution", type=int, default=5)
    sp.add_argument("--base-code", default="",
                    help="values for leading dims; remaining dims zero")
    sp.add_argument("--condition", default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_explore)

    sp = sub.add_parser("eval", help="held-out reconstruction error table")
    _add_common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("serve", help="HTTP explorer service")
    _add_common(sp)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8600)
    sp.add_argument("--ui", default=None,
                    help="directory of built UI assets to serve at /")
    sp.set_defaults(fn=cmd_serve)

    return p


def _read_config(path):
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(value, default):
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def main(argv=None):
    logging.basicConfig(
        level=getattr(logging, os.environ.get("SHAPESPACE_LOG", "INFO").upper(),
                      logging.INFO),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)

    # pre-scan for --config so file values become subcommand defaults;
    # explicit flags still override them
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            overrides = _read_config(known.config)
        except _ERRORS as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for action_parser in parser._subparsers._group_actions[0].choices.values():
            defaults = {a.dest: a.default for a in action_parser._actions}
            usable = {}
            for key, val in overrides.items():
                if key in defaults:
                    try:
                        usable[key] = _coerce(val, defaults[key])
                    except ValueError:
                        print(f"error: config value {key} = {val!r} is invalid",
                              file=sys.stderr)
                        return 2
            action_parser.set_defaults(**usable)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
