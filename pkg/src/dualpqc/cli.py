"""Command-line front end.

Commands: ``gen-data``, ``train``, ``eval``, ``verify-dilation``.
Exit codes: 0 success, 1 validation or domain error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
from contextlib import nullcontext
from importlib import resources
from pathlib import Path

import numpy as np

from .data import gen_synthetic_dataset, kmeans, load_dataset, match_bijection, relative_entropy, save_dataset
from .errors import DatasetParseError, DomainError, TrainingDiverged
from .generator import GeneratorOutput, generate, mean_image
from .runio import (
    MetricsWriter,
    RUN_FILES,
    file_sha256,
    read_generator_output,
    read_manifest,
    write_checkpoint,
    write_generator_output,
    write_manifest,
)
from .stinespring import (
    RECOVERY_TOL,
    UNITARY_TOL,
    ImageSet,
    build_dilation_unitary,
    random_image_set,
    unitarity_residual,
    verify_recovery,
)
from .training import format_config, parse_config, train

log = logging.getLogger("dualpqc")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
SHIPPED_CONFIGS = ("paper_d16", "paper_d6")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def load_config_text(name_or_path: str) -> str:
    if name_or_path in SHIPPED_CONFIGS:
        return resources.files("dualpqc").joinpath("configs", f"{name_or_path}.cfg").read_text()
    return Path(name_or_path).read_text()


def _resolve_data(config, data_path):
    """Dataset array plus a manifest description of where it came from."""
    if data_path:
        data = load_dataset(data_path, width=2**config.n)
        return data, {"kind": "file", "path": str(Path(data_path).resolve()), "sha256": file_sha256(data_path)}
    data = gen_synthetic_dataset(config.n_samples, config.seed_data, n_pixels=2**config.n)
    return data, {"kind": "synthetic", "n_samples": config.n_samples, "seed": config.seed_data}


def _data_from_manifest(config, source):
    if source["kind"] == "file":
        if file_sha256(source["path"]) != source["sha256"]:
            raise DomainError(f"{source['path']} changed since the run (sha256 mismatch)")
        return source["path"]
    return None


def cmd_gen_data(args) -> int:
    data = gen_synthetic_dataset(args.n_samples, args.seed, n_pixels=2**args.n)
    save_dataset(data, args.out)
    print(f"wrote {len(data)} rows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.manifest:
        manifest = read_manifest(args.manifest)
        config_text = manifest["config"]
        base = parse_config(config_text)
        data_path = _data_from_manifest(base, manifest["data"])
    else:
        if not args.config:
            raise DomainError("train needs --config or --manifest")
        config_text = load_config_text(args.config)
        data_path = args.data
    config_text += "".join(f"{kv}\n" for kv in args.set or [])
    config = parse_config(config_text)
    data, source = _resolve_data(config, data_path)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(format_config(config))
    started = _now()
    writer = MetricsWriter(out / "metrics.csv", config.n)
    checkpoints = []

    def on_epoch(record, gen, disc):
        writer.append(record)
        every = config.checkpoint_every
        if (every and record.epoch % every == 0) or record.epoch == config.epochs:
            checkpoints.append(str(write_checkpoint(out, record.epoch, gen, disc).relative_to(out)))

    try:
        gen, disc, history = train(config, data, callback=on_epoch)
    except TrainingDiverged as exc:
        (out / "diverged.json").write_text(json.dumps(exc.dump) + "\n")
        raise
    final = generate(config.circuit, gen)
    write_generator_output(out / "final_output.json", config.n, final, mean_image(final), gen)
    artifacts = {"config": "config.cfg", "metrics": "metrics.csv", "final_output": "final_output.json"}
    artifacts["checkpoints"] = checkpoints
    write_manifest(out / "manifest.json", format_config(config), source, started, _now(), artifacts)
    last = history[-1]
    print(f"trained {config.epochs} epochs; final KL(mean) = {last.kl_mean:.6e}; p_g = {np.round(last.p_g, 4).tolist()}")
    return EXIT_OK


def evaluate(images, p_g, data, k_seed):
    """Cluster ``data``, compare the generated mean image and match images to clusters."""
    n_images = len(p_g)
    clusters = kmeans(data, n_images, seed=k_seed)
    gen_mean = mean_image(GeneratorOutput(np.asarray(p_g), np.asarray(images)))
    real_mean = data.mean(axis=0)
    bij = match_bijection(images, clusters.means)
    return {
        "clusters": clusters,
        "kl_mean": relative_entropy(real_mean, gen_mean),
        "kl_mean_reverse": relative_entropy(gen_mean, real_mean),
        "bijection": bij,
        "real_mean": real_mean,
        "gen_mean": gen_mean,
    }


def cmd_eval(args) -> int:
    run = Path(args.run)
    missing = [f for f in RUN_FILES if not (run / f).exists()]
    if missing:
        raise FileNotFoundError(f"{run} is missing expected files: {', '.join(missing)}")
    manifest = read_manifest(run / "manifest.json")
    config = parse_config(manifest["config"])
    output = read_generator_output(run / "final_output.json")
    dim = 2 ** output["n"]
    if args.data:
        data = load_dataset(args.data)
    else:
        data, _ = _resolve_data(config, _data_from_manifest(config, manifest["data"]))
    if data.shape[1] != dim:
        raise DomainError(f"run generates {dim}-pixel images but the data has {data.shape[1]} pixels")
    seed = config.seed_data if args.seed is None else args.seed
    res = evaluate(output["images"], output["p_g"], data, seed)
    bij = res["bijection"]

    cols = ["image", "cluster", "p_g", "kl_cluster_image", "cluster_size"]
    cols += [f"image_px{j}" for j in range(dim)] + [f"cluster_px{j}" for j in range(dim)]
    rows = [",".join(cols)]
    counts = res["clusters"].counts
    for i, s in enumerate(bij.perm):
        vals = [i, s, output["p_g"][i], bij.pair_kl[i], int(counts[s])]
        vals += list(output["images"][i]) + list(res["clusters"].means[s])
        rows.append(",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals))
    (run / "eval_table.csv").write_text("\n".join(rows) + "\n")

    summary = [
        f"mean-image relative entropy KL(real || generated) = {res['kl_mean']:.6e}",
        f"mean-image relative entropy KL(generated || real) = {res['kl_mean_reverse']:.6e}",
        f"real mean      = {np.round(res['real_mean'], 6).tolist()}",
        f"generated mean = {np.round(res['gen_mean'], 6).tolist()}",
        f"bijection total KL = {bij.total_kl:.6e}",
    ]
    for i, s in enumerate(bij.perm):
        summary.append(f"  image {i} -> set {s}   p_g = {output['p_g'][i]:.4f}   KL = {bij.pair_kl[i]:.6e}")
    text = "\n".join(summary) + "\n"
    (run / "eval_summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def load_image_file(path) -> ImageSet:
    rows = load_dataset(path)
    if rows.shape[0] != rows.shape[1]:
        raise DatasetParseError(f"{path}: need 2**n images of 2**n pixels, got {rows.shape[0]} x {rows.shape[1]}")
    return ImageSet(rows)


def cmd_verify_dilation(args) -> int:
    if args.images:
        images = load_image_file(args.images)
    else:
        if args.random < 1:
            raise DomainError("--random needs n >= 1")
        images = random_image_set(args.random, np.random.default_rng(args.seed), with_phases=args.phases)
    U = build_dilation_unitary(images)
    residual = unitarity_residual(U)
    recovery = float(verify_recovery(U, images).max())
    ok = residual < UNITARY_TOL and recovery < RECOVERY_TOL
    print(f"n = {images.n}, unitary {U.shape[0]}x{U.shape[1]}")
    print(f"unitarity residual = {residual:.3e} (threshold {UNITARY_TOL:g})")
    print(f"max recovery error = {recovery:.3e} (threshold {RECOVERY_TOL:g})")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dualpqc", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic shower-profile dataset")
    p.add_argument("--n-samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=2, help="images have 2**n pixels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the dual-PQC GAN")
    p.add_argument("--config", help=f"config file or shipped name ({', '.join(SHIPPED_CONFIGS)})")
    p.add_argument("--manifest", help="re-run the configuration and data recorded in a run manifest")
    p.add_argument("--data", help="dataset file; synthetic data is generated when omitted")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--data", help="dataset file; defaults to the run's own data")
    p.add_argument("--seed", type=int, default=None, help="k-means seed (default: the run's seed_data)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify-dilation", help="check the 2n-qubit dilation construction")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--images", help="image file, 2**n rows of 2**n pixels")
    group.add_argument("--random", type=int, metavar="N", help="random image set with 2**N pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--phases", action="store_true", help="give random images random phases")
    p.set_defaults(func=cmd_verify_dilation)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads is not None:
        from threadpoolctl import threadpool_limits

        limits = threadpool_limits(limits=max(1, args.threads))
    else:
        limits = nullcontext()
    try:
        with limits:
            return args.func(args)
    except (DomainError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
