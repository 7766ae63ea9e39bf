"""Command-line entry point: ``wsvad {synth,train,eval,ablate,sweep,gradcheck}``.

Every command prints its resolved settings as ``key = value`` lines first;
that block is a valid ``--config`` file for reproducing the run.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import statistics
import sys
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from wsvad import __version__
from wsvad.checkpoint import load_checkpoint, load_train_state, save_train_state
from wsvad.crossbatch import STRATEGIES
from wsvad.data import SynthConfig, generate_synthetic, load_dataset, save_dataset
from wsvad.errors import DataError, NumericalError, ShapeError
from wsvad.evaluation import evaluate, write_scores_csv
from wsvad.experiments import ALL_CONFIGS, DEFAULT_ABLATION, ablate, format_summary, run_once
from wsvad.gradcheck import run_gradcheck
from wsvad.losses import HyperParams
from wsvad.model import TAP_LAYERS
from wsvad.training import TrainConfig, append_metrics, fit, write_metrics_header

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _widths(text: str) -> tuple[int, int, int, int]:
    try:
        w = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"widths must be comma-separated integers, got {text!r}")
    if len(w) != 4 or min(w) < 1:
        raise argparse.ArgumentTypeError("widths needs four positive integers, e.g. 512,128,32,1")
    return w


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _on_off(text: str) -> bool:
    if text.lower() in ("on", "true", "1", "yes"):
        return True
    if text.lower() in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _add_synth_args(p: argparse.ArgumentParser) -> None:
    d = SynthConfig()
    g = p.add_argument_group("synthetic data")
    g.add_argument("--dim", type=int, default=d.dim, help="feature dimension (default %(default)s)")
    g.add_argument("--train-per-class", type=int, default=d.train_per_class)
    g.add_argument("--test-per-class", type=int, default=d.test_per_class)
    g.add_argument("--min-frames", type=int, default=d.min_frames)
    g.add_argument("--max-frames", type=int, default=d.max_frames)
    g.add_argument("--separation", type=float, default=d.separation,
                   help="distance between normal and anomaly means (default %(default)s)")
    g.add_argument("--noise", type=float, default=d.noise, help="per-dimension noise sigma")
    g.add_argument("--drift", type=float, default=d.drift, help="amplitude of slow temporal drift")
    g.add_argument("--offset", type=float, default=d.offset, help="norm of the normal-class mean")
    g.add_argument("--min-interval-frames", type=int, default=d.min_interval_frames)
    g.add_argument("--max-interval-frames", type=int, default=d.max_interval_frames)
    g.add_argument("--synth-seed", type=int, default=d.seed)


def _synth_config(a: argparse.Namespace) -> SynthConfig:
    return SynthConfig(
        dim=a.dim, train_per_class=a.train_per_class, test_per_class=a.test_per_class,
        min_frames=a.min_frames, max_frames=a.max_frames, separation=a.separation,
        noise=a.noise, drift=a.drift, offset=a.offset,
        min_interval_frames=a.min_interval_frames, max_interval_frames=a.max_interval_frames,
        seed=a.synth_seed,
    )


def _add_train_args(p: argparse.ArgumentParser) -> None:
    d, hp = TrainConfig(), HyperParams()
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=d.epochs, help="default %(default)s")
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--strategy", choices=STRATEGIES, default=d.strategy,
                   help="cross-batch memory strategy (default %(default)s)")
    g.add_argument("--no-bc-loss", dest="bc_loss", action="store_false",
                   help="disable the batch-clustering loss (requires --strategy none)")
    g.add_argument("--no-bcg", dest="bcg", action="store_false",
                   help="disable pseudo-label score rectification at validation")
    g.add_argument("--rectify-train", action="store_true",
                   help="also rectify scores fed to the k-max loss during training")
    g.add_argument("--tap", choices=TAP_LAYERS, default=d.tap, help="layer clustered per batch")
    g.add_argument("--mu", type=float, default=hp.mu, help="cap on the normal-class distance")
    g.add_argument("--lambda1", type=float, default=hp.lambda1, help="weight of the cluster loss")
    g.add_argument("--alpha", type=float, default=hp.alpha, help="score expansion factor")
    g.add_argument("--lr", type=float, default=hp.lr)
    g.add_argument("--beta1", type=float, default=hp.beta1)
    g.add_argument("--beta2", type=float, default=hp.beta2)
    g.add_argument("--batch-size", type=int, default=hp.batch_size, help="videos per batch, half per class")
    g.add_argument("--dropout", type=float, default=hp.dropout_p)
    g.add_argument("--segments", type=int, default=d.segments, help="segments sampled per video")
    g.add_argument("--widths", type=_widths, default=d.widths, help="FC,GCN1,GCN2,GCN3 widths")
    g.add_argument("--sim-threshold", type=float, default=d.sim_threshold)


def _train_config(a: argparse.Namespace) -> TrainConfig:
    hp = HyperParams(mu=a.mu, lambda1=a.lambda1, alpha=a.alpha, batch_size=a.batch_size,
                     dropout_p=a.dropout, lr=a.lr, beta1=a.beta1, beta2=a.beta2)
    return TrainConfig(hp=hp, epochs=a.epochs, seed=a.seed, strategy=a.strategy,
                       enable_bc=a.bc_loss, enable_bcg=a.bcg, rectify_train=a.rectify_train,
                       tap=a.tap, segments=a.segments, widths=tuple(a.widths),
                       sim_threshold=a.sim_threshold)


def _add_data_args(p: argparse.ArgumentParser, need_train: bool = True) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", type=Path, help="directory holding train.csv and test.csv manifests")
    if need_train:
        g.add_argument("--train-manifest", type=Path)
    g.add_argument("--test-manifest", type=Path)


def _manifests(a: argparse.Namespace) -> tuple[Path | None, Path | None]:
    train = getattr(a, "train_manifest", None)
    test = a.test_manifest
    if a.data is not None:
        train = train or a.data / "train.csv"
        test = test or a.data / "test.csv"
    return train, test


def _load_or_synth(a: argparse.Namespace):
    train_m, test_m = _manifests(a)
    if train_m is None:
        train, test = generate_synthetic(_synth_config(a))
        return train, test
    return load_dataset(train_m), (load_dataset(test_m) if test_m else None)


def cmd_synth(a: argparse.Namespace) -> int:
    train, test = generate_synthetic(_synth_config(a))
    a.out.mkdir(parents=True, exist_ok=True)
    save_dataset(train, a.out / "train.csv")
    save_dataset(test, a.out / "test.csv")
    print(f"wrote {len(train)} training and {len(test)} test videos to {a.out}")
    return EXIT_OK


def cmd_train(a: argparse.Namespace) -> int:
    train_m, test_m = _manifests(a)
    if train_m is None:
        raise UsageError("train needs --data or --train-manifest")
    train = load_dataset(train_m)
    val = load_dataset(test_m) if test_m and test_m.exists() else None
    a.out.mkdir(parents=True, exist_ok=True)
    ckpt_path = a.out / "checkpoint.wsvm"
    metrics_path = a.out / "metrics.csv"
    state = None
    if a.resume is not None:
        state, config = load_train_state(a.resume)
        config = replace(config, epochs=a.epochs)
        print(f"# resumed from {a.resume} at epoch {state.epoch}; stored config used")
        if not metrics_path.exists():
            write_metrics_header(metrics_path)
    else:
        config = _train_config(a)
        write_metrics_header(metrics_path)

    def on_epoch(st, m):
        append_metrics(metrics_path, m)
        save_train_state(ckpt_path, st, config)
        print(f"epoch {m.epoch:3d}  loss {m.loss_total:.5f}  kmax {m.loss_kmax:.5f}  "
              f"d_n {m.d_normal_mean:.4f}  d_a {m.d_abnormal_mean:.4f}  val_auc {m.val_auc:.4f}")

    fit(train, config, val, state=state, on_epoch=on_epoch)
    print(f"checkpoint: {ckpt_path}\nmetrics: {metrics_path}")
    return EXIT_OK


def cmd_eval(a: argparse.Namespace) -> int:
    _, test_m = _manifests(a)
    if test_m is None:
        raise UsageError("eval needs --data or --test-manifest")
    ckpt = load_checkpoint(a.checkpoint)
    stored = (ckpt.train or {}).get("config", {})
    alpha = a.alpha if a.alpha is not None else stored.get("hp", {}).get("alpha", HyperParams().alpha)
    tap = a.tap or stored.get("tap", "gcn1")
    sim = stored.get("sim_threshold", 0.0)
    videos = load_dataset(test_m)
    res = evaluate(ckpt.params, videos, rectify=a.rectify_eval, alpha=alpha, tap=tap,
                   seed=a.seed, sim_threshold=sim)
    print(f"frame-level AUC: {res.auc:.6f}")
    if a.scores_out is not None:
        write_scores_csv(res, a.scores_out)
        print(f"scores: {a.scores_out}")
    return EXIT_OK


def cmd_ablate(a: argparse.Namespace) -> int:
    train, test = _load_or_synth(a)
    if test is None:
        raise UsageError("ablate needs a test set")
    base = _train_config(a)
    rows = ablate(train, test, base, a.configs, list(range(a.seeds)))
    table = format_summary(rows)
    print(table)
    if a.out is not None:
        a.out.write_text(table + "\n")
    return EXIT_OK


def cmd_sweep(a: argparse.Namespace) -> int:
    train, test = _load_or_synth(a)
    if test is None:
        raise UsageError("sweep needs a test set")
    base = _train_config(a)
    print("mu       lambda1  mean_auc  per_seed")
    for mu in a.mus:
        for lam in a.lambdas:
            hp = replace(base.hp, mu=mu, lambda1=lam)
            aucs = [run_once(train, test, replace(base, hp=hp, seed=s)) for s in range(a.seeds)]
            per = " ".join(f"{x:.4f}" for x in aucs)
            print(f"{mu:<8g} {lam:<8g} {statistics.fmean(aucs):.4f}    {per}")
    return EXIT_OK


def cmd_gradcheck(a: argparse.Namespace) -> int:
    report = run_gradcheck(segments=a.segments, feature_dim=a.dim, widths=tuple(a.widths),
                           seed=a.seed, h=a.step, tol=a.tol)
    print("\n".join(report.lines()))
    print(f"max relative error {report.worst:.3e} (tolerance {a.tol:g})")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wsvad", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--out", type=Path, required=True)
    _add_synth_args(s)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train and write checkpoint.wsvm + metrics.csv")
    _add_data_args(t)
    t.add_argument("--out", type=Path, required=True, help="run directory")
    t.add_argument("--resume", type=Path, help="checkpoint to continue from")
    _add_train_args(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="frame-level AUC of a checkpoint")
    _add_data_args(e, need_train=False)
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--rectify-eval", type=_on_off, default=True, help="on/off (default on)")
    e.add_argument("--alpha", type=float, help="default: value stored in the checkpoint, else 1.3")
    e.add_argument("--tap", choices=TAP_LAYERS, help="default: value stored in the checkpoint")
    e.add_argument("--seed", type=int, default=0, help="seed for per-video clustering")
    e.add_argument("--scores-out", type=Path, help="write per-frame scores.csv here")
    e.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="compare components and strategies across seeds")
    _add_data_args(ab)
    ab.add_argument("--seeds", type=int, default=5)
    ab.add_argument("--configs", nargs="+", choices=sorted(ALL_CONFIGS), default=DEFAULT_ABLATION)
    ab.add_argument("--out", type=Path, help="also write the summary table here")
    _add_train_args(ab)
    _add_synth_args(ab)
    ab.set_defaults(func=cmd_ablate)

    sw = sub.add_parser("sweep", help="grid over mu and lambda1")
    _add_data_args(sw)
    sw.add_argument("--mus", type=_floats, default=[0.5, 1.0, 2.0])
    sw.add_argument("--lambdas", type=_floats, default=[0.01, 0.1, 1.0])
    sw.add_argument("--seeds", type=int, default=3)
    _add_train_args(sw)
    _add_synth_args(sw)
    sw.set_defaults(func=cmd_sweep)

    g = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    g.add_argument("--segments", type=int, default=4)
    g.add_argument("--dim", type=int, default=5)
    g.add_argument("--widths", type=_widths, default=(8, 6, 4, 1))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--step", type=float, default=1e-5)
    g.add_argument("--tol", type=float, default=1e-6)
    g.set_defaults(func=cmd_gradcheck)

    for sp in (s, t, e, ab, sw, g):
        sp.add_argument("--config", type=Path, help="key=value file; command-line flags win")
    return p


def read_config_file(path: Path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (x.strip() for x in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def _find_config(argv: list[str]) -> tuple[str | None, Path | None]:
    command = next((x for x in argv if not x.startswith("-")), None)
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return command, Path(argv[i + 1])
        if tok.startswith("--config="):
            return command, Path(tok.split("=", 1)[1])
    return command, None


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """File values become subcommand defaults, so explicit flags still win."""
    command, path = _find_config(argv)
    if path is None or command is None:
        return parser.parse_args(argv)
    try:
        values = read_config_file(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}")
    try:
        sp = _subparser(parser, command)
    except KeyError:
        return parser.parse_args(argv)
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config", "func")}
    defaults = {}
    for key, raw in values.items():
        if key not in actions:
            raise UsageError(f"{path}: unknown key {key!r} for '{command}'")
        act = actions[key]
        try:
            if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                defaults[key] = _on_off(raw)
            elif act.nargs in ("+", "*"):
                defaults[key] = raw.split()
            elif raw in ("None", ""):
                defaults[key] = None
            else:
                defaults[key] = act.type(raw) if act.type else raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}: bad value for {key!r}: {exc}")
        if act.required:
            act.required = False
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _format_value(v) -> str:
    if isinstance(v, (tuple, list)):
        sep = " " if v and isinstance(v[0], str) else ","
        return sep.join(str(x) for x in v)
    return str(v)


def print_resolved(a: argparse.Namespace) -> None:
    print(f"# wsvad {__version__} {a.command}")
    for key in sorted(vars(a)):
        if key in ("func", "command", "config", "verbose"):
            continue
        v = getattr(a, key)
        if isinstance(v, bool):
            v = "on" if v else "off"
        print(f"{key} = {_format_value(v)}")
    print("#")


@contextlib.contextmanager
def _thread_limit():
    n = int(os.environ.get("WSVAD_THREADS", "0") or 0)
    if n > 0:
        with threadpool_limits(limits=n):
            yield
    else:
        yield


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = _apply_config_file(parser, argv)
        if not hasattr(args, "func"):
            parser.error("missing command")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        print_resolved(args)
        sys.stdout.flush()
        with _thread_limit():
            return args.func(args)
    except UsageError as exc:
        print(f"wsvad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError) as exc:
        print(f"wsvad: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"wsvad: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"wsvad: invalid setting: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
