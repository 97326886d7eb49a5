"""``ditnano`` command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime or numeric
failure, 4 I/O or file-format error. Every subcommand accepts
``--config FILE`` (flat ``key=value`` lines, keys named like the long flags);
flags given on the command line win over the file. The fully resolved
configuration is printed to stderr before any work starts.

Thread count for the numeric backend comes from ``DITNANO_THREADS``.
"""

from __future__ import annotations

import os
import sys

_THREADS = os.environ.get("DITNANO_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse
import time
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from . import __version__
from .arch_plan import DitConfig, count_params, plan
from .errors import (
    ConfigError,
    DitNanoError,
    DomainError,
    FormatError,
    NumericError,
    PlanError,
    PlanningError,
    SetupError,
    StateError,
    ValidationError,
)
from .fileio import atomic_write_text, write_tensor

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
_USAGE_ERRORS = (ConfigError, PlanningError, PlanError, SetupError, DomainError)
_IO_ERRORS = (FormatError, ValidationError, OSError)


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ parsing
def parse_count(text: str) -> int:
    """Integer with an optional decimal K or M suffix: ``2.2M`` -> 2200000."""
    s = str(text).strip().upper().replace("_", "")
    mult = 1
    if s.endswith("K"):
        mult, s = 1_000, s[:-1]
    elif s.endswith("M"):
        mult, s = 1_000_000, s[:-1]
    try:
        value = Decimal(s) * mult
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a count: {text!r}") from None
    if value != value.to_integral_value():
        raise argparse.ArgumentTypeError(f"{text!r} is not a whole number of parameters")
    return int(value)


def parse_bool(text: str) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def parse_class(text: str) -> int | None:
    s = str(text).strip().lower()
    if s in ("null", "none", "-1"):
        return None
    try:
        return int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"class must be an integer or 'null', got {text!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None


def read_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path} line {n}: expected key=value, got {raw.strip()!r}")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


# ------------------------------------------------------------------ parser
def _geometry(p: argparse.ArgumentParser, img: int = 32) -> None:
    p.add_argument("--img", type=int, default=img, help="image side in pixels (default %(default)s)")
    p.add_argument("--patch", type=int, default=2, help="patch size (default %(default)s)")
    p.add_argument("--channels", type=int, default=3, help="image channels (default %(default)s)")
    p.add_argument("--classes", type=int, default=10, help="number of classes (default %(default)s)")
    p.add_argument("--mlp-ratio", type=int, default=4, help="MLP expansion ratio (default %(default)s)")


def _arch(p: argparse.ArgumentParser, d=None, w=None, h=None) -> None:
    p.add_argument("--d", type=int, default=d, required=d is None, help="depth (transformer blocks)")
    p.add_argument("--w", type=int, default=w, required=w is None, help="width (embedding dimension)")
    p.add_argument("--h", type=int, default=h, required=h is None, help="attention heads")


def _schedule(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma-min", type=float, default=0.02, help="smallest noise level (default %(default)s)")
    p.add_argument("--sigma-max", type=float, default=80.0, help="largest noise level (default %(default)s)")
    p.add_argument("--rho", type=float, default=7.0, help="schedule curvature (default %(default)s)")


def _table_source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--results", help="results CSV (name,d,w,h,params,latency_s,fid[,is])")
    g.add_argument("--table", choices=("table2", "table5", "all"), help="bundled transcription (default table5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ditnano", description="Plan, distil and analyse miniature DiTs.")
    parser.add_argument("--version", action="version", version=f"ditnano {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="key=value file; command-line flags take precedence")
        return p

    p = command("plan", "rank (depth, width, heads) configurations under a parameter budget")
    p.add_argument("--budget", type=parse_count, required=True, help="parameter budget, e.g. 2200000 or 2.2M")
    _geometry(p)
    p.add_argument("--w-min", type=int, default=16, help="smallest width considered (default %(default)s)")
    p.add_argument("--w-max", type=int, default=1024, help="largest width considered (default %(default)s)")
    p.add_argument("--top", type=int, default=0, help="show only the first N candidates (0 = all)")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of a table")

    p = command("params", "parameter count breakdown of one configuration")
    _arch(p)
    _geometry(p)
    p.add_argument("--csv", action="store_true", help="emit CSV instead of a table")

    p = command("schedule", "tabulate noise level and signal fraction as CSV (t,sigma,alpha)")
    p.add_argument("--points", type=int, default=11, help="evenly spaced samples on [0, 1] (default %(default)s)")
    _schedule(p)
    p.add_argument("--csv", action="store_true", help="accepted for symmetry; output is always CSV")

    p = command("mi1-targets", "write multi-in-one layer targets as TNSR files")
    p.add_argument("--layers", type=_int_list, required=True, help="student layers, e.g. 3,6")
    p.add_argument("--times", type=_float_list, required=True, help="listed times, e.g. 0.5,0")
    p.add_argument("--depth", type=int, default=None, help="student depth to validate against (default: last layer)")
    p.add_argument("--data", default="synth", help="DTP1 file or 'synth' (default %(default)s)")
    p.add_argument("--n-pairs", type=int, default=4, help="synthetic pairs to draw (default %(default)s)")
    p.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic stream (default %(default)s)")
    p.add_argument("--img", type=int, default=8, help="synthetic image side (default %(default)s)")
    p.add_argument("--classes", type=int, default=10, help="number of classes (default %(default)s)")
    p.add_argument("--out", required=True, help="output directory; one layer{L}.tnsr per plan entry")
    _schedule(p)
    p.add_argument("--csv", action="store_true", help="list written files as CSV (layer,t,sigma,path)")

    p = command("train", "distil a student on teacher pairs")
    p.add_argument("--method", choices=("get", "ta", "mi1"), default="get", help="distillation setup")
    p.add_argument("--data", default="synth", help="DTP1 file or 'synth' (default %(default)s)")
    p.add_argument("--n-pairs", type=int, default=500, help="synthetic pairs (default %(default)s)")
    p.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic stream (default %(default)s)")
    _arch(p, 2, 32, 4)
    _geometry(p, img=8)
    p.add_argument("--lr", type=float, default=1e-4, help="learning rate (default %(default)s)")
    p.add_argument("--weight-decay", type=float, default=0.01, help="decoupled weight decay (default %(default)s)")
    p.add_argument("--batch-size", type=int, default=32, help="pairs per step (default %(default)s)")
    p.add_argument("--epochs", type=int, default=100, help="passes over the data (default %(default)s)")
    p.add_argument("--steps", type=int, default=None, help="exact step count; overrides --epochs")
    p.add_argument("--ema-decay", type=float, default=0.9999, help="EMA decay (default %(default)s)")
    p.add_argument("--cfg-dropout", type=float, default=0.1, help="label dropout probability (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="initialization and sampling seed (default %(default)s)")
    p.add_argument("--metric", default="pyramid:3", help="l1 | l2 | pyramid[:S] | external:PATH")
    p.add_argument("--layers", type=_int_list, default=None, help="MI1 student layers, e.g. 2,4,6")
    p.add_argument("--times", type=_float_list, default=None, help="MI1 listed times, e.g. 0.66,0.33,0")
    _schedule(p)
    p.add_argument("--ta-ckpt", default=None, help="teaching-assistant checkpoint (required for --method ta)")
    p.add_argument("--lambdas", type=_float_list, default=(1.0, 1.0, 1.0), help="TA loss weights l0,l1,l2")
    p.add_argument("--ta-layer", type=int, default=None, help="TA layer to match (default penultimate)")
    p.add_argument("--student-layer", type=int, default=None, help="student layer to match (default penultimate)")
    p.add_argument("--feature-mode", choices=("tokens", "decoded"), default="tokens", help="TA feature distance")
    p.add_argument("--ckpt", required=True, help="output checkpoint path")
    p.add_argument("--loss-csv", default=None, help="output loss curve CSV (step,loss,ema_loss)")

    p = command("generate", "one-step class-conditional generation with guidance")
    p.add_argument("--ckpt", required=True, help="checkpoint to sample from")
    p.add_argument("--class", dest="class_id", type=parse_class, default=0, help="class id or 'null'")
    p.add_argument("--cfg-scale", type=float, default=1.5, help="guidance scale (default %(default)s)")
    p.add_argument("--use-ema", type=parse_bool, default=True, help="sample from EMA weights (default %(default)s)")
    p.add_argument("--n", type=int, default=1, help="images to generate (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="noise seed (default %(default)s)")
    p.add_argument("--out", required=True, help="output TNSR file [n, C, H, W]")

    p = command("pareto", "non-dominated (params, latency, fid) rows of a results table")
    _table_source(p)
    p.add_argument("--out", default=None, help="write the frontier CSV here instead of stdout")
    p.add_argument("--gnuplot", default=None, help="also write a whitespace table for plotting")
    p.add_argument("--csv", action="store_true", help="accepted for symmetry; output is always CSV")

    p = command("latency-fit", "fit the latency model to a results table")
    _table_source(p)
    p.add_argument("--heads-term", type=parse_bool, default=False, help="add the d*h*N^2 term (default %(default)s)")
    p.add_argument("--csv", action="store_true", help="emit per-row predictions as CSV")

    p = command("bench", "time local forward passes of a configuration")
    _arch(p, 2, 32, 4)
    _geometry(p, img=8)
    p.add_argument("--batch", type=int, default=8, help="images per forward (default %(default)s)")
    p.add_argument("--repeats", type=int, default=5, help="timed repetitions (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="weight and input seed (default %(default)s)")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of a table")
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _config_path(argv: list[str]) -> str | None:
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    return path


def apply_config_file(parser: argparse.ArgumentParser, command: str, path: str) -> None:
    """Install file values as subcommand defaults, so explicit flags still win."""
    values = read_config_file(path)
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"{path}: unknown key {key!r} for '{command}'")
        if action.nargs == 0:
            defaults[key] = parse_bool(raw)
            continue
        conv = action.type or str
        try:
            value = conv(raw)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"{path}: bad value for {key}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"{path}: {key} must be one of {list(action.choices)}")
        defaults[key] = value
        action.required = False
    sub.set_defaults(**defaults)


# ------------------------------------------------------------------ output
def _styled(text: str) -> str:
    if os.environ.get("NO_COLOR") or not sys.stderr.isatty():
        return text
    return f"\033[1m{text}\033[0m"


def print_resolved(args: argparse.Namespace) -> None:
    lines = [_styled(f"# ditnano {args.command}: resolved configuration")]
    for key in sorted(vars(args)):
        if key == "command":
            continue
        value = getattr(args, key)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"#   {key} = {value}")
    sys.stderr.write("\n".join(lines) + "\n")
    sys.stderr.flush()


def _emit(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


def _config(args, depth=None, width=None, heads=None) -> DitConfig:
    return DitConfig(
        depth=args.d if depth is None else depth,
        width=args.w if width is None else width,
        heads=args.h if heads is None else heads,
        patch_size=args.patch,
        image_size=args.img,
        in_channels=args.channels,
        num_classes=args.classes,
        mlp_ratio=args.mlp_ratio,
    )


def _spec(args):
    from .schedules import ScheduleSpec

    return ScheduleSpec(args.sigma_min, args.sigma_max, args.rho)


def _pairs(args, channels: int = 3):
    from .distill.data import TeacherPairReader, synth_teacher

    if args.data == "synth":
        return list(synth_teacher(args.n_pairs, args.data_seed, args.img, channels, args.classes))
    return list(TeacherPairReader(args.data, num_classes=args.classes))


def _points(args):
    from .perf.results import bundled_table, load_results_csv

    if args.results:
        return load_results_csv(args.results)
    table = args.table or "table5"
    if table == "all":
        return bundled_table("table2") + bundled_table("table5")
    return bundled_table(table)


# ------------------------------------------------------------------ commands
def cmd_plan(args) -> int:
    result = plan(
        args.budget,
        image_size=args.img,
        patch_size=args.patch,
        in_channels=args.channels,
        num_classes=args.classes,
        mlp_ratio=args.mlp_ratio,
        w_min=args.w_min,
        w_max=args.w_max,
    )
    if args.top > 0:
        result = type(result)(result.budget, result.candidates[: args.top], result.notes)
    _emit(result.to_csv() if args.csv else result.to_table())
    return EXIT_OK


def cmd_params(args) -> int:
    cfg = _config(args)
    counts = count_params(cfg).as_dict()
    if args.csv:
        _emit("component,params\n" + "".join(f"{k},{v}\n" for k, v in counts.items()))
    else:
        _emit(f"{cfg.name}\n" + "".join(f"  {k:<16} {v:>12,}\n" for k, v in counts.items()))
    return EXIT_OK


def cmd_schedule(args) -> int:
    from .schedules import schedule_table

    rows = schedule_table(_spec(args), args.points)
    _emit("t,sigma,alpha\n" + "".join(f"{t!r},{s!r},{a!r}\n" for t, s, a in rows))
    return EXIT_OK


def cmd_mi1_targets(args) -> int:
    from .distill.data import stack_pairs
    from .schedules import formula_time, mi1_targets, parse_plan, sigma

    spec = _spec(args)
    mplan = parse_plan(args.layers, args.times)
    depth = args.depth if args.depth is not None else mplan.layers[-1]
    mplan.validate_for(depth)
    z, _, x = stack_pairs(_pairs(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for (layer, target), t in zip(mi1_targets(spec, mplan, z.astype(np.float64), x.astype(np.float64)), mplan.times):
        path = out / f"layer{layer}.tnsr"
        write_tensor(path, target.astype(np.float32))
        rows.append((layer, t, sigma(spec, formula_time(t)), path))
    if args.csv:
        _emit("layer,t,sigma,path\n" + "".join(f"{l},{t!r},{s!r},{p}\n" for l, t, s, p in rows))
    else:
        _emit("".join(f"layer {l:>3}  t={t:<6g} sigma={s:<10.6g} -> {p}\n" for l, t, s, p in rows))
    return EXIT_OK


def cmd_train(args) -> int:
    from .distill.losses import TaSetup
    from .distill.train import TrainConfig, train
    from .schedules import parse_plan
    from .tiny_dit.checkpoint import load_checkpoint
    from .tiny_dit.model import init_model

    if args.method == "ta" and not args.ta_ckpt:
        raise UsageError("--method ta requires --ta-ckpt")
    mplan = None
    if args.method == "mi1":
        if args.layers is None or args.times is None:
            raise UsageError("--method mi1 requires --layers and --times")
        mplan = parse_plan(args.layers, args.times)
    if len(args.lambdas) != 3:
        raise UsageError(f"--lambdas needs three values, got {len(args.lambdas)}")

    pairs = _pairs(args, args.channels)
    c, h, w = pairs[0].z.shape
    if h != w:
        raise ConfigError(f"teacher images must be square, got {h}x{w}")
    cfg = _config(args).replace(image_size=h, in_channels=c)
    tcfg = TrainConfig(
        method=args.method,
        lr=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        epochs=args.epochs,
        steps=args.steps,
        ema_decay=args.ema_decay,
        seed=args.seed,
        cfg_dropout=args.cfg_dropout,
        metric=args.metric,
        plan=mplan,
        schedule=_spec(args),
    )
    model = init_model(cfg, args.seed)
    setup = None
    if args.method == "ta":
        ta_ckpt = load_checkpoint(args.ta_ckpt)
        ta = ta_ckpt.ema_model() or ta_ckpt.model(requires_grad=False)
        setup = TaSetup.create(
            cfg, ta, seed=args.seed, lambdas=tuple(args.lambdas), student_layer=args.student_layer,
            ta_layer=args.ta_layer, feature_mode=args.feature_mode,
        )
    result = train(tcfg, pairs, model, ta=setup, checkpoint=args.ckpt, loss_csv=args.loss_csv)
    steps = len(result.history)
    final = f"{result.history[-1].ema_loss:.6g}" if steps else "n/a"
    sys.stderr.write(f"trained {steps} steps; final smoothed loss {final}; checkpoint {args.ckpt}\n")
    return EXIT_OK


def cmd_generate(args) -> int:
    from .tiny_dit.autograd import no_grad
    from .tiny_dit.checkpoint import load_checkpoint
    from .tiny_dit.model import cfg_guide, forward

    ckpt = load_checkpoint(args.ckpt)
    cfg = ckpt.cfg
    if ckpt.weights["y_embed.weight"].shape[0] != cfg.num_classes + 1:
        raise ConfigError("checkpoint label table has no null-class row; guidance is impossible")
    if args.use_ema:
        if ckpt.ema is None:
            raise ConfigError("checkpoint stores no EMA weights; pass --use-ema=false")
        m = ckpt.ema_model()
    else:
        m = ckpt.model(requires_grad=False)
    if args.n < 1:
        raise UsageError("--n must be positive")
    rng = np.random.default_rng(args.seed)
    z = rng.standard_normal((args.n, cfg.in_channels, cfg.image_size, cfg.image_size)).astype(np.float32)
    with no_grad():
        cond = forward(m, z, args.class_id).image.data
        uncond = forward(m, z, None).image.data
    write_tensor(args.out, np.asarray(cfg_guide(cond, uncond, args.cfg_scale), dtype=np.float32))
    sys.stderr.write(f"wrote {args.n} image(s) of shape {z.shape[1:]} to {args.out}\n")
    return EXIT_OK


def cmd_pareto(args) -> int:
    from .perf.pareto import pareto_frontier
    from .perf.results import format_results, frontier_gnuplot

    front = pareto_frontier(_points(args))
    text = format_results(front)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        _emit(text)
    if args.gnuplot:
        atomic_write_text(args.gnuplot, frontier_gnuplot(front))
    return EXIT_OK


def cmd_latency_fit(args) -> int:
    from .perf.latency import fit_latency

    points = _points(args)
    model = fit_latency(points, heads_term=args.heads_term)
    if args.csv:
        lines = ["name,d,w,h,latency_s,predicted_s"]
        lines += [
            f"{p.name},{p.cfg.depth},{p.cfg.width},{p.cfg.heads},{p.latency!r},{model.predict(p.cfg)!r}"
            for p in points
        ]
        _emit("\n".join(lines) + "\n")
    else:
        _emit("".join(f"{k:<14} {v:.6g}\n" for k, v in model.summary().items()))
    return EXIT_OK


def cmd_bench(args) -> int:
    from .perf.flops import count_flops
    from .tiny_dit.autograd import no_grad
    from .tiny_dit.model import forward, init_model

    if args.repeats < 1 or args.batch < 1:
        raise UsageError("--repeats and --batch must be positive")
    cfg = _config(args)
    m = init_model(cfg, args.seed, requires_grad=False)
    rng = np.random.default_rng(args.seed)
    # Random gates so the benchmark exercises the full block, not the zero-init shortcut.
    for name, p in m.params.items():
        if "adaLN" in name or name.startswith("final."):
            p.data[...] = rng.standard_normal(p.shape).astype(p.dtype) * 0.02
    z = rng.standard_normal((args.batch, cfg.in_channels, cfg.image_size, cfg.image_size)).astype(np.float32)
    times = []
    with no_grad():
        forward(m, z, 0)
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            forward(m, z, 0)
            times.append(time.perf_counter() - t0)
    per_image = min(times) / args.batch
    flops = count_flops(cfg)
    row = dict(
        name=cfg.name, params=count_params(cfg).total, flops=flops, batch=args.batch,
        best_s=min(times), mean_s=float(np.mean(times)), per_image_s=per_image,
        gflops_per_s=flops / per_image / 1e9,
    )
    if args.csv:
        _emit(",".join(row) + "\n" + ",".join(str(v) for v in row.values()) + "\n")
    else:
        _emit("".join(f"{k:<14} {v}\n" for k, v in row.items()))
    return EXIT_OK


COMMANDS = {
    "plan": cmd_plan,
    "params": cmd_params,
    "schedule": cmd_schedule,
    "mi1-targets": cmd_mi1_targets,
    "train": cmd_train,
    "generate": cmd_generate,
    "pareto": cmd_pareto,
    "latency-fit": cmd_latency_fit,
    "bench": cmd_bench,
}


def _fail(code: int, message: str) -> int:
    sys.stderr.write(f"ditnano: error: {message}\n")
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        sys.stdout.reconfigure(line_buffering=True)
    except (AttributeError, ValueError):
        pass
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        path = _config_path(argv)
        command = next((t for t in argv if t in COMMANDS), None)
        if path is not None and command is not None:
            apply_config_file(parser, command, path)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    try:
        print_resolved(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except _USAGE_ERRORS as exc:
        return _fail(EXIT_USAGE, str(exc))
    except _IO_ERRORS as exc:
        return _fail(EXIT_IO, str(exc))
    except (NumericError, StateError, DitNanoError, ArithmeticError, ValueError) as exc:
        return _fail(EXIT_RUNTIME, str(exc))


if __name__ == "__main__":
    sys.exit(main())
