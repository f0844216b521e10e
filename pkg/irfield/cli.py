"""Command-line interface: data generation, training, studies, reports and rendering."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from irfield import __version__
from irfield.config import (
    INTERP_METHODS,
    NOISE_METHODS,
    FilterFieldSpec,
    InterpStudyConfig,
    NlmsConfig,
    NoiseSpec,
    NoiseStudyConfig,
    RenderConfig,
    Settings,
    SpectralLossConfig,
    SweepConfig,
    TrainConfig,
    WienerConfig,
    build_config,
    load_config,
)
from irfield.dsp import log_sine_sweep, write_wav
from irfield.exceptions import ConfigError, IRFieldError, ValidationError
from irfield.losses import loss_grad_check
from irfield.model_io import compression_report, efficiency_table, load_model, save_model
from irfield.neural_field import FieldModel, init_params, mlp_grad_check
from irfield.renderer import render
from irfield.studies import baseline_sdr, interpolation_study, noise_sweep_study
from irfield.synthetic import export_dataset, load_dataset, make_filter_field
from irfield.trainer import eval_sdr, train
from irfield.types import MeasuredIrSet, Signal
from irfield.utils import derive_seed, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with status 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# ==================== Argument helpers ====================


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _methods(choices: Sequence[str]) -> Callable[[str], List[str]]:
    def parse(text: str) -> List[str]:
        if text == "all":
            return list(choices)
        names = [v.strip() for v in text.split(",") if v.strip()]
        unknown = [n for n in names if n not in choices]
        if unknown:
            raise argparse.ArgumentTypeError(f"unknown methods {unknown}; choose from {list(choices)} or 'all'")
        return names

    return parse


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("Common")
    g.add_argument("--seed", type=int, default=None, help="Base seed (IRFIELD_SEED otherwise)")
    g.add_argument("--out", type=Path, default=None, help="Output directory (IRFIELD_OUT_DIR otherwise)")
    g.add_argument("--config", type=Path, default=None, help="TOML config file")
    g.add_argument("--workers", type=int, default=None, help="Worker threads (IRFIELD_WORKERS otherwise)")
    g.add_argument("--verbose", "-v", action="store_true", help="Debug logging")


def _add_field(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("Field")
    g.add_argument("--data", type=Path, default=None, help="Dataset directory from gen-data (synthetic field otherwise)")
    g.add_argument("--n-azimuth", type=int, default=None)
    g.add_argument("--n-elevation", type=int, default=None)
    g.add_argument("--taps", type=int, default=None, help="Filter length T")
    g.add_argument("--channels", type=int, default=None)


def _add_noise(p: argparse.ArgumentParser, multiple: bool = False) -> None:
    g = p.add_argument_group("Noise")
    if multiple:
        g.add_argument("--snr", type=_float_list, default=None, help="Comma-separated SNRs in dB")
    else:
        g.add_argument("--snr", type=float, default=None, help="Target SNR in dB (clean when omitted)")
    g.add_argument("--noise-kind", choices=["independent", "dependent"], default=None)


def _add_train(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("Training")
    g.add_argument("--steps", type=int, default=None)
    g.add_argument("--batch", type=int, default=None, help="Positions per batch")
    g.add_argument("--lr", type=float, default=None, help="Learning rate")
    g.add_argument("--loss", choices=["l2", "noise_robust"], default=None)
    g.add_argument("--noise-model", choices=["none", "static", "positional"], default=None)
    g.add_argument("--hidden", type=int, default=None, help="Hidden width")
    g.add_argument("--layers", type=int, default=None, help="Weight matrices")
    g.add_argument("--eval-every", type=int, default=None)


def build_parser() -> ArgumentParser:
    """Create the irfield argument parser."""
    parser = ArgumentParser(
        prog="irfield",
        description="Neural impulse-response fields with noise-robust training",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"irfield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("gen-data", help="Export the synthetic filter field")
    _add_common(p)
    _add_field(p)

    p = sub.add_parser("train", help="Train an IR-MLP on sweep observations")
    _add_common(p)
    _add_field(p)
    _add_noise(p)
    _add_train(p)

    p = sub.add_parser("eval", help="SDR of a saved model against the field")
    _add_common(p)
    _add_field(p)
    p.add_argument("--model", type=Path, required=True)

    p = sub.add_parser("noise-study", help="Estimator comparison across SNRs")
    _add_common(p)
    _add_noise(p, multiple=True)
    _add_train(p)
    p.add_argument("--methods", type=_methods(NOISE_METHODS), default=None, help="Comma list or 'all'")

    p = sub.add_parser("interp-study", help="Interpolation comparison across training-set sizes")
    _add_common(p)
    _add_field(p)
    _add_train(p)
    p.add_argument("--counts", type=_int_list, default=None, help="Comma-separated training counts")
    p.add_argument("--methods", type=_methods(INTERP_METHODS), default=None, help="Comma list or 'all'")

    for name, help_text in (("wiener", "Wiener deconvolution baseline"), ("nlms", "NLMS baseline")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        _add_field(p)
        _add_noise(p)
        if name == "nlms":
            p.add_argument("--step-size", type=float, default=None)

    p = sub.add_parser("report", help="Compression and latency report")
    _add_common(p)
    _add_field(p)
    p.add_argument("--model", type=Path, default=None, help="Model file (untrained default network otherwise)")
    p.add_argument("--field-dims", type=_int_list, default=[9720, 2, 400], help="positions,channels,taps")
    p.add_argument("--widths", type=_int_list, default=None, help="Also tabulate these hidden widths")
    p.add_argument("--calls", type=int, default=100, help="Timed predict_ir calls")

    p = sub.add_parser("render", help="Render a WAV along a trajectory")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--source", type=Path, required=True, help="Source WAV")
    p.add_argument("--trajectory", type=Path, required=True, help="CSV with time_s,x,y,z")
    p.add_argument("--frame-size", type=int, default=None)
    p.add_argument("--crossfade", type=int, default=None)

    p = sub.add_parser("gradcheck", help="Finite-difference check of the analytic gradients")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--instances", type=int, default=10, help="Random instances per check")
    return parser


# ==================== Config assembly ====================


class _Context:
    """Resolved settings, config tables and output directory for one command."""

    def __init__(self, args: argparse.Namespace, settings: Settings):
        self.args = args
        self.tables = load_config(args.config)
        self.seed = settings.seed if args.seed is None else args.seed
        self.workers = settings.workers if args.workers is None else args.workers
        self.out = Path(args.out if args.out is not None else settings.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str) -> Dict[str, Any]:
        return dict(self.tables.get(name, {}))

    def arg(self, name: str) -> Any:
        return getattr(self.args, name, None)

    def field_spec(self) -> FilterFieldSpec:
        return build_config(
            FilterFieldSpec,
            self.table("field"),
            {
                "n_azimuth": self.arg("n_azimuth"),
                "n_elevation": self.arg("n_elevation"),
                "num_taps": self.arg("taps"),
                "channels": self.arg("channels"),
                "seed": self.seed,
            },
        )

    def field(self) -> MeasuredIrSet:
        if self.arg("data") is not None:
            return load_dataset(self.arg("data"))
        return make_filter_field(self.field_spec())

    def sweep_config(self, sample_rate_hz: Optional[int] = None) -> SweepConfig:
        return build_config(SweepConfig, self.table("sweep"), {"sample_rate_hz": sample_rate_hz})

    def sweep(self, sample_rate_hz: Optional[int] = None) -> Signal:
        cfg = self.sweep_config(sample_rate_hz)
        return log_sine_sweep(cfg.f0_hz, cfg.f1_hz, cfg.duration_s, cfg.sample_rate_hz)

    def study_field(self, table: Dict[str, Any]) -> None:
        """Copy [field] and [sweep] settings (and field flags) into a study table."""
        flags = ("n_azimuth", "n_elevation", "taps", "channels")
        if "field" in self.tables or any(self.arg(k) is not None for k in flags):
            spec = self.field_spec()
            table["field_spec"] = spec.to_dict()
            table["sweep"] = self.sweep_config(spec.sample_rate_hz).to_dict()
        elif "sweep" in self.tables:
            table["sweep"] = self.sweep_config().to_dict()

    def loss_config(self) -> SpectralLossConfig:
        return build_config(SpectralLossConfig, self.table("loss"))

    def noise_spec(self, sample_rate_hz: int, snr: Optional[float]) -> Optional[NoiseSpec]:
        table = self.table("noise")
        if snr is None and "target_snr_db" not in table:
            return None
        return build_config(
            NoiseSpec,
            table,
            {
                "target_snr_db": snr,
                "kind": self.arg("noise_kind"),
                "fft_len": table.get("fft_len", self.loss_config().fft_len),
                "sample_rate_hz": sample_rate_hz,
                "seed": derive_seed(self.seed, 11),
            },
        )

    def train_config(self) -> TrainConfig:
        table = self.table("train")
        if "loss" in self.tables:
            table["loss"] = {**table.get("loss", {}), **self.table("loss")}
        network = dict(table.get("network", {}))
        if self.arg("hidden") is not None:
            network["hidden"] = self.arg("hidden")
        if self.arg("layers") is not None:
            network["num_layers"] = self.arg("layers")
        if network:
            table["network"] = network
        return build_config(
            TrainConfig,
            table,
            {
                "steps": self.arg("steps"),
                "positions_per_batch": self.arg("batch"),
                "learning_rate": self.arg("lr"),
                "loss_kind": self.arg("loss"),
                "noise_model_kind": self.arg("noise_model"),
                "eval_every": self.arg("eval_every"),
                "seed": self.seed,
                "workers": self.workers,
            },
        )

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self.out / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
        logger.info(f"Wrote {path}")
        return path


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def _sdr_summary(sdrs: Sequence[float]) -> Dict[str, float]:
    return {
        "mean_sdr_db": float(np.mean(sdrs)),
        "median_sdr_db": float(np.median(sdrs)),
        "std_sdr_db": float(np.std(sdrs)),
    }


# ==================== Commands ====================


def cmd_gen_data(ctx: _Context) -> int:
    spec = ctx.field_spec()
    ir_set = make_filter_field(spec)
    manifest = export_dataset(ir_set, ctx.out / "field")
    sweep = ctx.sweep(spec.sample_rate_hz)
    write_wav(ctx.out / "sweep.wav", sweep.samples, sweep.sample_rate_hz)
    ctx.write_json(
        "gen_data.json",
        {
            "positions": len(ir_set),
            "channels": ir_set.channels,
            "num_taps": ir_set.num_taps,
            "raw_float_count": ir_set.raw_float_count,
            "manifest": str(manifest),
            "config": spec.to_dict(),
        },
    )
    return EXIT_OK


def cmd_train(ctx: _Context) -> int:
    ir_set = ctx.field()
    cfg = ctx.train_config()
    sweep = ctx.sweep(ir_set.sample_rate_hz)
    noise = ctx.noise_spec(ir_set.sample_rate_hz, ctx.arg("snr"))
    model, log = train(ir_set, sweep, noise, cfg, eval_set=ir_set if cfg.eval_every else None)
    save_model(model, ctx.out / "model.irml")
    log.write_csv(ctx.out / "train_log.csv")
    summary: Dict[str, Any] = {
        "parameters": model.parameter_count(),
        "training": log.to_dict(),
        "config": {"train": cfg.to_dict(), "noise": None if noise is None else noise.to_dict()},
    }
    if cfg.steps > 0:
        report = eval_sdr(model, ir_set, workers=ctx.workers)
        summary["eval"] = report.to_dict()
        print(f"mean SDR {report.mean_sdr_db:.2f} dB after {cfg.steps} steps")
    ctx.write_json("train.json", summary)
    return EXIT_OK


def cmd_eval(ctx: _Context) -> int:
    model = load_model(ctx.arg("model"))
    ir_set = ctx.field()
    report = eval_sdr(model, ir_set, workers=ctx.workers, config={"model": str(ctx.arg("model"))})
    ctx.write_json("eval.json", report.to_dict())
    print(f"mean SDR {report.mean_sdr_db:.2f} dB over {len(report.sdr_db)} positions")
    return EXIT_OK


def cmd_noise_study(ctx: _Context) -> int:
    table = ctx.table("noise_study")
    train_cfg = ctx.train_config()
    if "train" in table:
        train_cfg = build_config(TrainConfig, {**train_cfg.to_dict(), **table.pop("train")})
    ctx.study_field(table)
    study = build_config(
        NoiseStudyConfig,
        {**table, "train": train_cfg.to_dict()},
        {
            "snr_list": ctx.arg("snr"),
            "methods": ctx.arg("methods"),
            "noise_kind": ctx.arg("noise_kind"),
            "seed": ctx.seed,
        },
    )
    result = noise_sweep_study(study, workers=ctx.workers)
    result.write_csv(ctx.out / "noise_study.csv")
    ctx.write_json("noise_study.json", {**result.to_dict(), "config": study.to_dict()})
    return EXIT_OK


def cmd_interp_study(ctx: _Context) -> int:
    table = ctx.table("interp_study")
    train_cfg = ctx.train_config()
    if "train" in table:
        train_cfg = build_config(TrainConfig, {**train_cfg.to_dict(), **table.pop("train")})
    ctx.study_field(table)
    study = build_config(
        InterpStudyConfig,
        {**table, "train": train_cfg.to_dict()},
        {"train_counts": ctx.arg("counts"), "methods": ctx.arg("methods"), "seed": ctx.seed},
    )
    result = interpolation_study(study, workers=ctx.workers)
    result.write_csv(ctx.out / "interp_study.csv")
    ctx.write_json("interp_study.json", {**result.to_dict(), "config": study.to_dict()})
    return EXIT_OK


def _write_sdr_csv(path: Path, sdrs: Sequence[float]) -> None:
    lines = ["index,sdr_db"] + [f"{i},{float(v)!r}" for i, v in enumerate(sdrs)]
    path.write_text("\n".join(lines) + "\n")


def cmd_baseline(ctx: _Context) -> int:
    method = ctx.args.command
    ir_set = ctx.field()
    sweep = ctx.sweep(ir_set.sample_rate_hz)
    noise = ctx.noise_spec(ir_set.sample_rate_hz, ctx.arg("snr"))
    nlms_cfg = build_config(
        NlmsConfig,
        {"filter_len": ir_set.num_taps, **ctx.table("nlms")},
        {"step_size": ctx.arg("step_size")},
    )
    wiener_cfg = build_config(WienerConfig, ctx.table("wiener"))
    sdrs = baseline_sdr(method, ir_set, sweep, noise, derive_seed(ctx.seed, 12), nlms_cfg, wiener_cfg)
    _write_sdr_csv(ctx.out / f"{method}.csv", sdrs)
    config = {"nlms": nlms_cfg.to_dict()} if method == "nlms" else {"wiener": wiener_cfg.to_dict()}
    config["noise"] = None if noise is None else noise.to_dict()
    ctx.write_json(f"{method}.json", {**_sdr_summary(sdrs), "config": config})
    print(f"{method}: mean SDR {float(np.mean(sdrs)):.2f} dB")
    return EXIT_OK


def cmd_report(ctx: _Context) -> int:
    dims = ctx.arg("field_dims")
    if len(dims) != 3:
        raise ConfigError("--field-dims needs positions,channels,taps")
    ir_set = ctx.field()
    if ctx.arg("model") is not None:
        model = load_model(ctx.arg("model"))
    else:
        cfg = ctx.train_config()
        params = init_params(cfg.network.layer_dims(cfg.encoder.output_dim, ir_set.channels), derive_seed(ctx.seed, 1))
        model = FieldModel(params, cfg.encoder, ir_set.num_taps, FieldModel.box_from_positions(ir_set.positions))
    report = compression_report(model, tuple(dims), ir_set, calls=ctx.arg("calls"))
    payload: Dict[str, Any] = report.to_dict()
    if ctx.arg("widths"):
        rows = efficiency_table(ctx.arg("widths"), field_dims=tuple(dims), encoder=model.encoder, seed=ctx.seed)
        columns = ["width", "param_count", "compression_ratio", "mean_ms", "std_ms", "median_ms"]
        lines = [",".join(columns)] + [",".join(repr(r[c]) for c in columns) for r in rows]
        (ctx.out / "efficiency.csv").write_text("\n".join(lines) + "\n")
        payload["widths"] = [{k: r[k] for k in ("width", "param_count", "compression_ratio")} for r in rows]
        payload["timing_by_width"] = {str(r["width"]): {k: r[k] for k in ("mean_ms", "std_ms", "median_ms")} for r in rows}
    ctx.write_json("report.json", payload)
    print(f"{report.param_count} parameters, {report.raw_float_count} raw floats, compression {report.compression_percent}")
    return EXIT_OK


def cmd_render(ctx: _Context) -> int:
    model = load_model(ctx.arg("model"))
    cfg = build_config(
        RenderConfig,
        ctx.table("render"),
        {"frame_size": ctx.arg("frame_size"), "crossfade": ctx.arg("crossfade")},
    )
    result = render(model, ctx.arg("source"), ctx.arg("trajectory"), ctx.out / "render.wav", cfg)
    ctx.write_json("render.json", {**result.to_dict(), "config": cfg.to_dict()})
    return EXIT_OK


def cmd_gradcheck(ctx: _Context) -> int:
    tol = ctx.arg("tol")
    loss_errors = []
    mlp_errors = []
    for k in range(ctx.arg("instances")):
        seed = derive_seed(ctx.seed, 31, k)
        loss_errors.append(loss_grad_check(seed=seed).max_rel_error)
        mlp_errors.append(mlp_grad_check(seed=seed)[0])
    worst = max(loss_errors + mlp_errors)
    ctx.write_json(
        "gradcheck.json",
        {
            "loss_max_rel_error": max(loss_errors),
            "mlp_max_rel_error": max(mlp_errors),
            "max_rel_error": worst,
            "tolerance": tol,
            "passed": worst <= tol,
        },
    )
    print(f"max rel. err {worst:.3e}")
    if worst > tol:
        logger.error(f"Gradient check failed: {worst:.3e} > {tol:.1e}")
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS: Dict[str, Callable[[_Context], int]] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "noise-study": cmd_noise_study,
    "interp-study": cmd_interp_study,
    "wiener": cmd_baseline,
    "nlms": cmd_baseline,
    "report": cmd_report,
    "render": cmd_render,
    "gradcheck": cmd_gradcheck,
}


# ==================== Entry points ====================


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one irfield command.

    Returns:
        0 on success, 1 on validation or usage errors, 2 on runtime failures
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) if not isinstance(e.code, str) else EXIT_VALIDATION

    try:
        settings = Settings.from_env()
    except (ConfigError, ValueError) as e:
        print(f"irfield: invalid environment settings: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    level = logging.DEBUG if args.verbose else getattr(logging, settings.log_level, logging.INFO)
    setup_logging(level)

    try:
        ctx = _Context(args, settings)
        return COMMANDS[args.command](ctx)
    except ValidationError as e:
        logger.error(f"{args.command}: {e}")
        print(f"irfield: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except IRFieldError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"irfield: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    """Console script entry point."""
    sys.exit(cli())
