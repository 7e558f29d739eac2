"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 configuration, 3 I/O or file format.
Summaries go to stdout as ``key=value`` lines.
"""

from __future__ import annotations

import secrets
import sys
import warnings

import click

from . import fileformat
from .channel import PRESETS, ChannelConfig, FlipperConfig, bit_flipper_attack, bsc_apply, preset_config
from .core import keyed_partition, parse_green_list
from .detect import GAUSSIAN_1PCT_THRESHOLD, DetectConfig, detect
from .embed import EmbedConfig, embed_stream
from .errors import BitmarkError, ConfigError, DomainError, StructureError
from .experiment import derive_seed, load_spec, resolve_profile, resolve_schedule, run_experiment
from .metrics import threshold_at_fpr
from .synth import SynthLogitSource, SynthSourceConfig, generate_clean

EXIT_USAGE, EXIT_CONFIG, EXIT_IO = 1, 2, 3

_PRESET_HELP = "\n\n".join(
    ["Attack presets (BSC flip rates; all but reencode-infinity2b are synthetic):"]
    + [f"  {name}: {desc}" for name, (_, desc) in PRESETS.items()]
    + ["  bitflipper: adaptive green-window flipping, strength --phi"])


def _emit(**fields):
    for key, value in fields.items():
        click.echo(f"{key}={value}")


def _seed(seed):
    if seed is None:
        seed = secrets.randbits(63)
        _emit(seed=seed)
    return seed


def _partition(green, key, n, required=True, default="01,10"):
    if green and key:
        raise click.UsageError("give exactly one of --green and --key")
    if not green and not key:
        if required:
            raise click.UsageError("one of --green or --key is required")
        green = default
    try:
        if key:
            return keyed_partition(bytes.fromhex(key), n)
        return parse_green_list(green)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


def _warn_partition(part):
    for note in part.warnings:
        click.echo(f"warning: {note} (green list {{{part.label()}}})", err=True)


def _source(profile, schedule, seed):
    prof = resolve_profile(profile)
    if prof.K < schedule.K:
        raise ConfigError(f"profile has {prof.K} scales, schedule needs {schedule.K}")
    return SynthLogitSource(SynthSourceConfig.calibrated(prof, derive_seed(seed, 0)))


def _summary(stream, part, prefix=""):
    res = detect(stream, DetectConfig(part))
    _emit(**{f"{prefix}green_fraction": repr(res.green_fraction), f"{prefix}z": repr(res.z)})


def _read(path):
    try:
        return fileformat.read_stream(path)
    except OSError as exc:
        raise StructureError(f"cannot read {path}: {exc}") from None


def _write(path, stream, n):
    try:
        fileformat.write_stream(path, stream, n)
    except OSError as exc:
        raise StructureError(f"cannot write {path}: {exc}") from None


schedule_opt = click.option("--schedule", default="infinity-2b", show_default=True,
                            help="Schedule preset (infinity-2b, instella-iar) or file.")
profile_opt = click.option("--profile", default="reference", show_default=True,
                           help="Entropy profile file (one value per line) or 'reference'.")
seed_opt = click.option("--seed", type=int, default=None,
                        help="Seed; drawn from system entropy and printed if omitted.")
green_opt = click.option("--green", default=None, help="Green list, e.g. '01,10'.")
key_opt = click.option("--key", default=None, help="Hex key for a keyed green list.")
n_opt = click.option("--n", "n", type=int, default=2, show_default=True,
                     help="Window length for --key.")


@click.group()
def cli():
    """Bitwise green/red-list watermarking toolkit."""


@cli.command("gen")
@schedule_opt
@profile_opt
@seed_opt
@green_opt
@key_opt
@n_opt
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_gen(schedule, profile, seed, green, key, n, out):
    """Write a clean (unwatermarked) stream."""
    part = _partition(green, key, n, required=False)
    seed = _seed(seed)
    sched = resolve_schedule(schedule)
    stream = generate_clean(_source(profile, sched, seed), sched, derive_seed(seed, 1))
    _write(out, stream, part.n)
    _summary(stream, part)


@cli.command("embed")
@schedule_opt
@profile_opt
@click.option("--delta", type=float, required=True, help="Logit bias added to green completions.")
@green_opt
@key_opt
@n_opt
@seed_opt
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_embed(schedule, profile, delta, green, key, n, seed, out):
    """Write a watermarked stream."""
    part = _partition(green, key, n)
    _warn_partition(part)
    seed = _seed(seed)
    sched = resolve_schedule(schedule)
    try:
        config = EmbedConfig(delta, part, derive_seed(seed, 1))
    except DomainError as exc:
        raise click.UsageError(str(exc)) from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        stream = embed_stream(_source(profile, sched, seed), sched, config)
    _write(out, stream, part.n)
    _summary(stream, part)


@cli.command("detect")
@click.option("--in", "path", required=True, type=click.Path(dir_okay=False))
@green_opt
@key_opt
@n_opt
@click.option("--threshold", type=float, default=None,
              help=f"z threshold [default: {GAUSSIAN_1PCT_THRESHOLD}].")
@click.option("--fpr-calibration", type=float, default=None,
              help="Calibrate the threshold to this FPR on clean synthetic streams.")
@click.option("--calibration-n", type=int, default=200, show_default=True)
@profile_opt
@seed_opt
@click.option("--two-sided", is_flag=True, help="Decide on |z|.")
def cmd_detect(path, green, key, n, threshold, fpr_calibration, calibration_n, profile, seed,
               two_sided):
    """Count green windows and run the z-test."""
    part = _partition(green, key, n)
    if threshold is not None and fpr_calibration is not None:
        raise click.UsageError("give at most one of --threshold and --fpr-calibration")
    stream, _ = _read(path)
    if fpr_calibration is not None:
        seed = _seed(seed)
        sched = stream.schedule
        scores = []
        for i in range(calibration_n):
            s = derive_seed(seed, 100, i)
            clean = generate_clean(_source(profile, sched, s), sched, derive_seed(s, 1))
            z = detect(clean, DetectConfig(part)).z
            scores.append(abs(z) if two_sided else z)
        try:
            threshold = threshold_at_fpr(scores, fpr_calibration)
        except DomainError as exc:
            raise click.UsageError(str(exc)) from None
    elif threshold is None:
        threshold = GAUSSIAN_1PCT_THRESHOLD
    res = detect(stream, DetectConfig(part, threshold, two_sided))
    _emit(C=res.green_count, T=res.total, green_fraction=repr(res.green_fraction),
          z=repr(res.z), p_value=repr(res.p_value), decision=str(res.decision).lower(),
          threshold=repr(res.threshold_used))


@cli.command("attack", help="Apply a channel or attack to a stream file.\n\n" + _PRESET_HELP)
@click.option("--in", "path", required=True, type=click.Path(dir_okay=False))
@click.option("--attack", "attack", required=True, help="Preset name or 'bitflipper'.")
@click.option("--phi", type=float, default=2.2, show_default=True, help="Bit flipper factor.")
@click.option("--rates", default=None, help="Comma-separated per-scale flip rates (overrides preset).")
@green_opt
@key_opt
@n_opt
@seed_opt
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_attack(path, attack, phi, rates, green, key, n, seed, out):
    part = _partition(green, key, n, required=False)
    stream, file_n = _read(path)
    seed = _seed(seed)
    K = stream.schedule.K
    if attack == "bitflipper":
        if not part.effective:
            raise ConfigError("the bit flipper attack needs an effective green list")
        try:
            attacked = bit_flipper_attack(stream, FlipperConfig(phi, part, seed))
        except DomainError as exc:
            raise click.UsageError(str(exc)) from None
    else:
        if rates is not None:
            try:
                values = [float(x) for x in rates.split(",")]
                if len(values) == 1:
                    values = values * K
                config = ChannelConfig(values, seed)
            except (ValueError, DomainError) as exc:
                raise ConfigError(f"bad --rates: {exc}") from None
        else:
            config = preset_config(attack, K, seed)
        attacked = bsc_apply(stream, config)
    _write(out, attacked, file_n)
    _summary(stream, part, "input_")
    _summary(attacked, part)


@cli.command("eval")
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--workers", type=int, default=1, show_default=True)
def cmd_eval(spec_path, out_dir, workers):
    """Run an experiment spec (YAML) and write report.json, summary.csv, scores.csv."""
    spec = load_spec(spec_path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = run_experiment(spec, workers=workers)
    try:
        paths = report.write(out_dir)
    except OSError as exc:
        raise StructureError(f"cannot write report: {exc}") from None
    for r in report.rows:
        click.echo(f"green={r.green} delta={r.delta:g} attack={r.attack} "
                   f"tpr={r.tpr_at_fpr:.3f} auc={r.auc:.3f} mean_z={r.pos_mean_z:.2f}")
    for mrow in report.mixture:
        click.echo(f"mixture={mrow.percent:g}% U={mrow.u_statistic:g} p={mrow.p_value:.3g}")
    _emit(report=paths["report"], summary=paths["rows"], scores=paths["scores"])


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="bitmark", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except (StructureError, OSError) as exc:
        click.echo(f"io error: {exc}", err=True)
        return EXIT_IO
    except BitmarkError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
