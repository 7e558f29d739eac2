"""End-to-end experiments: populations, attacks, metrics and reports.

Every stream draws its seeds from ``(seed, role, index)``, so results do
not depend on the number of worker processes or on evaluation order.
Within a run the same source and sampling seeds are shared across deltas
and green lists (common random numbers), which makes sweeps over delta
directly comparable stream by stream.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .channel import PRESETS, FlipperConfig, bit_flipper_attack, bsc_apply, preset_config
from .core import (SCHEDULE_PRESETS, Partition, ScaleSchedule, keyed_partition,
                   parse_green_list)
from .detect import DetectConfig, detect
from .embed import EmbedConfig, embed_stream
from .errors import BitmarkError, ConfigError
from .metrics import auc, gaussian_threshold, mann_whitney_u, threshold_at_fpr, tpr_at_fpr
from .synth import (REFERENCE_PROFILE, EntropyProfile, SynthLogitSource, SynthSourceConfig,
                    generate_clean, load_profile)

# seed roles
POS_SOURCE, POS_SAMPLING, NEG_SOURCE, NEG_SAMPLING = 1, 2, 3, 4
POS_ATTACK, NEG_ATTACK, MIX_SOURCE, MIX_SAMPLING, MIX_ATTACK = 5, 6, 7, 8, 9

DEFAULT_PHI = 2.2


def derive_seed(seed: int, *keys: int) -> int:
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


@dataclass(frozen=True)
class Attack:
    name: str
    phi: float = 0.0

    @property
    def label(self) -> str:
        return f"bitflipper:{self.phi:g}" if self.name == "bitflipper" else self.name


def parse_attack(text: str) -> Attack:
    text = str(text).strip()
    if text in ("none", ""):
        return Attack("identity")
    if text.startswith("bitflipper"):
        _, _, phi = text.partition(":")
        try:
            value = float(phi) if phi else DEFAULT_PHI
        except ValueError:
            raise ConfigError(f"bad flip factor in {text!r}") from None
        if not math.isfinite(value) or value < 0:
            raise ConfigError(f"bad flip factor in {text!r}")
        return Attack("bitflipper", value)
    if text not in PRESETS:
        raise ConfigError(f"unknown attack {text!r}; known: bitflipper[:phi], {', '.join(PRESETS)}")
    return Attack(text)


def apply_attack(stream, attack: Attack, partition: Partition, seed: int):
    if attack.name == "identity":
        return stream
    if attack.name == "bitflipper":
        return bit_flipper_attack(stream, FlipperConfig(attack.phi, partition, seed))
    return bsc_apply(stream, preset_config(attack.name, stream.schedule.K, seed))


def resolve_schedule(value) -> ScaleSchedule:
    """Preset name, ``{tokens: [...], m: 32}`` mapping, or a schedule file path."""
    if isinstance(value, ScaleSchedule):
        return value
    if isinstance(value, dict):
        try:
            return ScaleSchedule(tuple(value["tokens"]), int(value.get("m", 32)))
        except (KeyError, TypeError, ValueError, BitmarkError) as exc:
            raise ConfigError(f"bad schedule mapping: {exc}") from None
    if isinstance(value, str) and value in SCHEDULE_PRESETS:
        return SCHEDULE_PRESETS[value]
    return load_schedule(value)


def load_schedule(path) -> ScaleSchedule:
    """Schedule file: ``key=value`` lines with ``tokens=1,4,16`` and optional ``m=32``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read schedule {path}: {exc}") from None
    fields = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"bad schedule line {line!r} in {path}")
        fields[key.strip()] = val.strip()
    try:
        tokens = tuple(int(t) for t in fields["tokens"].replace(",", " ").split())
        return ScaleSchedule(tokens, int(fields.get("m", 32)))
    except (KeyError, ValueError, BitmarkError) as exc:
        raise ConfigError(f"bad schedule file {path}: {exc}") from None


def resolve_profile(value) -> EntropyProfile:
    if isinstance(value, EntropyProfile):
        return value
    if value in (None, "reference", "default"):
        return REFERENCE_PROFILE
    if isinstance(value, (list, tuple)):
        try:
            return EntropyProfile(tuple(value))
        except BitmarkError as exc:
            raise ConfigError(str(exc)) from None
    try:
        return load_profile(value)
    except OSError as exc:
        raise ConfigError(f"cannot read profile {value}: {exc}") from None


@dataclass
class ExperimentSpec:
    profile: object = "reference"
    schedule: object = "infinity-2b"
    deltas: list = field(default_factory=lambda: [2.0])
    attacks: list = field(default_factory=lambda: ["identity"])
    n_pos: int = 100
    n_neg: int = 100
    fpr: float = 0.01
    seed: int = 0
    greens: list = field(default_factory=lambda: ["01,10"])
    key: str | None = None
    n: int = 2
    mixture_fractions: list = field(default_factory=list)
    mixture_attack: str | None = None
    two_sided: bool = False
    stickiness: float = 0.0

    def __post_init__(self):
        if self.n_pos < 1 or self.n_neg < 1:
            raise ConfigError("population sizes must be positive")
        if not 0.0 < float(self.fpr) < 1.0:
            raise ConfigError(f"fpr must be in (0, 1), got {self.fpr}")
        if not self.deltas or any(float(d) < 0 or not math.isfinite(float(d)) for d in self.deltas):
            raise ConfigError("deltas must be a non-empty list of finite values >= 0")
        if not self.attacks:
            raise ConfigError("at least one attack row is required")
        for a in self.attacks:
            parse_attack(a)
        if self.mixture_attack is not None:
            labels = [parse_attack(a) for a in self.attacks]
            if parse_attack(self.mixture_attack) not in labels:
                raise ConfigError("mixture_attack must be one of the attack rows")
        for p in self.mixture_fractions:
            if not 0 <= float(p) <= 100:
                raise ConfigError(f"mixture fraction {p} outside [0, 100]")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        if not isinstance(data, dict):
            raise ConfigError("experiment spec must be a mapping")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown spec keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if isinstance(out["profile"], EntropyProfile):
            out["profile"] = list(out["profile"].targets)
        if isinstance(out["schedule"], ScaleSchedule):
            out["schedule"] = {"tokens": list(out["schedule"].tokens_per_scale),
                               "m": out["schedule"].m}
        return out

    def partitions(self) -> list:
        if self.key is not None:
            try:
                return [keyed_partition(bytes.fromhex(self.key), int(self.n))]
            except ValueError as exc:
                raise ConfigError(f"bad key: {exc}") from None
        try:
            return [parse_green_list(g) for g in self.greens]
        except BitmarkError as exc:
            raise ConfigError(str(exc)) from None


def load_spec(path) -> ExperimentSpec:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read spec {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid spec {path}: {exc}") from None
    return ExperimentSpec.from_dict(data or {})


@dataclass(frozen=True)
class ReportRow:
    green: str
    delta: float
    attack: str
    tpr_at_fpr: float
    auc: float
    threshold: float
    gaussian_threshold: float
    gaussian_tpr: float
    pos_mean_z: float
    pos_std_z: float
    neg_mean_z: float
    neg_std_z: float
    pos_mean_green_fraction: float
    neg_mean_green_fraction: float


@dataclass(frozen=True)
class MixtureRow:
    percent: float
    n_watermarked: int
    u_statistic: float
    p_value: float
    tpr_at_fpr: float


@dataclass
class ExperimentReport:
    spec: dict
    rows: list
    mixture: list
    scores: list  # (role, index, green, delta, attack, z, green_fraction)
    created: str = ""

    @property
    def tpr_at_fpr(self) -> float:
        return self.rows[0].tpr_at_fpr

    @property
    def auc(self) -> float:
        return self.rows[0].auc

    @property
    def threshold(self) -> float:
        return self.rows[0].threshold

    def row(self, green: str | None = None, delta: float | None = None,
            attack: str | None = None) -> ReportRow:
        for r in self.rows:
            if ((green is None or r.green == green) and (delta is None or r.delta == delta)
                    and (attack is None or r.attack == attack)):
                return r
        raise KeyError((green, delta, attack))

    def body(self) -> dict:
        return {"spec": self.spec,
                "rows": [asdict(r) for r in self.rows],
                "mixture": [asdict(r) for r in self.mixture]}

    def body_json(self) -> str:
        return json.dumps(self.body(), indent=2, sort_keys=True)

    def scores_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["role", "index", "green", "delta", "attack", "z", "green_fraction"])
        for rec in self.scores:
            w.writerow([rec[0], rec[1], rec[2], repr(rec[3]), rec[4], repr(rec[5]), repr(rec[6])])
        return buf.getvalue()

    def rows_csv(self) -> str:
        buf = io.StringIO()
        names = list(ReportRow.__dataclass_fields__)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in self.rows:
            w.writerow([getattr(r, k) if isinstance(getattr(r, k), str) else repr(getattr(r, k))
                        for k in names])
        return buf.getvalue()

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = {"created": self.created, "version": __version__}
        report = '{\n"header": ' + json.dumps(header, sort_keys=True) + ',\n"body": ' + \
            self.body_json() + "\n}\n"
        paths = {"report": out / "report.json", "rows": out / "summary.csv",
                 "scores": out / "scores.csv"}
        paths["report"].write_text(report)
        paths["rows"].write_text(self.rows_csv())
        paths["scores"].write_text(self.scores_csv())
        return paths


class _Context:
    """Everything a worker needs to score one stream index."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.schedule = resolve_schedule(spec.schedule)
        self.profile = resolve_profile(spec.profile)
        if self.profile.K < self.schedule.K:
            raise ConfigError(
                f"profile has {self.profile.K} scales, schedule needs {self.schedule.K}")
        self.partitions = spec.partitions()
        for p in self.partitions:
            if p.n > self.schedule.m:
                raise ConfigError(f"window length {p.n} exceeds token size {self.schedule.m}")
        self.deltas = [float(d) for d in spec.deltas]
        self.attacks = [parse_attack(a) for a in spec.attacks]
        self.mixture_attack = parse_attack(spec.mixture_attack or spec.attacks[0])
        for a in self.attacks:
            if a.name not in ("identity", "bitflipper"):
                preset_config(a.name, self.schedule.K)
        if any(a.name == "bitflipper" for a in self.attacks) and not all(
                p.effective for p in self.partitions):
            raise ConfigError("the bit flipper attack needs effective green lists")
        self.source_config = SynthSourceConfig.calibrated(self.profile, 0, spec.stickiness)

    def source(self, seed: int) -> SynthLogitSource:
        cfg = SynthSourceConfig(self.source_config.profile, self.source_config.sigma_per_scale,
                                seed, self.source_config.stickiness)
        return SynthLogitSource(cfg)

    def score(self, stream, partition):
        res = detect(stream, DetectConfig(partition))
        return res.z, res.green_fraction

    def positive(self, i: int) -> list:
        seed = self.spec.seed
        src = self.source(derive_seed(seed, POS_SOURCE, i))
        rng_seed = derive_seed(seed, POS_SAMPLING, i)
        out = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for gi, part in enumerate(self.partitions):
                for di, delta in enumerate(self.deltas):
                    stream = embed_stream(src, self.schedule, EmbedConfig(delta, part, rng_seed))
                    for ai, attack in enumerate(self.attacks):
                        attacked = apply_attack(stream, attack, part,
                                                derive_seed(seed, POS_ATTACK, i, ai))
                        out.append((gi, di, ai) + self.score(attacked, part))
        return out

    def _clean(self, i: int, roles) -> tuple:
        seed = self.spec.seed
        src = self.source(derive_seed(seed, roles[0], i))
        return generate_clean(src, self.schedule, derive_seed(seed, roles[1], i))

    def negative(self, i: int) -> list:
        clean = self._clean(i, (NEG_SOURCE, NEG_SAMPLING))
        out = []
        for ai, attack in enumerate(self.attacks):
            attack_seed = derive_seed(self.spec.seed, NEG_ATTACK, i, ai)
            shared = None
            for gi, part in enumerate(self.partitions):
                if attack.name == "bitflipper":
                    attacked = apply_attack(clean, attack, part, attack_seed)
                else:
                    if shared is None:
                        shared = apply_attack(clean, attack, part, attack_seed)
                    attacked = shared
                out.append((gi, ai) + self.score(attacked, part))
        return out

    def mixture_clean(self, i: int) -> tuple:
        clean = self._clean(i, (MIX_SOURCE, MIX_SAMPLING))
        part = self.partitions[0]
        attacked = apply_attack(clean, self.mixture_attack, part,
                                derive_seed(self.spec.seed, MIX_ATTACK, i))
        return self.score(attacked, part)


_WORKER_CTX = None


def _init_worker(spec):
    global _WORKER_CTX
    _WORKER_CTX = _Context(spec)


def _call(args):
    method, i = args
    return getattr(_WORKER_CTX, method)(i)


def _map(ctx: _Context, method: str, count: int, workers: int) -> list:
    if workers <= 1 or count < 2:
        return [getattr(ctx, method)(i) for i in range(count)]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(ctx.spec,)) as pool:
        return list(pool.map(_call, [(method, i) for i in range(count)],
                             chunksize=max(1, count // (4 * workers))))


def _stats(values) -> tuple:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentReport:
    """Generate populations, apply every attack, and compute all metrics."""
    ctx = _Context(spec)
    for part in ctx.partitions:
        for note in part.warnings:
            warnings.warn(f"{note}: green list {{{part.label()}}}", stacklevel=2)
    pos = _map(ctx, "positive", spec.n_pos, workers)
    neg = _map(ctx, "negative", spec.n_neg, workers)

    def transform(z):
        return abs(z) if spec.two_sided else z

    labels = [p.label() for p in ctx.partitions]
    rows, scores = [], []
    for gi, label in enumerate(labels):
        for ai, attack in enumerate(ctx.attacks):
            neg_rec = [(i, r[2], r[3]) for i, recs in enumerate(neg)
                       for r in recs if r[0] == gi and r[1] == ai]
            neg_z = [z for _, z, _ in neg_rec]
            for i, z, gf in neg_rec:
                scores.append(("negative", i, label, 0.0, attack.label, z, gf))
            neg_s = [transform(z) for z in neg_z]
            thr = threshold_at_fpr(neg_s, spec.fpr)
            gthr = gaussian_threshold(spec.fpr)
            for di, delta in enumerate(ctx.deltas):
                pos_rec = [(i, r[3], r[4]) for i, recs in enumerate(pos)
                           for r in recs if r[:3] == (gi, di, ai)]
                pos_z = [z for _, z, _ in pos_rec]
                for i, z, gf in pos_rec:
                    scores.append(("positive", i, label, delta, attack.label, z, gf))
                pos_s = [transform(z) for z in pos_z]
                pm, ps = _stats(pos_z)
                nm, ns = _stats(neg_z)
                rows.append(ReportRow(
                    green=label, delta=delta, attack=attack.label,
                    tpr_at_fpr=tpr_at_fpr(pos_s, neg_s, spec.fpr),
                    auc=auc(pos_s, neg_s),
                    threshold=thr,
                    gaussian_threshold=gthr,
                    gaussian_tpr=float(np.mean(np.asarray(pos_s) > gthr)),
                    pos_mean_z=pm, pos_std_z=ps, neg_mean_z=nm, neg_std_z=ns,
                    pos_mean_green_fraction=float(np.mean([g for _, _, g in pos_rec])),
                    neg_mean_green_fraction=float(np.mean([g for _, _, g in neg_rec])),
                ))

    mixture = []
    if spec.mixture_fractions:
        # Clean base population; fraction p replaces its first p% with
        # watermarked scores, so U can only grow with p.
        ai = ctx.attacks.index(ctx.mixture_attack)
        di = int(np.argmax(ctx.deltas))
        neg_s = [transform(r[2]) for recs in neg for r in recs if r[:2] == (0, ai)]
        marked = [transform(r[3]) for recs in pos for r in recs if r[:3] == (0, di, ai)]
        base = [transform(r[0]) for r in _map(ctx, "mixture_clean", spec.n_pos, workers)]
        thr = threshold_at_fpr(neg_s, spec.fpr)
        for p in spec.mixture_fractions:
            k = int(round(float(p) / 100.0 * spec.n_pos))
            population = marked[:k] + base[k:]
            u, pv = mann_whitney_u(population, neg_s, method="normal")
            mixture.append(MixtureRow(float(p), k, u, pv,
                                      float(np.mean(np.asarray(population) > thr))))

    return ExperimentReport(spec=spec.to_dict(), rows=rows, mixture=mixture, scores=scores,
                            created=datetime.now(timezone.utc).isoformat())
