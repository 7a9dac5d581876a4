"""Monte Carlo sweeps and the figure-reproduction recipes.

A sweep varies one parameter over a list of values and runs ``trials``
independent trials per value for each requested pipeline variant.  Every
trial gets its own seed, derived from ``(seed_base, point index, trial
index)``, so any single point can be rerun in isolation and all variants
at one point see the same random draws.

Results go to a long-format CSV with one row per (series, point, variant,
metric).  Non-finite per-trial results are left out of the aggregates and
counted in the ``quarantined`` column; trials whose pipeline raised are
counted there too.  Nothing time-dependent is written, so reruns with the
same seed give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .aoa import MultiplyCounter, estimate_aoa, full_aoa
from .metrics import crlb_reference, record_nmse, record_sq_errors, roc
from .pipeline import VARIANTS, StageError, detection_trial, run_trial
from .scenario import SceneConfig, Target, derive_truth
from .scenefile import Scene
from .synth import OffsetModel, awgn, stream_rng

WORKERS_ENV = "COOPSENSE_WORKERS"

CSV_COLUMNS = ("recipe", "series", "parameter", "point", "variant", "metric", "value",
               "trials", "quarantined", "seed_base", "offset_model")

# parameters that are not SceneConfig fields
_OFFSET_PARAMS = {"to_mean_ns", "to_spread_ns", "cfo_mean_df", "cfo_spread_df"}
_SPECIAL_PARAMS = {"snr", "snr_r"}
_CONFIG_PARAMS = {f.name: f.type for f in fields(SceneConfig)}

DETECTORS = ("active", "passive", "cooperative")
SPATIAL_VARIANTS = ("restricted", "full")
ROC_PFA = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)


@dataclass
class SweepSpec:
    """One swept parameter, its values, trial count and the variants to run.

    ``kind`` selects the trial type: ``"estimation"`` runs the sensing
    pipeline; ``"detection"`` collects detector statistics under both
    hypotheses and reports ROC points; ``"spatial"`` compares restricted
    and full spatial transforms on synthetic array snapshots.
    """

    parameter: str
    values: list
    trials: int = 100
    variants: tuple = ("cooperative",)
    out: Optional[Path] = None
    series: str = ""
    kind: str = "estimation"
    doppler: bool = True
    aoa: bool = False
    crlb: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.variants:
            raise ValueError("variant list is empty")
        if not len(self.values):
            raise ValueError("value list is empty")
        self.variants = tuple(self.variants)
        if self.kind == "estimation":
            bad = [v for v in self.variants if v not in VARIANTS]
        elif self.kind == "detection":
            bad = [v for v in self.variants if v not in DETECTORS]
        elif self.kind == "spatial":
            bad = [v for v in self.variants if v not in SPATIAL_VARIANTS]
        else:
            raise ValueError(f"unknown sweep kind {self.kind!r}")
        if bad:
            raise ValueError(f"unknown variants for {self.kind} sweep: {bad}")
        check_parameter(self.parameter)


def check_parameter(name: str) -> None:
    if name not in _CONFIG_PARAMS and name not in _OFFSET_PARAMS and name not in _SPECIAL_PARAMS:
        raise ValueError(f"unknown sweep parameter {name!r}")


def apply_parameter(scene: Scene, name: str, value) -> Scene:
    """Scene with ``name`` set to ``value``.

    Besides every SceneConfig field this accepts ``snr`` (both paths),
    ``snr_r`` (passive SNR relative to the active one, dB) and the offset
    model fields in scene-file units (ns, fractions of the subcarrier spacing).
    """
    check_parameter(name)
    cfg = scene.config
    if name == "snr":
        return scene.with_config(snr_active=float(value), snr_passive=float(value))
    if name == "snr_r":
        return scene.with_config(snr_passive=cfg.snr_active + float(value))
    if name in _OFFSET_PARAMS:
        o, df = scene.offsets, cfg.subcarrier_spacing
        cur = {"to_mean_ns": o.to_mean * 1e9, "to_spread_ns": o.to_spread * 1e9,
               "cfo_mean_df": o.cfo_mean / df, "cfo_spread_df": o.cfo_spread / df}
        cur[name] = float(value)
        return replace(scene, offsets=OffsetModel.from_units(o.kind, subcarrier_spacing=df, cfo_phase=o.cfo_phase, **cur))
    typ = _CONFIG_PARAMS[name]
    if typ in ("int", int):
        value = int(value)
    elif typ in ("float", float):
        value = float(value)
    return scene.with_config(**{name: value})


def trial_seed(base: int, point: int, trial: int) -> int:
    """Seed of one trial, independent of every other point and trial."""
    state = np.random.SeedSequence([int(base), int(point), int(trial)]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


# ---------------------------------------------------------------------------
# trial jobs (top level so worker processes can pickle them)

_EST_SOURCES = {"active-only": ("active",), "passive-only": ("passive",),
                "cooperative": ("active", "passive", "compensated", "fused"),
                "perfect-sync": ("active", "passive", "compensated", "fused")}


def _estimation_job(args):
    scene, variant, seed, doppler, aoa = args
    try:
        rec = run_trial(scene, variant, seed, doppler=doppler, aoa=aoa)
    except StageError as exc:
        return {"_failed": str(exc)}
    out = {}
    for src in _EST_SOURCES[variant]:
        if src not in rec.estimates:
            continue
        kinds = ("range", "velocity") if doppler else ("range",)
        for kind in kinds:
            out[(src, f"nmse_{kind}")] = record_nmse(rec, src, kind)
            out[(src, f"sqerr_{kind}")] = float(np.mean(record_sq_errors(rec, src, kind)))
        if aoa and src == "fused":
            e = record_sq_errors(rec, src, "theta")
            out[(src, "sqerr_theta_deg")] = float(np.mean(e)) * (180 / math.pi) ** 2
    if variant == "cooperative":
        out[("correlation", "mse_direct")] = rec.mse_direct
    return out


def _detection_job(args):
    scene, seed, present = args
    return detection_trial(scene, seed, present)


def spatial_trial(scene: Scene, seed: int) -> dict:
    """One synthetic single-target snapshot through both spatial transforms.

    The angle is drawn uniformly in [15, 75] degrees, the snapshot carries
    white noise at the scene's passive SNR per element and the coarse stage
    sees ranges perturbed by the reference range standard deviation at that SNR.
    """
    cfg = scene.config
    rng = stream_rng(seed, 7)
    theta = math.radians(rng.uniform(15.0, 75.0))
    R1 = 100.0
    t = derive_truth(cfg, Target.from_polar(R1, math.degrees(theta), 0.0, origin=cfg.sbs1_position))
    k = np.arange(cfg.n_antennas)
    snap = 10 ** (cfg.snr_passive / 20) * np.exp(1j * (t.omega * k + rng.uniform(0, 2 * np.pi)))
    if not math.isinf(cfg.snr_passive):
        snap = snap + awgn(snap.shape, 1.0, rng)
        sd = crlb_reference(cfg, cfg.snr_passive, db=True)[0]
    else:
        sd = 0.0
    r1 = R1 + sd * rng.standard_normal()
    r2 = t.R2 + sd * rng.standard_normal()
    out = {}
    c_r, c_f = MultiplyCounter(), MultiplyCounter()
    try:
        est = estimate_aoa(snap, r1, r2, cfg, c_r)
        out[("restricted", "sqerr_theta_deg")] = math.degrees(est.theta - theta) ** 2
        out[("restricted", "multiplies")] = float(c_r.count)
    except ValueError:
        out[("restricted", "sqerr_theta_deg")] = float("nan")
        out[("restricted", "multiplies")] = float("nan")
    est = full_aoa(snap, cfg, c_f)
    out[("full", "sqerr_theta_deg")] = math.degrees(est.theta - theta) ** 2
    out[("full", "multiplies")] = float(c_f.count)
    return out


def _spatial_job(args):
    scene, seed = args
    return spatial_trial(scene, seed)


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


# ---------------------------------------------------------------------------
# aggregation


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _aggregate(results: list[dict], trials: int):
    """Per (series, metric) summary rows from per-trial dicts."""
    failed = sum(1 for r in results if "_failed" in r)
    keys = []
    for r in results:
        for k in r:
            if k != "_failed" and k not in keys:
                keys.append(k)
    rows = []
    for series, metric in sorted(keys):
        vals = np.array([r.get((series, metric), np.nan) for r in results if "_failed" not in r], dtype=float)
        good = vals[np.isfinite(vals)]
        q = trials - len(good)
        if metric.startswith("nmse_"):
            stats = [(f"{metric}_mean", np.mean(good) if good.size else np.nan),
                     (f"{metric}_median", np.median(good) if good.size else np.nan)]
        elif metric.startswith("sqerr_"):
            stats = [("rmse_" + metric[len("sqerr_"):], math.sqrt(np.mean(good)) if good.size else np.nan)]
        else:
            stats = [(f"{metric}_mean", np.mean(good) if good.size else np.nan)]
        for name, v in stats:
            rows.append((series, name, float(v), q))
    return rows, failed


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path

    def select(self, **match) -> list[dict]:
        out = []
        for r in self.rows:
            d = dict(zip(CSV_COLUMNS, r))
            if all(d[k] == v for k, v in match.items()):
                out.append(d)
        return out


def run_sweep(spec: SweepSpec, scene: Scene, seed: int = 0, recipe: str = "custom",
              workers: Optional[int] = None) -> SweepResult:
    """Run every (point, variant) of ``spec`` and return the summary rows.

    When ``spec.out`` is set the CSV is written there as well.
    """
    workers = worker_count() if workers is None else workers
    res = SweepResult()
    for p, value in enumerate(spec.values):
        sc = apply_parameter(scene, spec.parameter, value)
        seeds = [trial_seed(seed, p, t) for t in range(spec.trials)]
        label = sc.offsets.label()

        def emit(series, variant, metric, v, trials, q):
            res.rows.append((recipe, series, spec.parameter, value, variant, metric, v, trials, q, seed, label))

        if spec.kind == "estimation":
            for variant in spec.variants:
                results = _map(_estimation_job, [(sc, variant, s, spec.doppler, spec.aoa) for s in seeds], workers)
                rows, failed = _aggregate(results, spec.trials)
                if failed == spec.trials:
                    first = next(r["_failed"] for r in results)
                    raise RuntimeError(f"all {spec.trials} trials failed at {spec.parameter}={value}: {first}")
                for series, metric, v, q in rows:
                    emit(series, variant, metric, v, spec.trials, q)
                emit("trials", variant, "failed", failed, spec.trials, failed)
            if spec.crlb:
                sd_r, sd_v = crlb_reference(sc.config, sc.config.snr_passive, db=True)
                ranges = [derive_truth(sc.config, t).R1 for t in sc.targets]
                vels = [derive_truth(sc.config, t).v1 for t in sc.targets]
                emit("crlb", "reference", "std_range", sd_r, 0, 0)
                emit("crlb", "reference", "std_velocity", sd_v, 0, 0)
                emit("crlb", "reference", "nmse_range", float(np.mean([sd_r ** 2 / r ** 2 for r in ranges])), 0, 0)
                emit("crlb", "reference", "nmse_velocity",
                     float(np.mean([sd_v ** 2 / v ** 2 for v in vels if v != 0])) if any(vels) else float("nan"), 0, 0)
        elif spec.kind == "detection":
            h0 = _map(_detection_job, [(sc, s, False) for s in seeds], workers)
            # signal trials use a disjoint seed set
            h1 = _map(_detection_job, [(sc, trial_seed(seed, p, spec.trials + t), True)
                                       for t in range(spec.trials)], workers)
            for det in spec.variants:
                s0 = np.array([r[det] for r in h0], dtype=float)
                s1 = np.array([r[det] for r in h1], dtype=float)
                keep0, keep1 = np.isfinite(s0), np.isfinite(s1)
                q = int((~keep0).sum() + (~keep1).sum())
                curve = roc(s0[keep0], s1[keep1], ROC_PFA)
                for pfa, pd, thr in zip(curve.pfa, curve.pd, curve.thresholds):
                    emit("roc", det, f"pd@pfa={pfa:g}", pd, spec.trials, q)
                    emit("roc", det, f"threshold@pfa={pfa:g}", thr, spec.trials, q)
        else:
            results = _map(_spatial_job, [(sc, s) for s in seeds], workers)
            rows, _ = _aggregate(results, spec.trials)
            for series, metric, v, q in rows:
                if series in spec.variants:
                    emit("aoa", series, metric, v, spec.trials, q)
            K = sc.config.n_antennas * sc.config.frft_index
            emit("aoa", "full", "multiplies_reference", K * sc.config.n_antennas, 0, 0)
            emit("aoa", "restricted", "multiplies_bound",
                 sc.config.aoa_window / math.pi * K * sc.config.n_antennas + 2 * K, 0, 0)
    if spec.out is not None:
        res.write(spec.out)
    return res


# ---------------------------------------------------------------------------
# recipes


def _gauss(to_mean_ns, to_spread_ns, cfo_mean_df, cfo_spread_df, df=120e3):
    return OffsetModel.from_units("gaussian", to_mean_ns, to_spread_ns, cfo_mean_df, cfo_spread_df, df)


SNR_POINTS = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]


@dataclass
class RecipeStep:
    spec: SweepSpec
    scene: Scene


def _recipe_fig3(scene, trials, points):
    """Passive-only impairment curves: NMSE versus SNR_b for several TO and CFO settings."""
    pts = points or SNR_POINTS
    df = scene.config.subcarrier_spacing
    steps = []
    for e_to in (10, 100, 1000):
        for v_to in (1, 100):
            sc = replace(scene, offsets=_gauss(e_to, v_to, 0.0, 0.0, df))
            steps.append(RecipeStep(SweepSpec("snr", pts, trials, ("passive-only",),
                                              series=f"to_mean={e_to}ns,to_spread={v_to}ns"), sc))
    for e_f in (0.01, 0.2):
        for v_f in (0.01, 0.2):
            sc = replace(scene, offsets=_gauss(100, 1, e_f, v_f, df))
            steps.append(RecipeStep(SweepSpec("snr", pts, trials, ("passive-only",),
                                              series=f"cfo_mean={e_f}df,cfo_spread={v_f}df"), sc))
    return steps


def _recipe_fig4(scene, trials, points):
    """SNR_r sweep: MSE of the correlation direct term and range NMSE of each variant."""
    pts = points or [-20.0, -10.0, -5.0, 0.0, 5.0, 10.0, 20.0]
    df = scene.config.subcarrier_spacing
    base = replace(scene, offsets=_gauss(100, 100, 0.2, 0.01, df))
    if math.isinf(base.config.fd_leakage_db):
        base = base.with_config(fd_leakage_db=-10.0)
    steps = []
    for snr_m in (0.0, 10.0):
        sc = base.with_config(snr_active=snr_m)
        steps.append(RecipeStep(SweepSpec("snr_r", pts, trials, ("cooperative",), doppler=False,
                                          series=f"snr_m={snr_m:g}dB"), sc))
    sc = base.with_config(snr_active=0.0)
    steps.append(RecipeStep(SweepSpec("snr_r", pts, trials, ("active-only", "passive-only", "cooperative"),
                                      doppler=False, series="range_nmse"), sc))
    return steps


def _recipe_fig5(scene, trials, points):
    """NMSE of range and velocity versus SNR_b (SNR_r = 0 dB) with the reference bound."""
    pts = points or SNR_POINTS
    sc = replace(scene, offsets=_gauss(100, 100, 0.2, 0.01, scene.config.subcarrier_spacing))
    return [RecipeStep(SweepSpec("snr", pts, trials, ("passive-only", "cooperative", "perfect-sync"),
                                 crlb=True, series="L=%d" % len(sc.targets)), sc)]


def _recipe_fig6a(scene, trials, points):
    """Velocity NMSE versus the CFO spread at SNR_b = 10 dB."""
    pts = points or [0.01, 0.1, 0.2, 0.25, 0.3, 0.4]
    sc = replace(scene, offsets=_gauss(100, 100, 0.2, 0.01, scene.config.subcarrier_spacing))
    sc = sc.with_config(snr_active=10.0, snr_passive=10.0)
    return [RecipeStep(SweepSpec("cfo_spread_df", pts, trials, ("cooperative",), series="snr_b=10dB"), sc)]


def roc_scene(snr_db: float = -16.0) -> Scene:
    """Reduced single-target scene used for detection experiments.

    A 256 x 64 grid keeps the thousands of trials a 1% false-alarm point
    needs affordable; the correlation offset search integrates all 64
    symbols.
    """
    cfg = SceneConfig(n_subcarriers=256, n_symbols=64, n_antennas=8, idft_points=1024, dft_points=256,
                      bandwidth=256 * 120e3, snr_active=snr_db, snr_passive=snr_db, offset_symbols=64,
                      fusion="noncoherent")
    return Scene(cfg, [Target.from_polar(100.0, 30.0, 15.0)], OffsetModel.from_units("constant", 100, 0, 0.2, 0))


def _recipe_fig6b(scene, trials, points):
    """ROC of the three detectors at SNR_r = 0 dB on the reduced detection scene."""
    pts = points or [-16.0]
    return [RecipeStep(SweepSpec("snr", pts, trials, DETECTORS, kind="detection", series="snr_r=0dB"),
                       roc_scene())]


def _recipe_fig7(scene, trials, points):
    """Restricted versus full spatial transform: angle RMSE and multiply counts."""
    pts = points or [-10.0, -5.0, 0.0, 5.0, 10.0, 20.0]
    return [RecipeStep(SweepSpec("snr_passive", pts, trials, SPATIAL_VARIANTS, kind="spatial",
                                 series="N_t=%d" % scene.config.n_antennas), scene)]


RECIPES: dict[str, Callable] = {
    "fig3": _recipe_fig3,
    "fig4": _recipe_fig4,
    "fig5": _recipe_fig5,
    "fig6a": _recipe_fig6a,
    "fig6b": _recipe_fig6b,
    "fig7-partial": _recipe_fig7,
}

RECIPE_TRIALS = {"fig6b": 2000}


def recipe_steps(name: str, scene: Scene, trials: Optional[int] = None, points=None) -> list[RecipeStep]:
    if name not in RECIPES:
        raise ValueError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)} or 'custom'")
    n = trials if trials is not None else RECIPE_TRIALS.get(name, 100)
    return RECIPES[name](scene, n, list(points) if points else None)


def run_recipe(name: str, scene: Scene, seed: int = 0, trials: Optional[int] = None, points=None,
               out: Optional[Path] = None, workers: Optional[int] = None) -> SweepResult:
    """Run every step of a recipe and gather the rows into one result."""
    total = SweepResult()
    for i, step in enumerate(recipe_steps(name, scene, trials, points)):
        r = run_sweep(step.spec, step.scene, seed=seed, recipe=name, workers=workers)
        for row in r.rows:
            # the step's series label replaces the generic one when the row came from the pipeline
            total.rows.append(row if not step.spec.series else
                              (row[0], f"{step.spec.series}/{row[1]}") + tuple(row[2:]))
    if out is not None:
        total.write(out)
    return total


__all__ = ["SweepSpec", "SweepResult", "RecipeStep", "RECIPES", "CSV_COLUMNS", "apply_parameter",
           "trial_seed", "run_sweep", "run_recipe", "recipe_steps", "roc_scene", "spatial_trial", "worker_count"]
