"""Config-driven experiment runner.

An experiment is described by a single JSON file (schema below, unknown
keys are rejected), producing one CSV per transition pair plus a
``manifest.json`` that records the library version, a hash of the
effective config and all derived constants.  Identical config and seed
give byte-identical CSV output, independent of the thread count.

Config schema::

    {
      "n": 10,
      "basis": {"kind": "localized"},
          // or {"kind": "plane_wave"}
          // or {"kind": "mixed", "partition": [[2, 4, "localized"],
          //     [6, 5, "plane_wave"]], "seed": 3}   (both keys optional)
      "spectrum": {"kind": "linear"},
          // or {"kind": "ideal"}
          // or {"kind": "explicit", "energies": [...],
          //     "detailed_balance": false}
      "ensemble": {"model": "uncorrelated", "kappa": 0.002},
          // or {"model": "attractive", "kappa": ..., "a": ...}
          // or {"model": "repulsive", "kappa": ..., "b": ...}
          // required in averaged mode; means are the chosen spectrum
      "mode": "unitary",            // unitary|monitored|averaged|basis_info
      "transitions": [[3, 5], [5, 5]],      // [from, to] site pairs
      "times": {"t_start": 1, "t_end": 100, "t_step": 1},
          // or {"tau": 1.0, "m_max": 100} in monitored mode
      "seed": 0,
      "monte_carlo": {"samples": 10000}     // optional, averaged mode
    }

CSV contract: header ``t_or_m,transition,value,classical_part,
quantum_part,weight`` with trailing fields left empty in modes where the
classical/quantum split is undefined; 12 significant digits.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .basis import (
    BasisKind,
    BasisPartition,
    OrthonormalBasis,
    classify_vector,
    localization_coefficient,
    localized_basis,
    mixed_basis,
    plane_wave_basis,
)
from .evolution import asymptotic_transition, averaged_transition, transition_probability, unitary
from .monitor import detection_series, monitored_operator_energy
from .spectral import (
    Attractive,
    EigenvalueEnsemble,
    Repulsive,
    Spectrum,
    Uncorrelated,
    dephasing_rate,
    ideal_spectrum,
    linear_spectrum,
    sample_fluctuations,
    weight_function,
)

__all__ = [
    "ConfigError",
    "InvariantViolation",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "run",
    "emit_plot_script",
    "selftest",
]

CSV_HEADER = "t_or_m,transition,value,classical_part,quantum_part,weight"
OUT_DIR_ENV = "QWALK_OUT_DIR"

_MODES = ("unitary", "monitored", "averaged", "basis_info")
_SERIES_MODES = ("unitary", "monitored", "averaged")
PROBABILITY_SLACK = 1e-10


class ConfigError(ValueError):
    """Invalid experiment configuration; message references the config key."""


class InvariantViolation(RuntimeError):
    """A numerical invariant failed during a run."""

    def __init__(self, invariant: str, detail: str):
        self.invariant = invariant
        super().__init__(f"{invariant}: {detail}")


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    basis: dict
    spectrum: dict
    ensemble: dict | None
    mode: str
    transitions: tuple[tuple[int, int], ...]
    times: dict | None
    seed: int
    monte_carlo: dict | None

    def canonical(self) -> dict:
        """Plain-dict form with defaults filled, used for hashing and echo."""
        out = {
            "n": self.n,
            "basis": self.basis,
            "spectrum": self.spectrum,
            "mode": self.mode,
            "seed": self.seed,
        }
        if self.ensemble is not None:
            out["ensemble"] = self.ensemble
        if self.times is not None:
            out["times"] = self.times
        if self.transitions:
            out["transitions"] = [list(p) for p in self.transitions]
        if self.monte_carlo is not None:
            out["monte_carlo"] = self.monte_carlo
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _reject_unknown(section: dict, allowed: tuple[str, ...], path: str):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")


def _need(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"{path}: missing required key '{key}'")
    return section[key]


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _parse_basis(section, n: int) -> dict:
    if not isinstance(section, dict):
        raise ConfigError("basis: expected an object")
    kind = _need(section, "kind", "basis")
    if kind in ("localized", "plane_wave"):
        _reject_unknown(section, ("kind",), "basis")
        return {"kind": kind}
    if kind != "mixed":
        raise ConfigError(f"basis.kind: expected localized|plane_wave|mixed, got {kind!r}")
    _reject_unknown(section, ("kind", "partition", "seed"), "basis")
    out: dict = {"kind": "mixed"}
    if "seed" in section:
        out["seed"] = _as_int(section["seed"], "basis.seed")
    if "partition" in section:
        blocks = section["partition"]
        if not isinstance(blocks, list) or not blocks:
            raise ConfigError("basis.partition: expected a nonempty list of [start, length, kind]")
        parsed = []
        for i, blk in enumerate(blocks):
            if not (isinstance(blk, list) and len(blk) == 3):
                raise ConfigError(f"basis.partition[{i}]: expected [start, length, kind]")
            start = _as_int(blk[0], f"basis.partition[{i}].start")
            length = _as_int(blk[1], f"basis.partition[{i}].length")
            if blk[2] not in ("localized", "plane_wave"):
                raise ConfigError(
                    f"basis.partition[{i}].kind: expected localized|plane_wave, got {blk[2]!r}"
                )
            parsed.append([start, length, blk[2]])
        try:
            part = BasisPartition(
                tuple((s, ln, BasisKind(kind)) for s, ln, kind in parsed)
            )
        except ValueError as exc:
            raise ConfigError(f"basis.partition: {exc}") from exc
        if part.covered_until != n:
            raise ConfigError(
                f"basis.partition: covers indices 2..{part.covered_until}, expected 2..{n}"
            )
        out["partition"] = parsed
    return out


def _parse_spectrum(section, n: int) -> dict:
    if not isinstance(section, dict):
        raise ConfigError("spectrum: expected an object")
    kind = _need(section, "kind", "spectrum")
    if kind in ("ideal", "linear"):
        _reject_unknown(section, ("kind",), "spectrum")
        return {"kind": kind}
    if kind != "explicit":
        raise ConfigError(f"spectrum.kind: expected ideal|linear|explicit, got {kind!r}")
    _reject_unknown(section, ("kind", "energies", "detailed_balance"), "spectrum")
    energies = _need(section, "energies", "spectrum")
    if not isinstance(energies, list) or len(energies) != n:
        raise ConfigError(f"spectrum.energies: expected a list of length n={n}")
    values = [_as_number(e, f"spectrum.energies[{i}]") for i, e in enumerate(energies)]
    db = section.get("detailed_balance", False)
    if not isinstance(db, bool):
        raise ConfigError("spectrum.detailed_balance: expected a boolean")
    try:
        Spectrum(np.array(values), detailed_balance=db)
    except ValueError as exc:
        raise ConfigError(f"spectrum: {exc}") from exc
    return {"kind": "explicit", "energies": values, "detailed_balance": db}


def _parse_ensemble(section) -> dict:
    if not isinstance(section, dict):
        raise ConfigError("ensemble: expected an object")
    model = _need(section, "model", "ensemble")
    try:
        if model == "uncorrelated":
            _reject_unknown(section, ("model", "kappa"), "ensemble")
            Uncorrelated(_as_number(_need(section, "kappa", "ensemble"), "ensemble.kappa"))
            return {"model": model, "kappa": float(section["kappa"])}
        if model == "attractive":
            _reject_unknown(section, ("model", "kappa", "a"), "ensemble")
            Attractive(
                _as_number(_need(section, "kappa", "ensemble"), "ensemble.kappa"),
                _as_number(_need(section, "a", "ensemble"), "ensemble.a"),
            )
            return {"model": model, "kappa": float(section["kappa"]), "a": float(section["a"])}
        if model == "repulsive":
            _reject_unknown(section, ("model", "kappa", "b"), "ensemble")
            Repulsive(
                _as_number(_need(section, "kappa", "ensemble"), "ensemble.kappa"),
                _as_number(_need(section, "b", "ensemble"), "ensemble.b"),
            )
            return {"model": model, "kappa": float(section["kappa"]), "b": float(section["b"])}
    except ValueError as exc:
        raise ConfigError(f"ensemble: {exc}") from exc
    raise ConfigError(
        f"ensemble.model: expected uncorrelated|attractive|repulsive, got {model!r}"
    )


def _parse_times(section, mode: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError("times: expected an object")
    if mode == "monitored":
        _reject_unknown(section, ("tau", "m_max"), "times")
        tau = _as_number(_need(section, "tau", "times"), "times.tau")
        if tau <= 0:
            raise ConfigError(f"times.tau: must be positive, got {tau}")
        m_max = _as_int(section.get("m_max", 1000), "times.m_max")
        if m_max < 1:
            raise ConfigError(f"times.m_max: must be at least 1, got {m_max}")
        return {"tau": tau, "m_max": m_max}
    _reject_unknown(section, ("t_start", "t_end", "t_step"), "times")
    t_start = _as_number(_need(section, "t_start", "times"), "times.t_start")
    t_end = _as_number(_need(section, "t_end", "times"), "times.t_end")
    t_step = _as_number(_need(section, "t_step", "times"), "times.t_step")
    if t_start < 0:
        raise ConfigError(f"times.t_start: must be nonnegative, got {t_start}")
    if t_step <= 0:
        raise ConfigError(f"times.t_step: must be positive, got {t_step}")
    if t_end < t_start:
        raise ConfigError(f"times.t_end: must be >= t_start, got {t_end}")
    return {"t_start": t_start, "t_end": t_end, "t_step": t_step}


def parse_config(data, source: str = "<config>") -> ExperimentConfig:
    """Validate a parsed JSON object against the schema (fail-loud)."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    _reject_unknown(
        data,
        ("n", "basis", "spectrum", "ensemble", "mode", "transitions", "times", "seed", "monte_carlo"),
        source,
    )
    n = _as_int(_need(data, "n", source), "n")
    if n < 2:
        raise ConfigError(f"n: must be at least 2, got {n}")
    mode = _need(data, "mode", source)
    if mode not in _MODES:
        raise ConfigError(f"mode: expected one of {_MODES}, got {mode!r}")
    basis = _parse_basis(_need(data, "basis", source), n)
    spectrum = _parse_spectrum(_need(data, "spectrum", source), n)

    ensemble = None
    if "ensemble" in data:
        ensemble = _parse_ensemble(data["ensemble"])
    if mode == "averaged" and ensemble is None:
        raise ConfigError("ensemble: required in averaged mode")

    transitions: tuple[tuple[int, int], ...] = ()
    times = None
    if mode in _SERIES_MODES:
        raw_transitions = _need(data, "transitions", source)
        if not isinstance(raw_transitions, list) or not raw_transitions:
            raise ConfigError("transitions: expected a nonempty list of [from, to] pairs")
        pairs = []
        for i, pair in enumerate(raw_transitions):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ConfigError(f"transitions[{i}]: expected a [from, to] pair")
            m_from = _as_int(pair[0], f"transitions[{i}][0]")
            m_to = _as_int(pair[1], f"transitions[{i}][1]")
            for label, m in (("from", m_from), ("to", m_to)):
                if not 1 <= m <= n:
                    raise ConfigError(f"transitions[{i}].{label}: index {m} out of range 1..{n}")
            pairs.append((m_from, m_to))
        transitions = tuple(pairs)
        times = _parse_times(_need(data, "times", source), mode)

    monte_carlo = None
    if "monte_carlo" in data:
        if mode != "averaged":
            raise ConfigError("monte_carlo: only meaningful in averaged mode")
        section = data["monte_carlo"]
        if not isinstance(section, dict):
            raise ConfigError("monte_carlo: expected an object")
        _reject_unknown(section, ("samples",), "monte_carlo")
        samples = _as_int(_need(section, "samples", "monte_carlo"), "monte_carlo.samples")
        if samples < 1:
            raise ConfigError(f"monte_carlo.samples: must be at least 1, got {samples}")
        monte_carlo = {"samples": samples}

    seed = _as_int(data.get("seed", 0), "seed")
    return ExperimentConfig(
        n=n,
        basis=basis,
        spectrum=spectrum,
        ensemble=ensemble,
        mode=mode,
        transitions=transitions,
        times=times,
        seed=seed,
        monte_carlo=monte_carlo,
    )


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    """Read and validate a JSON config file.

    Parse errors carry the line and column reported by the JSON decoder;
    schema errors reference the offending key.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if seed_override is not None:
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        data["seed"] = seed_override
    return parse_config(data, source=str(path))


def build_basis(config: ExperimentConfig) -> OrthonormalBasis:
    spec = config.basis
    if spec["kind"] == "localized":
        return localized_basis(config.n)
    if spec["kind"] == "plane_wave":
        return plane_wave_basis(config.n)
    partition = None
    if "partition" in spec:
        partition = BasisPartition(
            tuple((s, ln, BasisKind(kind)) for s, ln, kind in spec["partition"])
        )
    return mixed_basis(config.n, partition, seed=spec.get("seed", config.seed))


def build_spectrum(config: ExperimentConfig) -> Spectrum:
    spec = config.spectrum
    if spec["kind"] == "ideal":
        return ideal_spectrum(config.n)
    if spec["kind"] == "linear":
        return linear_spectrum(config.n)
    return Spectrum(np.array(spec["energies"]), detailed_balance=spec["detailed_balance"])


def build_ensemble(config: ExperimentConfig, spectrum: Spectrum) -> EigenvalueEnsemble:
    spec = config.ensemble
    if spec["model"] == "uncorrelated":
        model = Uncorrelated(spec["kappa"])
    elif spec["model"] == "attractive":
        model = Attractive(spec["kappa"], spec["a"])
    else:
        model = Repulsive(spec["kappa"], spec["b"])
    return EigenvalueEnsemble(means=spectrum.energies, model=model)


def _time_grid(times: dict) -> np.ndarray:
    return np.arange(times["t_start"], times["t_end"] + times["t_step"] / 2, times["t_step"])


def _fmt(value) -> str:
    return "" if value is None else f"{value:.12g}"


def _check_probability(value: float, what: str):
    if not (-PROBABILITY_SLACK <= value <= 1.0 + PROBABILITY_SLACK):
        raise InvariantViolation("probability bounds", f"{what} = {value!r} outside [0, 1]")


def _spectral_radius_bound(matrix: np.ndarray, iterations: int = 200) -> float:
    """Power-iteration estimate of the spectral radius."""
    x = np.ones(matrix.shape[0], dtype=complex) / np.sqrt(matrix.shape[0])
    radius = 0.0
    for _ in range(iterations):
        y = matrix @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        radius = norm
        x = y / norm
    return float(radius)


def _unitary_rows(basis, spectrum, grid, m_from, m_to):
    rows = []
    for t in grid:
        u = unitary(basis, spectrum, t)
        p = transition_probability(u, m_to, m_from)
        _check_probability(p, f"P({m_to},{m_from}; t={t:g})")
        rows.append((float(t), p, None, None, None))
    return rows


def _monitored_rows(basis, spectrum, times, m_from, m_to):
    series = detection_series(basis, spectrum, times["tau"], m_to, m_from, m_max=times["m_max"])
    if np.any(np.diff(series.cumulative) < -1e-15):
        raise InvariantViolation("cumulative detection", "partial sums decrease")
    if series.cumulative[-1] > 1.0 + PROBABILITY_SLACK:
        raise InvariantViolation(
            "cumulative detection", f"total {series.cumulative[-1]!r} exceeds 1"
        )
    rows = []
    for m, p in enumerate(series.probabilities, start=1):
        _check_probability(float(p), f"Pi({m_to},{m_from}; m={m})")
        rows.append((float(m), float(p), None, None, None))
    return rows


def _averaged_rows(basis, ensemble, grid, m_from, m_to):
    rows = []
    for t in grid:
        avg = averaged_transition(basis, ensemble, t, m_to, m_from)
        _check_probability(avg.value, f"<P>({m_to},{m_from}; t={t:g})")
        rows.append((float(t), avg.value, avg.classical_part, avg.quantum_part, avg.weight))
    return rows


def _monte_carlo_rows(basis, ensemble, fluctuations, grid, m_from, m_to):
    amp = basis.site_overlaps(m_to) * np.conj(basis.site_overlaps(m_from))
    energies = ensemble.means[None, :] + fluctuations
    rows = []
    for t in grid:
        values = np.abs(np.exp(-1j * energies * t) @ amp) ** 2
        mean = float(values.mean())
        _check_probability(mean, f"MC<P>({m_to},{m_from}; t={t:g})")
        rows.append((float(t), mean, None, None, None))
    return rows


def _write_csv(path: Path, label: str, rows):
    lines = [CSV_HEADER]
    for t_or_m, value, classical, quantum, weight in rows:
        lines.append(
            f"{_fmt(t_or_m)},{label},{_fmt(value)},{_fmt(classical)},{_fmt(quantum)},{_fmt(weight)}"
        )
    path.write_text("\n".join(lines) + "\n")


def run(config: ExperimentConfig, out_dir, threads: int = 1) -> Path:
    """Execute a validated config; returns the path of the written manifest.

    Raises :class:`InvariantViolation` when a numerical sanity check fails
    (unitarity, probability bounds, monitored spectral radius) and
    :class:`ConfigError` for anything wrong with the configuration.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if threads < 1:
        raise ConfigError(f"threads: must be at least 1, got {threads}")

    basis = build_basis(config)
    spectrum = build_spectrum(config)
    constants: dict = {}
    files: dict[str, str] = {}
    mc_files: dict[str, str] = {}

    if config.mode == "basis_info":
        rows = []
        for k in range(1, config.n + 1):
            c = localization_coefficient(basis, k)
            _check_probability(c, f"c_{k}")
            rows.append((float(k), c, None, None, None, classify_vector(c, config.n).value))
        path = out_dir / "basis_info.csv"
        lines = [CSV_HEADER]
        for k, c, _, _, _, tag in rows:
            lines.append(f"{_fmt(k)},{tag},{_fmt(c)},,,")
        path.write_text("\n".join(lines) + "\n")
        files["basis_info"] = path.name
    else:
        ensemble = None
        fluctuations = None
        grid = None
        if config.mode in ("unitary", "averaged"):
            grid = _time_grid(config.times)
            if grid.size == 0:
                raise ConfigError("times: the time grid is empty")
        if config.mode == "unitary":
            u = unitary(basis, spectrum, float(grid[-1]))
            defect = np.abs(u.matrix @ u.matrix.conj().T - np.eye(config.n)).max()
            if defect > 1e-10:
                raise InvariantViolation("unitarity", f"max |U U^dag - 1| = {defect:.3e}")
        if config.mode == "monitored":
            op = monitored_operator_energy(basis, spectrum, config.times["tau"], config.transitions[0][1])
            radius = _spectral_radius_bound(op.matrix)
            if radius > 1.0 + 1e-9:
                raise InvariantViolation("monitored spectral radius", f"estimate {radius!r} > 1")
            constants["tau"] = config.times["tau"]
            constants["m_max"] = config.times["m_max"]
        if config.mode == "averaged":
            ensemble = build_ensemble(config, spectrum)
            constants["sigma"] = dephasing_rate(ensemble.model)
            constants["weights"] = [float(w) for w in weight_function(ensemble, grid)]
            constants["asymptotes"] = {
                f"{m_from}->{m_to}": asymptotic_transition(basis, m_to, m_from)
                for m_from, m_to in config.transitions
            }
            if config.monte_carlo is not None:
                fluctuations = sample_fluctuations(
                    ensemble, config.monte_carlo["samples"], config.seed
                )

        def compute(pair):
            m_from, m_to = pair
            if config.mode == "unitary":
                return _unitary_rows(basis, spectrum, grid, m_from, m_to), None
            if config.mode == "monitored":
                return _monitored_rows(basis, spectrum, config.times, m_from, m_to), None
            main = _averaged_rows(basis, ensemble, grid, m_from, m_to)
            extra = None
            if fluctuations is not None:
                extra = _monte_carlo_rows(basis, ensemble, fluctuations, grid, m_from, m_to)
            return main, extra

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(compute, config.transitions))
        else:
            results = [compute(pair) for pair in config.transitions]

        for (m_from, m_to), (rows, mc_rows) in zip(config.transitions, results):
            label = f"{m_from}->{m_to}"
            path = out_dir / f"transition_{m_from}_to_{m_to}.csv"
            _write_csv(path, label, rows)
            files[label] = path.name
            if mc_rows is not None:
                mc_path = out_dir / f"transition_{m_from}_to_{m_to}_mc.csv"
                _write_csv(mc_path, label, mc_rows)
                mc_files[label] = mc_path.name

    manifest = {
        "version": __version__,
        "config_hash": config.config_hash(),
        "config": config.canonical(),
        "mode": config.mode,
        "out_dir": str(out_dir.resolve()),
        "files": files,
        "mc_files": mc_files,
        "constants": constants,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Render probability curves from recorded CSV data (auto-generated)."""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

PANELS = {panels}
OUT = Path({out!r})

fig, axes = plt.subplots(1, len(PANELS), figsize=(6 * len(PANELS), 4.5), squeeze=False)
for ax, panel in zip(axes[0], PANELS):
    for label, path in panel["series"]:
        xs, ys = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                xs.append(float(row["t_or_m"]))
                ys.append(float(row["value"]))
        ax.plot(xs, ys, marker=".", markersize=3, linewidth=0.9, label=label)
    for guide in panel["guides"]:
        ax.axhline(guide, color="gray", linestyle="--", linewidth=0.8)
    ax.set_title(panel["title"])
    ax.set_xlabel(panel["xlabel"])
    ax.set_ylabel("probability")
    ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(OUT, dpi=150)
print(f"wrote {{OUT}}")
'''


def emit_plot_script(manifest_paths, out_path=None) -> Path:
    """Write a self-contained matplotlib script, one panel per manifest.

    Averaged-mode panels get horizontal guide lines at the recorded
    infinite-time asymptotes.  Raises :class:`ConfigError` when a manifest
    or any CSV it references is missing.
    """
    manifest_paths = [Path(p) for p in manifest_paths]
    if not manifest_paths:
        raise ConfigError("plot: need at least one manifest")
    panels = []
    for mpath in manifest_paths:
        try:
            manifest = json.loads(mpath.read_text())
        except OSError as exc:
            raise ConfigError(f"{mpath}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{mpath}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        base = Path(manifest["out_dir"])
        series = []
        for label in sorted(manifest["files"]):
            csv_path = base / manifest["files"][label]
            if not csv_path.exists():
                raise ConfigError(f"{mpath}: missing CSV {csv_path}")
            series.append((label, str(csv_path)))
        mode = manifest["mode"]
        guides = []
        if mode == "averaged":
            guides = sorted(set(manifest["constants"].get("asymptotes", {}).values()))
        panels.append(
            {
                "title": mode,
                "xlabel": {"monitored": "m", "basis_info": "k"}.get(mode, "t"),
                "series": series,
                "guides": guides,
            }
        )
    if out_path is None:
        out_path = manifest_paths[0].parent / "plot.py"
    out_path = Path(out_path)
    png = out_path.with_suffix(".png")
    out_path.write_text(_PLOT_TEMPLATE.format(panels=repr(panels), out=str(png)))
    return out_path


def _selftest_checks():
    from scipy.linalg import expm

    def orthonormality():
        for build in (localized_basis, plane_wave_basis, mixed_basis):
            b = build(64)
            defect = np.abs(b.rows @ b.rows.conj().T - np.eye(64)).max()
            if defect > 1e-12:
                return False, f"{b.kind.value}: defect {defect:.3e}"
        return True, ""

    def coefficients():
        b = localized_basis(32)
        if abs(localization_coefficient(b, 1) - 1 / 32) > 1e-15:
            return False, "c_1 != 1/n"
        for k in range(2, 33):
            expected = (1 - 1 / k) ** 2 + 1 / (k * k * (k - 1))
            if abs(localization_coefficient(b, k) - expected) > 1e-13:
                return False, f"c_{k} off"
        return True, ""

    def ideal_hamiltonian():
        from .evolution import hamiltonian_from

        n = 16
        expected = np.eye(n) - 1 / n
        for build in (localized_basis, plane_wave_basis):
            h = hamiltonian_from(build(n), ideal_spectrum(n)).matrix
            if np.abs(h - expected).max() > 1e-12:
                return False, build.__name__
        return True, ""

    def detailed_balance():
        n = 10
        for build in (localized_basis, plane_wave_basis):
            b = build(n)
            for t in (1.0, 5.0, 50.0):
                u = unitary(b, linear_spectrum(n), t)
                if np.abs(u.matrix.sum(axis=1) - 1).max() > 1e-10:
                    return False, f"{build.__name__}, t={t}"
        return True, ""

    def unitary_vs_expm():
        from .evolution import hamiltonian_from

        n = 16
        rng = np.random.default_rng(3)
        for build in (localized_basis, plane_wave_basis):
            b = build(n)
            s = Spectrum(np.sort(rng.uniform(0, 4, n)))
            t = 7.3
            direct = unitary(b, s, t).matrix
            brute = expm(-1j * hamiltonian_from(b, s).matrix * t)
            if np.abs(direct - brute).max() > 1e-9:
                return False, build.__name__
        return True, ""

    def first_detection():
        n = 12
        b = localized_basis(n)
        s = linear_spectrum(n)
        series = detection_series(b, s, 1.0, 5, 3, m_max=40)
        p = transition_probability(unitary(b, s, 1.0), 5, 3)
        if abs(series.probabilities[0] - p) > 1e-12:
            return False, "Pi(1) != P(tau)"
        return True, ""

    def representation_equivalence():
        from .evolution import hamiltonian_from
        from .monitor import monitored_operator_position

        n = 12
        b = plane_wave_basis(n)
        s = linear_spectrum(n)
        tau, m_to, m_from = 0.9, 4, 2
        series = detection_series(b, s, tau, m_to, m_from, m_max=25)
        half = expm(-0.5j * tau * hamiltonian_from(b, s).matrix)
        t_pos = monitored_operator_position(b, s, tau, m_to)
        psi = half[:, m_from - 1].copy()
        for m in range(series.attempts):
            amp = (half @ psi)[m_to - 1]
            if abs(amp - series.amplitudes[m]) > 1e-9:
                return False, f"m={m + 1}"
            psi = t_pos @ psi
        return True, ""

    def survival():
        n = 12
        b = localized_basis(n)
        s = linear_spectrum(n)
        series = detection_series(b, s, 1.0, 6, 2, m_max=60)
        op = monitored_operator_energy(b, s, 1.0, 6)
        half = np.exp(-1j * s.energies * 0.5)
        psi = half * b.rows[:, 1]
        for m in range(series.attempts):
            psi = op.matrix @ psi
            lost = 1.0 - float(np.vdot(psi, psi).real)
            if abs(lost - series.cumulative[m]) > 1e-9:
                return False, f"m={m + 1}"
        return True, ""

    def spectral_radius():
        n = 16
        for build in (localized_basis, plane_wave_basis):
            op = monitored_operator_energy(build(n), linear_spectrum(n), 1.3, 7)
            radius = np.abs(np.linalg.eigvals(op.matrix)).max()
            if radius > 1 + 1e-9:
                return False, f"{build.__name__}: {radius}"
        return True, ""

    def sampler():
        means = np.zeros(4)
        ens = EigenvalueEnsemble(means, Attractive(kappa=1.0, a=1.0))
        x = sample_fluctuations(ens, 20000, seed=5)
        for t in (0.5, 2.0):
            emp = np.mean(np.exp(-1j * (x[:, 0] - x[:, 2]) * t))
            closed = np.exp(-dephasing_rate(ens.model) * t * t / 2)
            if abs(emp - closed) > 0.02:
                return False, f"t={t}: {emp} vs {closed}"
        return True, ""

    def asymptotics():
        n = 10
        b = localized_basis(n)
        for m_to in range(1, n + 1):
            for m_from in range(1, m_to + 1):
                direct = asymptotic_transition(b, m_to, m_from)
                tail = sum(1.0 / (k * k * (k - 1) * (k - 1)) for k in range(m_to + 1, n + 1))
                closed = (
                    (1 if m_to == m_from else 0) * ((m_to - 1) ** 2 - 1) / m_to**2
                    + 1.0 / n**2
                    + 1.0 / m_to**2
                    + tail
                )
                if abs(direct - closed) > 1e-12:
                    return False, f"({m_to},{m_from})"
        return True, ""

    return [
        ("basis orthonormality (n=64, all kinds)", orthonormality),
        ("localized fourth-moment coefficients", coefficients),
        ("all-to-all Hamiltonian reconstruction", ideal_hamiltonian),
        ("detailed balance row sums", detailed_balance),
        ("unitary vs dense exponential", unitary_vs_expm),
        ("first detection equals unitary probability", first_detection),
        ("energy vs position detection amplitudes", representation_equivalence),
        ("survival bookkeeping", survival),
        ("monitored spectral radius bound", spectral_radius),
        ("sampler matches closed-form dephasing", sampler),
        ("asymptotic closed form vs direct sum", asymptotics),
    ]


def selftest(stream=None) -> int:
    """Run the built-in invariant suite; returns the number of failures."""
    import sys

    stream = stream or sys.stdout
    failures = 0
    for name, check in _selftest_checks():
        try:
            ok, detail = check()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        if ok:
            print(f"PASS {name}", file=stream)
        else:
            print(f"FAIL {name}: {detail}", file=stream)
            failures += 1
    return failures
