"""The quench protocol end to end: configs, runs, fate classification, scans.

A quench starts from an X-basis product state with a spin-down bubble in a
spin-up background and evolves it under the Ising terms, either with the
tree-network TDVP engine (``backend='ttn'``) or with exact dense evolution
(``backend='exact'``, small lattices).  The average magnetization's
late-time windowed mean classifies the bubble fate: Shrinking (background
wins, mean above +threshold), Expanding (true vacuum wins, mean below
-threshold) or Undecided.

File outputs per run: ``series.csv`` (t, avg_x, energy, norm, max_entropy),
``snapshot_t<T>.csv`` (Ly rows of Lx local <X> values, row y=0 first) and
``result.json`` (shape stats, fate, provenance).  Scans write one summary
JSON each.
"""

import configparser
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .exact import (
    DenseState,
    energy_dense,
    local_x_profile_dense,
    product_state_dense,
    sparse_hamiltonian,
    subtree_entropies_dense,
)
from .hamiltonian import IsingParams, build_terms
from .lattice import build_lattice, hilbert_ordering
from .shapes import ShapeMask, empty_mask, make_shape, shape_stats, catalog_shapes
from .tdvp import TdvpConfig, KrylovConvergenceError, evolve, krylov_expm_apply
from .ttn import product_state, local_x_profile

FATE_EXPANDING = "Expanding"
FATE_SHRINKING = "Shrinking"
FATE_UNDECIDED = "Undecided"


@dataclass(frozen=True)
class QuenchConfig:
    """Full description of one quench experiment."""

    width: int = 4
    height: int = 4
    shape_kind: str = "square"  # square|rectangle|diamond|cross|custom|empty
    shape_L: int | None = 2
    shape_W: int | None = None
    shape_r: int | None = None
    center_x: int | None = None
    center_y: int | None = None
    mask_file: str | None = None
    J: float = 1.0
    h_perp: float = 1.2
    h_par: float = -0.15
    dt: float = 0.05
    chi: int = 16
    krylov_dim: int = 25
    krylov_tol: float = 1e-10
    svd_cutoff: float = 1e-10
    t_max: float = 5.0
    snapshot_times: tuple = ()
    backend: str = "ttn"
    out_dir: str | None = None
    window_fraction: float = 0.2
    threshold: float = 0.1

    def validate(self):
        if self.backend not in ("ttn", "exact"):
            raise ValueError(f"backend must be 'ttn' or 'exact', got {self.backend!r}")
        if self.snapshot_times and max(self.snapshot_times) > self.t_max + 1e-12:
            raise ValueError("t_max must cover all snapshot times")
        if self.shape_kind == "custom":
            if not self.mask_file or not os.path.exists(self.mask_file):
                raise ValueError(f"mask_file {self.mask_file!r} does not exist")
        if self.backend == "exact" and self.width * self.height > 20:
            raise ValueError("exact backend limited to 20 sites")
        if not 0 < self.window_fraction <= 1:
            raise ValueError("window_fraction must be in (0, 1]")
        return self

    def replace(self, **kw) -> "QuenchConfig":
        return dataclasses.replace(self, **kw)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["snapshot_times"] = list(self.snapshot_times)
        return d

    def config_hash(self) -> str:
        payload = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def geometry(self):
        return build_lattice(self.width, self.height)

    def mask(self) -> ShapeMask:
        geo = self.geometry()
        if self.shape_kind == "empty":
            return empty_mask(geo)
        center = None
        if self.center_x is not None and self.center_y is not None:
            center = (self.center_x, self.center_y)
        return make_shape(
            self.shape_kind, geo, center,
            L=self.shape_L, W=self.shape_W, r=self.shape_r, mask_file=self.mask_file,
        )

    def params(self) -> IsingParams:
        return IsingParams(J=self.J, h_perp=self.h_perp, h_par=self.h_par)

    def tdvp(self) -> TdvpConfig:
        return TdvpConfig(dt=self.dt, krylov_dim=self.krylov_dim,
                          krylov_tol=self.krylov_tol, svd_cutoff=self.svd_cutoff)

    @classmethod
    def from_file(cls, path: str) -> "QuenchConfig":
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ValueError(f"cannot read config file {path!r}")

        def get(section, key, cast, default):
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                if cast is bool:
                    return parser.getboolean(section, key)
                return cast(raw)
            return default

        snapshot_raw = get("run", "snapshot_times", str, "")
        snapshots = tuple(float(v) for v in snapshot_raw.replace(",", " ").split()) if snapshot_raw else ()

        def opt_int(section, key):
            return get(section, key, int, None)

        return cls(
            width=get("lattice", "width", int, 4),
            height=get("lattice", "height", int, 4),
            shape_kind=get("shape", "kind", str, "square"),
            shape_L=opt_int("shape", "L"),
            shape_W=opt_int("shape", "W"),
            shape_r=opt_int("shape", "r"),
            center_x=opt_int("shape", "center_x"),
            center_y=opt_int("shape", "center_y"),
            mask_file=get("shape", "mask_file", str, None),
            J=get("hamiltonian", "J", float, 1.0),
            h_perp=get("hamiltonian", "h_perp", float, 1.2),
            h_par=get("hamiltonian", "h_par", float, -0.15),
            dt=get("tdvp", "dt", float, 0.05),
            chi=get("tdvp", "chi", int, 16),
            krylov_dim=get("tdvp", "krylov_dim", int, 25),
            krylov_tol=get("tdvp", "krylov_tol", float, 1e-10),
            svd_cutoff=get("tdvp", "svd_cutoff", float, 1e-10),
            t_max=get("run", "t_max", float, 5.0),
            snapshot_times=snapshots,
            backend=get("run", "backend", str, "ttn"),
            out_dir=get("run", "out_dir", str, None),
            window_fraction=get("classify", "window_fraction", float, 0.2),
            threshold=get("classify", "threshold", float, 0.1),
        ).validate()

    def to_file(self, path: str):
        parser = configparser.ConfigParser()
        parser["lattice"] = {"width": str(self.width), "height": str(self.height)}
        shape = {"kind": self.shape_kind}
        for key, val in (("L", self.shape_L), ("W", self.shape_W), ("r", self.shape_r),
                         ("center_x", self.center_x), ("center_y", self.center_y),
                         ("mask_file", self.mask_file)):
            if val is not None:
                shape[key] = str(val)
        parser["shape"] = shape
        parser["hamiltonian"] = {"J": repr(self.J), "h_perp": repr(self.h_perp),
                                 "h_par": repr(self.h_par)}
        parser["tdvp"] = {"dt": repr(self.dt), "chi": str(self.chi),
                          "krylov_dim": str(self.krylov_dim),
                          "krylov_tol": repr(self.krylov_tol),
                          "svd_cutoff": repr(self.svd_cutoff)}
        run = {"t_max": repr(self.t_max), "backend": self.backend}
        if self.snapshot_times:
            run["snapshot_times"] = ", ".join(f"{t:g}" for t in self.snapshot_times)
        if self.out_dir:
            run["out_dir"] = self.out_dir
        parser["run"] = run
        parser["classify"] = {"window_fraction": repr(self.window_fraction),
                              "threshold": repr(self.threshold)}
        with open(path, "w") as fh:
            parser.write(fh)


@dataclass
class QuenchResult:
    """Series, snapshots, fate and provenance of one quench."""

    config: QuenchConfig
    times: np.ndarray
    avg_x: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    max_entropy: np.ndarray
    profiles: np.ndarray = field(repr=False)  # (n_times, n_sites), in-memory only
    snapshots: dict = field(default_factory=dict)  # t -> grid[x, y]
    fate: str = FATE_UNDECIDED
    shape: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    failure: str | None = None

    def final_window_mean(self, window: float | None = None) -> float:
        window = self.config.window_fraction * self.config.t_max if window is None else window
        return _window_mean(self.times, self.avg_x, window)

    # -- persistence --------------------------------------------------------

    def save(self, out_dir: str):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "series.csv"), "w") as fh:
            fh.write("t,avg_x,energy,norm,max_entropy\n")
            for row in zip(self.times, self.avg_x, self.energy, self.norm, self.max_entropy):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        snapshot_files = {}
        for t, grid in sorted(self.snapshots.items()):
            name = f"snapshot_t{t:g}.csv"
            snapshot_files[f"{t:g}"] = name
            with open(os.path.join(out_dir, name), "w") as fh:
                for y in range(grid.shape[1]):
                    fh.write(",".join(f"{grid[x, y]:.17g}" for x in range(grid.shape[0])) + "\n")
        doc = {
            "config": self.config.as_dict(),
            "shape": self.shape,
            "fate": self.fate,
            "final_window_mean": self.final_window_mean() if len(self.times) else None,
            "failure": self.failure,
            "snapshot_files": snapshot_files,
            "provenance": self.provenance,
        }
        with open(os.path.join(out_dir, "result.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, out_dir: str) -> "QuenchResult":
        with open(os.path.join(out_dir, "result.json")) as fh:
            doc = json.load(fh)
        cfg_dict = doc["config"]
        cfg_dict["snapshot_times"] = tuple(cfg_dict["snapshot_times"])
        config = QuenchConfig(**cfg_dict)
        data = np.genfromtxt(os.path.join(out_dir, "series.csv"), delimiter=",",
                             names=True, dtype=float)
        data = np.atleast_1d(data)
        snapshots = {}
        for t_str, name in doc["snapshot_files"].items():
            rows = np.loadtxt(os.path.join(out_dir, name), delimiter=",", ndmin=2)
            snapshots[float(t_str)] = rows.T  # rows are y, columns x
        return cls(
            config=config,
            times=data["t"],
            avg_x=data["avg_x"],
            energy=data["energy"],
            norm=data["norm"],
            max_entropy=data["max_entropy"],
            profiles=np.zeros((0, config.width * config.height)),
            snapshots=snapshots,
            fate=doc["fate"],
            shape=doc["shape"],
            provenance=doc["provenance"],
            failure=doc.get("failure"),
        )


def _window_mean(times: np.ndarray, values: np.ndarray, window: float) -> float:
    if len(times) == 0:
        raise ValueError("empty series")
    span = times[-1] - times[0]
    if window > span + 1e-12:
        raise ValueError(f"window {window} longer than the series span {span}")
    sel = times >= times[-1] - window - 1e-12 * max(1.0, abs(times[-1]))
    if not np.any(sel):
        sel = times == times[-1]
    return float(values[sel].mean())


def classify_fate(result, window: float | None = None, threshold: float | None = None) -> str:
    """Late-time windowed-mean sign test on the average magnetization."""
    if isinstance(result, QuenchResult):
        times, values = result.times, result.avg_x
        window = result.config.window_fraction * result.config.t_max if window is None else window
        threshold = result.config.threshold if threshold is None else threshold
    else:
        times, values = result
        if window is None or threshold is None:
            raise ValueError("window and threshold required for raw series")
    mean = _window_mean(np.asarray(times), np.asarray(values), window)
    if mean > threshold:
        return FATE_SHRINKING
    if mean < -threshold:
        return FATE_EXPANDING
    return FATE_UNDECIDED


def _profile_to_grid(profile: np.ndarray, width: int, height: int) -> np.ndarray:
    """Canonical-order site values -> grid[x, y]."""
    return profile.reshape(height, width).T


def _snap_time(t: float, dt: float) -> float:
    return round(t / dt) * dt


def run_quench(config: QuenchConfig, *, persist: bool | None = None) -> QuenchResult:
    """Execute one quench; deterministic given the config.

    Persists to ``config.out_dir`` when set (or forced via ``persist``).
    A Krylov convergence failure aborts the time loop and returns (and
    persists) the partial series with a failure marker.
    """
    config.validate()
    t_start = time.perf_counter()
    geo = config.geometry()
    mask = config.mask()
    terms = build_terms(geo, config.params())
    stats = shape_stats(mask).to_dict() if mask.area > 0 else {
        "area": 0, "P_b": 0, "P_s": 0, "patch": None}

    snap_times = sorted({_snap_time(t, config.dt) for t in config.snapshot_times})
    if config.backend == "exact":
        times, avg, energy, norm, ent, profiles, failure = _run_exact(config, geo, mask, terms)
    else:
        times, avg, energy, norm, ent, profiles, failure = _run_ttn(config, geo, mask, terms)

    snapshots = {
        t: _profile_to_grid(profiles[np.argmin(np.abs(times - t))], config.width, config.height)
        for t in snap_times
        if len(times) and np.min(np.abs(times - t)) <= config.dt / 2 + 1e-12
    }
    result = QuenchResult(
        config=config,
        times=times, avg_x=avg, energy=energy, norm=norm, max_entropy=ent,
        profiles=profiles, snapshots=snapshots,
        shape=stats,
        failure=failure,
    )
    result.fate = classify_fate(result) if failure is None else FATE_UNDECIDED
    result.provenance = {
        "config_hash": config.config_hash(),
        "code_version": __version__,
        "wall_time_s": time.perf_counter() - t_start,
    }
    if persist is None:
        persist = config.out_dir is not None
    if persist:
        if not config.out_dir:
            raise ValueError("persist requested but no out_dir configured")
        result.save(config.out_dir)
    return result


def _run_ttn(config, geo, mask, terms):
    ordering = hilbert_ordering(geo)
    state = product_state(ordering, mask, config.chi)
    all_times = np.arange(0, int(round(config.t_max / config.dt)) + 1) * config.dt
    callbacks = [(all_times, lambda s, t: local_x_profile(s))]
    failure = None
    try:
        traj = evolve(state, terms, config.tdvp(), config.t_max, callbacks=callbacks)
    except KrylovConvergenceError as err:
        failure = str(err)
        traj = err.partial
    profile_log = traj.callback_results[0]
    profiles = (np.array([profile_log[t] for t in sorted(profile_log)])
                if profile_log else np.zeros((0, geo.n_sites)))
    return (traj.times, traj.avg_x, traj.energy, traj.norm, traj.max_entropy,
            profiles, failure)


def _run_exact(config, geo, mask, terms):
    ordering = hilbert_ordering(geo) if config.width == config.height else None
    psi = product_state_dense(mask).psi
    h = sparse_hamiltonian(terms)
    n_steps = int(round(config.t_max / config.dt))
    times, avg, energy, norm, ent, profiles = [], [], [], [], [], []

    def record(t):
        st = DenseState(geo.n_sites, psi)
        profile = local_x_profile_dense(st)
        times.append(t)
        avg.append(profile.mean())
        energy.append(energy_dense(st, terms))
        norm.append(st.norm())
        if ordering is not None:
            ent.append(max(subtree_entropies_dense(st, ordering).values()))
        else:
            ent.append(np.nan)
        profiles.append(profile)

    failure = None
    record(0.0)
    for step in range(1, n_steps + 1):
        try:
            psi = krylov_expm_apply(lambda v: h @ v, psi, config.dt,
                                    tol=min(config.krylov_tol, 1e-12),
                                    max_dim=max(config.krylov_dim, 40))
        except KrylovConvergenceError as err:
            failure = str(err)
            break
        record(step * config.dt)
    return (np.array(times), np.array(avg), np.array(energy), np.array(norm),
            np.array(ent), np.array(profiles), failure)


# ---------------------------------------------------------------------------
# Scans
# ---------------------------------------------------------------------------

def _scan_run(config: QuenchConfig) -> QuenchResult:
    return run_quench(config)


def _run_many(configs, jobs: int = 1):
    if jobs <= 1:
        return [_scan_run(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_scan_run, configs))


def _write_summary(out_dir, name, doc):
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)


def critical_size_scan(base: QuenchConfig, sizes, jobs: int = 1) -> dict:
    """Square-bubble fate versus side length; reports L_c when monotone.

    L_c is the smallest Expanding size, reported only when the fates are
    Shrinking for every smaller size and Expanding from L_c on.
    """
    sizes = sorted(sizes)
    configs = [
        base.replace(shape_kind="square", shape_L=L, shape_W=None, shape_r=None,
                     out_dir=_subdir(base.out_dir, f"size_L{L}"))
        for L in sizes
    ]
    results = _run_many(configs, jobs)
    entries = [
        {"L": L, "fate": r.fate, "final_window_mean": r.final_window_mean(),
         "P_b": r.shape["P_b"], "P_s": r.shape["P_s"], "failure": r.failure}
        for L, r in zip(sizes, results)
    ]
    fates = [e["fate"] for e in entries]
    l_c = None
    if FATE_EXPANDING in fates:
        k = fates.index(FATE_EXPANDING)
        if all(f == FATE_SHRINKING for f in fates[:k]) and all(
                f == FATE_EXPANDING for f in fates[k:]):
            l_c = sizes[k]
    doc = {"scan": "critical_size", "h_par": base.h_par, "h_perp": base.h_perp,
           "entries": entries, "L_c": l_c}
    _write_summary(base.out_dir, "scan_size_summary.json", doc)
    return doc


def shape_scatter_scan(base: QuenchConfig, shapes=None, h_pars=None, jobs: int = 1) -> dict:
    """Fate of each catalog shape in the (P_s, P_b) plane, one panel per h_par.

    Points follow the convention P_s horizontal / P_b vertical with green
    markers for expanding bubbles, red for shrinking, hollow for undecided.
    """
    geo = base.geometry()
    if shapes is None:
        shapes = [rec for rec in catalog_shapes(geo) if not rec["touches_boundary"]]
    if h_pars is None:
        h_pars = [base.h_par]
    panels = []
    for h_par in h_pars:
        configs = []
        for rec in shapes:
            params = rec["params"]
            configs.append(base.replace(
                shape_kind=rec["kind"],
                shape_L=params.get("L"), shape_W=params.get("W"), shape_r=params.get("r"),
                h_par=h_par,
                out_dir=_subdir(base.out_dir, _shape_label(rec, h_par)),
            ))
        results = _run_many(configs, jobs)
        records = []
        for rec, r in zip(shapes, results):
            records.append({
                "shape_id": _shape_label(rec, None), "kind": rec["kind"],
                "params": rec["params"], "P_s": r.shape["P_s"], "P_b": r.shape["P_b"],
                "area": r.shape["area"], "fate": r.fate,
                "final_window_mean": r.final_window_mean(), "failure": r.failure,
            })
        panels.append({"h_par": h_par, "records": records})
    doc = {
        "scan": "shape_scatter",
        "axes": {"horizontal": "P_s", "vertical": "P_b"},
        "markers": {FATE_EXPANDING: "green", FATE_SHRINKING: "red",
                    FATE_UNDECIDED: "hollow"},
        "panels": panels,
    }
    _write_summary(base.out_dir, "scan_shapes_summary.json", doc)
    return doc


def patch_confinement_scan(base: QuenchConfig, h_perp_values, probes_inside,
                           probes_outside, jobs: int = 1) -> dict:
    """Probe-site magnetization for a diamond quench at several h_perp.

    The confinement metric per h_perp is the largest deviation over time of
    any outside-patch probe from the empty-mask background run at the same
    parameters; dynamics confined to the patch keeps it near zero.
    """
    if base.shape_kind != "diamond":
        raise ValueError("patch confinement scan expects a diamond shape")
    geo = base.geometry()
    mask = base.mask()
    x0, y0, x1, y1 = _patch_of(mask)
    for px, py in list(probes_inside) + list(probes_outside):
        if not geo.in_grid(px, py):
            raise ValueError(f"probe ({px}, {py}) outside the lattice")
    for px, py in probes_inside:
        if not (x0 <= px <= x1 and y0 <= py <= y1):
            raise ValueError(f"probe ({px}, {py}) is not inside the patch")
    for px, py in probes_outside:
        if x0 <= px <= x1 and y0 <= py <= y1:
            raise ValueError(f"probe ({px}, {py}) is not outside the patch")

    entries = []
    for h_perp in h_perp_values:
        cfg = base.replace(h_perp=h_perp, out_dir=_subdir(base.out_dir, f"patch_hperp{h_perp:g}"))
        bg_cfg = cfg.replace(shape_kind="empty", shape_L=None, shape_W=None, shape_r=None,
                             out_dir=_subdir(base.out_dir, f"patch_bg_hperp{h_perp:g}"))
        result, background = _run_many([cfg, bg_cfg], jobs=min(jobs, 2))
        series = {"inside": {}, "outside": {}}
        metric = 0.0
        for label, probes in (("inside", probes_inside), ("outside", probes_outside)):
            for px, py in probes:
                s = geo.site_index(px, py)
                series[label][f"{px},{py}"] = result.profiles[:, s].tolist()
                if label == "outside":
                    dev = np.max(np.abs(result.profiles[:, s] - background.profiles[:, s]))
                    metric = max(metric, float(dev))
        entries.append({
            "h_perp": h_perp,
            "times": result.times.tolist(),
            "probes": series,
            "confinement_metric": metric,
            "failure": result.failure or background.failure,
        })
    doc = {"scan": "patch_confinement", "h_par": base.h_par,
           "patch": {"x0": x0, "y0": y0, "x1": x1, "y1": y1}, "entries": entries}
    _write_summary(base.out_dir, "scan_patch_summary.json", doc)
    return doc


def _patch_of(mask: ShapeMask):
    from .shapes import bounding_patch
    return bounding_patch(mask)


def convergence_scan(base: QuenchConfig, chis, dts=None, jobs: int = 1) -> dict:
    """Pairwise local-magnetization drift between successive (chi, dt) runs.

    For each run a C4 asymmetry is also reported: the largest spread of
    local <X> over any 90-degree-rotation orbit of sites, maximized over
    the recorded times (meaningful for symmetric initial states on square
    lattices; the exact backend and converged TDVP keep it tiny).
    """
    chis = list(chis)
    if dts is None:
        dts = [base.dt]
    dts = list(dts)
    if base.backend == "ttn" and len(chis) < 2:
        raise ValueError("convergence scan needs at least two chi values")

    runs = []
    for dt in dts:
        for chi in chis:
            cfg = base.replace(chi=chi, dt=dt,
                               out_dir=_subdir(base.out_dir, f"conv_chi{chi}_dt{dt:g}"))
            runs.append(((chi, dt), cfg))
    results = dict(zip([k for k, _ in runs], _run_many([c for _, c in runs], jobs)))

    def max_profile_diff(r_a, r_b):
        # compare on the coarser run's time grid
        coarse, fine = (r_a, r_b) if len(r_a.times) <= len(r_b.times) else (r_b, r_a)
        diffs = []
        for i, t in enumerate(coarse.times):
            j = int(np.argmin(np.abs(fine.times - t)))
            if abs(fine.times[j] - t) < coarse.config.dt / 2 + 1e-12:
                diffs.append(np.max(np.abs(coarse.profiles[i] - fine.profiles[j])))
        return float(max(diffs)) if diffs else np.nan

    chi_pairs = []
    for dt in dts:
        for a, b in zip(chis, chis[1:]):
            chi_pairs.append({
                "dt": dt, "chi_low": a, "chi_high": b,
                "max_local_diff": max_profile_diff(results[(a, dt)], results[(b, dt)]),
            })
    dt_pairs = []
    top_chi = chis[-1]
    for a, b in zip(dts, dts[1:]):
        dt_pairs.append({
            "chi": top_chi, "dt_a": a, "dt_b": b,
            "max_local_diff": max_profile_diff(results[(top_chi, a)], results[(top_chi, b)]),
        })
    c4 = {
        f"chi{chi}_dt{dt:g}": c4_asymmetry(results[(chi, dt)])
        for (chi, dt) in results
    }
    doc = {"scan": "convergence", "chi_pairs": chi_pairs, "dt_pairs": dt_pairs,
           "c4_asymmetry": c4}
    _write_summary(base.out_dir, "scan_convergence_summary.json", doc)
    return doc


def c4_asymmetry(result: QuenchResult) -> float:
    """Largest spread of local <X> over any C4 site orbit, over all times."""
    w, h = result.config.width, result.config.height
    if w != h or result.profiles.size == 0:
        return float("nan")
    geo = result.config.geometry()

    def rot(x, y):
        return y, w - 1 - x

    worst = 0.0
    seen = set()
    for x in range(w):
        for y in range(h):
            if (x, y) in seen:
                continue
            orbit = []
            px, py = x, y
            for _ in range(4):
                orbit.append((px, py))
                seen.add((px, py))
                px, py = rot(px, py)
            idx = [geo.site_index(*p) for p in orbit]
            vals = result.profiles[:, idx]
            worst = max(worst, float(np.max(vals.max(axis=1) - vals.min(axis=1))))
    return worst


def background_scan(base: QuenchConfig, h_perp_values, jobs: int = 1) -> dict:
    """Background magnetization of the empty-mask quench versus h_perp.

    Forces an empty mask and zero longitudinal field; the long-time mean is
    taken over the classifier window.
    """
    configs = [
        base.replace(shape_kind="empty", shape_L=None, shape_W=None, shape_r=None,
                     h_par=0.0, h_perp=hp,
                     out_dir=_subdir(base.out_dir, f"background_hperp{hp:g}"))
        for hp in h_perp_values
    ]
    results = _run_many(configs, jobs)
    entries = [
        {"h_perp": hp, "times": r.times.tolist(), "avg_x": r.avg_x.tolist(),
         "long_time_mean": r.final_window_mean(), "failure": r.failure}
        for hp, r in zip(h_perp_values, results)
    ]
    doc = {"scan": "background", "entries": entries}
    _write_summary(base.out_dir, "scan_background_summary.json", doc)
    return doc


def _subdir(out_dir, label):
    if out_dir is None:
        return None
    return os.path.join(out_dir, label)


def _shape_label(rec, h_par):
    params = "_".join(f"{k}{v}" for k, v in sorted(rec["params"].items()))
    label = f"{rec['kind']}_{params}"
    if h_par is not None:
        label += f"_hpar{h_par:g}"
    return label
