"""Config-driven experiment runner.

Every experiment is a pure function of its configuration (including the
base seed): trial t derives its random stream from ``base_seed + t``, so a
rerun with the same config yields byte-identical result files.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.neighbors import KNeighborsClassifier
from sklearn.utils import check_random_state

from . import __version__
from .datasets import (
    PairedSample,
    latlon_to_cartesian,
    make_rotating_moons,
    read_geo_csv,
    read_id_list,
    select_displacements,
    synthetic_shift_harness,
    weekly_snapshots,
)
from .estimators import ReshapeTransport, build_metric
from .evaluation import (
    baseline_attributions,
    cosine_similarity,
    coupling_attribution,
    ground_truth_attribution,
    transport_error,
)
from .exceptions import ConfigError
from .geometry import EuclideanMetric, PointCloud, cost_matrix
from .solvers import (
    SINKHORN_DEFAULT_MARGINAL_TOL,
    SINKHORN_DEFAULT_MAX_ITERS,
    solve_pipeline,
)
from . import svg as _svg

EXPERIMENTS = ("moons_transport", "moons_da", "shift_harness", "geo_flows", "metric_demo")
METHODS = ("classical_exact", "sinkhorn", "reshape", "reshape_rng")
KERNELS = ("linear", "rbf")

RESULT_COLUMNS = (
    "experiment",
    "method",
    "kernel",
    "lambda",
    "alpha",
    "epsilon",
    "n_disp",
    "shift",
    "trial",
    "seed",
    "metric_name",
    "value",
)

# Displacement-count sweep of the harness experiment; 0 means no guidance
# (the eta = 0 kernel-space metric).
HARNESS_N_DISP_SWEEP = (0, 1, 3, 5, 10, 20)

# Coupling arrows below this multiple of the uniform plan value are not drawn.
COUPLING_ARROW_REL_THRESHOLD = 1e-2

# Tunables echoed into every manifest for auditability.
PIPELINE_DEFAULTS = {
    "sinkhorn_max_iters": SINKHORN_DEFAULT_MAX_ITERS,
    "sinkhorn_marginal_tol": SINKHORN_DEFAULT_MARGINAL_TOL,
    "sinkhorn_log_domain": True,
    "marginal_feasibility_tol": 1e-7,
    "spd_jitter_start_rel": 1e-12,
    "spd_jitter_limit_rel": 1e-6,
    "whitening_factor": "cholesky_upper",
    "displacement_coupling_mass": 1.0,
    "weekly_median": "lower_middle_order_statistic",
    "calendar_week": "iso8601",
    "geo_outlier_percentile": 99.0,
    "geo_jitter_sigma": 1e-4,
    "attribution_split": "50/50 interleaved by sample index",
    "coupling_arrow_rel_threshold": COUPLING_ARROW_REL_THRESHOLD,
    "harness_n_disp_sweep": list(HARNESS_N_DISP_SWEEP),
    "rng": "numpy RandomState (MT19937), seed = base_seed + trial",
}

_JSON_KEY_TO_FIELD = {"lambda": "lam"}
_FIELD_TO_JSON_KEY = {"lam": "lambda"}


@dataclass
class ExperimentConfig:
    experiment: str
    method: str = "classical_exact"
    kernel: str = "rbf"
    lam: float = 2.0
    alpha: float = 1e4
    epsilon: float = 0.05
    n_displacements: int = 40
    rotations: tuple = (10.0, 30.0, 50.0, 70.0, 90.0)
    shifts: tuple = (3.0,)
    trials: int = 20
    base_seed: int = 0
    output_dir: str = "results"
    # moons extras
    n_per_moon: int = 150
    moons_noise: float = 0.05
    n_test: int = 1000
    attribution: bool = False
    # shift-harness extras
    harness_n: int = 150
    harness_d: int = 10
    shift_kind: str = "translation"
    harness_noise: float = 0.05
    # geo extras
    data: str | None = None
    guidance_ids: str | None = None
    reference_lat: float | None = None
    reference_lon: float | None = None
    grid_resolution: int = 60
    figures: bool = True

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.n_displacements < 0:
            raise ConfigError("n_displacements must be >= 0")
        for rot in self.rotations:
            if not 0.0 <= float(rot) <= 180.0:
                raise ConfigError(f"rotation {rot} outside [0, 180]")
        if self.n_per_moon < 1 or self.n_test < 1:
            raise ConfigError("n_per_moon and n_test must be >= 1")
        if self.moons_noise < 0 or self.harness_noise < 0:
            raise ConfigError("noise levels must be >= 0")
        if self.harness_n < 2 or self.harness_d < 1:
            raise ConfigError("harness needs n >= 2 and d >= 1")
        if self.shift_kind not in ("translation", "rotation", "affine"):
            raise ConfigError(f"unknown shift_kind {self.shift_kind!r}")
        if self.grid_resolution < 2:
            raise ConfigError("grid_resolution must be >= 2")
        if self.experiment == "shift_harness" and self.method not in ("reshape", "reshape_rng"):
            raise ConfigError("shift_harness sweeps displacement counts; method must be reshape or reshape_rng")
        if self.experiment == "geo_flows" and not self.data:
            raise ConfigError("geo_flows requires a 'data' CSV path")
        return self

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            name = _JSON_KEY_TO_FIELD.get(key, key)
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if name in ("rotations", "shifts"):
                value = tuple(float(v) for v in np.atleast_1d(value))
            kwargs[name] = value
        if "experiment" not in kwargs:
            raise ConfigError("config must set 'experiment'")
        return cls(**kwargs).validate()

    def to_json_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            key = _FIELD_TO_JSON_KEY.get(f.name, f.name)
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[key] = value
        return out


@dataclass
class ExperimentResult:
    rows: list
    artifacts: dict = field(default_factory=dict)


def _row(config, *, shift, trial, seed, metric_name, value, n_disp=None, method=None):
    method = method or config.method
    uses_metric = method in ("reshape", "reshape_rng")
    return {
        "experiment": config.experiment,
        "method": method,
        "kernel": config.kernel if uses_metric else "",
        "lambda": repr(float(config.lam)) if uses_metric and config.kernel == "rbf" else "",
        "alpha": repr(float(config.alpha)) if uses_metric else "",
        "epsilon": repr(float(config.epsilon)) if method == "sinkhorn" else "",
        "n_disp": str(config.n_displacements if n_disp is None else n_disp),
        "shift": repr(float(shift)),
        "trial": str(trial),
        "seed": str(seed),
        "metric_name": metric_name,
        "value": repr(float(value)),
    }


def _estimator_for(config) -> ReshapeTransport:
    method = config.method
    if method == "classical_exact":
        return ReshapeTransport(kernel=None, alpha=0.0, solver="exact")
    if method == "sinkhorn":
        return ReshapeTransport(kernel=None, alpha=0.0, solver="sinkhorn", epsilon=config.epsilon)
    kernel = None if config.kernel == "linear" else "rbf"
    return ReshapeTransport(kernel=kernel, lam=config.lam, alpha=config.alpha, solver="exact")


# ---------------------------------------------------------------------------
# Rotating moons
# ---------------------------------------------------------------------------


def _moons_trial_data(config, rotation, seed):
    """Instance plus displacement selection for one (rotation, trial)."""
    rng = check_random_state(seed)
    inst = make_rotating_moons(
        rotation,
        n_per_moon=config.n_per_moon,
        noise=config.moons_noise,
        n_test=config.n_test,
        random_state=rng,
    )
    if config.n_displacements == 0:
        return inst, None, inst.paired
    disp, remaining = select_displacements(
        inst.paired,
        config.n_displacements,
        random_state=rng,
        permute=(config.method == "reshape_rng"),
    )
    if remaining is None:
        raise ConfigError("n_displacements consumed every sample; nothing left to transport")
    return inst, disp, remaining


def run_moons_transport(config) -> ExperimentResult:
    """Transport-error benchmark on the rotating moons."""
    rows = []
    for rotation in config.rotations:
        for trial in range(config.trials):
            seed = config.base_seed + trial
            _, disp, remaining = _moons_trial_data(config, rotation, seed)
            est = _estimator_for(config)
            est.fit(remaining.sources, remaining.targets, displacements=disp)
            predicted = est.transform()
            err = transport_error(remaining.targets, predicted)
            rows.append(
                _row(config, shift=rotation, trial=trial, seed=seed,
                     metric_name="transport_error", value=err)
            )
    artifacts = {}
    if config.figures:
        artifacts["error_curve.svg"] = _error_curve_svg(
            rows, x_field="shift", x_label="rotation [deg]", y_label="transport error"
        )
    return ExperimentResult(rows, artifacts)


def _split_attribution_score(config, remaining: PairedSample, disp) -> float:
    """Split-and-average cosine similarity against ground-truth attributions.

    The remaining paired data is split 50/50 by interleaved sample index;
    each half is treated as an unpaired instance, the method's coupling is
    solved on it, and its squared-Euclidean attribution is compared with
    the ground-truth attribution of the full remaining data.
    """
    rstar = ground_truth_attribution(remaining.sources, remaining.targets)
    scores = []
    for offset in (0, 1):
        idx = np.arange(offset, remaining.n, 2)
        src = PointCloud(remaining.sources[idx])
        tgt = PointCloud(remaining.targets[idx])
        est = _estimator_for(config)
        est.fit(src.points, tgt.points, displacements=disp)
        attr = coupling_attribution(est.coupling_, src, tgt)
        scores.append(cosine_similarity(attr, rstar))
    return float(np.mean(scores))


def run_moons_da(config) -> ExperimentResult:
    """Domain adaptation on the rotating moons with a 1-NN classifier.

    Labeled source points are transported to the target domain through the
    barycentric map and a 1-nearest-neighbor classifier fit on the result
    is scored on the held-out test set. (A deterministic stand-in for a
    tuned SVM; orderings between methods are meaningful, absolute values
    shift with the classifier.)
    """
    rows = []
    for rotation in config.rotations:
        for trial in range(config.trials):
            seed = config.base_seed + trial
            inst, disp, remaining = _moons_trial_data(config, rotation, seed)
            est = _estimator_for(config)
            est.fit(remaining.sources, remaining.targets, displacements=disp)
            transported = est.transform()
            clf = KNeighborsClassifier(n_neighbors=1)
            clf.fit(transported, remaining.labels)
            pred = clf.predict(inst.test.points)
            err_pct = 100.0 * float(np.mean(pred != inst.test_labels))
            rows.append(
                _row(config, shift=rotation, trial=trial, seed=seed,
                     metric_name="classification_error", value=err_pct)
            )
            if config.attribution:
                cos = _split_attribution_score(config, remaining, disp)
                rows.append(
                    _row(config, shift=rotation, trial=trial, seed=seed,
                         metric_name="attribution_cosine", value=cos)
                )
                src = PointCloud(remaining.sources)
                tgt = PointCloud(remaining.targets)
                rstar = ground_truth_attribution(remaining.sources, remaining.targets)
                for name, attr in baseline_attributions(src, tgt).items():
                    rows.append(
                        _row(config, shift=rotation, trial=trial, seed=seed,
                             metric_name=f"attribution_cosine_{name}",
                             value=cosine_similarity(attr, rstar))
                    )
    artifacts = {}
    if config.figures:
        artifacts["error_curve.svg"] = _error_curve_svg(
            [r for r in rows if r["metric_name"] == "classification_error"],
            x_field="shift", x_label="rotation [deg]", y_label="classification error [%]",
        )
    return ExperimentResult(rows, artifacts)


# ---------------------------------------------------------------------------
# Synthetic shift harness
# ---------------------------------------------------------------------------


def run_shift_harness(config) -> ExperimentResult:
    """Displacement-count sweep on synthetic shifts.

    For each shift magnitude and trial, sweeps the number of guidance pairs
    over ``HARNESS_N_DISP_SWEEP``. Zero pairs means the unguided
    (eta = 0) kernel-space metric.
    """
    rows = []
    for magnitude in config.shifts:
        for trial in range(config.trials):
            seed = config.base_seed + trial
            rng = check_random_state(seed)
            inst = synthetic_shift_harness(
                config.harness_n,
                config.harness_d,
                shift_kind=config.shift_kind,
                magnitude=magnitude,
                noise=config.harness_noise,
                random_state=rng,
            )
            for n_disp in HARNESS_N_DISP_SWEEP:
                if n_disp == 0:
                    # no guidance: the eta = 0 metric in the chosen kernel space
                    disp, remaining = None, inst.paired
                else:
                    disp, remaining = select_displacements(
                        inst.paired, n_disp, random_state=rng,
                        permute=(config.method == "reshape_rng"),
                    )
                kernel = None if config.kernel == "linear" else "rbf"
                est = ReshapeTransport(
                    kernel=kernel, lam=config.lam, alpha=config.alpha, solver="exact"
                )
                est.fit(remaining.sources, remaining.targets, displacements=disp)
                err = transport_error(remaining.targets, est.transform())
                rows.append(
                    _row(config, shift=magnitude, trial=trial, seed=seed,
                         metric_name="transport_error", value=err, n_disp=n_disp)
                )
    artifacts = {}
    if config.figures:
        artifacts["error_curve.svg"] = _error_curve_svg(
            rows, x_field="n_disp", x_label="guidance pairs", y_label="transport error"
        )
    return ExperimentResult(rows, artifacts)


# ---------------------------------------------------------------------------
# Geo flows
# ---------------------------------------------------------------------------


def _coupling_csv(coupling, threshold_rel=0.0) -> str:
    n, m = coupling.plan.shape
    cutoff = threshold_rel / (n * m)
    lines = ["source_index,target_index,mass"]
    plan = coupling.plan
    for i in range(n):
        row = plan[i]
        for j in np.nonzero(row > cutoff)[0]:
            lines.append(f"{i},{j},{repr(float(row[j]))}")
    return "\n".join(lines) + "\n"


def _geo_map_svg(flows, coupling, title) -> str:
    """Equirectangular lat/lon display (projection is for display only;
    all distances are computed on Cartesian coordinates)."""
    def to_latlon(xyz):
        lat = np.degrees(np.arcsin(np.clip(xyz[:, 2], -1.0, 1.0)))
        lon = np.degrees(np.arctan2(xyz[:, 1], xyz[:, 0]))
        return np.stack([lon, lat], axis=1)

    src_ll = to_latlon(flows.sources)
    tgt_ll = to_latlon(flows.targets)
    pts = np.vstack([src_ll, tgt_ll])
    frame = _svg.Frame.around(pts)
    canvas = _svg.SvgCanvas(frame, title=title)
    n, m = coupling.plan.shape
    threshold = COUPLING_ARROW_REL_THRESHOLD / (n * m)
    for i in range(n):
        for j in np.nonzero(coupling.plan[i] > threshold)[0]:
            canvas.arrow(src_ll[i, 0], src_ll[i, 1], tgt_ll[j, 0], tgt_ll[j, 1],
                         color="#1f77b4", width=0.8, opacity=0.5)
    for x, y in src_ll:
        canvas.circle(x, y, r=2.0, color="#444444", opacity=0.8)
    for x, y in tgt_ll:
        canvas.circle(x, y, r=2.0, color="#2ca02c", opacity=0.8)
    if flows.guidance is not None:
        gsrc = to_latlon(flows.guidance.sources)
        gtgt = to_latlon(flows.guidance.targets)
        for (x0, y0), (x1, y1) in zip(gsrc, gtgt):
            canvas.arrow(x0, y0, x1, y1, color="#d62728", width=1.4)
    canvas.caption("equirectangular display projection; costs use chordal 3-d coordinates")
    return canvas.to_string()


def _cost_field_svg(metric, reference_latlon, lat_range, lon_range, resolution, title) -> str:
    """Square-root cost field from a reference point over a lat/lon grid."""
    lats = np.linspace(lat_range[0], lat_range[1], resolution + 1)
    lons = np.linspace(lon_range[0], lon_range[1], resolution + 1)
    mid_lat = (lats[:-1] + lats[1:]) / 2.0
    mid_lon = (lons[:-1] + lons[1:]) / 2.0
    grid_lon, grid_lat = np.meshgrid(mid_lon, mid_lat)
    cart = latlon_to_cartesian(grid_lat.ravel(), grid_lon.ravel())
    ref = latlon_to_cartesian(*reference_latlon).reshape(1, -1)
    ref_cloud = PointCloud(ref)
    grid_cloud = PointCloud(cart)
    costs = cost_matrix(metric, ref_cloud, grid_cloud).reshape(resolution, resolution)
    field = np.sqrt(costs)
    frame = _svg.Frame((lon_range[0], lon_range[1]), (lat_range[0], lat_range[1]))
    canvas = _svg.SvgCanvas(frame, title=title)
    _svg.heat_grid(canvas, lons, lats, field)
    canvas.circle(reference_latlon[1], reference_latlon[0], r=4.0, color="#ffffff")
    canvas.circle(reference_latlon[1], reference_latlon[0], r=2.5, color="#d62728")
    canvas.caption("square-root cost field relative to the marked reference point")
    return canvas.to_string()


def run_geo_flows(config) -> ExperimentResult:
    """Weekly migration snapshots: classical vs displacement-guided couplings."""
    records = read_geo_csv(config.data)
    ids = read_id_list(config.guidance_ids) if config.guidance_ids else []
    flows = weekly_snapshots(records, guidance_ids=ids, random_state=config.base_seed)
    source = PointCloud(flows.sources)
    target = PointCloud(flows.targets)

    classical = solve_pipeline(source, target, EuclideanMetric(), "exact")
    if config.alpha == 0 or flows.guidance is None:
        reshaped = classical
        reshaped_metric = EuclideanMetric()
    else:
        kernel = None if config.kernel == "linear" else "rbf"
        reshaped_metric = build_metric(
            kernel, config.lam, config.alpha, flows.guidance, dim=3
        )
        reshaped = solve_pipeline(source, target, reshaped_metric, "exact")

    rows = [
        _row(config, shift=0.0, trial=0, seed=config.base_seed,
             metric_name="objective", value=classical.objective, method="classical_exact",
             n_disp=0),
        _row(config, shift=0.0, trial=0, seed=config.base_seed,
             metric_name="objective", value=reshaped.objective, method="reshape",
             n_disp=0 if flows.guidance is None else flows.guidance.n_sources),
    ]
    artifacts = {
        "coupling_classical.csv": _coupling_csv(classical),
        "coupling_reshaped.csv": _coupling_csv(reshaped),
    }
    if config.figures:
        lat = np.degrees(np.arcsin(np.clip(
            np.vstack([flows.sources, flows.targets])[:, 2], -1.0, 1.0)))
        lon = np.degrees(np.arctan2(
            np.vstack([flows.sources, flows.targets])[:, 1],
            np.vstack([flows.sources, flows.targets])[:, 0]))
        lat_range = (float(lat.min()) - 1.0, float(lat.max()) + 1.0)
        lon_range = (float(lon.min()) - 1.0, float(lon.max()) + 1.0)
        ref = (
            config.reference_lat if config.reference_lat is not None else float(np.median(lat)),
            config.reference_lon if config.reference_lon is not None else float(np.median(lon)),
        )
        artifacts["map_classical.svg"] = _geo_map_svg(flows, classical, "classical coupling")
        artifacts["map_reshaped.svg"] = _geo_map_svg(flows, reshaped, "displacement-guided coupling")
        artifacts["costfield_classical.svg"] = _cost_field_svg(
            EuclideanMetric(), ref, lat_range, lon_range, config.grid_resolution,
            "euclidean cost field",
        )
        artifacts["costfield_reshaped.svg"] = _cost_field_svg(
            reshaped_metric, ref, lat_range, lon_range, config.grid_resolution,
            "reshaped cost field",
        )
    return ExperimentResult(rows, artifacts)


# ---------------------------------------------------------------------------
# Metric demo
# ---------------------------------------------------------------------------


def run_metric_demo(config) -> ExperimentResult:
    """Small visual demo: couplings and cost fields on one moons instance."""
    rotation = config.rotations[0]
    seed = config.base_seed
    inst, disp, remaining = _moons_trial_data(config, rotation, seed)
    source = PointCloud(remaining.sources)
    target = PointCloud(remaining.targets)

    classical = solve_pipeline(source, target, EuclideanMetric(), "exact")
    kernel = None if config.kernel == "linear" else "rbf"
    metric = build_metric(kernel, config.lam, config.alpha, disp, dim=2)
    guided = solve_pipeline(source, target, metric, "exact")

    rows = [
        _row(config, shift=rotation, trial=0, seed=seed, method="classical_exact",
             metric_name="objective", value=classical.objective),
        _row(config, shift=rotation, trial=0, seed=seed, method="reshape",
             metric_name="objective", value=guided.objective),
    ]
    artifacts = {}
    if config.figures:
        artifacts["coupling_classical.svg"] = _plane_coupling_svg(
            remaining, classical, disp, "classical coupling")
        artifacts["coupling_reshaped.svg"] = _plane_coupling_svg(
            remaining, guided, disp, "displacement-guided coupling")
        ref = remaining.sources[0]
        pts = np.vstack([remaining.sources, remaining.targets])
        lo, hi = pts.min(axis=0) - 0.3, pts.max(axis=0) + 0.3
        artifacts["costfield_classical.svg"] = _plane_cost_field_svg(
            EuclideanMetric(), ref, lo, hi, config.grid_resolution, "euclidean cost field")
        artifacts["costfield_reshaped.svg"] = _plane_cost_field_svg(
            metric, ref, lo, hi, config.grid_resolution, "reshaped cost field")
    return ExperimentResult(rows, artifacts)


def _plane_coupling_svg(remaining, coupling, disp, title) -> str:
    pts = np.vstack([remaining.sources, remaining.targets])
    frame = _svg.Frame.around(pts)
    canvas = _svg.SvgCanvas(frame, title=title)
    n, m = coupling.plan.shape
    threshold = COUPLING_ARROW_REL_THRESHOLD / (n * m)
    for i in range(n):
        for j in np.nonzero(coupling.plan[i] > threshold)[0]:
            canvas.line(remaining.sources[i, 0], remaining.sources[i, 1],
                        remaining.targets[j, 0], remaining.targets[j, 1],
                        color="#1f77b4", width=0.6, opacity=0.45)
    for x, y in remaining.sources:
        canvas.circle(x, y, r=2.0, color="#444444", opacity=0.85)
    for x, y in remaining.targets:
        canvas.circle(x, y, r=2.0, color="#2ca02c", opacity=0.85)
    if disp is not None:
        for (x0, y0), (x1, y1) in zip(disp.sources, disp.targets):
            canvas.arrow(x0, y0, x1, y1, color="#d62728", width=1.3)
    return canvas.to_string()


def _plane_cost_field_svg(metric, ref, lo, hi, resolution, title) -> str:
    xs = np.linspace(lo[0], hi[0], resolution + 1)
    ys = np.linspace(lo[1], hi[1], resolution + 1)
    mx = (xs[:-1] + xs[1:]) / 2.0
    my = (ys[:-1] + ys[1:]) / 2.0
    gx, gy = np.meshgrid(mx, my)
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    costs = cost_matrix(metric, PointCloud(ref.reshape(1, -1)), PointCloud(grid))
    field = np.sqrt(costs).reshape(resolution, resolution)
    frame = _svg.Frame((lo[0], hi[0]), (lo[1], hi[1]))
    canvas = _svg.SvgCanvas(frame, title=title)
    _svg.heat_grid(canvas, xs, ys, field)
    canvas.circle(ref[0], ref[1], r=4.0, color="#ffffff")
    canvas.circle(ref[0], ref[1], r=2.5, color="#d62728")
    canvas.caption("square-root cost field relative to the marked reference point")
    return canvas.to_string()


# ---------------------------------------------------------------------------
# Aggregation, figures, output emission
# ---------------------------------------------------------------------------


_GROUP_FIELDS = ("experiment", "method", "kernel", "lambda", "alpha", "epsilon",
                 "n_disp", "shift", "metric_name")


def summarize(rows) -> list:
    """Mean and sample standard deviation per experiment cell."""
    groups: dict = {}
    order: list = []
    for row in rows:
        key = tuple(row[f] for f in _GROUP_FIELDS)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(float(row["value"]))
    out = []
    for key in order:
        values = np.asarray(groups[key])
        mean = float(values.mean())
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        entry = dict(zip(_GROUP_FIELDS, key))
        entry["n_trials"] = str(values.size)
        entry["mean"] = repr(mean)
        entry["std"] = repr(std)
        out.append(entry)
    return out


def _error_curve_svg(rows, x_field, x_label, y_label) -> str:
    cells = summarize(rows)
    xs = [float(c[x_field]) for c in cells]
    means = [float(c["mean"]) for c in cells]
    stds = [float(c["std"]) for c in cells]
    if not xs:
        frame = _svg.Frame((0, 1), (0, 1))
        canvas = _svg.SvgCanvas(frame, title="no results")
        return canvas.to_string()
    ymax = max(m + s for m, s in zip(means, stds))
    frame = _svg.Frame((min(xs), max(xs)), (0.0, ymax * 1.1 if ymax > 0 else 1.0))
    canvas = _svg.SvgCanvas(frame, title=f"{y_label} vs {x_label}")
    ordered = sorted(zip(xs, means, stds))
    for (x0, m0, _), (x1, m1, _) in zip(ordered, ordered[1:]):
        canvas.line(x0, m0, x1, m1, color="#1f77b4", width=1.5)
    for x, m, s in ordered:
        canvas.line(x, m - s, x, m + s, color="#1f77b4", width=1.0, opacity=0.6)
        canvas.circle(x, m, r=3.0, color="#1f77b4")
        canvas.text(x, m, f" {m:.3g}", size=9)
    canvas.caption(f"x: {x_label}; whiskers: +/- sample std over trials")
    return canvas.to_string()


def _csv_line(values) -> str:
    out = []
    for v in values:
        text = str(v)
        if "," in text or '"' in text or "\n" in text:
            text = '"' + text.replace('"', '""') + '"'
        out.append(text)
    return ",".join(out)


def emit_outputs(result: ExperimentResult, config: ExperimentConfig, out_dir) -> dict:
    """Write results.csv, summary.csv, manifest.json and any figures.

    Returns a name -> path mapping of everything written. Output is a pure
    function of (rows, config), so reruns are byte-identical.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    results_path = os.path.join(out_dir, "results.csv")
    with open(results_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_csv_line(RESULT_COLUMNS) + "\n")
        for row in result.rows:
            fh.write(_csv_line([row[c] for c in RESULT_COLUMNS]) + "\n")
    paths["results.csv"] = results_path

    summary_path = os.path.join(out_dir, "summary.csv")
    summary_columns = _GROUP_FIELDS + ("n_trials", "mean", "std")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_csv_line(summary_columns) + "\n")
        for cell in summarize(result.rows):
            fh.write(_csv_line([cell[c] for c in summary_columns]) + "\n")
    paths["summary.csv"] = summary_path

    manifest = {
        "version": __version__,
        "config": config.to_json_dict(),
        "trial_seeds": [config.base_seed + t for t in range(config.trials)],
        "defaults": PIPELINE_DEFAULTS,
        "result_columns": list(RESULT_COLUMNS),
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["manifest.json"] = manifest_path

    for name, content in result.artifacts.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        paths[name] = path
    return paths


_RUNNERS = {
    "moons_transport": run_moons_transport,
    "moons_da": run_moons_da,
    "shift_harness": run_shift_harness,
    "geo_flows": run_geo_flows,
    "metric_demo": run_metric_demo,
}


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Run the configured experiment and write its outputs."""
    config.validate()
    result = _RUNNERS[config.experiment](config)
    return emit_outputs(result, config, out_dir or config.output_dir)
