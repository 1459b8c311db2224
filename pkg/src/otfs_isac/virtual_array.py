"""Virtual-array snapshot, overcomplete dictionary, and sparse recovery.

The receive signals on private TF bins are free of inter-antenna mixing, so
dividing out the known transmit symbol turns each private bin into an extra
set of N_r virtual array elements. Targets are then located by matching
pursuit over a dictionary discretizing the angle-Doppler-delay space around
the coarse estimates.

Because the private-bin symbols have random magnitudes, the division
amplifies receiver noise unevenly across snapshot entries. All solvers here
therefore work on the re-weighted (whitened) problem
``|X_p| * ratio = |X_p| * column + homoscedastic noise``, which is the
statistically correct least-squares formulation; the snapshot keeps the raw
ratios alongside the |X_p| row weights.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .allocation import BinAllocation
from .config import SystemConfig, substream
from .exceptions import DictionaryTooLarge, DimensionMismatch, ZeroPrivateSymbol

ZERO_SYMBOL_EPS = 1e-9
DEFAULT_COLUMN_CAP = 500_000
DEFAULT_N_SOLVERS = 64
DEFAULT_SWEEPS = 3


@dataclass(frozen=True)
class VirtualSnapshot:
    """Stacked private-bin ratios, ordered by (private bin, receive antenna)."""

    values: np.ndarray           # (N_p * N_r,) ratios Y / X_p
    bin_meta: tuple              # per private bin: (owner antenna, (n_p, m_p))
    n_rx: int
    row_weights: np.ndarray | None = None   # |X_p| per row; None means unit

    def weights(self) -> np.ndarray:
        if self.row_weights is None:
            return np.ones(len(self.values))
        return self.row_weights


@dataclass(frozen=True)
class AxisSpec:
    """One discretized search dimension: [center - lam*W, center + (1-lam)*W]."""

    center: float
    step: float
    width: float

    def __post_init__(self):
        if self.step <= 0 or self.width < self.step:
            raise ValueError("need step > 0 and width >= step")

    @property
    def n_points(self) -> int:
        return int(round(self.width / self.step)) + 1

    def points(self, offset_frac: float = 0.0) -> np.ndarray:
        start = self.center - offset_frac * self.width
        return start + self.step * np.arange(self.n_points)

    def offset_choices(self) -> np.ndarray:
        """Quantized offsets {0, step/width, 2 step/width, ..., 1}."""
        return np.arange(self.n_points) * (self.step / self.width)

    @property
    def n_superset(self) -> int:
        """Lattice size of the union of all offset windows."""
        return 2 * (self.n_points - 1) + 1

    def superset_points(self) -> np.ndarray:
        """The shared lattice [center - W, center + W] in steps of delta."""
        return self.center - self.width + self.step * np.arange(self.n_superset)

    def window_start(self, offset_frac: float) -> int:
        """Superset index of the first point of the window at this offset."""
        return int(round((1.0 - offset_frac) * (self.n_points - 1)))


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Angle/Doppler/delay search box around one coarse estimate."""

    angle: AxisSpec
    doppler: AxisSpec
    delay: AxisSpec


@dataclass(frozen=True)
class SsrDictionary:
    """Unit-norm steering dictionary over the discretized target space."""

    matrix: np.ndarray           # (N_p * N_r, n_columns), columns unit l2
    grid_points: np.ndarray      # (n_columns, 3): angle, doppler, delay
    target_ids: np.ndarray       # (n_columns,) neighborhood index
    column_norms: np.ndarray     # pre-normalization norms


def build_virtual_snapshot(rx_tf: np.ndarray, tx_tf: np.ndarray,
                           alloc: BinAllocation, eps: float = ZERO_SYMBOL_EPS) -> VirtualSnapshot:
    """Form the virtual-array snapshot from the private TF bins.

    Entry for (private bin p, receive antenna n_r) is
    Y_{n_r}[n_p, m_p] / X_{owner(p)}[n_p, m_p]. The transmitted symbol on a
    private bin must be bounded away from zero. The symbol magnitudes are
    kept as per-row weights for noise whitening in the solvers.
    """
    rx = np.asarray(rx_tf, dtype=complex)
    tx = np.asarray(tx_tf, dtype=complex)
    bins = alloc.private_bin_list()
    if not bins:
        raise DimensionMismatch("allocation has no private bins")
    n_rx = rx.shape[0]
    values = np.empty(len(bins) * n_rx, dtype=complex)
    weights = np.empty(len(bins) * n_rx)
    for i, (owner, (n_p, m_p)) in enumerate(bins):
        x = tx[owner, n_p, m_p]
        if abs(x) < eps:
            raise ZeroPrivateSymbol(
                f"antenna {owner} transmits |X|={abs(x):.2e} on private bin {(n_p, m_p)}")
        values[i * n_rx:(i + 1) * n_rx] = rx[:, n_p, m_p] / x
        weights[i * n_rx:(i + 1) * n_rx] = abs(x)
    meta = tuple((owner, bin_) for owner, bin_ in bins)
    return VirtualSnapshot(values=values, bin_meta=meta, n_rx=n_rx,
                           row_weights=weights)


def steering_columns(angles, dopplers, delays, bin_meta, n_rx: int,
                     cfg: SystemConfig) -> np.ndarray:
    """Raw (un-normalized) dictionary columns for parameter triplets.

    Row (p, n_r), column c:
    exp(j2pi(n_r g_r - owner_p g_t) sin(angle_c)/lambda)
    * exp(-j2pi doppler_c delay_c)
    * exp(j2pi(doppler_c n_p dt - m_p df delay_c)).
    """
    angles = np.asarray(angles, dtype=float)
    dopplers = np.asarray(dopplers, dtype=float)
    delays = np.asarray(delays, dtype=float)
    owners = np.repeat([owner for owner, _ in bin_meta], n_rx).astype(float)
    n_p = np.repeat([b[0] for _, b in bin_meta], n_rx).astype(float)
    m_p = np.repeat([b[1] for _, b in bin_meta], n_rx).astype(float)
    nr = np.tile(np.arange(n_rx, dtype=float), len(bin_meta))
    spatial = (nr * cfg.g_r - owners * cfg.g_t) / cfg.wavelength_m
    dt, df = cfg.symbol_duration_s, cfg.subcarrier_spacing_hz
    phase = (np.outer(spatial, np.sin(angles))
             + dt * np.outer(n_p, dopplers)
             - df * np.outer(m_p, delays))
    return np.exp(2j * np.pi * phase) * np.exp(-2j * np.pi * dopplers * delays)[None, :]


def build_dictionary(specs, snapshot_meta, n_rx: int, cfg: SystemConfig,
                     offsets=None, column_cap: int = DEFAULT_COLUMN_CAP) -> SsrDictionary:
    """Build the concatenated dictionary over all target neighborhoods.

    ``offsets`` is an optional per-spec (lam_angle, lam_doppler, lam_delay)
    tuple of window offsets; the default 0.5 centers each window on its
    neighborhood center. Columns are l2-normalized; the original norms are
    retained so sparse coefficients can be mapped back to physical
    amplitudes.
    """
    specs = list(specs)
    if offsets is None:
        offsets = [(0.5, 0.5, 0.5)] * len(specs)
    total = sum(s.angle.n_points * s.doppler.n_points * s.delay.n_points for s in specs)
    if total == 0:
        raise DimensionMismatch("empty dictionary grid")
    if total > column_cap:
        raise DictionaryTooLarge(f"{total} columns exceeds cap {column_cap}")
    blocks, points, ids = [], [], []
    for tid, (spec, off) in enumerate(zip(specs, offsets)):
        ph = spec.angle.points(off[0])
        nu = spec.doppler.points(off[1])
        ta = spec.delay.points(off[2])
        pp, nn, tt = (x.ravel() for x in np.meshgrid(ph, nu, ta, indexing="ij"))
        blocks.append(steering_columns(pp, nn, tt, snapshot_meta, n_rx, cfg))
        points.append(np.column_stack([pp, nn, tt]))
        ids.append(np.full(pp.size, tid, dtype=int))
    matrix = np.concatenate(blocks, axis=1)
    norms = np.linalg.norm(matrix, axis=0)
    return SsrDictionary(
        matrix=matrix / norms,
        grid_points=np.concatenate(points, axis=0),
        target_ids=np.concatenate(ids),
        column_norms=norms,
    )


@dataclass
class OmpResult:
    support: list
    coefficients: np.ndarray     # physical-scale (de-normalized) amplitudes
    residual_history: list
    rank_deficient: bool

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def omp(values: np.ndarray, dictionary: SsrDictionary, k_sparse: int | None = None,
        residual_tol: float | None = None, max_iter: int | None = None) -> OmpResult:
    """Orthogonal matching pursuit over the normalized dictionary.

    Stops after ``k_sparse`` selections, or when the residual norm drops
    below ``residual_tol``. Each iteration re-solves least squares on the
    selected support, so the residual norm is non-increasing.
    """
    a = dictionary.matrix
    y = np.asarray(values, dtype=complex).ravel()
    if y.size != a.shape[0]:
        raise DimensionMismatch(f"snapshot length {y.size} vs {a.shape[0]} dictionary rows")
    if k_sparse is None and residual_tol is None:
        raise ValueError("need a stopping rule: k_sparse or residual_tol")
    if k_sparse is not None and k_sparse > a.shape[0]:
        raise ValueError("k_sparse exceeds number of measurements")
    limit = k_sparse if k_sparse is not None else (max_iter or a.shape[0])
    support: list[int] = []
    coef = np.zeros(0, dtype=complex)
    residual = y.copy()
    history = [float(np.linalg.norm(residual))]
    rank_deficient = False
    for _ in range(limit):
        if residual_tol is not None and history[-1] < residual_tol:
            break
        corr = np.abs(a.conj().T @ residual)
        corr[support] = -1.0
        pick = int(np.argmax(corr))
        support.append(pick)
        sub = a[:, support]
        if np.linalg.matrix_rank(sub) < len(support):
            rank_deficient = True
            coef = np.linalg.pinv(sub) @ y
        else:
            coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
        residual = y - sub @ coef
        history.append(float(np.linalg.norm(residual)))
    return OmpResult(
        support=support,
        coefficients=coef / dictionary.column_norms[support],
        residual_history=history,
        rank_deficient=rank_deficient,
    )


class _FactoredGrid:
    """Superset dictionary of one neighborhood in factored form.

    Every column separates into a spatial factor (depends on the angle and
    the virtual element (p, n_r)) and a delay-Doppler phase factor (depends
    on (nu, tau) and the private bin p only). Correlations against a
    residual therefore cost O(N_p (N_r + n_dd) n_angle) instead of touching
    every column, which is what makes many bagged solvers affordable.
    """

    def __init__(self, spec: NeighborhoodSpec, bin_meta, n_rx: int,
                 cfg: SystemConfig, weights: np.ndarray):
        self.spec = spec
        self.n_rx = n_rx
        self.angles = spec.angle.superset_points()
        self.dopplers = spec.doppler.superset_points()
        self.delays = spec.delay.superset_points()
        owners = np.array([owner for owner, _ in bin_meta], dtype=float)
        n_p = np.array([b[0] for _, b in bin_meta], dtype=float)
        m_p = np.array([b[1] for _, b in bin_meta], dtype=float)
        n_bins = len(bin_meta)
        w = weights.reshape(n_bins, n_rx)
        lam = cfg.wavelength_m
        # spatial factor, weights folded in: (n_bins, n_rx, n_angles)
        spatial = (np.arange(n_rx)[None, :] * cfg.g_r - owners[:, None] * cfg.g_t) / lam
        self.sw = (w[:, :, None]
                   * np.exp(2j * np.pi * spatial[:, :, None] * np.sin(self.angles)))
        # delay-Doppler factor: (n_bins, n_dopplers, n_delays)
        dt, df = cfg.symbol_duration_s, cfg.subcarrier_spacing_hz
        phase = (dt * np.einsum("p,v->pv", n_p, self.dopplers)[:, :, None]
                 - df * np.einsum("p,t->pt", m_p, self.delays)[:, None, :]
                 - np.outer(self.dopplers, self.delays)[None, :, :])
        self.g = np.exp(2j * np.pi * phase)
        # all factors have unit magnitude, so every weighted column has the
        # same norm
        self.norm = float(np.sqrt(n_rx * np.sum(w[:, 0] ** 2)))
        self.n_columns = self.angles.size * self.dopplers.size * self.delays.size
        # Weak preference toward the window center. Collinear private bins
        # (n_p = m_p) make delay and Doppler observable only through the
        # combination nu*dt - tau*df, producing exactly duplicated columns
        # along that ridge; without a tie-break the estimate drifts randomly
        # along it. The penalty is far below genuine likelihood differences
        # but above noise-level differences between duplicates.
        def centered(nn):
            x = np.arange(nn, dtype=float) - (nn - 1) / 2.0
            return (x / max(nn - 1, 1)) ** 2
        d2 = (centered(self.angles.size)[:, None, None]
              + centered(self.dopplers.size)[None, :, None]
              + centered(self.delays.size)[None, None, :])
        self.center_penalty = 1.0 + 1e-3 * d2

    def _factors(self, box):
        if box is None:
            return self.sw, self.g
        return self.sw[:, :, box[0]], self.g[:, box[1], :][:, :, box[2]]

    def correlations(self, residual: np.ndarray, box=None) -> np.ndarray:
        """|column^H residual| over the (optionally windowed) lattice."""
        sw, g = self._factors(box)
        r = residual.reshape(sw.shape[0], self.n_rx)
        t = np.einsum("pni,pn->pi", sw.conj(), r)
        return np.abs(np.einsum("pvt,pi->ivt", g.conj(), t))

    def projections(self, q: np.ndarray, box=None) -> np.ndarray:
        """|Q^H column|^2 summed over the orthonormal columns of Q."""
        sw, g = self._factors(box)
        qr_ = q.reshape(sw.shape[0], self.n_rx, q.shape[1])
        qs = np.einsum("pnj,pni->jpi", qr_.conj(), sw)
        m = np.einsum("jpi,pvt->jivt", qs, g)
        return np.sum(np.abs(m) ** 2, axis=0)

    def column(self, idx: tuple) -> np.ndarray:
        ia, iv, it = idx
        return (self.sw[:, :, ia] * self.g[:, iv, it][:, None]).ravel()

    def point(self, idx: tuple) -> np.ndarray:
        ia, iv, it = idx
        return np.array([self.angles[ia], self.dopplers[iv], self.delays[it]])


def _window_box(grid: _FactoredGrid, offsets: tuple) -> tuple:
    """Superset-lattice slices of one solver's offset window."""
    spec = grid.spec
    a0 = spec.angle.window_start(offsets[0])
    v0 = spec.doppler.window_start(offsets[1])
    t0 = spec.delay.window_start(offsets[2])
    return (slice(a0, a0 + spec.angle.n_points),
            slice(v0, v0 + spec.doppler.n_points),
            slice(t0, t0 + spec.delay.n_points))


def _box_argmax(scores: np.ndarray, box: tuple) -> tuple:
    local = np.unravel_index(int(np.argmax(scores)), scores.shape)
    return tuple(i + s.start for i, s in zip(local, box))


def _solve_windows(y: np.ndarray, grids: list, boxes: list,
                   sweeps: int = DEFAULT_SWEEPS):
    """One-pick-per-neighborhood matching pursuit with replacement sweeps.

    Greedy initialization picks the best column over all neighborhoods, one
    per neighborhood; replacement sweeps then re-optimize each
    neighborhood's pick against the residual of the others (scored on the
    projected-column correlation, i.e. exact least-squares improvement)
    until no pick changes.
    """
    n_tid = len(grids)
    picks: list = [None] * n_tid
    residual = y.copy()
    for _ in range(n_tid):
        best = (-np.inf, None, None)
        for tid, (grid, box) in enumerate(zip(grids, boxes)):
            if picks[tid] is not None:
                continue
            corr = grid.correlations(residual, box) / grid.center_penalty[box]
            idx = _box_argmax(corr, box)
            if corr.max() > best[0]:
                best = (corr.max(), tid, idx)
        picks[best[1]] = best[2]
        cols = np.column_stack([grids[t].column(p)
                                for t, p in enumerate(picks) if p is not None])
        coef, *_ = np.linalg.lstsq(cols, y, rcond=None)
        residual = y - cols @ coef
    for _ in range(sweeps):
        changed = False
        for tid in range(n_tid):
            others = [grids[t].column(p) for t, p in enumerate(picks) if t != tid]
            box = boxes[tid]
            if others:
                q, _ = np.linalg.qr(np.column_stack(others))
                resid_perp = y - q @ (q.conj().T @ y)
                num = grids[tid].correlations(resid_perp, box)
                den = np.sqrt(np.maximum(
                    grids[tid].norm ** 2 - grids[tid].projections(q, box),
                    1e-30))
                scores = num / (den * grids[tid].center_penalty[box])
            else:
                scores = (grids[tid].correlations(y, box)
                          / grids[tid].center_penalty[box])
            idx = _box_argmax(scores, box)
            if idx != picks[tid]:
                picks[tid] = idx
                changed = True
        if not changed:
            break
    cols = np.column_stack([grids[t].column(p) for t, p in enumerate(picks)])
    coef, *_ = np.linalg.lstsq(cols, y, rcond=None)
    residual_norm = float(np.linalg.norm(y - cols @ coef))
    points = np.array([grids[t].point(p) for t, p in enumerate(picks)])
    return points, coef, residual_norm


@dataclass(frozen=True)
class AveragedSsrResult:
    estimates: np.ndarray        # (n_targets, 3): angle, doppler, delay
    residual: float              # residual norm of the selected solution
    vote_counts: tuple           # per target: Counter of quantized triplets
    solver_estimates: list       # per solver: (grid_points, residual)


def _quantize(point, spec: NeighborhoodSpec):
    return (
        int(round((point[0] - spec.angle.center) / spec.angle.step)),
        int(round((point[1] - spec.doppler.center) / spec.doppler.step)),
        int(round((point[2] - spec.delay.center) / spec.delay.step)),
    )


def _dequantize(key, spec: NeighborhoodSpec):
    return np.array([
        spec.angle.center + key[0] * spec.angle.step,
        spec.doppler.center + key[1] * spec.doppler.step,
        spec.delay.center + key[2] * spec.delay.step,
    ])


def averaged_ssr(snapshot: VirtualSnapshot, specs, cfg: SystemConfig,
                 n_solvers: int = DEFAULT_N_SOLVERS, seed: int = 0,
                 sweeps: int = DEFAULT_SWEEPS, aggregate: str = "min_residual",
                 column_cap: int = DEFAULT_COLUMN_CAP) -> AveragedSsrResult:
    """Bagged sparse recovery: many solvers on randomly offset windows.

    Each solver draws an independent quantized window offset per dimension
    and per neighborhood, then runs the constrained matching pursuit of
    :func:`_solve_windows` on the whitened snapshot. Window offsets are
    integer multiples of the step, so all solvers share one lattice.

    ``aggregate`` selects the final answer: "min_residual" returns the
    solution with the smallest residual norm (the bagged solvers act as
    random restarts of the grid maximum-likelihood search); "vote" returns
    the modal lattice point per target, ties broken by smallest residual.
    """
    specs = list(specs)
    if n_solvers < 1:
        raise ValueError("n_solvers must be >= 1")
    if aggregate not in ("min_residual", "vote"):
        raise ValueError(f"unknown aggregate {aggregate!r}")
    total = sum(s.angle.n_superset * s.doppler.n_superset * s.delay.n_superset
                for s in specs)
    if total > column_cap:
        raise DictionaryTooLarge(f"{total} superset columns exceeds cap {column_cap}")
    weights = snapshot.weights()
    y = snapshot.values * weights
    grids = [_FactoredGrid(spec, snapshot.bin_meta, snapshot.n_rx, cfg, weights)
             for spec in specs]
    votes = [Counter() for _ in specs]
    best_residual_by_key: list[dict] = [{} for _ in specs]
    solver_estimates = []
    best = (np.inf, None)
    for s in range(n_solvers):
        rng = substream(seed, s)
        boxes = []
        for spec, grid in zip(specs, grids):
            offs = tuple(rng.choice(ax.offset_choices())
                         for ax in (spec.angle, spec.doppler, spec.delay))
            boxes.append(_window_box(grid, offs))
        points, _, residual = _solve_windows(y, grids, boxes, sweeps=sweeps)
        solver_estimates.append((points, residual))
        if residual < best[0]:
            best = (residual, points)
        for tid, point in enumerate(points):
            key = _quantize(point, specs[tid])
            votes[tid][key] += 1
            prev = best_residual_by_key[tid].get(key)
            if prev is None or residual < prev:
                best_residual_by_key[tid][key] = residual
    if aggregate == "min_residual":
        estimates = best[1]
        residual = best[0]
    else:
        estimates = []
        for tid, spec in enumerate(specs):
            top = max(votes[tid].values())
            tied = [k for k, v in votes[tid].items() if v == top]
            key = min(tied, key=lambda k: best_residual_by_key[tid][k])
            estimates.append(_dequantize(key, spec))
        estimates = np.array(estimates)
        residual = min(r for _, r in solver_estimates)
    return AveragedSsrResult(
        estimates=np.asarray(estimates),
        residual=float(residual),
        vote_counts=tuple(votes),
        solver_estimates=solver_estimates,
    )


def default_neighborhood(estimate, cfg: SystemConfig,
                         angle_step_deg: float = 1.0, angle_width_deg: float = 10.0,
                         doppler_step_bins: float = 0.1, doppler_width_bins: float = 2.0,
                         delay_step_bins: float = 0.1, delay_width_bins: float = 2.0) -> NeighborhoodSpec:
    """Search box around a coarse estimate using bin-relative sizes."""
    dnu = cfg.doppler_spacing_hz
    dtau = cfg.delay_spacing_s
    return NeighborhoodSpec(
        angle=AxisSpec(estimate.angle_rad, np.deg2rad(angle_step_deg), np.deg2rad(angle_width_deg)),
        doppler=AxisSpec(estimate.doppler_hz, doppler_step_bins * dnu, doppler_width_bins * dnu),
        delay=AxisSpec(estimate.delay_s, delay_step_bins * dtau, delay_width_bins * dtau),
    )
