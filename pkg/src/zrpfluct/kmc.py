"""Exact continuous-time simulation of the zero-range generator on the torus.

Time is macroscopic: a configuration with rates ``g(eta(x))`` leaves at total
rate ``n * sum_x g(eta(x))``.  The source site is drawn from a Fenwick tree
over the weights ``g(eta(x))`` and the displacement from an alias table.

The inner loop optionally maintains, per site and per snapshot interval
``[t_k, t_{k+1}]``, the exact integrals

    A0 = int phi ds,    A1 = int phi (s - t_k) / (t_{k+1} - t_k) ds

for ``phi`` in ``{eta(x), g(eta(x))}``.  Together they integrate any weight
that is linear in time over the interval exactly, which is what the field
estimators consume.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import AbsorbingStateError, ParameterError, PartialTrajectoryWarning
from .model_core import JumpKernel, RateFunction

_REBUILD_EVERY = 1 << 16

# ---------------------------------------------------------------------------
# numba core


@nb.njit(cache=True)
def _fenwick_build(w, tree):
    m = w.size
    tree[:] = 0.0
    for i in range(1, m + 1):
        tree[i] += w[i - 1]
        j = i + (i & (-i))
        if j <= m:
            tree[j] += tree[i]


@nb.njit(cache=True, inline="always")
def _fenwick_add(tree, i, delta):
    m = tree.size - 1
    j = i + 1
    while j <= m:
        tree[j] += delta
        j += j & (-j)


@nb.njit(cache=True, inline="always")
def _fenwick_find(tree, u):
    """Smallest index whose prefix sum exceeds ``u``."""
    m = tree.size - 1
    pos = 0
    mask = 1
    while mask * 2 <= m:
        mask *= 2
    while mask > 0:
        nxt = pos + mask
        if nxt <= m and tree[nxt] <= u:
            pos = nxt
            u -= tree[nxt]
        mask >>= 1
    if pos >= m:
        pos = m - 1
    return pos


@nb.njit(cache=True)
def _rebuild(occ, gtab, tree, state):
    L = occ.size
    w = np.empty(L)
    tot = 0.0
    for x in range(L):
        w[x] = gtab[occ[x]]
        tot += w[x]
    _fenwick_build(w, tree)
    state[0] = tot


@nb.njit(cache=True)
def _touch(x, s, occ, gtab, last_t, tk, inv_dt, do_int, A0e, A1e, A0g, A1g, do_hist, hist):
    e = occ[x]
    d = s - last_t[x]
    if d > 0.0:
        if do_int:
            a = last_t[x] - tk
            b = s - tk
            q = (b * b - a * a) * 0.5 * inv_dt
            gv = gtab[e]
            A0e[x] += e * d
            A1e[x] += e * q
            A0g[x] += gv * d
            A1g[x] += gv * q
        if do_hist:
            k = e
            if k >= hist.shape[1]:
                k = hist.shape[1] - 1
            hist[x, k] += d
    last_t[x] = s


@nb.njit(cache=True)
def _flush(s, occ, gtab, last_t, tk, inv_dt, do_int, A0e, A1e, A0g, A1g, do_hist, hist):
    for x in range(occ.size):
        _touch(x, s, occ, gtab, last_t, tk, inv_dt, do_int, A0e, A1e, A0g, A1g, do_hist, hist)


@nb.njit(cache=True)
def _advance(
    occ, gtab, tree, state, accept, alias, n, t_end, rng, max_events,
    last_t, tk, inv_dt, do_int, A0e, A1e, A0g, A1g, do_hist, hist,
    do_log, log_t, log_src, log_disp, log_count, counter,
):
    """Run events until time ``t_end`` or the event budget is spent.

    ``state = [total_weight, time]``.  Returns ``(events, status)`` with
    status 0 when ``t_end`` was reached, 1 when the budget ran out and 2 when
    the configuration is absorbing.
    """
    L = occ.size
    m = accept.size
    half = L // 2
    events = 0
    touch = do_int or do_hist
    hbins = hist.shape[1]
    while True:
        total = state[0]
        if total <= 1e-300:
            return events, 2
        if events >= max_events:
            return events, 1
        t_new = state[1] + rng.exponential() / (n * total)
        if t_new > t_end:
            # memorylessness: the overshooting event is discarded
            state[1] = t_end
            return events, 0
        t = t_new
        state[1] = t
        while True:
            x = _fenwick_find(tree, rng.random() * total)
            if gtab[occ[x]] > 0.0:
                break
            _rebuild(occ, gtab, tree, state)
            total = state[0]
        v = rng.random() * m
        i = int(v)
        if i >= m:
            i = m - 1
        if v - i < accept[i]:
            r = i + 1
        else:
            r = alias[i]
        z = x + r
        if z >= L:
            z -= L
        if touch:
            # written out rather than calling _touch: array arguments to a
            # nested call cost a refcount round trip each
            for w in (x, z):
                e = occ[w]
                d = t - last_t[w]
                if do_int:
                    a = last_t[w] - tk
                    b = t - tk
                    q = (b * b - a * a) * 0.5 * inv_dt
                    gv = gtab[e]
                    A0e[w] += e * d
                    A1e[w] += e * q
                    A0g[w] += gv * d
                    A1g[w] += gv * q
                if do_hist:
                    if e >= hbins:
                        e = hbins - 1
                    hist[w, e] += d
                last_t[w] = t
        g_old = gtab[occ[x]]
        occ[x] -= 1
        dgx = gtab[occ[x]] - g_old
        _fenwick_add(tree, x, dgx)
        g_old = gtab[occ[z]]
        occ[z] += 1
        dgz = gtab[occ[z]] - g_old
        _fenwick_add(tree, z, dgz)
        state[0] = total + dgx + dgz
        if do_log:
            c = log_count[0]
            if c < log_t.size:
                log_t[c] = t
                log_src[c] = x
                log_disp[c] = r if r <= half else r - L
                log_count[0] = c + 1
        events += 1
        counter[0] += 1
        if counter[0] % 65536 == 0:
            _rebuild(occ, gtab, tree, state)


# ---------------------------------------------------------------------------
# python layer


class Configuration:
    """Occupancy vector with a Fenwick tree over the weights ``g(eta(x))``."""

    def __init__(self, occupancy, rate: RateFunction):
        occ = np.ascontiguousarray(np.asarray(occupancy), dtype=np.int64)
        if occ.ndim != 1 or occ.size < 1 or (occ < 0).any():
            raise ParameterError("occupancy must be a non-empty vector of non-negative integers")
        self.occ = occ.copy()
        self.rate = rate
        self.total_particles = int(occ.sum())
        self.gtab = np.ascontiguousarray(rate.table(self.total_particles + 1))
        self.tree = np.zeros(occ.size + 1)
        self._state = np.zeros(2)
        _rebuild(self.occ, self.gtab, self.tree, self._state)
        self._counter = np.zeros(1, dtype=np.int64)

    @property
    def L(self) -> int:
        return self.occ.size

    @property
    def total_weight(self) -> float:
        return float(self._state[0])

    def total_rate(self, n: int) -> float:
        return n * self.total_weight

    def audit(self, tol: float = 1e-9) -> bool:
        """Compare tree prefix sums with a fresh evaluation of the weights."""
        w = self.gtab[self.occ]
        prefix = np.cumsum(w)
        got = np.array([_prefix(self.tree, i) for i in range(self.L)])
        scale = max(1.0, float(prefix[-1]))
        ok = np.allclose(got, prefix, atol=tol * scale, rtol=0) and abs(self._state[0] - prefix[-1]) <= tol * scale
        return bool(ok and self.occ.sum() == self.total_particles)

    def copy(self) -> "Configuration":
        return Configuration(self.occ, self.rate)


def _prefix(tree, i):
    s = 0.0
    j = i + 1
    while j > 0:
        s += tree[j]
        j -= j & (-j)
    return s


@dataclass
class _Accumulators:
    L: int
    hist_bins: int = 0
    last_t: np.ndarray = field(init=False)
    A0e: np.ndarray = field(init=False)
    A1e: np.ndarray = field(init=False)
    A0g: np.ndarray = field(init=False)
    A1g: np.ndarray = field(init=False)
    hist: np.ndarray = field(init=False)

    def __post_init__(self):
        self.last_t = np.zeros(self.L)
        self.A0e, self.A1e, self.A0g, self.A1g = (np.zeros(self.L) for _ in range(4))
        self.hist = np.zeros((self.L if self.hist_bins else 1, max(self.hist_bins, 1)))

    def reset_integrals(self):
        for a in (self.A0e, self.A1e, self.A0g, self.A1g):
            a[:] = 0.0


@dataclass(frozen=True)
class Interval:
    """Exact per-site time integrals over one snapshot interval.

    Arrays are views into live buffers; observers that keep them must copy.
    """

    t0: float
    t1: float
    A0_eta: np.ndarray
    A1_eta: np.ndarray
    A0_g: np.ndarray
    A1_g: np.ndarray


@dataclass
class Trajectory:
    seed: int | None
    times: np.ndarray
    snapshots: list = field(default_factory=list)
    event_times: np.ndarray | None = None
    event_sources: np.ndarray | None = None
    event_displacements: np.ndarray | None = None
    n_events: int = 0
    truncated: bool = False
    histogram: np.ndarray | None = None  # time-weighted per-site occupancy histogram
    initial: np.ndarray | None = None
    final: np.ndarray | None = None
    horizon: float = 0.0

    @property
    def event_log(self):
        return self.event_times, self.event_sources, self.event_displacements


def _check_kernel(config: Configuration, kernel: JumpKernel):
    if kernel.L != config.L:
        raise ParameterError(f"kernel torus size {kernel.L} differs from configuration size {config.L}")


def step(config: Configuration, kernel: JumpKernel, rng: np.random.Generator):
    """One event.  Returns ``(waiting_time, source, displacement)``."""
    _check_kernel(config, kernel)
    t0 = float(config._state[1])
    acc = _Accumulators(config.L)
    lt, ls, ld = np.zeros(1), np.zeros(1, np.int64), np.zeros(1, np.int64)
    cnt = np.zeros(1, np.int64)
    events, status = _advance(
        config.occ, config.gtab, config.tree, config._state, kernel.accept, kernel.alias,
        float(kernel.n), math.inf, rng, 1,
        acc.last_t, 0.0, 1.0, False, acc.A0e, acc.A1e, acc.A0g, acc.A1g, False, acc.hist,
        True, lt, ls, ld, cnt, config._counter,
    )
    if status == 2:
        raise AbsorbingStateError("total jump rate is zero")
    config._state[1] = 0.0
    return float(lt[0] - t0), int(ls[0]), int(ld[0])


def run(
    config: Configuration,
    kernel: JumpKernel,
    horizon: float,
    snapshots=None,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
    observers=(),
    store_snapshots: bool = True,
    integrals: bool = False,
    histogram_bins: int = 0,
    log_events: int = 0,
    max_events: int | None = None,
) -> Trajectory:
    """Simulate on ``[0, horizon]`` (macroscopic time) and record snapshots.

    ``snapshots`` is an increasing sequence of times in ``[0, horizon]``
    (default ``[0, horizon]``).  Each observer is called as
    ``obs(k, t_k, occupancy, interval)`` where ``interval`` holds the exact
    integrals over ``[t_{k-1}, t_k]`` (``None`` for ``k = 0`` or when
    ``integrals`` is off).  ``config`` is advanced in place.
    """
    _check_kernel(config, kernel)
    if horizon < 0:
        raise ParameterError("horizon must be non-negative")
    if rng is None:
        rng = np.random.default_rng(seed)
    times = np.asarray([0.0, horizon] if snapshots is None else snapshots, dtype=float)
    if times.ndim != 1 or times.size == 0 or (np.diff(times) < 0).any() or times[0] < 0 or times[-1] > horizon:
        raise ParameterError("snapshot times must be sorted and lie in [0, horizon]")
    budget = np.iinfo(np.int64).max if max_events is None else int(max_events)

    acc = _Accumulators(config.L, histogram_bins)
    cap = int(log_events)
    lt = np.zeros(cap)
    ls = np.zeros(cap, np.int64)
    ld = np.zeros(cap, np.int64)
    lcount = np.zeros(1, np.int64)
    traj = Trajectory(seed, times, initial=config.occ.copy(), horizon=float(horizon))
    config._state[1] = 0.0
    t_prev = 0.0
    total_events = 0
    do_hist = histogram_bins > 0

    for k, tk in enumerate(times):
        inv_dt = 1.0 / (tk - t_prev) if tk > t_prev else 0.0
        if tk > t_prev or k == 0:
            events, status = _advance(
                config.occ, config.gtab, config.tree, config._state, kernel.accept, kernel.alias,
                float(kernel.n), float(tk), rng, budget - total_events,
                acc.last_t, t_prev, inv_dt, integrals, acc.A0e, acc.A1e, acc.A0g, acc.A1g, do_hist, acc.hist,
                cap > 0, lt, ls, ld, lcount, config._counter,
            )
            total_events += events
            if status == 2:
                if config.total_particles == 0:
                    config._state[1] = tk
                else:
                    raise AbsorbingStateError("total jump rate is zero")
            if status == 1:
                traj.truncated = True
                warnings.warn(
                    f"event budget {budget} exhausted at t={config._state[1]:.6g}; trajectory is partial",
                    PartialTrajectoryWarning,
                    stacklevel=2,
                )
                _flush(config._state[1], config.occ, config.gtab, acc.last_t, t_prev, inv_dt, integrals,
                       acc.A0e, acc.A1e, acc.A0g, acc.A1g, do_hist, acc.hist)
                break
        _flush(float(tk), config.occ, config.gtab, acc.last_t, t_prev, inv_dt, integrals,
               acc.A0e, acc.A1e, acc.A0g, acc.A1g, do_hist, acc.hist)
        interval = None
        if integrals and k > 0:
            interval = Interval(t_prev, float(tk), acc.A0e, acc.A1e, acc.A0g, acc.A1g)
        if store_snapshots:
            traj.snapshots.append(config.occ.copy())
        for obs in observers:
            obs(k, float(tk), config.occ, interval)
        if integrals:
            acc.reset_integrals()
        t_prev = float(tk)

    traj.n_events = total_events
    if cap:
        c = int(lcount[0])
        traj.event_times, traj.event_sources, traj.event_displacements = lt[:c], ls[:c], ld[:c]
    if do_hist:
        traj.histogram = acc.hist
    traj.final = config.occ.copy()
    return traj


# ---------------------------------------------------------------------------
# binary snapshot stream

_MAGIC = b"ZRPSNAP1"


class SnapshotWriter:
    """Observer that streams ``(time, occupancy)`` records to a binary file.

    Layout: magic, little-endian uint32 header length, UTF-8 JSON header, then
    per record a float64 time followed by ``L`` little-endian uint32 counts.
    """

    def __init__(self, path, header: dict, L: int):
        self.L = L
        self._fh = open(path, "wb")
        blob = json.dumps({**header, "L": L}, sort_keys=True).encode()
        self._fh.write(_MAGIC + struct.pack("<I", len(blob)) + blob)

    def __call__(self, k, t, occ, interval=None):
        self._fh.write(struct.pack("<d", t))
        self._fh.write(np.asarray(occ, dtype="<u4").tobytes())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_snapshots(path):
    """Return ``(header, times, occupancies)`` from a stream written above."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a snapshot stream")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        L = int(header["L"])
        rec = np.dtype([("t", "<f8"), ("occ", "<u4", (L,))])
        data = np.frombuffer(fh.read(), dtype=rec)
    return header, data["t"].copy(), data["occ"].astype(np.int64)
