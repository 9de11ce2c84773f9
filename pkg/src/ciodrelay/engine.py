"""Monte Carlo simulation of the relaying protocols and SEP estimation.

A trial ("round") is one complete protocol execution: two MA slots plus the
broadcast phase for the relaying schemes, or two symbol slots for the
point-to-point references.  SEP is symbol errors divided by the number of
data symbols exchanged per round (4 for two-way relaying, 2 point-to-point).

Reproducibility: every batch of rounds draws from an independent generator
seeded with (master seed, SNR point index, batch index), and the stop rule
consumes batch results strictly in batch-index order, so estimates do not
depend on the worker count.  Bit-identical results are only guaranteed within
one backend; the compiled and numpy kernels may differ on exact metric ties.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._backend import BACKEND_NAME, get_kernels
from .channel import ChannelRealization, NoiseModel, cn_samples, rician_samples, transmit
from .constellation import Constellation, from_name
from .decode import (
    endnode_decode_ciod,
    relay_ml_scheme2_conditional,
    relay_ml_siso,
)
from .netcode import (
    MapCatalog,
    build_catalog,
    cached_catalog,
    cmath_isinf,
    select_map,
    xor_map,
)
from .stbc import ciod_encode, interleaved_pair_coords, scheme2_codeword

SCHEMES = (
    "scheme1_anc",
    "scheme1_fnc",
    "scheme2_anc",
    "scheme2_fnc",
    "siso_anc",
    "siso_fnc",
    "p2p_ciod_2x1",
    "p2p_siso",
)

SYMBOLS_PER_TRIAL = {s: 4 for s in SCHEMES}
SYMBOLS_PER_TRIAL["p2p_ciod_2x1"] = 2
SYMBOLS_PER_TRIAL["p2p_siso"] = 2

BATCH_ROUNDS = 16384
_FADINGS = ("rayleigh", "rician")


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of one simulation run (everything the estimate
    depends on apart from the worker count)."""

    scheme: str
    snr_db: Tuple[float, ...]
    constellation: str = "4qam-rotated"
    fading: str = "rayleigh"
    rician_k: float = 0.0
    min_errors: int = 200
    max_rounds: int = 10_000_000
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise EngineError(f"unknown scheme {self.scheme!r}")
        if self.fading not in _FADINGS:
            raise EngineError(f"unknown fading model {self.fading!r}")
        grid = tuple(float(v) for v in self.snr_db)
        if not grid:
            raise EngineError("empty SNR grid")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise EngineError("SNR grid must be strictly increasing")
        object.__setattr__(self, "snr_db", grid)
        if self.min_errors < 1 or self.max_rounds < 1:
            raise EngineError("min_errors and max_rounds must be positive")
        if self.rician_k < 0:
            raise EngineError("Rician K factor must be non-negative")


@dataclass
class SepPoint:
    snr_db: float
    sep: float
    errors: int
    trials: int
    ci95: float
    low_confidence: bool = False
    counters: Dict[str, int] = field(default_factory=dict)


@dataclass
class SepCurve:
    scheme: str
    points: List[SepPoint]
    symbols_per_trial: int
    metadata: Dict[str, object] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# simulation context: everything a worker batch needs, as plain arrays


def _get_catalog(c: Constellation, scheme: str, cache_dir) -> MapCatalog:
    if cache_dir is None:
        return build_catalog(c, scheme)
    return cached_catalog(c, scheme, cache_dir)


def _build_context(spec: ExperimentSpec, cache_dir=None) -> dict:
    c = from_name(spec.constellation)
    pts = c.point_array()
    m = c.size
    ctx = {
        "scheme": spec.scheme,
        "seed": spec.seed,
        "es": 1.0,
        "m": m,
        "pts": pts,
        "k": spec.rician_k if spec.fading == "rician" else 0.0,
        "spt": SYMBOLS_PER_TRIAL[spec.scheme],
    }
    if spec.scheme.startswith("p2p"):
        return ctx
    adaptive = spec.scheme.endswith("anc")
    ctx["adaptive"] = adaptive

    if spec.scheme.startswith(("siso", "scheme1")):
        if adaptive:
            cat = _get_catalog(c, "siso", cache_dir)
            u, v = [], []
            for target, _ in cat.entries:
                r = target.ratio
                if cmath_isinf(r):
                    u.append(0.0)
                    v.append(1.0)
                else:
                    s = 1.0 / math.sqrt(1.0 + abs(r) ** 2)
                    u.append(s)
                    v.append(r * s)
            ctx["st_u"] = np.asarray(u, dtype=np.complex128)
            ctx["st_v"] = np.asarray(v, dtype=np.complex128)
            tabs = np.stack([mm.table for _, mm in cat.entries]).astype(np.int64)
            kmax = max(mm.output_set.size for _, mm in cat.entries)
            outp = np.zeros((len(cat.entries), kmax), dtype=np.complex128)
            for i, (_, mm) in enumerate(cat.entries):
                outp[i, : mm.output_set.size] = mm.output_set.point_array()
        else:
            tabs = xor_map(c).table[None, :, :].astype(np.int64)
            outp = pts[None, :]
        ctx["tabs"] = tabs
        ctx["out_pts"] = outp
        return ctx

    # stacked scheme: relay kernel inputs plus the arity-4 map bank
    tilde1, tilde2 = interleaved_pair_coords(pts)
    s = pts * np.exp(-1j * c.rotation)
    s_i, s_q = s.real.copy(), s.imag.copy()
    ctx.update(
        tilde1=tilde1,
        tilde2=tilde2,
        s_i=s_i,
        s_q=s_q,
        rotation=c.rotation,
        square=1 if c.kind == "square_qam" else 0,
    )
    pam = np.unique(np.round(s_i, 12))
    ctx["pam"] = pam
    ctx["mids"] = (pam[:-1] + pam[1:]) / 2.0
    if adaptive:
        cat = _get_catalog(c, "scheme2", cache_dir)
        ctx["v1"] = np.stack([t.basis[0] for t, _ in cat.entries])
        ctx["v2"] = np.stack([t.basis[1] for t, _ in cat.entries])
        ctx["tab4"] = np.stack([mm.table for _, mm in cat.entries]).astype(np.int64)
        ctx["out4"] = cat.entries[0][1].output_set.point_array()
    else:
        x = xor_map(c).table
        # per-slot XOR as one arity-4 table: color = K * c1 + c2
        tab4 = (
            x[:, None, :, None] * m + x[None, :, None, :]
        ).reshape(m * m, m * m)
        ctx["tab4"] = tab4[None, :, :].astype(np.int64)
        ctx["out4"] = pts
    return ctx


# ---------------------------------------------------------------------------
# vectorized per-batch protocol executions


def _ciod_metrics_rows(y1, y2, h1, h2, es: float, cand):
    """Single-symbol CIOD metrics for per-row candidate arrays (n, K)."""
    sq = math.sqrt(es)
    c1 = np.conj(y1) * h1
    c2 = np.conj(y2) * h2
    e1 = es * np.abs(h1) ** 2
    e2 = es * np.abs(h2) ** 2
    p_i, p_q = cand.real, cand.imag
    m1 = (
        e1[:, None] * p_i ** 2
        - 2 * sq * c1.real[:, None] * p_i
        + e2[:, None] * p_q ** 2
        + 2 * sq * c2.imag[:, None] * p_q
    )
    m2 = (
        e2[:, None] * p_i ** 2
        - 2 * sq * c2.real[:, None] * p_i
        + e1[:, None] * p_q ** 2
        + 2 * sq * c1.imag[:, None] * p_q
    )
    return m1, m2


def _select_states_siso(ctx, h_ar, h_br):
    met = (
        np.abs(
            ctx["st_v"][None, :] * h_ar[:, None] - ctx["st_u"][None, :] * h_br[:, None]
        )
        ** 2
    )
    return np.argmin(met, axis=1)


def _select_states_scheme2(ctx, h):
    n = len(h)
    st = np.empty(n, dtype=np.int64)
    v1c = ctx["v1"].conj()
    v2c = ctx["v2"].conj()
    for lo in range(0, n, 2048):
        hi = min(lo + 2048, n)
        score = (
            np.abs(h[lo:hi] @ v1c.T) ** 2 + np.abs(h[lo:hi] @ v2c.T) ** 2
        )
        st[lo:hi] = np.argmax(score, axis=1)
    return st


def _batch_p2p_siso(ctx, rng, n: int, sigma2: float) -> dict:
    es, pts = ctx["es"], ctx["pts"]
    sq = math.sqrt(es)
    h = rician_samples(rng, (n,), ctx["k"])
    idx = rng.integers(0, ctx["m"], size=(n, 2))
    z = cn_samples(rng, (n, 2), sigma2)
    errors = 0
    for slot in range(2):
        y = sq * h * pts[idx[:, slot]] + z[:, slot]
        met = np.abs(y[:, None] - sq * h[:, None] * pts[None, :]) ** 2
        errors += int(np.sum(np.argmin(met, axis=1) != idx[:, slot]))
    return {"errors": errors, "trials": n}


def _batch_p2p_ciod(ctx, rng, n: int, sigma2: float) -> dict:
    es, pts = ctx["es"], ctx["pts"]
    sq = math.sqrt(es)
    h = rician_samples(rng, (n, 2), ctx["k"])
    idx = rng.integers(0, ctx["m"], size=(n, 2))
    z = cn_samples(rng, (n, 2), sigma2)
    x1, x2 = pts[idx[:, 0]], pts[idx[:, 1]]
    y1 = sq * h[:, 0] * (x1.real + 1j * x2.imag) + z[:, 0]
    y2 = sq * h[:, 1] * (x2.real + 1j * x1.imag) + z[:, 1]
    cand = np.broadcast_to(pts[None, :], (n, ctx["m"]))
    m1, m2 = _ciod_metrics_rows(y1, y2, h[:, 0], h[:, 1], es, cand)
    errors = int(np.sum(np.argmin(m1, axis=1) != idx[:, 0]))
    errors += int(np.sum(np.argmin(m2, axis=1) != idx[:, 1]))
    return {"errors": errors, "trials": n}


def _batch_twr_siso_ma(ctx, rng, n: int, sigma2: float):
    """Common first half of the single-antenna-MA schemes: draws, relay
    decisions and map selection.  Returns everything the BC phase needs."""
    es, pts, m = ctx["es"], ctx["pts"], ctx["m"]
    sq = math.sqrt(es)
    h_ma = rician_samples(rng, (n, 2), ctx["k"])  # [h_AR, h_BR]
    h_a = rician_samples(rng, (n, 2), ctx["k"])  # relay -> A, per BC slot antenna
    h_b = rician_samples(rng, (n, 2), ctx["k"])
    idx = rng.integers(0, m, size=(n, 4))  # iA1 iA2 iB1 iB2
    z_ma = cn_samples(rng, (n, 2), sigma2)
    z_a = cn_samples(rng, (n, 2), sigma2)
    z_b = cn_samples(rng, (n, 2), sigma2)
    if ctx["adaptive"]:
        st = _select_states_siso(ctx, h_ma[:, 0], h_ma[:, 1])
    else:
        st = np.zeros(n, dtype=np.int64)
    kern = get_kernels()
    rel = np.empty((n, 4), dtype=np.int64)
    for slot in range(2):
        y = sq * (h_ma[:, 0] * pts[idx[:, slot]] + h_ma[:, 1] * pts[idx[:, 2 + slot]])
        y = y + z_ma[:, slot]
        ia, ib = kern.siso_ml_batch(y, h_ma[:, 0], h_ma[:, 1], es, pts)
        rel[:, slot], rel[:, 2 + slot] = ia, ib
    return h_a, h_b, idx, z_a, z_b, st, rel


def _batch_twr_siso(ctx, rng, n: int, sigma2: float) -> dict:
    es, pts, m = ctx["es"], ctx["pts"], ctx["m"]
    sq = math.sqrt(es)
    h_a, h_b, idx, z_a, z_b, st, rel = _batch_twr_siso_ma(ctx, rng, n, sigma2)
    tabs, outp = ctx["tabs"], ctx["out_pts"]
    rows = np.arange(n)
    out = {"errors": 0, "trials": n}
    for slot in range(2):
        color = tabs[st, rel[:, slot], rel[:, 2 + slot]]
        true_color = tabs[st, idx[:, slot], idx[:, 2 + slot]]
        ce = color != true_color
        x_r = outp[st, color]
        # node A restricts to its map row, node B to its column
        ya = sq * h_a[:, 0] * x_r + z_a[:, slot]
        rowc = tabs[st, idx[:, slot], :]
        cand = outp[st[:, None], rowc]
        ja = np.argmin(np.abs(ya[:, None] - sq * h_a[:, 0:1] * cand) ** 2, axis=1)
        err_a = ja != idx[:, 2 + slot]
        bc_a = (~ce) & (rowc[rows, ja] != color)
        yb = sq * h_b[:, 0] * x_r + z_b[:, slot]
        colc = tabs[st, :, idx[:, 2 + slot]]
        cand = outp[st[:, None], colc]
        jb = np.argmin(np.abs(yb[:, None] - sq * h_b[:, 0:1] * cand) ** 2, axis=1)
        err_b = jb != idx[:, slot]
        bc_b = (~ce) & (colc[rows, jb] != color)
        out["errors"] += int(err_a.sum() + err_b.sum())
        out[f"err_a{slot + 1}"] = int(err_a.sum())
        out[f"err_b{slot + 1}"] = int(err_b.sum())
        out[f"ce{slot + 1}"] = int(ce.sum())
        out[f"bc_a{slot + 1}"] = int(bc_a.sum())
        out[f"bc_b{slot + 1}"] = int(bc_b.sum())
    return out


def _batch_scheme1(ctx, rng, n: int, sigma2: float) -> dict:
    es, pts, m = ctx["es"], ctx["pts"], ctx["m"]
    sq = math.sqrt(es)
    h_a, h_b, idx, z_a, z_b, st, rel = _batch_twr_siso_ma(ctx, rng, n, sigma2)
    tabs, outp = ctx["tabs"], ctx["out_pts"]
    rows = np.arange(n)
    color1 = tabs[st, rel[:, 0], rel[:, 2]]
    color2 = tabs[st, rel[:, 1], rel[:, 3]]
    tc1 = tabs[st, idx[:, 0], idx[:, 2]]
    tc2 = tabs[st, idx[:, 1], idx[:, 3]]
    ce1, ce2 = color1 != tc1, color2 != tc2
    p1, p2 = outp[st, color1], outp[st, color2]
    x_t1 = p1.real + 1j * p2.imag
    x_t2 = p2.real + 1j * p1.imag
    out = {"errors": 0, "trials": n}
    for node, h_n, z_n in (("a", h_a, z_a), ("b", h_b, z_b)):
        y1 = sq * h_n[:, 0] * x_t1 + z_n[:, 0]
        y2 = sq * h_n[:, 1] * x_t2 + z_n[:, 1]
        met1, met2 = _ciod_metrics_rows(y1, y2, h_n[:, 0], h_n[:, 1], es, outp[st])
        for slot, met, color, ce in ((0, met1, color1, ce1), (1, met2, color2, ce2)):
            if node == "a":
                lane = tabs[st, idx[:, slot], :]
                truth = idx[:, 2 + slot]
            else:
                lane = tabs[st, :, idx[:, 2 + slot]]
                truth = idx[:, slot]
            j = np.argmin(met[rows[:, None], lane], axis=1)
            err = j != truth
            bc = (~ce) & (lane[rows, j] != color)
            out["errors"] += int(err.sum())
            out[f"err_{node}{slot + 1}"] = int(err.sum())
            out[f"bc_{node}{slot + 1}"] = int(bc.sum())
    out["ce1"], out["ce2"] = int(ce1.sum()), int(ce2.sum())
    return out


def _batch_scheme2(ctx, rng, n: int, sigma2: float) -> dict:
    es, pts, m = ctx["es"], ctx["pts"], ctx["m"]
    sq = math.sqrt(es)
    h_ma = rician_samples(rng, (n, 4), ctx["k"])
    h_a = rician_samples(rng, (n, 2), ctx["k"])
    h_b = rician_samples(rng, (n, 2), ctx["k"])
    idx = rng.integers(0, m, size=(n, 4))
    z_ma = cn_samples(rng, (n, 2), sigma2)
    z_a = cn_samples(rng, (n, 2), sigma2)
    z_b = cn_samples(rng, (n, 2), sigma2)
    t1, t2 = ctx["tilde1"], ctx["tilde2"]
    ta = idx[:, 0] * m + idx[:, 1]
    tb = idx[:, 2] * m + idx[:, 3]
    y = np.empty((n, 2), dtype=np.complex128)
    y[:, 0] = sq * (h_ma[:, 0] * t1[ta] + h_ma[:, 2] * t1[tb]) + z_ma[:, 0]
    y[:, 1] = sq * (h_ma[:, 1] * t2[ta] + h_ma[:, 3] * t2[tb]) + z_ma[:, 1]
    kern = get_kernels()
    rel, evals, fallback = kern.scheme2_conditional_batch(
        y,
        h_ma,
        es,
        ctx["s_i"],
        ctx["s_q"],
        ctx["rotation"],
        ctx["square"],
        ctx["pam"],
        ctx["mids"],
        t1,
        t2,
    )
    ta_hat = rel[:, 0] * m + rel[:, 1]
    tb_hat = rel[:, 2] * m + rel[:, 3]
    if ctx["adaptive"]:
        st = _select_states_scheme2(ctx, h_ma)
    else:
        st = np.zeros(n, dtype=np.int64)
    tab4, outk = ctx["tab4"], ctx["out4"]
    kk = len(outk)
    rows = np.arange(n)
    color = tab4[st, ta_hat, tb_hat]
    true_color = tab4[st, ta, tb]
    ce = color != true_color
    p1, p2 = outk[color // kk], outk[color % kk]
    x_t1 = p1.real + 1j * p2.imag
    x_t2 = p2.real + 1j * p1.imag
    out = {
        "errors": 0,
        "trials": n,
        "relay_err": int(np.sum((ta_hat != ta) | (tb_hat != tb))),
        "ce": int(ce.sum()),
        "fallback": int(np.asarray(fallback).sum()),
        "metric_evals": int(np.asarray(evals).sum()),
    }
    cand = np.broadcast_to(outk[None, :], (n, kk))
    for node, h_n, z_n in (("a", h_a, z_a), ("b", h_b, z_b)):
        y1 = sq * h_n[:, 0] * x_t1 + z_n[:, 0]
        y2 = sq * h_n[:, 1] * x_t2 + z_n[:, 1]
        met1, met2 = _ciod_metrics_rows(y1, y2, h_n[:, 0], h_n[:, 1], es, cand)
        if node == "a":
            lane = tab4[st, ta, :]
            truth1, truth2 = idx[:, 2], idx[:, 3]
        else:
            lane = tab4[st, :, tb]
            truth1, truth2 = idx[:, 0], idx[:, 1]
        total = met1[rows[:, None], lane // kk] + met2[rows[:, None], lane % kk]
        t_hat = np.argmin(total, axis=1)
        err1 = (t_hat // m) != truth1
        err2 = (t_hat % m) != truth2
        bc = (~ce) & (lane[rows, t_hat] != color)
        out["errors"] += int(err1.sum() + err2.sum())
        out[f"err_{node}1"] = int(err1.sum())
        out[f"err_{node}2"] = int(err2.sum())
        out[f"bc_{node}"] = int(bc.sum())
    return out


_BATCH_FNS = {
    "p2p_siso": _batch_p2p_siso,
    "p2p_ciod_2x1": _batch_p2p_ciod,
    "siso_fnc": _batch_twr_siso,
    "siso_anc": _batch_twr_siso,
    "scheme1_fnc": _batch_scheme1,
    "scheme1_anc": _batch_scheme1,
    "scheme2_fnc": _batch_scheme2,
    "scheme2_anc": _batch_scheme2,
}


def _simulate_batch(ctx: dict, sigma2: float, seeds, n: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence(list(seeds)))
    return _BATCH_FNS[ctx["scheme"]](ctx, rng, n, sigma2)


# ---------------------------------------------------------------------------
# estimation driver


def estimate_sep(
    spec: ExperimentSpec,
    workers: int = 1,
    cache_dir=None,
    batch_rounds: int = BATCH_ROUNDS,
) -> SepCurve:
    """Estimate the SEP curve over the spec's SNR grid.

    Each point accumulates batches until `min_errors` symbol errors or
    `max_rounds` rounds; points stopped by the round cap are flagged
    low-confidence.
    """
    if workers < 1:
        raise EngineError("workers must be >= 1")
    ctx = _build_context(spec, cache_dir)
    spt = ctx["spt"]

    def batch_size(bi: int) -> int:
        return max(0, min(batch_rounds, spec.max_rounds - bi * batch_rounds))

    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    points: List[SepPoint] = []
    try:
        for pi, snr in enumerate(spec.snr_db):
            sigma2 = ctx["es"] / (10.0 ** (snr / 10.0))
            errors = trials = 0
            counters: Dict[str, int] = {}
            pending = {}
            next_submit = next_consume = 0
            while errors < spec.min_errors and batch_size(next_consume) > 0:
                if executor is not None:
                    lookahead = next_consume + 2 * workers
                    while next_submit < lookahead and batch_size(next_submit) > 0:
                        pending[next_submit] = executor.submit(
                            _simulate_batch,
                            ctx,
                            sigma2,
                            (spec.seed, pi, next_submit),
                            batch_size(next_submit),
                        )
                        next_submit += 1
                    res = pending.pop(next_consume).result()
                else:
                    res = _simulate_batch(
                        ctx, sigma2, (spec.seed, pi, next_consume), batch_size(next_consume)
                    )
                next_consume += 1
                errors += res.pop("errors")
                trials += res.pop("trials")
                for key, val in res.items():
                    counters[key] = counters.get(key, 0) + val
            for fut in pending.values():
                fut.cancel()
            pending.clear()
            n_sym = trials * spt
            sep = errors / n_sym if n_sym else 0.0
            ci = 1.96 * math.sqrt(max(sep * (1.0 - sep), 0.0) / n_sym) if n_sym else 0.0
            points.append(
                SepPoint(
                    snr_db=float(snr),
                    sep=sep,
                    errors=errors,
                    trials=trials,
                    ci95=ci,
                    low_confidence=errors < spec.min_errors,
                    counters=counters,
                )
            )
    finally:
        if executor is not None:
            executor.shutdown(cancel_futures=True)
    meta = {
        "spec": asdict(spec),
        "backend": BACKEND_NAME,
        "workers": workers,
        "batch_rounds": batch_rounds,
    }
    return SepCurve(
        scheme=spec.scheme, points=points, symbols_per_trial=spt, metadata=meta
    )


def diversity_slope(curve: SepCurve, lo_db: float, hi_db: float) -> float:
    """Least-squares slope of -log10(SEP) per decade of SNR over a window;
    low-confidence and zero-error points are excluded."""
    xs, ys = [], []
    for p in curve.points:
        if lo_db <= p.snr_db <= hi_db and not p.low_confidence and p.sep > 0:
            xs.append(p.snr_db / 10.0)
            ys.append(math.log10(p.sep))
    if len(xs) < 2:
        raise EngineError(
            f"need at least two confident points in [{lo_db}, {hi_db}] dB, "
            f"got {len(xs)}"
        )
    slope = np.polyfit(np.asarray(xs), np.asarray(ys), 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# single-round reference implementations (scalar decode APIs end to end)


@dataclass
class RoundResult:
    err_a: Tuple[int, int]
    err_b: Tuple[int, int]
    cluster_err: Tuple[int, ...]
    relay_symbols: tuple


def _index_of(pts: np.ndarray, value: complex) -> int:
    return int(np.argmin(np.abs(pts - value)))


def run_round_scheme1(
    spec: ExperimentSpec,
    realization: ChannelRealization,
    rng: np.random.Generator,
    snr_db: Optional[float] = None,
    catalog: Optional[MapCatalog] = None,
) -> RoundResult:
    """One full protocol round (2 MA slots, adaptive or XOR mapping, CIOD
    broadcast) using the scalar decoders; the batch path mirrors this."""
    c = from_name(spec.constellation)
    pts = c.point_array()
    noise = NoiseModel.from_snr_db(spec.snr_db[0] if snr_db is None else snr_db)
    es = noise.es
    m = c.size
    idx = rng.integers(0, m, size=4)
    h_ar, h_br = realization.ma_coeffs

    if spec.scheme.endswith("anc"):
        if catalog is None:
            catalog = build_catalog(c, "siso")
        nmap = select_map(realization, catalog.entries)
    else:
        nmap = xor_map(c)

    colors, rel = [], []
    for slot in range(2):
        x_a, x_b = pts[idx[slot]], pts[idx[2 + slot]]
        y = transmit(
            np.asarray([h_ar, h_br]), np.asarray([[x_a], [x_b]]), noise, rng
        )
        xa_hat, xb_hat = relay_ml_siso(complex(y[0]), h_ar, h_br, es, c)
        rel.extend([xa_hat, xb_hat])
        colors.append(int(nmap.table[_index_of(pts, xa_hat), _index_of(pts, xb_hat)]))
    out_pts = nmap.output_set.point_array()
    x_r = ciod_encode(complex(out_pts[colors[0]]), complex(out_pts[colors[1]]))

    y_a = transmit(np.asarray(realization.bc_coeffs_a), x_r.matrix, noise, rng)
    y_b = transmit(np.asarray(realization.bc_coeffs_b), x_r.matrix, noise, rng)
    hat_b = endnode_decode_ciod(
        y_a, realization.bc_coeffs_a, es, (pts[idx[0]], pts[idx[1]]), nmap, node="a"
    )
    hat_a = endnode_decode_ciod(
        y_b, realization.bc_coeffs_b, es, (pts[idx[2]], pts[idx[3]]), nmap, node="b"
    )
    err_a = tuple(
        int(_index_of(pts, hat_b[s]) != idx[2 + s]) for s in range(2)
    )
    err_b = tuple(int(_index_of(pts, hat_a[s]) != idx[s]) for s in range(2))
    true_colors = [
        int(nmap.table[idx[0], idx[2]]),
        int(nmap.table[idx[1], idx[3]]),
    ]
    cluster = tuple(int(colors[s] != true_colors[s]) for s in range(2))
    return RoundResult(
        err_a=err_a, err_b=err_b, cluster_err=cluster, relay_symbols=tuple(rel)
    )


def run_round_scheme2(
    spec: ExperimentSpec,
    realization: ChannelRealization,
    rng: np.random.Generator,
    snr_db: Optional[float] = None,
    catalog: Optional[MapCatalog] = None,
) -> RoundResult:
    """One stacked-codeword round: joint MA reception of both CIOD codewords,
    conditional relay ML, network mapping, CIOD broadcast."""
    c = from_name(spec.constellation)
    pts = c.point_array()
    noise = NoiseModel.from_snr_db(spec.snr_db[0] if snr_db is None else snr_db)
    es = noise.es
    m = c.size
    idx = rng.integers(0, m, size=4)
    cw = scheme2_codeword(pts[idx[0]], pts[idx[1]], pts[idx[2]], pts[idx[3]])
    y = transmit(np.asarray(realization.ma_coeffs), cw.matrix, noise, rng)
    rel = relay_ml_scheme2_conditional(y, realization.ma_coeffs, es, c)
    ra1, ra2, rb1, rb2 = (_index_of(pts, v) for v in rel)

    if spec.scheme.endswith("anc"):
        if catalog is None:
            catalog = build_catalog(c, "scheme2")
        nmap = select_map(realization, catalog.entries)
        color = int(nmap.table[ra1 * m + ra2, rb1 * m + rb2])
        true_color = int(nmap.table[idx[0] * m + idx[1], idx[2] * m + idx[3]])
        p1, p2 = nmap.output_pair(color)
        own_a, own_b = (pts[idx[0]], pts[idx[1]]), (pts[idx[2]], pts[idx[3]])
        x_r = ciod_encode(complex(p1), complex(p2))
        y_a = transmit(np.asarray(realization.bc_coeffs_a), x_r.matrix, noise, rng)
        y_b = transmit(np.asarray(realization.bc_coeffs_b), x_r.matrix, noise, rng)
        hat_b = endnode_decode_ciod(
            y_a, realization.bc_coeffs_a, es, own_a, nmap, node="a"
        )
        hat_a = endnode_decode_ciod(
            y_b, realization.bc_coeffs_b, es, own_b, nmap, node="b"
        )
        cluster = (int(color != true_color),)
    else:
        nmap = xor_map(c)
        c1 = int(nmap.table[ra1, rb1])
        c2 = int(nmap.table[ra2, rb2])
        x_r = ciod_encode(complex(pts[c1]), complex(pts[c2]))
        y_a = transmit(np.asarray(realization.bc_coeffs_a), x_r.matrix, noise, rng)
        y_b = transmit(np.asarray(realization.bc_coeffs_b), x_r.matrix, noise, rng)
        hat_b = endnode_decode_ciod(
            y_a, realization.bc_coeffs_a, es, (pts[idx[0]], pts[idx[1]]), nmap, node="a"
        )
        hat_a = endnode_decode_ciod(
            y_b, realization.bc_coeffs_b, es, (pts[idx[2]], pts[idx[3]]), nmap, node="b"
        )
        tc1 = int(nmap.table[idx[0], idx[2]])
        tc2 = int(nmap.table[idx[1], idx[3]])
        cluster = (int(c1 != tc1), int(c2 != tc2))
    err_a = tuple(int(_index_of(pts, hat_b[s]) != idx[2 + s]) for s in range(2))
    err_b = tuple(int(_index_of(pts, hat_a[s]) != idx[s]) for s in range(2))
    return RoundResult(
        err_a=err_a, err_b=err_b, cluster_err=cluster, relay_symbols=tuple(rel)
    )


# ---------------------------------------------------------------------------
# persistence

CSV_HEADER = "snr_db,sep,errors,trials,ci95"


def save_sep_csv(curve: SepCurve, path) -> None:
    lines = [CSV_HEADER]
    for p in curve.points:
        lines.append(f"{p.snr_db!r},{p.sep!r},{p.errors},{p.trials},{p.ci95!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_sep_csv(path) -> List[SepPoint]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise EngineError(f"bad CSV header in {path}")
    points = []
    for line in lines[1:]:
        snr, sep, errs, trials, ci = line.split(",")
        points.append(
            SepPoint(
                snr_db=float(snr),
                sep=float(sep),
                errors=int(errs),
                trials=int(trials),
                ci95=float(ci),
            )
        )
    return points


def manifest_payload(curves: Sequence[SepCurve]) -> dict:
    """Reproducibility manifest: every input needed to regenerate the run.
    Deliberately contains nothing volatile (no timestamps, no paths)."""
    from .netcode import _package_version

    return {
        "version": _package_version(),
        "backend": BACKEND_NAME,
        "curves": [
            {
                "scheme": c.scheme,
                "symbols_per_trial": c.symbols_per_trial,
                "metadata": c.metadata,
                "points": [
                    {
                        "snr_db": p.snr_db,
                        "sep": p.sep,
                        "errors": p.errors,
                        "trials": p.trials,
                        "ci95": p.ci95,
                        "low_confidence": p.low_confidence,
                    }
                    for p in c.points
                ],
            }
            for c in curves
        ],
    }


def save_manifest(curves: Sequence[SepCurve], path) -> None:
    Path(path).write_text(json.dumps(manifest_payload(curves), indent=2, sort_keys=True) + "\n")
