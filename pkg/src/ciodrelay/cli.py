"""Command-line front end: simulation runs, catalog generation, and a fast
self-check suite.

Exit codes: 0 success, 1 verification/assertion failure, 2 configuration
error.  The output directory resolves as --out flag, then the CIODRELAY_OUT
environment variable, then the config file, then the working directory.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import engine, netcode
from ._backend import BACKEND_NAME
from .channel import cn_samples
from .constellation import from_name
from .decode import (
    conditional_qr,
    STRUCTURAL_ZEROS,
    relay_ml_scheme2_conditional,
    relay_ml_scheme2_exhaustive,
)
from .engine import SCHEMES, ExperimentSpec, estimate_sep, save_manifest, save_sep_csv
from .netcode import MapConstructionError, check_exclusive_law, xor_map
from .stbc import hurwitz_radon, weight_matrices

_VERIFY_SEED = 20240817


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config parsing

_EXPERIMENT_KEYS = {
    "schemes",
    "constellation",
    "fading",
    "rician_k",
    "snr_db",
    "min_errors",
    "max_rounds",
    "seed",
}
_OUTPUT_KEYS = {"dir"}


def _parse_config(path: str) -> Tuple[List[ExperimentSpec], Optional[str]]:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for section in cp.sections():
        if section not in ("experiment", "output"):
            raise ConfigError(f"unknown config section [{section}]")
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    exp = cp["experiment"]
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(f"unknown key 'experiment.{key}'")
    if cp.has_section("output"):
        for key in cp["output"]:
            if key not in _OUTPUT_KEYS:
                raise ConfigError(f"unknown key 'output.{key}'")

    def _get(key: str, default: str) -> str:
        return exp.get(key, default).strip()

    schemes = _get("schemes", "").split()
    if not schemes:
        raise ConfigError("key 'experiment.schemes' is required")
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigError(f"unknown scheme {s!r} in key 'experiment.schemes'")
    try:
        snr = tuple(float(v) for v in _get("snr_db", "").split())
    except ValueError as exc:
        raise ConfigError(f"key 'experiment.snr_db' must be floats: {exc}") from exc
    if not snr:
        raise ConfigError("key 'experiment.snr_db' is required")

    def _int(key: str, default: str) -> int:
        try:
            return int(_get(key, default))
        except ValueError as exc:
            raise ConfigError(f"key 'experiment.{key}' must be an integer") from exc

    def _float(key: str, default: str) -> float:
        try:
            return float(_get(key, default))
        except ValueError as exc:
            raise ConfigError(f"key 'experiment.{key}' must be a number") from exc

    specs = []
    for s in schemes:
        try:
            specs.append(
                ExperimentSpec(
                    scheme=s,
                    snr_db=snr,
                    constellation=_get("constellation", "4qam-rotated"),
                    fading=_get("fading", "rayleigh"),
                    rician_k=_float("rician_k", "0"),
                    min_errors=_int("min_errors", "200"),
                    max_rounds=_int("max_rounds", "10000000"),
                    seed=_int("seed", "0"),
                )
            )
        except engine.EngineError as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc
    out_dir = cp.get("output", "dir", fallback=None)
    return specs, out_dir


def _resolve_out(flag: Optional[str], config_dir: Optional[str]) -> Path:
    for candidate in (flag, os.environ.get("CIODRELAY_OUT"), config_dir, "."):
        if candidate:
            return Path(candidate)
    return Path(".")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    try:
        specs, config_out = _parse_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = _resolve_out(args.out, config_out)
    out.mkdir(parents=True, exist_ok=True)
    cache = out / ".cache"
    curves = []
    for spec in specs:
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
        curve = estimate_sep(spec, workers=args.workers, cache_dir=cache)
        for p in curve.points:
            flag = " low-confidence" if p.low_confidence else ""
            print(
                f"{spec.scheme} {p.snr_db:g} dB: sep={p.sep:.6e} "
                f"errors={p.errors} trials={p.trials}{flag}"
            )
        save_sep_csv(curve, out / f"{spec.scheme}.csv")
        curves.append(curve)
    save_manifest(curves, out / "manifest.json")
    print(f"wrote {len(curves)} curve(s) to {out}")
    return 0


def cmd_catalog(args) -> int:
    try:
        c = from_name(args.constellation)
    except Exception as exc:
        print(f"error: unknown constellation {args.constellation!r}: {exc}", file=sys.stderr)
        return 2
    if args.scheme not in ("siso", "scheme2"):
        print(f"error: catalog scheme must be siso or scheme2, got {args.scheme!r}", file=sys.stderr)
        return 2
    out = _resolve_out(args.out, None)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cat = netcode.cached_catalog(c, args.scheme, out)
    except MapConstructionError as exc:
        print(f"error: map construction failed: {exc}", file=sys.stderr)
        if exc.conflict is not None:
            print(f"conflict certificate: {exc.conflict}", file=sys.stderr)
        return 1
    colors = [m.colors_used for _, m in cat.entries]
    noun = "subspaces" if args.scheme == "scheme2" else "states"
    print(f"{noun}: {len(cat.entries)}")
    print(f"colors: min {min(colors)} max {max(colors)}")
    path = out / f"catalog-{args.scheme}-{netcode.catalog_cache_key(c, args.scheme)}.txt"
    print(f"catalog: {path}")
    return 0


def _verify_hurwitz_radon() -> Optional[str]:
    w = weight_matrices().ordered()
    for off in (0, 4):  # per transmitting node
        for i in (0, 1):
            for j in (2, 3):
                if not hurwitz_radon(w[off + i], w[off + j], tol=1e-12):
                    return f"weight matrices {off + i} and {off + j} not HR-orthogonal"
    return None


def _verify_exclusive_law() -> Optional[str]:
    c = from_name("4qam-rotated")
    if not check_exclusive_law(xor_map(c)):
        return "XOR map violates the exclusive law"
    states = netcode.enumerate_siso_singular_states(c)
    for target in states[:4]:
        m = netcode.build_adaptive_map_siso(c, target, netcode.default_bc_sets(c))
        if not check_exclusive_law(m):
            return f"adaptive map for state {target.ratio} violates the exclusive law"
    return None


def _verify_oracle_equivalence(inject_fault: bool) -> Optional[str]:
    c = from_name("4qam-rotated")
    rng = np.random.default_rng(_VERIFY_SEED)
    es = 1.0
    for trial in range(1000):
        h = cn_samples(rng, (4,), 1.0)
        snr_db = rng.uniform(0.0, 30.0)
        sigma2 = es / 10 ** (snr_db / 10)
        idx = rng.integers(0, 4, size=4)
        pts = c.point_array()
        t1a = pts[idx[0]].real + 1j * pts[idx[1]].imag
        t2a = pts[idx[1]].real + 1j * pts[idx[0]].imag
        t1b = pts[idx[2]].real + 1j * pts[idx[3]].imag
        t2b = pts[idx[3]].real + 1j * pts[idx[2]].imag
        z = cn_samples(rng, (2,), sigma2)
        y = np.array(
            [
                h[0] * t1a + h[2] * t1b + z[0],
                h[1] * t2a + h[3] * t2b + z[1],
            ]
        )
        got = relay_ml_scheme2_conditional(y, h, es, c, _reverse_scan=inject_fault)
        want = relay_ml_scheme2_exhaustive(y, h, es, c)
        if got != want:
            return f"conditional/exhaustive mismatch on random instance {trial}"
    # exact-tie instances: zeroing one node's coefficients ties all of that
    # node's hypotheses bit-for-bit (its contribution is an exact +0.0 in both
    # the direct and the factorized arithmetic), so a wrong tie-break scan
    # order flips the decision deterministically
    for trial in range(50):
        h = np.concatenate([cn_samples(rng, (2,), 1.0), [0j, 0j]])
        y = cn_samples(rng, (2,), 1.0)
        got = relay_ml_scheme2_conditional(y, h, es, c, _reverse_scan=inject_fault)
        want = relay_ml_scheme2_exhaustive(y, h, es, c)
        if got != want:
            return f"conditional/exhaustive mismatch on tie instance {trial}"
    return None


def _verify_r_structure() -> Optional[str]:
    rng = np.random.default_rng(_VERIFY_SEED + 1)
    for trial in range(100):
        h = cn_samples(rng, (4,), 1.0)
        f = conditional_qr(h, 1.0, from_name("4qam-rotated").rotation)
        for (i, j) in STRUCTURAL_ZEROS:
            if abs(f.r[i, j]) >= 1e-9:
                return f"R[{i},{j}] = {f.r[i, j]:.2e} on channel {trial}"
    return None


def cmd_verify(args) -> int:
    print(f"backend: {BACKEND_NAME}")
    checks = [
        ("hurwitz-radon", lambda: _verify_hurwitz_radon()),
        ("exclusive-law", lambda: _verify_exclusive_law()),
        ("oracle-equivalence", lambda: _verify_oracle_equivalence(args.inject_fault)),
        ("r-structure", lambda: _verify_r_structure()),
    ]
    failed = False
    for name, fn in checks:
        detail = fn()
        if detail is None:
            print(f"PASS {name}")
        else:
            print(f"FAIL {name}: {detail}")
            failed = True
    return 1 if failed else 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ciodrelay",
        description="CIOD two-way relaying link simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the experiments in a config file")
    p_sim.add_argument("config")
    p_cat = sub.add_parser("catalog", help="build and report an adaptive-map catalog")
    p_cat.add_argument("constellation")
    p_cat.add_argument("scheme")
    p_ver = sub.add_parser("verify", help="run the fast invariant suite")
    p_ver.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    for p in (p_sim, p_cat, p_ver):
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "catalog":
            return cmd_catalog(args)
        return cmd_verify(args)
    except engine.EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
