"""Batch polynomial evaluation kernels for grid sweeps.

Scanning feasible regions evaluates every constraint polynomial at millions
of grid points; that inner loop dominates the sample-space command and the
brute-force verification paths.  The kernels are JIT-compiled with numba
when available, with a chunked pure-numpy fallback.

Backend selection: the MOMENTOPF_BACKEND environment variable forces
"numba" or "numpy"; unset or "auto" picks numba when it imports.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .polynomial import Polynomial

_ENV_VAR = "MOMENTOPF_BACKEND"

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via MOMENTOPF_BACKEND
    numba = None
    _HAVE_NUMBA = False


def active_backend() -> str:
    """Resolve the backend name from the environment, once per call."""
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV_VAR} must be 'numba', 'numpy' or 'auto', got {choice!r}")
    if choice == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    if choice == "auto":
        return "numba" if _HAVE_NUMBA else "numpy"
    return choice


class PolyPack:
    """Several polynomials over one variable space, flattened for kernels."""

    __slots__ = ("nvars", "npolys", "coeffs", "exps", "offsets")

    def __init__(self, polys: list[Polynomial]):
        if not polys:
            raise ValueError("need at least one polynomial")
        self.nvars = polys[0].nvars
        self.npolys = len(polys)
        coeffs: list[float] = []
        rows: list[tuple[int, ...]] = []
        offsets = [0]
        for p in polys:
            if p.nvars != self.nvars:
                raise ValueError("polynomials over different variable spaces")
            for mono, coef in sorted(p.terms.items()):
                rows.append(mono)
                coeffs.append(coef)
            offsets.append(len(coeffs))
        self.coeffs = np.array(coeffs, dtype=np.float64)
        self.exps = (
            np.array(rows, dtype=np.int64)
            if rows
            else np.zeros((0, self.nvars), dtype=np.int64)
        )
        self.offsets = np.array(offsets, dtype=np.int64)


def _eval_batch_numpy(coeffs, exps, offsets, pts, out):
    npolys = len(offsets) - 1
    for c in range(npolys):
        lo, hi = offsets[c], offsets[c + 1]
        acc = np.zeros(pts.shape[0])
        for t in range(lo, hi):
            term = np.full(pts.shape[0], coeffs[t])
            for k in range(exps.shape[1]):
                e = exps[t, k]
                if e == 1:
                    term = term * pts[:, k]
                elif e > 1:
                    term = term * pts[:, k] ** e
            acc += term
        out[:, c] = acc


def _scan_numpy(values, lb, ub, tol, feasible, slack):
    slack[:] = np.inf
    for c in range(values.shape[1]):
        if lb[c] > -math.inf:
            slack[:] = np.minimum(slack, values[:, c] - lb[c])
        if ub[c] < math.inf:
            slack[:] = np.minimum(slack, ub[c] - values[:, c])
    feasible[:] = slack >= -tol


if _HAVE_NUMBA:

    @numba.njit(parallel=True, cache=True)
    def _eval_batch_numba(coeffs, exps, offsets, pts, out):  # pragma: no cover
        npts = pts.shape[0]
        npolys = offsets.shape[0] - 1
        nv = exps.shape[1]
        for p in numba.prange(npts):
            for c in range(npolys):
                acc = 0.0
                for t in range(offsets[c], offsets[c + 1]):
                    v = coeffs[t]
                    for k in range(nv):
                        e = exps[t, k]
                        while e > 0:
                            v *= pts[p, k]
                            e -= 1
                    acc += v
                out[p, c] = acc

    @numba.njit(parallel=True, cache=True)
    def _scan_numba(values, lb, ub, tol, feasible, slack):  # pragma: no cover
        npts, ncons = values.shape
        for p in numba.prange(npts):
            s = np.inf
            for c in range(ncons):
                v = values[p, c]
                if lb[c] > -np.inf:
                    d = v - lb[c]
                    if d < s:
                        s = d
                if ub[c] < np.inf:
                    d = ub[c] - v
                    if d < s:
                        s = d
            slack[p] = s
            feasible[p] = s >= -tol


def eval_batch(pack: PolyPack, pts: np.ndarray, backend: str | None = None) -> np.ndarray:
    """Evaluate all packed polynomials at all points: (npts, npolys) array."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != pack.nvars:
        raise ValueError(f"points must be (n, {pack.nvars})")
    out = np.empty((pts.shape[0], pack.npolys))
    if (backend or active_backend()) == "numba":
        _eval_batch_numba(pack.coeffs, pack.exps, pack.offsets, pts, out)
    else:
        _eval_batch_numpy(pack.coeffs, pack.exps, pack.offsets, pts, out)
    return out


def scan_feasible(
    pack: PolyPack,
    lb: np.ndarray,
    ub: np.ndarray,
    pts: np.ndarray,
    tol: float = 1e-9,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Feasibility flags and worst slack of box constraints lb <= f <= ub.

    The slack of a point is the minimum over all finite bound sides of the
    distance to the bound; nonnegative (within tol) means feasible.
    """
    lb = np.asarray(lb, dtype=np.float64)
    ub = np.asarray(ub, dtype=np.float64)
    if lb.shape != (pack.npolys,) or ub.shape != (pack.npolys,):
        raise ValueError("bounds must have one entry per packed polynomial")
    use = backend or active_backend()
    values = eval_batch(pack, pts, backend=use)
    feasible = np.empty(pts.shape[0], dtype=np.bool_)
    slack = np.empty(pts.shape[0])
    if use == "numba":
        _scan_numba(values, lb, ub, tol, feasible, slack)
    else:
        _scan_numpy(values, lb, ub, tol, feasible, slack)
    return feasible, slack
