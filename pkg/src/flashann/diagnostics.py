"""Certification of compact-code distance comparisons.

For vertices u, v, w, the sign of e.u - b (e = w - v, b = (|w|^2 - |v|^2)/2)
decides whether u is closer to v or to w: it is the signed side of the
perpendicular bisector hyperplane between v and w.  With compact codes u',
v', w' and error vectors E_u = u - u', the coded comparison flips sign only
when the aggregate error term E outweighs the true margin; |e.u - b| >= |E|
certifies the coded comparison.  Everything here runs in float64 regardless
of the runtime distance precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import VectorDataset, brute_force_knn


def bisector_margin(u: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
    """e.u - b; negative iff u is strictly closer to v than to w."""
    e = w - v
    b = 0.5 * (w @ w - v @ v)
    return float(e @ u - b)


def error_term(u, v, w, eu, ev, ew) -> float:
    """Aggregate compression-error contribution to the bisector margin."""
    return float(
        (ew - ev) @ u
        + (w - v) @ eu
        + ev @ eu
        - ew @ eu
        + 0.5 * (ew @ ew)
        - 0.5 * (ev @ ev)
        + v @ ev
        - w @ ew
    )


@dataclass
class ComparisonTriple:
    """One certified-comparison measurement for a (u, v, w) triple."""

    margin: float  # e.u - b on the exact vectors
    coded_margin: float  # e'.u' - b' on the reconstructed vectors
    error: float  # the aggregate error term E
    certified: bool  # |margin| >= |error|
    agree: bool  # sign(margin) == sign(coded_margin)
    coded_tie: bool  # coded margin exactly zero: the codes abstain
    # (reached only at the certification boundary |margin| == |error|,
    # e.g. when v and w share a reconstruction; an abstention, not an
    # inversion -- the strict-sign guarantee applies when |margin| > |error|)


def _sign(x: float) -> int:
    return int(x > 0) - int(x < 0)


def check_triple(provider, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> ComparisonTriple:
    """Evaluate one triple under a provider's coding.

    Vectors are first mapped into the provider's exact frame (identity for
    codes living in the original space, the full rotation for projections) so
    that exact comparisons are preserved, then compared against their
    reconstructions.
    """
    fu, fv, fw = (provider.exact_frame(x) for x in (u, v, w))
    ru, rv, rw = (provider.reconstruct(x) for x in (u, v, w))
    margin = bisector_margin(fu, fv, fw)
    coded = bisector_margin(ru, rv, rw)
    err = error_term(fu, fv, fw, fu - ru, fv - rv, fw - rw)
    certified = abs(margin) >= abs(err)
    return ComparisonTriple(
        margin=margin,
        coded_margin=coded,
        error=err,
        certified=certified,
        agree=_sign(margin) == _sign(coded),
        coded_tie=coded == 0.0 and margin != 0.0,
    )


def build_triples(data: VectorDataset, n_triples: int, seed: int = 0,
                  pool: int = 100) -> np.ndarray:
    """Sample (u, v, w) index triples: a vector and two of its near neighbors.

    Each sampled vector contributes one triple from its two nearest
    neighbors; the neighbor pool size is recorded for reproducibility with
    wider pairings.
    """
    rng = np.random.default_rng(seed)
    n = data.n
    sel = rng.choice(n, size=min(n_triples, n), replace=False)
    k = min(pool, n - 1) + 1
    gt = brute_force_knn(data, VectorDataset(data.data[sel]), k)
    triples = np.empty((len(sel), 3), dtype=np.int64)
    for row, u in enumerate(sel):
        nbrs = [int(j) for j in gt.ids[row] if j != u][:2]
        triples[row] = (u, nbrs[0], nbrs[1])
    if len(sel) < n_triples:
        extra = rng.integers(0, len(sel), n_triples - len(sel))
        triples = np.concatenate([triples, triples[extra]])
    return triples


@dataclass
class CertificationReport:
    total: int
    certified: int
    agreements: int
    certified_and_disagree: int  # certified comparisons the codes invert
    coded_ties: int  # certified comparisons the codes leave tied

    @property
    def certified_fraction(self) -> float:
        return self.certified / self.total if self.total else 0.0


def certify(provider, data: VectorDataset, triples: np.ndarray) -> CertificationReport:
    """Run the triple check over index triples; the headline number is
    certified_and_disagree, which must be zero for a sound coding.

    Exact coded ties sit on the certification boundary (identical
    reconstructions make the error term equal the margin); they abstain
    rather than invert and are tallied separately.
    """
    certified = agreements = bad = ties = 0
    for ui, vi, wi in triples:
        t = check_triple(provider, data.data[ui], data.data[vi], data.data[wi])
        certified += t.certified
        agreements += t.agree
        if t.certified and t.coded_tie:
            ties += 1
        elif t.certified and not t.agree:
            bad += 1
    return CertificationReport(
        total=len(triples), certified=certified,
        agreements=agreements, certified_and_disagree=bad, coded_ties=ties,
    )


def sign_equivalence_violations(n_triples: int, dim: int, seed: int = 0,
                                tie_band: float = 1e-9) -> int:
    """Random-triple check that the bisector margin orders distances.

    Counts cases where sign(e.u - b) disagrees with sign(d2(u,v) - d2(u,w))
    outside the tie band |e.u - b| <= tie_band * (1 + |b|).
    """
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n_triples, 3, dim))
    violations = 0
    for u, v, w in pts:
        e = w - v
        b = 0.5 * (w @ w - v @ v)
        margin = e @ u - b
        if abs(margin) <= tie_band * (1.0 + abs(b)):
            continue
        gap = ((u - v) @ (u - v)) - ((u - w) @ (u - w))
        if _sign(margin) != _sign(gap):
            violations += 1
    return violations
