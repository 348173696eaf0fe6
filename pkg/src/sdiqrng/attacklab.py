"""Adversarial sanity lab: finite-dimensional eavesdropper algebra and
Monte-Carlo attack scenarios.

Bipartite states live on E (eavesdropper) tensor A (measured mode) in the
photon-number basis, index ``k * dim_a + n`` for |k>_E |n>_A.  Two
constructions of the eavesdropper's post-measurement operator must agree
exactly; their equality is the algebraic heart of the phase-randomization
security argument:

* path I: average the A phase first (kill all n != m coherences on A),
  then project A onto one digitizer bin at a fixed LO phase;
* path II: project A onto the phase-rotated bin for each of M uniformly
  spaced LO phases and average the results.

Both reduce to ``sum_n rho[k, n, l, n] * w_n`` with the same weights
``w_n = integral of |psi_n|^2 over the bin``, because the discrete phase
average annihilates every coherence when M >= dim_a (finite Fourier
orthogonality); the default M = 4 * dim_a leaves margin.  The projector is
applied once inside the trace (Born rule), which keeps the identity exact
in the truncated space.

The Monte-Carlo scenarios mirror the two operating modes of the generator:
an eavesdropper who knows a fixed LO phase can mimic vacuum statistics with
randomly displaced squeezed states while predicting outcomes far better
than the vacuum guessing bound; randomizing the LO phase destroys the
advantage and inflates the measured variance to cosh(2r)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _stats
from scipy.special import erf as _erf

from .states import _gl_nodes

__all__ = [
    "BipartiteState",
    "two_mode_squeezed",
    "random_pure_bipartite",
    "phase_average_A",
    "bin_projector",
    "eve_reduced_path_I",
    "eve_reduced_path_II",
    "trace_distance",
    "AttackScenario",
    "AttackReport",
    "run_attack",
]


@dataclass(frozen=True)
class BipartiteState:
    """Density matrix on E (x) A with dims recorded; validated on creation."""

    dim_e: int
    dim_a: int
    rho: np.ndarray

    def __post_init__(self):
        d = self.dim_e * self.dim_a
        rho = np.asarray(self.rho)
        if self.dim_e < 1 or self.dim_a < 1:
            raise ValueError("dimensions must be positive")
        if rho.shape != (d, d):
            raise ValueError(f"rho must be {d}x{d}, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValueError("rho is not Hermitian within 1e-12")
        if abs(np.trace(rho).real - 1.0) > 1e-10 or abs(np.trace(rho).imag) > 1e-12:
            raise ValueError("trace of rho must be 1 within 1e-10")
        eigs = np.linalg.eigvalsh(rho)
        if eigs.min() < -1e-10:
            raise ValueError(f"rho has negative eigenvalue {eigs.min()}")

    def tensor(self) -> np.ndarray:
        """View as rho[k, n, l, m] for E indices k,l and A indices n,m."""
        return self.rho.reshape(self.dim_e, self.dim_a, self.dim_e, self.dim_a)

    def a_marginal(self) -> np.ndarray:
        """Reduced density matrix on A."""
        return np.einsum("knkm->nm", self.tensor())


def two_mode_squeezed(gamma: float, dim: int, *, form: str = "printed") -> BipartiteState:
    """Truncated two-mode squeezed state shared between E and A.

    ``form="printed"`` builds the diagonal product form
    (1 - gamma^2) * sum_{n,m} gamma^(n+m) |n><n|_E (x) |m><m|_A, renormalized
    after truncation (its A marginal has photon weights proportional to
    gamma^m).  ``form="correlated"`` builds the standard pure state
    sqrt(1 - gamma^2) * sum_n gamma^n |n>_E |n>_A, whose phase average over A
    is the diagonal (1 - gamma^2) * sum_n gamma^(2n) |n,n><n,n|.

    ``dim`` must be large enough that the discarded tail is below 1e-6 of
    the trace (checked for gamma > 0); the result is renormalized so the
    remaining truncation error cannot leak into trace bookkeeping.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n = np.arange(dim)
    if gamma > 0.0:
        # tail criterion on the correlated form's Schmidt weights
        tail = gamma ** (2 * dim)
        if tail > 1e-6:
            raise ValueError(
                f"dim={dim} truncates {tail:.2e} of the trace at gamma={gamma}; "
                "increase dim")
    if form == "printed":
        weights = gamma ** n
        diag = np.outer(weights, weights).ravel()  # index k * dim + m
        rho = np.diag((1.0 - gamma ** 2) * diag).astype(complex)
        rho /= np.trace(rho).real
    elif form == "correlated":
        psi = np.zeros(dim * dim, dtype=complex)
        psi[n * dim + n] = gamma ** n
        psi /= np.linalg.norm(psi)
        rho = np.outer(psi, psi.conj())
    else:
        raise ValueError(f"unknown form {form!r}")
    return BipartiteState(dim_e=dim, dim_a=dim, rho=rho)


def random_pure_bipartite(dim_e: int, dim_a: int,
                          rng: np.random.Generator) -> BipartiteState:
    """Haar-ish random pure state |psi><psi| on E (x) A."""
    d = dim_e * dim_a
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    psi /= np.linalg.norm(psi)
    return BipartiteState(dim_e=dim_e, dim_a=dim_a, rho=np.outer(psi, psi.conj()))


def phase_average_A(state: BipartiteState, n_phases: int | None = None) -> BipartiteState:
    """Average over LO-referenced phase rotations of A.

    ``n_phases=None`` applies the exact limit: every A coherence
    ``n != m`` is zeroed.  An integer M applies the discrete average
    (1/M) sum_j U_j rho U_j^dagger with U_j = exp(1j * 2*pi*j/M * n_A),
    which kills coherences with ``n - m`` not a multiple of M and is
    therefore exact once M >= dim_a.
    """
    t = state.tensor().copy()
    if n_phases is None:
        mask = np.eye(state.dim_a)[None, :, None, :]
        t = t * mask
    else:
        if n_phases < 1:
            raise ValueError("n_phases must be >= 1")
        n = np.arange(state.dim_a)
        diff = n[:, None] - n[None, :]
        keep = (diff % n_phases) == 0
        t = t * keep[None, :, None, :]
    d = state.dim_e * state.dim_a
    return BipartiteState(state.dim_e, state.dim_a, t.reshape(d, d))


def bin_projector(dim: int, theta: float, delta: float, k: int, *,
                  nodes: int = 200) -> np.ndarray:
    """Matrix of the digitizer-bin projector on A in the truncated Fock basis.

    Element (n, m) is exp(1j*theta*(n-m)) * integral over bin k of
    psi_n(q) psi_m(q) dq, with bin k = (k*delta - delta/2, k*delta + delta/2].
    Bins outside the numerically supported window (half-width
    8 + 4*sqrt(dim)) are rejected.
    """
    if delta <= 0 or not math.isfinite(delta):
        raise ValueError("delta must be positive and finite")
    halfwidth = 8.0 + 4.0 * math.sqrt(dim)
    center = k * delta
    if abs(center) - delta / 2.0 > halfwidth:
        raise ValueError(
            f"bin {k} at |q|~{abs(center):.1f} lies outside the supported window "
            f"+-{halfwidth:.1f} for dim={dim}")
    x, w = _gl_nodes(nodes)
    pts = center - delta / 2.0 + (x + 1.0) * (delta / 2.0)
    # psi_n(q) for all n on the nodes: recurrence on the normalized functions
    psi = np.empty((dim, nodes))
    psi[0] = np.pi ** -0.25 * np.exp(-0.5 * pts * pts)
    if dim > 1:
        psi[1] = math.sqrt(2.0) * pts * psi[0]
    for j in range(2, dim):
        psi[j] = math.sqrt(2.0 / j) * pts * psi[j - 1] - math.sqrt((j - 1) / j) * psi[j - 2]
    overlap = (psi * w) @ psi.T * (delta / 2.0)
    n = np.arange(dim)
    phase = np.exp(1j * theta * (n[:, None] - n[None, :]))
    return overlap * phase


def _contract_with_projector(state: BipartiteState, proj: np.ndarray) -> np.ndarray:
    """tr_A[rho (Id_E (x) P)]: the (unnormalized) operator Eve holds."""
    return np.einsum("knlm,mn->kl", state.tensor(), proj)


def eve_reduced_path_I(state: BipartiteState, theta: float, delta: float, k: int, *,
                       nodes: int = 200) -> np.ndarray:
    """Phase-average A first, then project onto bin k at the fixed phase."""
    averaged = phase_average_A(state)
    proj = bin_projector(state.dim_a, theta, delta, k, nodes=nodes)
    return _contract_with_projector(averaged, proj)


def eve_reduced_path_II(state: BipartiteState, theta: float, delta: float, k: int, *,
                        n_phases: int | None = None, nodes: int = 200) -> np.ndarray:
    """Project onto the phase-shifted bin for M uniform phases, then average."""
    m_phases = 4 * state.dim_a if n_phases is None else int(n_phases)
    if m_phases < state.dim_a:
        raise ValueError(
            f"n_phases={m_phases} < dim_a={state.dim_a}: the discrete average "
            "would leave surviving coherences")
    acc = np.zeros((state.dim_e, state.dim_e), dtype=complex)
    for j in range(m_phases):
        phi = theta + 2.0 * math.pi * j / m_phases
        acc += _contract_with_projector(
            state, bin_projector(state.dim_a, phi, delta, k, nodes=nodes))
    return acc / m_phases


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """(1/2) * trace norm of (a - b)."""
    return 0.5 * float(np.sum(np.linalg.svd(a - b, compute_uv=False)))


@dataclass(frozen=True)
class AttackScenario:
    """Displaced-squeezed-state source controlled by the eavesdropper.

    ``r`` is the squeezing along the known quadrature; Eve draws a fresh
    displacement each round from N(0, (1 - exp(-2r))/2) so that with a
    fixed, known LO phase the outcomes are marginally exactly vacuum.
    ``lo_mode`` is "fixed" (Alice's phase known to Eve) or "uniform"
    (fresh random phase per round).  ``displaced=False`` removes the
    displacement (pure squeezed vacuum).
    """

    r: float = 1.5
    delta: float = 0.1
    lo_mode: str = "fixed"
    theta: float = 0.0
    n_rounds: int = 1_000_000
    displaced: bool = True

    def __post_init__(self):
        if not 0.0 <= self.r <= 6.0:
            raise ValueError("r must lie in [0, 6]")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.lo_mode not in ("fixed", "uniform"):
            raise ValueError(f"lo_mode must be 'fixed' or 'uniform', got {self.lo_mode!r}")
        if self.n_rounds < 10_000:
            raise ValueError("n_rounds must be >= 10000 for statistical claims")


@dataclass(frozen=True)
class AttackReport:
    """Monte-Carlo outcome of one scenario."""

    scenario: AttackScenario
    measured_variance: float
    eve_guess_rate: float
    mimicry_pvalue: float
    vacuum_guess_bound: float
    samples: np.ndarray

    def to_text(self) -> str:
        s = self.scenario
        lines = [
            f"lo_mode: {s.lo_mode}",
            f"r: {s.r!r}",
            f"delta: {s.delta!r}",
            f"displaced: {s.displaced}",
            f"n_rounds: {s.n_rounds}",
            f"measured_variance: {self.measured_variance!r}",
            f"eve_guess_rate: {self.eve_guess_rate!r}",
            f"mimicry_pvalue: {self.mimicry_pvalue!r}",
            f"vacuum_guess_bound: {self.vacuum_guess_bound!r}",
        ]
        return "\n".join(lines) + "\n"


def _bin_of(q: np.ndarray, delta: float) -> np.ndarray:
    return np.ceil(q / delta - 0.5).astype(np.int64)


def run_attack(scenario: AttackScenario, rng: np.random.Generator) -> AttackReport:
    """Simulate the scenario and report variance, guess rate and mimicry.

    Eve's guess each round is the bin holding her displacement; the guess
    succeeds when the measured outcome lands in that bin.  The mimicry
    p-value is a KS test of the outcomes against the exact vacuum CDF
    (1 + erf(q)) / 2.
    """
    n = scenario.n_rounds
    r = scenario.r
    sq_var = math.exp(-2.0 * r) / 2.0
    disp_var = (1.0 - math.exp(-2.0 * r)) / 2.0
    d = (rng.normal(0.0, math.sqrt(disp_var), n)
         if (scenario.displaced and disp_var > 0) else np.zeros(n))

    if scenario.lo_mode == "fixed":
        mean = d
        var = np.full(n, sq_var)
    else:
        theta = rng.uniform(0.0, 2.0 * math.pi, n)
        mean = d * np.cos(theta)
        var = (np.exp(-2.0 * r) * np.cos(theta) ** 2
               + np.exp(2.0 * r) * np.sin(theta) ** 2) / 2.0
    q = mean + rng.normal(0.0, 1.0, n) * np.sqrt(var)

    guesses = _bin_of(d, scenario.delta)
    outcomes = _bin_of(q, scenario.delta)
    guess_rate = float(np.mean(guesses == outcomes))
    ks = _stats.kstest(q, lambda v: 0.5 * (1.0 + _erf(v)))
    return AttackReport(
        scenario=scenario,
        measured_variance=float(np.var(q)),
        eve_guess_rate=guess_rate,
        mimicry_pvalue=float(ks.pvalue),
        vacuum_guess_bound=math.erf(scenario.delta / 2.0),
        samples=q)
