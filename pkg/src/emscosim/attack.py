"""Construction and verification of stealthy data-attack vectors.

A false-data injection a = Hc shifts the estimated state by exactly c while
leaving the residual untouched; a combined attack additionally marks
measurements unavailable (binary d) and uses a = (I - diag(d)) H c.  The
corrupted measurement vector seen by the EMS is z_a = (I - diag(d)) z + a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimation import wls_estimate
from .exceptions import AttackError, ContractError
from .grid import MeasurementVector, check_observability

_ZERO_RTOL = 1e-9


@dataclass(frozen=True)
class AttackSpec:
    c: np.ndarray                  # state perturbation (n)
    a: np.ndarray                  # injection vector (m), per-unit
    d: np.ndarray                  # availability vector (m), bool
    target_measurement: int
    magnitude: float               # mu = a[target]
    compromised_nodes: tuple[str, ...] = ()
    compromised_links: tuple[str, ...] = ()
    start_time: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        a = np.asarray(self.a, dtype=float)
        d = np.asarray(self.d).astype(bool)
        if a.shape != d.shape:
            raise ContractError("a and d must have the same length")
        if self.magnitude == 0.0:
            raise AttackError("attack magnitude mu must be nonzero")
        if a[self.target_measurement] != self.magnitude:
            raise AttackError("a(j) must equal mu at the target measurement")
        if np.any(d & (a != 0.0)):
            raise AttackError("d(i)=1 requires a(i)=0 (cannot tamper a dropped row)")
        for arr, name in ((c, "c"), (a, "a"), (d, "d")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "compromised_nodes", tuple(self.compromised_nodes))
        object.__setattr__(self, "compromised_links", tuple(self.compromised_links))

    def validate(self, h: np.ndarray, atol: float | None = None) -> None:
        """Check the stealth structure against a model matrix."""
        if atol is None:
            atol = _ZERO_RTOL * (1.0 + float(np.max(np.abs(self.a))))
        expect = h @ self.c
        expect[self.d] = 0.0
        if np.max(np.abs(self.a - expect)) > atol:
            raise AttackError("a != (I - diag(d)) H c")
        if not check_observability(h, ~self.d):
            raise AttackError("availability pattern d makes the system unobservable")

    @property
    def support(self) -> set[int]:
        """Measurements the attack touches (nonzero a or dropped)."""
        return set(np.flatnonzero(self.a != 0.0)) | set(np.flatnonzero(self.d))


def build_stealth_fdi(h: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Pure FDI vector a = H c (hidden from the residual test by construction)."""
    return np.asarray(h, dtype=float) @ np.asarray(c, dtype=float)


def build_combined(h: np.ndarray, c: np.ndarray, d: np.ndarray,
                   target: int | None = None, start_time: float = 0.0,
                   nodes=(), links=()) -> AttackSpec:
    """Combined attack a = (I - diag(d)) H c as an AttackSpec.

    Raises AttackError when the availability pattern destroys observability
    or the resulting injection vector is identically zero.
    """
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    d = np.asarray(d).astype(bool)
    if not check_observability(h, ~d):
        raise AttackError("removing the rows in d makes the system unobservable")
    a = h @ c
    a[d] = 0.0
    if target is None:
        target = int(np.argmax(np.abs(a)))
    if a[target] == 0.0:
        raise AttackError("attack vector is zero at the target (pick a nonzero c)")
    return AttackSpec(c=c, a=a, d=d, target_measurement=int(target),
                      magnitude=float(a[target]), compromised_nodes=tuple(nodes),
                      compromised_links=tuple(links), start_time=start_time)


def apply_attack(z: MeasurementVector, spec: AttackSpec) -> MeasurementVector:
    """Corrupted measurements z_a = (I - diag(d)) z + a, availability cleared
    where d = 1."""
    if len(z) != spec.a.shape[0]:
        raise ContractError("attack vector length does not match z")
    values = np.where(spec.d, 0.0, z.values) + spec.a
    available = z.available & ~spec.d
    return MeasurementVector(values, available, z.timestamp)


def attack_via_nodes(h: np.ndarray, routing, nodes, target: int, mu: float,
                     start_time: float = 0.0) -> AttackSpec:
    """Resolve a stealth attack launched from a set of compromised routers.

    Finds c such that H c vanishes on every measurement not routed through
    the given nodes and equals mu on the target.  Raises AttackError when no
    such attack exists from this vantage point.
    """
    from .netgraph import measurements_through

    h = np.asarray(h, dtype=float)
    if mu == 0.0:
        raise AttackError("mu must be nonzero")
    reachable: set[int] = set()
    for node in nodes:
        reachable |= measurements_through(routing, node)
    if target not in reachable:
        raise AttackError(f"target measurement {target} is not routed through {tuple(nodes)}")
    m = h.shape[0]
    outside = sorted(set(range(m)) - reachable)
    A = np.vstack([h[outside], h[target:target + 1]])
    b = np.zeros(len(outside) + 1)
    b[-1] = mu
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.max(np.abs(A @ c - b)) > 1e-8 * abs(mu):
        raise AttackError(
            f"no stealth attack on measurement {target} is feasible through {tuple(nodes)}")
    a = h @ c
    a[np.abs(a) < _ZERO_RTOL * abs(mu)] = 0.0
    a[target] = mu  # pin the commanded magnitude exactly
    return AttackSpec(c=c, a=a, d=np.zeros(m, dtype=bool), target_measurement=int(target),
                      magnitude=float(mu), compromised_nodes=tuple(nodes),
                      start_time=start_time)


def is_stealthy(h: np.ndarray, sigmas: np.ndarray, x_true: np.ndarray,
                spec: AttackSpec, significance: float = 0.05, trials: int = 200,
                seed: int = 0) -> bool:
    """Empirical stealth test.

    Runs seeded Monte-Carlo noise trials and compares the BDD alarm rate
    under the attack against the no-attack rate at the same significance;
    stealthy iff the rates differ by at most 0.02.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    h = np.asarray(h, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if not check_observability(h, ~spec.d):
        raise AttackError("availability pattern d makes the system unobservable")
    m = h.shape[0]
    rng = np.random.default_rng(seed)
    alarms_clean = 0
    alarms_attacked = 0
    ones = np.ones(m, dtype=bool)
    for _ in range(trials):
        z = MeasurementVector(h @ x_true + sigmas * rng.standard_normal(m), ones)
        za = apply_attack(z, spec)
        alarms_clean += wls_estimate(h, z, sigmas, significance).bdd_alarm
        alarms_attacked += wls_estimate(h, za, sigmas, significance).bdd_alarm
    return abs(alarms_attacked - alarms_clean) / trials <= 0.02
