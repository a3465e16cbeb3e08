"""Per-link allocation core for priority-class bandwidth allocation models.

Admission, release, devolution (preemption of borrower grants), and
exhaustion detection over an exact integer ledger. Three sharing models
are supported:

* MAM  - classes are isolated, no cross-class sharing;
* RDM  - a class may additionally draw unused public units from classes of
         higher priority;
* ATCS - a class may draw unused public units from every other class.

Each class pool splits into a private part, reserved for the class's own
requests, and a public part that the active model may lend out. A grant
either covers the full demand or is refused; partially filled requests are
never committed.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

from .errors import UnknownRequestError


class Model(Enum):
    MAM = "mam"
    RDM = "rdm"
    ATCS = "atcs"


@dataclass(frozen=True)
class BamPolicy:
    """Sharing model plus whether devolution may revoke borrower grants.

    ``preemption_enabled`` only matters for RDM/ATCS; MAM has no borrowers
    to preempt.
    """

    model: Model
    preemption_enabled: bool = False


@dataclass
class ResourceClass:
    """One priority-ranked capacity pool on a directed link.

    ``priority`` 0 is the highest priority; the ordering across a link's
    classes must be strict. ``private`` units are reserved for the class's
    own requests, the remaining ``public`` units may be lent out.
    """

    index: int
    priority: int
    constraint: int
    private: int = 0

    def __post_init__(self):
        if self.constraint < 0:
            raise ValueError(f"class {self.index}: negative constraint")
        if not 0 <= self.private <= self.constraint:
            raise ValueError(f"class {self.index}: private units must lie in [0, constraint]")

    @property
    def public(self) -> int:
        return self.constraint - self.private


def check_classes(classes: Sequence[ResourceClass]) -> None:
    """Reject duplicate class indices and non-strict priority orderings."""
    indices = [c.index for c in classes]
    if len(set(indices)) != len(indices):
        raise ValueError("duplicate class index")
    priorities = [c.priority for c in classes]
    if len(set(priorities)) != len(priorities):
        raise ValueError("class priorities must be strictly ordered (no ties)")


@dataclass(frozen=True)
class Request:
    """A class-tagged demand against one directed link."""

    request_id: str
    class_index: int
    demand: int
    link: tuple[str, str] | None = None
    hold: int | None = None

    def __post_init__(self):
        if self.demand <= 0:
            raise ValueError(f"request {self.request_id!r}: demand must be positive")


@dataclass(frozen=True)
class Draw:
    """Units taken from one donor pool, split by partition."""

    private: int = 0
    public: int = 0

    @property
    def total(self) -> int:
        return self.private + self.public


@dataclass(frozen=True)
class Grant:
    """A committed allocation: full demand, decomposed per donor pool.

    ``breakdown`` maps donor class index to the units drawn from that pool.
    Private units can only appear under the request's own class.
    """

    request_id: str
    class_index: int
    demand: int
    breakdown: dict[int, Draw]
    seq: int = 0

    def donor_totals(self) -> dict[int, int]:
        return {z: d.total for z, d in self.breakdown.items()}

    def borrowed_from(self, owner: int) -> int:
        """Public units of ``owner``'s pool held by this grant, if foreign."""
        if owner == self.class_index:
            return 0
        draw = self.breakdown.get(owner)
        return draw.public if draw else 0


DENIAL_INSUFFICIENT = "insufficient"
DENIAL_UNKNOWN_CLASS = "unknown_class"
DENIAL_EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class ClassUsage:
    """Per-class usage snapshot at one instant."""

    index: int
    constraint: int
    attributed_used: int
    free_private: int
    free_public: int


@dataclass(frozen=True)
class ExhaustionEvent:
    """Emitted when no admission path (own, borrowed, devolved) exists.

    ``recent_denials`` is a per-class 0/1 vector of denials observed since
    the last manager invocation; it is filled in by the simulator, the
    engine itself leaves it empty.
    """

    link: tuple[str, str] | None
    request: Request
    snapshot: tuple[ClassUsage, ...]
    recent_denials: tuple[int, ...] = ()


@dataclass(frozen=True)
class Denial:
    reason: str
    shortfall: int = 0
    event: ExhaustionEvent | None = None


@dataclass(frozen=True)
class PreemptionReport:
    """Whole-grant revocations performed to reclaim an owner's lent units."""

    victims: tuple[str, ...]
    freed: int


@dataclass(frozen=True)
class DevolutionFailure:
    """Not enough of the owner's pool is lent out to cover the need."""

    available: int


@dataclass(frozen=True)
class Admission:
    """Successful outcome of the devolution-aware admission path."""

    grant: Grant
    preemption: PreemptionReport | None = None


class AllocationLedger:
    """Authoritative per-direction accounting of active grants.

    Keeps, per class pool, how many private and public units are in use and
    by whom. Every derived figure is reproducible by folding the active
    grants; the test suite checks that identity after each operation.

    A ledger is a single-writer state machine: mutations must be serialized,
    read-only queries may run concurrently between mutations.
    """

    def __init__(self, link: tuple[str, str] | None = None):
        self.link = link
        self._grants: dict[str, Grant] = {}
        # pool owner -> private units used (only ever by the owner class)
        self._pri_used: dict[int, int] = {}
        # pool owner -> user class -> public units used
        self._pub_used: dict[int, dict[int, int]] = {}
        self._seq = 0

    def __len__(self) -> int:
        return len(self._grants)

    def __contains__(self, request_id: str) -> bool:
        return request_id in self._grants

    def get(self, request_id: str) -> Grant | None:
        return self._grants.get(request_id)

    def active(self) -> Iterator[Grant]:
        """Active grants in admission order."""
        return iter(self._grants.values())

    # -- derived figures ------------------------------------------------

    def private_used(self, class_index: int) -> int:
        return self._pri_used.get(class_index, 0)

    def public_used(self, class_index: int) -> int:
        return sum(self._pub_used.get(class_index, {}).values())

    def attributed_used(self, class_index: int) -> int:
        """Units of this class's pool in use, whoever drew them."""
        return self.private_used(class_index) + self.public_used(class_index)

    def own_used(self, class_index: int) -> int:
        """Units the class consumed from its own pool."""
        own_pub = self._pub_used.get(class_index, {}).get(class_index, 0)
        return self.private_used(class_index) + own_pub

    def borrowed(self, user: int, owner: int) -> int:
        """Public units of ``owner``'s pool held by class ``user``."""
        if user == owner:
            return 0
        return self._pub_used.get(owner, {}).get(user, 0)

    def lent_out(self, owner: int) -> int:
        """Public units of ``owner``'s pool held by other classes."""
        by_user = self._pub_used.get(owner, {})
        return sum(units for user, units in by_user.items() if user != owner)

    def free_private(self, cfg: ResourceClass) -> int:
        return cfg.private - self.private_used(cfg.index)

    def free_public(self, cfg: ResourceClass) -> int:
        return cfg.public - self.public_used(cfg.index)

    # -- mutation primitives (module functions drive these) -------------

    def clone(self) -> "AllocationLedger":
        """Independent copy; grant objects are immutable and shared."""
        other = AllocationLedger(self.link)
        other._grants = dict(self._grants)
        other._pri_used = dict(self._pri_used)
        other._pub_used = {owner: dict(users) for owner, users in self._pub_used.items()}
        other._seq = self._seq
        return other

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def apply(self, grant: Grant) -> None:
        self._grants[grant.request_id] = grant
        for owner, draw in grant.breakdown.items():
            if draw.private:
                self._pri_used[owner] = self.private_used(owner) + draw.private
            if draw.public:
                per_user = self._pub_used.setdefault(owner, {})
                per_user[grant.class_index] = per_user.get(grant.class_index, 0) + draw.public

    def remove(self, request_id: str) -> Grant:
        if request_id not in self._grants:
            raise UnknownRequestError(request_id)
        grant = self._grants.pop(request_id)
        for owner, draw in grant.breakdown.items():
            if draw.private:
                self._pri_used[owner] -= draw.private
            if draw.public:
                self._pub_used[owner][grant.class_index] -= draw.public
        return grant


def _donor_order(classes: Sequence[ResourceClass], cfg: ResourceClass, policy: BamPolicy) -> list[ResourceClass]:
    """Donor pools for a request of class ``cfg``, highest priority first."""
    if policy.model is Model.MAM:
        donors: list[ResourceClass] = []
    elif policy.model is Model.RDM:
        donors = [c for c in classes if c.priority < cfg.priority]
    else:
        donors = [c for c in classes if c.index != cfg.index]
    return sorted(donors, key=lambda c: c.priority)


def _find_class(classes: Sequence[ResourceClass], index: int) -> ResourceClass | None:
    for c in classes:
        if c.index == index:
            return c
    return None


def usage_snapshot(ledger: AllocationLedger, classes: Sequence[ResourceClass]) -> tuple[ClassUsage, ...]:
    return tuple(
        ClassUsage(
            index=c.index,
            constraint=c.constraint,
            attributed_used=ledger.attributed_used(c.index),
            free_private=ledger.free_private(c),
            free_public=ledger.free_public(c),
        )
        for c in sorted(classes, key=lambda c: c.index)
    )


def admit(
    ledger: AllocationLedger,
    classes: Sequence[ResourceClass],
    policy: BamPolicy,
    request: Request,
) -> Grant | Denial:
    """Admit a request or refuse it whole.

    Units are drawn in a fixed order: the request class's private pool,
    then its public pool, then donor classes' free public pools in
    descending priority order. The donor set depends on the policy model.
    On a shortfall nothing is committed and the denial carries the number
    of units that could not be covered.
    """
    cfg = _find_class(classes, request.class_index)
    if cfg is None:
        return Denial(DENIAL_UNKNOWN_CLASS)

    remaining = request.demand
    breakdown: dict[int, Draw] = {}

    own_pri = min(remaining, ledger.free_private(cfg))
    remaining -= own_pri
    own_pub = min(remaining, ledger.free_public(cfg))
    remaining -= own_pub
    if own_pri or own_pub:
        breakdown[cfg.index] = Draw(private=own_pri, public=own_pub)

    for donor in _donor_order(classes, cfg, policy):
        if remaining == 0:
            break
        take = min(remaining, ledger.free_public(donor))
        if take > 0:
            breakdown[donor.index] = Draw(public=take)
            remaining -= take

    if remaining > 0:
        return Denial(DENIAL_INSUFFICIENT, shortfall=remaining)

    grant = Grant(
        request_id=request.request_id,
        class_index=request.class_index,
        demand=request.demand,
        breakdown=breakdown,
        seq=ledger.next_seq(),
    )
    ledger.apply(grant)
    return grant


def release(ledger: AllocationLedger, request_id: str) -> Grant:
    """Return a grant's full breakdown to its pools.

    Raises:
        UnknownRequestError: no active grant has this id.
    """
    return ledger.remove(request_id)


def devolve(
    ledger: AllocationLedger,
    classes: Sequence[ResourceClass],
    owner_class: int,
    needed_units: int,
) -> PreemptionReport | DevolutionFailure:
    """Reclaim lent-out units of ``owner_class`` by revoking borrower grants.

    Victims are revoked whole, lowest-priority borrower class first, most
    recent grant first within a class, until at least ``needed_units`` of
    the owner's pool are freed. If the owner's total lent-out units cannot
    cover the need, nothing is revoked.
    """
    if needed_units <= 0:
        raise ValueError("needed_units must be positive")

    borrowers = [g for g in ledger.active() if g.borrowed_from(owner_class) > 0]
    available = sum(g.borrowed_from(owner_class) for g in borrowers)
    if available < needed_units:
        return DevolutionFailure(available=available)

    priority = {c.index: c.priority for c in classes}
    borrowers.sort(key=lambda g: (-priority[g.class_index], -g.seq))

    freed = 0
    victims: list[str] = []
    for grant in borrowers:
        if freed >= needed_units:
            break
        ledger.remove(grant.request_id)
        victims.append(grant.request_id)
        freed += grant.borrowed_from(owner_class)
    return PreemptionReport(victims=tuple(victims), freed=freed)


def admit_with_devolution(
    ledger: AllocationLedger,
    classes: Sequence[ResourceClass],
    policy: BamPolicy,
    request: Request,
) -> Admission | Denial:
    """Admission that may reclaim the request class's lent-out units.

    Tries a plain admission first. On a shortfall with preemption enabled,
    devolves the shortfall from the request's own pool and admits again
    (the retry may still combine reclaimed units with donor public units).
    A denial from this path means the link is exhausted for this request
    and carries a usage snapshot.
    """
    result = admit(ledger, classes, policy, request)
    if isinstance(result, Grant):
        return Admission(grant=result)
    if result.reason == DENIAL_UNKNOWN_CLASS:
        return result

    if policy.preemption_enabled:
        outcome = devolve(ledger, classes, request.class_index, result.shortfall)
        if isinstance(outcome, PreemptionReport):
            retry = admit(ledger, classes, policy, request)
            if not isinstance(retry, Grant):
                raise RuntimeError(
                    f"devolution freed {outcome.freed} units but re-admission still "
                    f"fell short by {retry.shortfall}"
                )
            return Admission(grant=retry, preemption=outcome)

    event = ExhaustionEvent(
        link=ledger.link,
        request=request,
        snapshot=usage_snapshot(ledger, classes),
    )
    return Denial(DENIAL_EXHAUSTED, shortfall=result.shortfall, event=event)


def attributed_usage(ledger: AllocationLedger, classes: Sequence[ResourceClass]) -> dict[int, int]:
    """Units of each class's pool in use, whoever drew them."""
    return {c.index: ledger.attributed_used(c.index) for c in classes}


def allocations_by_class(
    ledger: AllocationLedger, classes: Sequence[ResourceClass]
) -> dict[int, list[tuple[str, dict[int, int]]]]:
    """Active allocations grouped by requesting class.

    For each class, the list of ``(request_id, donor totals)`` pairs in
    admission order. Summing the donor totals over all requests reproduces
    :func:`attributed_usage`.
    """
    view: dict[int, list[tuple[str, dict[int, int]]]] = {c.index: [] for c in classes}
    for grant in ledger.active():
        view[grant.class_index].append((grant.request_id, grant.donor_totals()))
    return view


def is_exhausted(
    ledger: AllocationLedger,
    classes: Sequence[ResourceClass],
    policy: BamPolicy,
    probe_demand: int,
    probe_class: int,
) -> bool:
    """Would a probe request be refused even with devolution? Pure check."""
    if probe_demand <= 0:
        raise ValueError("probe_demand must be positive")
    scratch = ledger.clone()
    probe = Request(request_id="__probe__", class_index=probe_class, demand=probe_demand)
    result = admit_with_devolution(scratch, classes, policy, probe)
    return isinstance(result, Denial)
