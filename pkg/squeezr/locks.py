"""Lock channels of the squeezer and the dependency graph between them.

The four feedback loops form a chain: the OPA length lock needs pump light
from the locked SHG, the pump/CSF phase lock (B) needs a resonant OPA, and the
CSF/LO phase lock (C) needs B. The chain is stored as a networkx DAG so that
prerequisites, cascades and engage order are all graph queries.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from enum import Enum

import networkx as nx

from squeezr._utils import unknown_option_message


class ChannelId(str, Enum):
    SHG_LENGTH = "ShgLength"
    OPA_LENGTH = "OpaLength"
    PUMP_CSF_OFFSET = "PumpCsfOffset"
    CSF_LO_OFFSET = "CsfLoOffset"

    @classmethod
    def parse(cls, name: str | ChannelId) -> ChannelId:
        """Look up a channel by value, enum name or the B / C shorthand."""
        if isinstance(name, ChannelId):
            return name
        aliases = {
            "B": cls.PUMP_CSF_OFFSET,
            "C": cls.CSF_LO_OFFSET,
            "SHG": cls.SHG_LENGTH,
            "OPA": cls.OPA_LENGTH,
        }
        for channel in cls:
            aliases[channel.value] = channel
            aliases[channel.name] = channel
        if name in aliases:
            return aliases[name]
        raise ValueError(unknown_option_message("lock channel", name, aliases))

    @property
    def short(self) -> str:
        return _SHORT_NAMES[self]


_SHORT_NAMES = {
    ChannelId.SHG_LENGTH: "SHG",
    ChannelId.OPA_LENGTH: "OPA",
    ChannelId.PUMP_CSF_OFFSET: "B",
    ChannelId.CSF_LO_OFFSET: "C",
}


class LockStatus(str, Enum):
    DISENGAGED = "Disengaged"
    ACQUIRING = "Acquiring"
    LOCKED = "Locked"


@dataclass(frozen=True)
class LockChannel:
    """Snapshot of one feedback loop.

    ``remaining`` is the acquisition dead time left and is only meaningful
    while the channel is Acquiring.
    """

    identifier: ChannelId
    status: LockStatus = LockStatus.DISENGAGED
    remaining: float = 0.0
    actuator_offset: float = 0.0

    @property
    def locked(self) -> bool:
        return self.status is LockStatus.LOCKED

    @property
    def engaged(self) -> bool:
        return self.status is not LockStatus.DISENGAGED


DEFAULT_DEPENDENCIES: tuple[tuple[ChannelId, ChannelId], ...] = (
    (ChannelId.SHG_LENGTH, ChannelId.OPA_LENGTH),
    (ChannelId.OPA_LENGTH, ChannelId.PUMP_CSF_OFFSET),
    (ChannelId.PUMP_CSF_OFFSET, ChannelId.CSF_LO_OFFSET),
)


class LockChain:
    """Dependency DAG of the lock channels.

    An edge ``a -> b`` means channel ``b`` can only lock while ``a`` is
    locked, and losing ``a`` drops ``b``.

    Example:
        >>> chain = LockChain()
        >>> [c.short for c in chain.dependents(ChannelId.OPA_LENGTH)]
        ['B', 'C']
    """

    def __init__(
        self,
        dependencies: Iterable[tuple[ChannelId, ChannelId]] = DEFAULT_DEPENDENCIES,
    ):
        self._nx_graph = nx.DiGraph()
        self._nx_graph.add_nodes_from(ChannelId)
        for upstream, downstream in dependencies:
            self._nx_graph.add_edge(upstream, downstream)
            if not nx.is_directed_acyclic_graph(self._nx_graph):
                raise ValueError(
                    f"Dependency {upstream.short} -> {downstream.short} "
                    "would create a cycle in the lock chain"
                )
        self._order = list(nx.topological_sort(self._nx_graph))
        self._rank = {channel: i for i, channel in enumerate(self._order)}
        self._prerequisites = {
            channel: self._sorted(nx.ancestors(self._nx_graph, channel))
            for channel in self._order
        }
        self._direct = {
            channel: tuple(self._sorted(self._nx_graph.predecessors(channel)))
            for channel in self._order
        }
        self._dependents = {
            channel: self._sorted(nx.descendants(self._nx_graph, channel))
            for channel in self._order
        }

    def _sorted(self, channels: Iterable[ChannelId]) -> list[ChannelId]:
        return sorted(channels, key=lambda c: self._rank[c])

    def engage_order(self) -> list[ChannelId]:
        """Channels in an order where every prerequisite comes first."""
        return list(self._order)

    def teardown_order(self) -> list[ChannelId]:
        return list(reversed(self._order))

    def prerequisites(self, channel: ChannelId) -> list[ChannelId]:
        """All channels that must be Locked before ``channel`` can lock."""
        return list(self._prerequisites[channel])

    def direct_prerequisites(self, channel: ChannelId) -> tuple[ChannelId, ...]:
        return self._direct[channel]

    def dependents(self, channel: ChannelId) -> list[ChannelId]:
        """Channels that are dropped when ``channel`` is lost."""
        return list(self._dependents[channel])

    def missing_prerequisites(
        self, channel: ChannelId, status: dict[ChannelId, LockStatus]
    ) -> list[ChannelId]:
        return [
            upstream
            for upstream in self._prerequisites[channel]
            if status[upstream] is not LockStatus.LOCKED
        ]

    def is_consistent(self, status: dict[ChannelId, LockStatus]) -> bool:
        """True iff no channel is Locked while one of its prerequisites is not."""
        return all(
            not self.missing_prerequisites(channel, status)
            for channel in self._order
            if status[channel] is LockStatus.LOCKED
        )

    def __repr__(self):
        chain = " -> ".join(c.short for c in self._order)
        return f"LockChain({chain})"
