"""Connection identity: tokens for live connections and their lifecycle changes.

A token is an opaque server-assigned string naming one live connection. It is
the key under which session state is replicated and the key of every
session-to-application map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

ClientToken = str


@dataclass(frozen=True)
class Connected:
    client: ClientToken


@dataclass(frozen=True)
class Disconnected:
    client: ClientToken


ClientChange = Union[Connected, Disconnected]


def apply_client_change(live: frozenset, change: ClientChange) -> frozenset:
    """Fold function for the live-client set."""
    if isinstance(change, Connected):
        return live | {change.client}
    if isinstance(change, Disconnected):
        return live - {change.client}
    raise TypeError(f"not a client change: {change!r}")
