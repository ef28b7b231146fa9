"""Multi-tier functional-reactive runtime for client/server programs.

One program graph spans three tiers — client, session, application — and is
executed by twin engines joined by an atomic-batch wire protocol: updates
that happen together in one propagation cycle cross the network together and
are applied together. Incremental values ship deltas instead of whole
states, new clients are bootstrapped automatically, and the transport mode
(request/response versus WebSocket) is inferred from the graph at startup.
"""

from .clients import ClientToken, Connected, Disconnected, apply_client_change
from .codecs import (
    BOOL,
    CLIENT,
    CLIENT_CHANGE,
    FLOAT,
    INT,
    JSON,
    STR,
    UNIT,
    Codec,
    CodecError,
    CodecRegistry,
    list_of,
    map_of,
    optional_of,
    record_of,
    set_of,
    standard_registry,
    tuple_of,
    variant_of,
)
from .core import SERVER_DEST, CycleResult, Engine, EngineError, FireResult
from .graph import GraphBuilder, GraphError, ProgramGraph, Tier
from .modes import (
    BIDIRECTIONAL,
    REQUEST_RESPONSE,
    VERDICT_WEBSOCKET,
    VERDICT_XHR,
    ModeAssertionError,
    ModeReport,
    check_xhr_asserts,
    infer_modes,
)
from .reference import reference_eval
from .wire import (
    Batch,
    BootstrapPayload,
    MalformedFrame,
    OversizeFrame,
    PayloadError,
    UnknownNode,
    WireError,
    WireMessage,
    decode_batch,
    decode_bootstrap,
    encode_batch,
    encode_bootstrap,
)

__version__ = "0.1.0"
