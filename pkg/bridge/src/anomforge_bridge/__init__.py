"""In-process bindings for the anomforge volume engine.

Exposes corrupt / detect / randomize / encode over float32 buffer handles,
plus version and config-schema introspection. See :mod:`.binding` for the
calling conventions and :mod:`.handles` for the buffer contract.
"""

from .binding import (
    bind_corrupt,
    bind_detect,
    bind_encode,
    bind_randomize,
    config_schema,
    version,
)
from .handles import (
    ArrayHandle,
    BridgeError,
    BufferDtypeError,
    BufferLayoutError,
    DimsMismatchError,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayHandle",
    "BridgeError",
    "BufferDtypeError",
    "BufferLayoutError",
    "DimsMismatchError",
    "bind_corrupt",
    "bind_detect",
    "bind_encode",
    "bind_randomize",
    "config_schema",
    "version",
    "__version__",
]
