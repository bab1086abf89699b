"""Reference server for the remote-policy wire protocol, version "1".

Implements POST /decide and GET /health with stub decision backends and a
documented hook for plugging in an external model.  Stateless by design:
identical requests produce identical responses.
"""

__version__ = "0.1.0"

PROTOCOL_VERSION = "1"
