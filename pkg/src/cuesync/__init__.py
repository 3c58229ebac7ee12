"""Hand-preceding model, stream re-synchronisation and multi-stream HMM decoding
for asynchronous lips/hand feature fusion."""

__version__ = "0.1.0"
