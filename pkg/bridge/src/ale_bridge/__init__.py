"""Child-process adapter serving an Atari emulator over the SCP1 wire protocol."""

from .server import BridgeConfig, serve_bridge

__all__ = ["BridgeConfig", "serve_bridge"]
