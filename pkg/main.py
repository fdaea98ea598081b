"""
Entry point for running the power contribution MCP server.

Run this module directly.  It imports the shared server instance from
``server.py`` and calls its ``run()`` method.  An MCP client
configuration typically looks like::

    "command": "python",
    "args": ["main.py"]

The server blocks until the client terminates it.  For batch runs use
the command line front end in ``cli.py`` instead.
"""

from __future__ import annotations

import logging

from server import mcp  # type: ignore


if __name__ == "__main__":
    # stdout carries the MCP protocol; keep log output on stderr
    logging.basicConfig(level=logging.INFO)
    logging.getLogger(__name__).info("starting power contribution MCP server")
    mcp.run()
