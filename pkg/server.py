"""
Configure the FastMCP server instance.

This module creates the shared ``FastMCP`` server named
``power_contribution`` and imports the tool modules so that their
decorated functions are registered on it.

You typically do not run this module directly.  Use ``python main.py``,
which imports the server and calls ``mcp.run()``.
"""

from __future__ import annotations

try:
    from mcp.server.fastmcp import FastMCP  # type: ignore[attr-defined]
except ImportError as e:
    raise ImportError(
        "Failed to import FastMCP. Install the MCP SDK with `pip install \"mcp[cli]\"`."
    ) from e


# Create the shared MCP server instance.
mcp = FastMCP("power_contribution")


# Tool modules register their tools and prompts via decorators on
# import.  Absolute imports keep this working from the repository root.
# pylint: disable=unused-import
from tools import model_tools  # noqa: F401,E402
from tools import contribution_tools  # noqa: F401,E402
from tools import simulation_tools  # noqa: F401,E402
from tools import prompts  # noqa: F401,E402
