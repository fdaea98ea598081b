# MCP tool modules; importing one registers its tools on server.mcp.
