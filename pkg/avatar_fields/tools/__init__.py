"""Single-job tools: one module per CLI command, each exposing run(...)."""
