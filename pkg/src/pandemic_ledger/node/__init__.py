"""The running service: HTTP API, authority writes, replica replication."""
