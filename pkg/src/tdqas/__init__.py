"""Topology-driven quantum architecture search laboratory."""
