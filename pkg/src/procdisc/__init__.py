"""Optimal discrimination of quantum processes (combs) with certified conic programming."""
