"""Synchronous data-parallel SGD under parameter-server, peer-to-peer and
ring-allreduce coordination, over a simulated network or real TCP, together
with the closed-form epoch-time model used to predict and compare them."""

__version__ = "0.1.0"
