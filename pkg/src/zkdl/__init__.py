"""Zero-knowledge proofs of fixed-point MLP training.

Layers, bottom up: field / group arithmetic, multilinear tensors,
Fiat-Shamir transcript, square-root tensor commitments, batched sumchecks,
the bit-decomposition (ReLU and rescale) gadget, the integer trainer, and
the window-by-window orchestrator with its bundle format.
"""

__version__ = "0.1.0"
