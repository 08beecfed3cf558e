"""Conformal OOD detection with equivariance-based nonconformity scores."""
