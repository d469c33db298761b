"""Python bindings for the beamgrid simulator and metrics."""

from ._beamgrid import (
    BeamgridError,
    ce_loss,
    evaluate_geometric,
    evaluate_oracle,
    generate_city,
    place_tx,
    softmax,
    tensorize,
    ws_loss,
)

__all__ = [
    "BeamgridError",
    "ce_loss",
    "evaluate_geometric",
    "evaluate_oracle",
    "generate_city",
    "place_tx",
    "softmax",
    "tensorize",
    "ws_loss",
]
