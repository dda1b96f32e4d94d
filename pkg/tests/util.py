"""Shared fixtures for integration-level tests and the acceptance suite."""

import numpy as np

from vld.config import parse_config
from vld.losses import total_loss
from vld.rng import Rng
from vld.train import TrainingHeads, build_model, compute_losses

# Smallest config that exercises every mechanism: hub active in both layers,
# prompts with prefix+suffix template, two identities in both modalities.
E2E_TEXT = """
data.train_identities = 2
data.test_identities = 2
data.tracklets_per_identity = 1
data.frames = 2
data.image_h = 4
data.image_w = 4
encoder.patch = 2
encoder.dim = 8
encoder.depth = 2
encoder.heads = 2
stp.insertion_layer = 0
imlp.tokens = 2
imlp.template = 2
"""


def tiny_e2e_problem(seed: int = 1):
    """(named params, loss closure) for a full five-part objective on a
    2-identity micro-batch."""
    cfg = parse_config(E2E_TEXT)
    rng = Rng(seed)
    model = build_model(cfg, rng.split("init"))
    heads = TrainingHeads(cfg, 2, rng.split("init"))
    frames = Rng(seed + 100).uniform((4, 2, 4, 4, 3))
    labels = np.array([0, 0, 1, 1])
    weights = cfg.loss_weights()

    def build_loss():
        parts = compute_losses(cfg, model, heads, frames, labels)
        return total_loss(parts["id_cls"], parts["wrt_cls"], parts["v2t"],
                          parts["id_hub"], parts["wrt_hub"], weights)

    params = list(model.named_parameters()) + list(heads.named_parameters())
    return params, build_loss
