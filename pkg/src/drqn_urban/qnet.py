"""The stacked-LSTM Q-network: three ReLU convs over the 45x30x4 grid, two
256-unit LSTMs (the second also sees speed + previous action), a 256-unit ReLU
layer and a linear head with one Q-value per behavior."""
from __future__ import annotations

import numpy as np

from .nn import LSTM, Conv2D, Dense, Network

GRID_SHAPE = (45, 30, 4)
N_ACTIONS = 4
AUX_DIM = 1 + N_ACTIONS

TABLE1_LAYERS = (
    Conv2D(kernel=(8, 6), stride=(4, 4), filters=32, activation="relu"),
    Conv2D(kernel=(4, 3), stride=(3, 3), filters=64, activation="relu"),
    Conv2D(kernel=(2, 2), stride=(2, 2), filters=64, activation="relu"),
    LSTM(256),
    LSTM(256, concat_aux=True),
    Dense(256, activation="relu"),
    Dense(N_ACTIONS, activation="linear"),
)


def build_qnetwork(rng=None, dtype=np.float32, layers=TABLE1_LAYERS, grid_shape=GRID_SHAPE):
    return Network(grid_shape, layers, aux_dim=AUX_DIM, dtype=dtype, rng=rng)


def qnet_forward(net: Network, obs, aux, hidden=None):
    """Single-step greedy evaluation.

    ``obs`` is one ``(45, 30, 4)`` grid, ``aux`` the 5-vector. Returns the four
    Q-values and the updated recurrent state.
    """
    obs = np.asarray(obs)
    if obs.shape != net.input_shape:
        raise ValueError(f"observation must be {net.input_shape}, got {obs.shape}")
    q, state, _ = net.forward(obs[None, None], np.asarray(aux)[None, None], hidden, record=False)
    return q[0, 0], state


def shape_trace(net: Network):
    """Per-sample output shape of every layer, input first."""
    trace = [net.input_shape]
    for spec, shape in zip(net.specs, net.shapes):
        if isinstance(spec, LSTM) and spec.concat_aux:
            trace.append((trace[-1][0] + net.aux_dim,))
        trace.append(shape)
    return trace
