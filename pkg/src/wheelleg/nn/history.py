"""Per-env ring buffer of the last H observations feeding the history encoder."""

from __future__ import annotations

import numpy as np


class ObservationHistory:
    def __init__(self, n_envs: int, history_len: int, obs_dim: int, dtype=np.float32):
        self.n_envs = n_envs
        self.history_len = history_len
        self.obs_dim = obs_dim
        self.buf = np.zeros((n_envs, history_len, obs_dim), dtype=dtype)
        self.ptr = 0  # index of the oldest entry

    def push(self, obs: np.ndarray) -> None:
        self.buf[:, self.ptr] = obs
        self.ptr = (self.ptr + 1) % self.history_len

    def reset_envs(self, env_ids, obs: np.ndarray) -> None:
        """Fill the window of reset envs with their first post-reset observation."""
        self.buf[env_ids] = np.asarray(obs, dtype=self.buf.dtype)[:, None, :]

    def window(self) -> np.ndarray:
        """Flattened (n_envs, H * obs_dim) window, oldest to newest."""
        if self.ptr == 0:
            ordered = self.buf
        else:
            ordered = np.concatenate([self.buf[:, self.ptr:], self.buf[:, :self.ptr]], axis=1)
        return ordered.reshape(self.n_envs, -1)
