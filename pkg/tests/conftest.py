import numpy as np
import pytest

import mimopa as m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_pipeline(dims, seed, kind=None, P_total=4.0, channels=None):
    """Channel -> SVDs -> stacked decomposition -> precoder, for tests."""
    if channels is None:
        channels = m.generate_rayleigh(dims, seed)
    svds = [m.truncated_svd(H, dims.L_per_user[k]) for k, H in enumerate(channels)]
    dec = m.stack_svds(svds)
    pre = m.build_precoder(kind or m.PrecoderKind.zf(), dec)
    return channels, svds, dec, pre


def random_dims(rng, T_max=16, L_max=8, full_rank=True):
    """Random small system dimensions with L <= L_max and T <= T_max."""
    while True:
        K = int(rng.integers(1, 5))
        L_per_user = tuple(int(rng.integers(1, 3)) for _ in range(K))
        if sum(L_per_user) > L_max:
            continue
        if full_rank:
            R_per_user = L_per_user
        else:
            R_per_user = tuple(l + int(rng.integers(0, 2)) for l in L_per_user)
        R = sum(R_per_user)
        if R > T_max:
            continue
        T = int(rng.integers(max(R, 2), T_max + 1))
        return m.SystemDims(T=T, R_per_user=R_per_user, L_per_user=L_per_user)
