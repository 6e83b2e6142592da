"""Small stand-ins for PreparedData used by trainer/evaluation tests."""

import numpy as np

from gwshapes.shapes import ShapeConfig, encode_proto, sample_attributes
from gwshapes.specialists import DomainSpec


class _StubSpecialists:
    def snapshot_hash(self):
        return "stub"


class SyntheticData:
    """Matched linear domains: t = v @ map_matrix, exactly solvable."""

    def __init__(self, k=512, test=128, dim=12, seed=0, map_matrix=None):
        rng = np.random.default_rng(seed)
        self.v_spec = DomainSpec("vision", dim, "mse")
        self.t_spec = DomainSpec("text", dim, "mse")
        if map_matrix is None:
            q, _ = np.linalg.qr(rng.normal(0, 1, (dim, dim)))
            map_matrix = 0.8 * q  # well-conditioned, so both directions fit fast
        m = map_matrix
        self.train_v = rng.normal(0, 0.5, (k, dim))
        self.train_t = self.train_v @ m
        self.test_v = rng.normal(0, 0.5, (test, dim))
        self.test_t = self.test_v @ m
        self.specialists = _StubSpecialists()

    @property
    def k(self):
        return len(self.train_v)


class ProtoData:
    """Both sides are real proto vectors; gives OOO tests true attribute structure."""

    def __init__(self, k=1500, test=300, seed=0):
        cfg = ShapeConfig()
        rng = np.random.default_rng(seed)
        protos = np.stack([encode_proto(sample_attributes(rng, cfg), cfg)
                           for _ in range(k + test)])
        self.protos = protos[:k]
        self.v_spec = DomainSpec("vision", 11, "mse")
        self.t_spec = DomainSpec("proto", 11, "mse_plus_category_ce")
        self.train_v = protos[:k]
        self.train_t = protos[:k]
        self.test_v = protos[k:]
        self.test_t = protos[k:]
        self.specialists = _StubSpecialists()

    @property
    def k(self):
        return len(self.train_v)
