import numpy as np
import pytest

from reprobench.errors import ConfigError
from reprobench.ingest import dataset_stats
from reprobench.synth import SynthSpec, generate_synthetic, generate_synthetic_with_factors


def _top_share(d, frac=0.1):
    counts = np.sort(np.bincount(d.items))[::-1]
    n = max(1, int(frac * len(counts)))
    return counts[:n].sum() / counts.sum()


def test_deterministic():
    s = SynthSpec(n_users=50, n_items=40, seed=3)
    assert generate_synthetic(s) == generate_synthetic(s)
    assert generate_synthetic(s) != generate_synthetic(SynthSpec(n_users=50, n_items=40, seed=4))


def test_shapes_and_scale():
    d, uf, vf = generate_synthetic_with_factors(SynthSpec(n_users=80, n_items=60, taste_dim=4))
    assert uf.shape == (80, 4) and vf.shape == (60, 4)
    st = dataset_stats(d)
    assert st.n_users <= 80 and st.n_items <= 60
    assert d.ratings.min() >= 1 and d.ratings.max() <= 5
    assert np.all((d.ratings * 2) == np.round(d.ratings * 2))
    # no repeated (user, item)
    assert len(set(zip(d.users.tolist(), d.items.tolist()))) == len(d)


def test_popularity_skew():
    low = generate_synthetic(SynthSpec(n_users=300, n_items=200, popularity_skew=0.5))
    high = generate_synthetic(SynthSpec(n_users=300, n_items=200, popularity_skew=3.0))
    assert _top_share(high) > _top_share(low)


def test_taste_drives_ratings():
    d, uf, vf = generate_synthetic_with_factors(SynthSpec(n_users=200, n_items=100, rating_noise=0.1))
    aff = np.einsum("ij,ij->i", uf[d.users], vf[d.items])
    assert np.corrcoef(aff, d.ratings)[0, 1] > 0.5


@pytest.mark.parametrize("kwargs", [{"n_users": 0}, {"n_items": 0}, {"popularity_skew": -1},
                                    {"rating_noise": -0.1}, {"taste_dim": 0}])
def test_invalid_spec(kwargs):
    with pytest.raises(ConfigError):
        SynthSpec(**kwargs)
