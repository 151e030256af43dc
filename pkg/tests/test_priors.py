import numpy as np
import pytest
from scipy.stats import chi2

from cavity_bayes.geometry import OuterDomain, TangentialCavities, validate_cavity_set
from cavity_bayes.priors import (
    InfeasiblePrior,
    PriorSpec,
    benchmark_grid_family,
    enumerate_finite,
    sample_prior,
)


def test_enumerate_two_domains():
    spec = PriorSpec(
        mode="finite",
        domains=(((((0.2, 0.0), 0.15),), 0.5), (((((-0.2, 0.0)), 0.15),), 0.5)),
    )
    ens = enumerate_finite(spec)
    assert ens.size == 2
    assert ens.kind == "finite"
    np.testing.assert_array_equal(ens.probs, [0.5, 0.5])


def test_enumerate_rejects_bad_normalization():
    spec = PriorSpec(
        mode="finite",
        domains=(((((0.2, 0.0), 0.15),), 0.6), (((((-0.2, 0.0)), 0.15),), 0.6)),
    )
    with pytest.raises(ValueError, match="sum"):
        enumerate_finite(spec)


def test_enumerate_rejects_tangential_cavities():
    cavities = (((-0.3, 0.0), 0.3), ((0.3, 0.0), 0.3))
    spec = PriorSpec(mode="finite", domains=((cavities, 1.0),))
    with pytest.raises(TangentialCavities):
        enumerate_finite(spec)


def test_benchmark_family_layout():
    ens = enumerate_finite(benchmark_grid_family())
    assert ens.size == 16
    assert float(ens.probs.sum()) == pytest.approx(1.0, abs=1e-15)
    for dom in ens.domains:
        assert len(dom.cavities) == 1
        assert dom.cavities[0].radius == 0.2


def test_degenerate_spec_yields_identical_domains():
    spec = PriorSpec(mode="parametric", k_max=1, r_min=0.25, r_max=0.25, center=(0.0, 0.0))
    ens = sample_prior(spec, 5, seed=3)
    hashes = {d.content_hash() for d in ens.domains}
    assert len(hashes) == 1
    assert ens.rejection_rate == 0.0


def test_sampling_deterministic_in_seed():
    spec = PriorSpec(mode="parametric", k_max=3, r_min=0.08, r_max=0.3)
    a = sample_prior(spec, 12, seed=41)
    b = sample_prior(spec, 12, seed=41)
    c = sample_prior(spec, 12, seed=42)
    assert [d.content_hash() for d in a.domains] == [d.content_hash() for d in b.domains]
    assert [d.content_hash() for d in a.domains] != [d.content_hash() for d in c.domains]


def test_every_sampled_domain_is_admissible():
    spec = PriorSpec(mode="parametric", k_max=3, r_min=0.05, r_max=0.35)
    ens = sample_prior(spec, 50, seed=11)
    outer = OuterDomain()
    for dom in ens.domains:
        validate_cavity_set(dom.cavity_set, outer)  # must not raise


def test_radius_marginal_uniform_chi_square():
    spec = PriorSpec(mode="parametric", k_max=1, r_min=0.1, r_max=0.3)
    ens = sample_prior(spec, 10000, seed=303)
    radii = np.array([d.cavities[0].radius for d in ens.domains])
    bins = 16
    counts, _ = np.histogram(radii, bins=bins, range=(spec.r_min, spec.r_max))
    expected = len(radii) / bins
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert stat < chi2.ppf(0.99, bins - 1)


def test_infeasible_constraints_raise():
    spec = PriorSpec(mode="parametric", k_max=1, r_min=0.98, r_max=0.99)
    with pytest.raises(InfeasiblePrior):
        sample_prior(spec, 4, seed=1)


def test_mode_mismatch_rejected():
    with pytest.raises(ValueError):
        enumerate_finite(PriorSpec(mode="parametric"))
    with pytest.raises(ValueError):
        sample_prior(PriorSpec(mode="finite", domains=(((((0.0, 0.0)), 0.2),), 1.0),), 2, seed=0)
