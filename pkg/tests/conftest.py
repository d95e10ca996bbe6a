import numpy as np
import pytest

from carma_hawkes import (
    BivariateOrder,
    BivariateSpec,
    UnivariateOrder,
    UnivariateSpec,
    simulate_bivariate,
    simulate_univariate,
)


@pytest.fixture(scope="session")
def spec_uni_10() -> UnivariateSpec:
    return UnivariateSpec(order=UnivariateOrder(1, 0), mu=0.5, a=[2.0], b=[1.0])


@pytest.fixture(scope="session")
def spec_uni_21() -> UnivariateSpec:
    # distinct real spectrum, branching ~ 0.44
    return UnivariateSpec(order=UnivariateOrder(2, 1), mu=0.4,
                          a=[3.0, 2.0], b=[0.8, 0.1])


@pytest.fixture(scope="session")
def spec_uni_32() -> UnivariateSpec:
    return UnivariateSpec(order=UnivariateOrder(3, 2), mu=0.3,
                          a=[6.0, 11.0, 6.0], b=[1.2, 0.4, 0.05])


@pytest.fixture(scope="session")
def spec_biv_11() -> BivariateSpec:
    return BivariateSpec(
        order=BivariateOrder((1, 1), (0, 0, 0, 0)),
        mu=[0.3, 0.4], a1=[1.5], a2=[2.0],
        b11=[0.5], b12=[0.3], b21=[0.2], b22=[0.8])


@pytest.fixture(scope="session")
def spec_biv_21() -> BivariateSpec:
    return BivariateSpec(
        order=BivariateOrder((2, 1), (1, 0, 1, 0)),
        mu=[0.25, 0.35], a1=[3.0, 2.0], a2=[1.8],
        b11=[0.7, 0.1], b12=[0.25], b21=[0.3, 0.05], b22=[0.6])


@pytest.fixture(scope="session")
def events_uni_10(spec_uni_10):
    return simulate_univariate(spec_uni_10, horizon=400.0, seed=7)


@pytest.fixture(scope="session")
def events_uni_21(spec_uni_21):
    return simulate_univariate(spec_uni_21, horizon=400.0, seed=19)


@pytest.fixture(scope="session")
def events_biv_11(spec_biv_11):
    return simulate_bivariate(spec_biv_11, horizon=300.0, seed=11)


@pytest.fixture(scope="session")
def events_biv_21(spec_biv_21):
    return simulate_bivariate(spec_biv_21, horizon=300.0, seed=23)
