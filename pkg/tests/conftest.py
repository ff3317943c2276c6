import pytest

from shapenas import (ActionCatalog, ContextSpec, LayerTemplate, SearchSpace)


@pytest.fixture
def toy_catalog():
    return ActionCatalog((
        LayerTemplate("conv", kernel_size=3, stride=1, padding=1, channels=8),
        LayerTemplate("conv", kernel_size=3, stride=1, padding=1, channels=4),
        LayerTemplate("pool", kernel_size=2, stride=2),
    ), max_depth=4)


@pytest.fixture
def toy_context():
    return ContextSpec(cores=8, compute_units=2, memory_mb=4096,
                       clock_freq_mhz=2800, memory_bandwidth=25.6,
                       processor_kind="cpu", task=(1.0,))


@pytest.fixture
def toy_space(toy_catalog, toy_context):
    return SearchSpace(toy_catalog, toy_context, input_shape=(3, 16, 16))
