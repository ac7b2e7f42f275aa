import numpy as np
import pytest

from gvo import Access, Field, KernelDescriptor, LaunchConfig, parse


def make_kernel(
    accesses: list[tuple[str, str, str]],
    block=(32, 1, 1),
    grid_blocks=(4, 2, 2),
    element_size=8,
    extents=(4096, 64, 64),
    work_per_thread=1,
    flops=10,
    alignments=None,
):
    """Kernel from (field, kind, expression-string) triples."""
    names = sorted({field for field, _, _ in accesses})
    alignments = alignments or {}
    fields = tuple(
        Field(name, element_size, extents, alignment=alignments.get(name, 0)) for name in names
    )
    accs = tuple(
        Access(field, kind, parse(text, fields=names)) for field, kind, text in accesses
    )
    launch = LaunchConfig(block, grid_blocks, work_per_thread)
    return KernelDescriptor(fields=fields, accesses=accs, launch=launch, flops_per_lup=flops)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
