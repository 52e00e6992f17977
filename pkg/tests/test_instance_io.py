import numpy as np
import pytest

from fpdiff.problems import (
    LogisticNewton,
    QpInstance,
    QuadraticInner,
    WeightedRidge,
    dumps_instance,
    load_instance,
    loads_instance,
    save_instance,
)


def instances():
    quad = QuadraticInner.random(4, seed=0)
    ridge = WeightedRidge.synthetic(10, 3, cond=20.0, seed=1)
    ridge_with_step = WeightedRidge(design=ridge.design, targets=ridge.targets,
                                    lam=ridge.lam, step=0.05)
    logistic = LogisticNewton.synthetic(12, 3, lam=0.5, seed=2)
    qp, _ = QpInstance.synthetic(5, 2, 3, seed=3)
    return [quad, ridge, ridge_with_step, logistic, qp]


@pytest.mark.parametrize("prob", instances(), ids=lambda p: type(p).__name__)
def test_round_trip_is_bit_exact(prob):
    text = dumps_instance(prob)
    loaded = loads_instance(text)
    assert type(loaded) is type(prob)
    for name, value in vars(prob).items():
        other = getattr(loaded, name)
        if isinstance(value, np.ndarray):
            assert np.array_equal(value, other), name
        else:
            assert value == other, name
    assert dumps_instance(loaded) == text


def test_file_round_trip(tmp_path):
    prob = instances()[0]
    path = tmp_path / "instance.txt"
    save_instance(path, prob)
    loaded = load_instance(path)
    assert np.array_equal(loaded.quad, prob.quad)


def test_rejects_malformed_input():
    with pytest.raises(ValueError):
        loads_instance("not an instance file\n")
    with pytest.raises(ValueError):
        loads_instance("fpdiff-instance 1\nkind quadratic\n")  # no end marker
    with pytest.raises(ValueError):
        loads_instance("fpdiff-instance 1\nkind nonsense\nend\n")
