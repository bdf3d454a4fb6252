import numpy as np
import pytest

from eqbm.verify import (
    SUITES,
    Check,
    central_difference,
    commuting_zero_checks,
    grad_score,
    run_suite,
    seeded_model,
    summarize,
)


def test_seeded_model_is_deterministic():
    a, b = seeded_model(7), seeded_model(7)
    assert a[0] == b[0] and a[1] == b[1]
    np.testing.assert_array_equal(a[2], b[2])


def test_seeded_model_cycles_qubit_counts():
    assert [seeded_model(s)[0].n_qubits for s in range(6)] == [1, 2, 3, 1, 2, 3]


def test_central_difference_orders():
    f = lambda x: np.exp(0.3 + x)  # noqa: E731
    plain = central_difference(f, h=1e-2)
    rich = central_difference(f, h=1e-2, richardson=True)
    assert abs(rich - np.exp(0.3)) < abs(plain - np.exp(0.3)) / 100


def test_grad_score_switches_to_absolute_for_small_entries():
    assert grad_score(1e-3, 1e-3 + 5e-9) == pytest.approx(0.5)
    assert grad_score(1.0, 1.0 + 5e-7) == pytest.approx(0.5)


def test_commuting_model_is_exactly_zero():
    (row,) = commuting_zero_checks()
    assert row.passed and row.value == 0.0


@pytest.mark.parametrize("suite", SUITES)
def test_each_suite_passes_on_a_few_seeds(suite):
    rows = run_suite(suite, range(4), threads=2)
    assert rows and all(r.passed for r in rows), [r for r in rows if not r.passed]


def test_suite_rows_independent_of_thread_count():
    a = run_suite("loewner", range(6), threads=1)
    b = run_suite("loewner", range(6), threads=3)
    assert a == b


def test_summarize_keeps_worst_and_direction():
    rows = [
        Check("s", "dev", 0, 1e-10, 1e-8, True),
        Check("s", "dev", 1, 3e-9, 1e-8, True),
        Check("s", "min eig", 0, 0.2, -1e-8, True),
        Check("s", "min eig", 1, -2e-8, -1e-8, False),
    ]
    table = {r["check"]: r for r in summarize(rows)}
    assert table["dev"]["worst"] == 3e-9 and table["dev"]["passed"]
    assert table["min eig"]["worst"] == -2e-8 and not table["min eig"]["passed"]
    assert table["dev"]["seeds"] == 2
