"""
离散混杂: 满列秩检验、正向组合、矩阵调整与离散因果函数
"""

import json

import numpy as np
import pandas as pd
import pytest

from main import main
from src.core.discrete import (
    ace_binary_discrete,
    causal_function_discrete,
    check_full_column_rank,
    empirical_joint,
    forward_mechanism,
    matrix_adjust,
)
from src.core.rng import stream
from src.dao.mechanism_dao import MechanismDAO
from src.model.dataset import Dataset
from src.model.errors import (
    ConfigurationError,
    DataError,
    InconsistencyError,
    NonInvertibleMechanismError,
    UnsupportedInterventionError,
)
from src.model.mechanism import DiscreteJoint, DiscreteMechanism
from src.model.scm import ErrorMechanism
from src.service.estimation_service import EstimationService

F_2X2 = [[0.9, 0.2], [0.1, 0.8]]


def _binary_toy_joint() -> DiscreteJoint:
    """p(U=1)=0.5, p(X=1|u)=0.3+0.4u, p(Y=1|u,x)=0.2+0.5x+0.2u"""
    table = np.zeros((2, 2, 2))
    for u in (0, 1):
        for x in (0, 1):
            p_x = 0.3 + 0.4 * u if x == 1 else 0.7 - 0.4 * u
            p_y1 = 0.2 + 0.5 * x + 0.2 * u
            table[u, x, 1] = 0.5 * p_x * p_y1
            table[u, x, 0] = 0.5 * p_x * (1.0 - p_y1)
    return DiscreteJoint(table, [0, 1], [0, 1], [0, 1], first_axis="u")


def _random_joint(rng: np.random.Generator, k: int) -> DiscreteJoint:
    table = rng.dirichlet(np.ones(k * 4)).reshape(k, 2, 2)
    return DiscreteJoint(table, list(range(k)), [0, 1], [0, 1], first_axis="u")


# ==================== 满列秩 ====================


@pytest.mark.parametrize("matrix", [np.eye(2), F_2X2])
def test_rank_check_complete(matrix):
    result = check_full_column_rank(DiscreteMechanism(matrix))
    assert result.complete
    assert result.to_dict()["status"] == "complete"


def test_rank_check_identical_columns():
    result = check_full_column_rank(DiscreteMechanism([[0.4, 0.4], [0.6, 0.6]]))
    assert not result.complete
    assert result.reason == "rank deficient"
    np.testing.assert_allclose(np.abs(result.null_vector), [1.0, 1.0])
    assert result.null_vector.sum() == pytest.approx(0.0, abs=1e-10)


def test_rank_check_too_few_proxy_levels():
    result = check_full_column_rank(DiscreteMechanism([[1.0, 1.0]]))
    assert not result.complete
    assert result.reason == "insufficient proxy support"
    np.testing.assert_allclose(np.array([[1.0, 1.0]]) @ result.null_vector, 0.0, atol=1e-12)


def test_mechanism_columns_must_sum_to_one():
    with pytest.raises(ConfigurationError):
        DiscreteMechanism([[0.9, 0.2], [0.2, 0.8]])
    # 非全支撑时允许列和小于 1
    DiscreteMechanism([[0.5, 0.2], [0.2, 0.5]], full_support=False)


# ==================== 正向组合与矩阵调整 ====================


def test_identity_mechanism_leaves_table_unchanged():
    joint = _binary_toy_joint()
    mech = DiscreteMechanism(np.eye(2))
    observed = forward_mechanism(joint, mech)
    np.testing.assert_array_equal(observed.table, joint.table)
    np.testing.assert_allclose(matrix_adjust(observed, mech).table, joint.table, atol=1e-15)


def test_round_trip_binary_example():
    joint = _binary_toy_joint()
    mech = DiscreteMechanism(F_2X2)
    recovered = matrix_adjust(forward_mechanism(joint, mech), mech)
    np.testing.assert_allclose(recovered.table, joint.table, atol=1e-10)
    assert recovered.first_axis == "u"
    assert recovered.metadata["solver"] == "inverse"
    assert ace_binary_discrete(recovered) == pytest.approx(ace_binary_discrete(joint), abs=1e-10)


def test_round_trip_random_mechanisms():
    rng = stream(0, "discrete")
    checked = 0
    while checked < 100:
        k = int(rng.integers(2, 5))
        F = 0.6 * np.eye(k) + 0.4 * rng.dirichlet(np.ones(k), size=k).T
        if np.linalg.cond(F) >= 1e3:
            continue
        mech = DiscreteMechanism(F)
        joint = _random_joint(rng, k)
        recovered = matrix_adjust(forward_mechanism(joint, mech), mech)
        np.testing.assert_allclose(recovered.table, joint.table, atol=1e-8)
        checked += 1


def test_least_squares_for_tall_mechanism():
    mech = DiscreteMechanism([[0.7, 0.1], [0.2, 0.3], [0.1, 0.6]])
    joint = _random_joint(stream(1, "discrete"), 2)
    recovered = matrix_adjust(forward_mechanism(joint, mech), mech)
    assert recovered.metadata["solver"] == "least_squares"
    np.testing.assert_allclose(recovered.table, joint.table, atol=1e-10)


def test_inconsistent_joint_raises():
    observed = DiscreteJoint(np.array([[[1.0]], [[0.0]]]), [0, 1], [0], [0])
    with pytest.raises(InconsistencyError):
        matrix_adjust(observed, DiscreteMechanism(F_2X2))


def test_non_invertible_mechanism_raises():
    observed = DiscreteJoint(np.full((2, 1, 1), 0.5), [0, 1], [0], [0])
    with pytest.raises(NonInvertibleMechanismError):
        matrix_adjust(observed, DiscreteMechanism([[0.4, 0.4], [0.6, 0.6]]))


def test_mechanism_shape_mismatch():
    joint = _random_joint(stream(2, "discrete"), 3)
    with pytest.raises(ConfigurationError):
        forward_mechanism(joint, DiscreteMechanism(F_2X2))


def test_mechanism_rows_aligned_by_proxy_label():
    joint = _binary_toy_joint()
    observed = forward_mechanism(joint, DiscreteMechanism(F_2X2))
    swapped = DiscreteMechanism(np.asarray(F_2X2)[::-1], w_labels=[1, 0])
    np.testing.assert_allclose(matrix_adjust(observed, swapped).table, joint.table, atol=1e-10)


def test_unmatched_proxy_labels_raise():
    observed = forward_mechanism(_binary_toy_joint(), DiscreteMechanism(F_2X2))
    relabeled = DiscreteJoint(observed.table, ["a", "b"], observed.x_labels, observed.y_labels, first_axis="w")
    with pytest.raises(ConfigurationError):
        matrix_adjust(relabeled, DiscreteMechanism(F_2X2))
    with pytest.raises(ConfigurationError):
        matrix_adjust(observed, DiscreteMechanism(F_2X2, w_labels=[0, 0]))


def test_joint_table_validation():
    with pytest.raises(DataError):
        DiscreteJoint(np.full((1, 1, 2), 0.4), [0], [0], [0, 1])
    with pytest.raises(ConfigurationError):
        DiscreteJoint(np.full((1, 2), 0.5), [0], [0, 1], [])


# ==================== 因果函数 ====================


def test_binary_toy_ace():
    assert ace_binary_discrete(_binary_toy_joint()) == pytest.approx(0.5)


def test_no_effect_gives_constant_causal_function():
    p_ux = np.array([[0.1, 0.3], [0.4, 0.2]])
    p_y = np.array([0.25, 0.75])
    table = p_ux[:, :, None] * p_y[None, None, :]
    joint = DiscreteJoint(table, [0, 1], [0, 1], [1.0, 3.0], first_axis="u")
    for x in (0, 1):
        assert causal_function_discrete(joint, x) == pytest.approx(2.5)


def test_positivity_violation():
    table = _binary_toy_joint().table.copy()
    table[1, 1, :] = 0.0
    table /= table.sum()
    joint = DiscreteJoint(table, [0, 1], [0, 1], [0, 1], first_axis="u")
    with pytest.raises(UnsupportedInterventionError):
        causal_function_discrete(joint, 1)
    with pytest.raises(ConfigurationError):
        causal_function_discrete(joint, 2)


def test_empirical_joint_counts():
    joint = empirical_joint([0, 0, 1, 1], [0, 1, 0, 1], [1, 1, 0, 1])
    assert joint.sizes == (2, 2, 2)
    assert joint.table[0, 0, 1] == pytest.approx(0.25)
    assert joint.table.sum() == pytest.approx(1.0)


def test_joint_csv_round_trip(tmp_path):
    joint = forward_mechanism(_binary_toy_joint(), DiscreteMechanism(F_2X2))
    path = MechanismDAO.save_joint(joint, tmp_path / "joint.csv")
    loaded = MechanismDAO.load_joint(path)
    np.testing.assert_allclose(loaded.table, joint.table, atol=1e-15)


def test_estimation_service_discrete_matrix_adjust():
    rng = stream(3, "discrete")
    n = 200_000
    u = (rng.random(n) < 0.5).astype(float)
    w = np.where(rng.random(n) < np.where(u == 1, 0.8, 0.1), 1.0, 0.0)
    x = (rng.random(n) < 0.3 + 0.4 * u).astype(float)
    y = (rng.random(n) < 0.2 + 0.5 * x + 0.2 * u).astype(float)
    data = Dataset(w=w, x=x, y=y, treatment_kind="binary")
    mechanism = ErrorMechanism.from_discrete(DiscreteMechanism(F_2X2))

    est = EstimationService().estimate("discrete_matrix_adjust", data, mechanism)
    assert float(est(1.0)[0] - est(0.0)[0]) == pytest.approx(0.5, abs=0.03)
    assert est.extras["adjustment"]["solver"] == "inverse"

    with pytest.raises(ConfigurationError):
        EstimationService().estimate("discrete_matrix_adjust", data, None)


def test_estimation_service_from_joint_table():
    observed = forward_mechanism(_binary_toy_joint(), DiscreteMechanism(F_2X2))
    mechanism = ErrorMechanism.from_discrete(DiscreteMechanism(F_2X2))
    est = EstimationService().estimate_from_joint(observed, mechanism)
    assert est.treatment_kind == "binary"
    assert float(est(1.0)[0] - est(0.0)[0]) == pytest.approx(0.5, abs=1e-8)
    assert est.provenance == {"method": "discrete_matrix_adjust", "source": "joint_table"}

    with pytest.raises(ConfigurationError):
        EstimationService().estimate_from_joint(_binary_toy_joint(), mechanism)
    with pytest.raises(ConfigurationError):
        EstimationService().estimate_from_joint(observed, None)


def test_cli_estimate_from_joint_table(tmp_workdir, capsys):
    observed = forward_mechanism(_binary_toy_joint(), DiscreteMechanism(F_2X2))
    joint = MechanismDAO.save_joint(observed, tmp_workdir / "joint.csv")
    mech = tmp_workdir / "mech.json"
    mech.write_text(json.dumps({"u_labels": [0, 1], "w_labels": [0, 1], "matrix": F_2X2}))

    args = ["estimate", "--method", "discrete_matrix_adjust", "--joint", str(joint), "--mechanism", str(mech)]
    assert main(args + ["--out", "est.json", "--save-joint", "joint_u.csv"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["ace"]["value"] == pytest.approx(0.5, abs=1e-8)
    assert (tmp_workdir / "est.json").exists()
    recovered = pd.read_csv(result["joint_u"])
    assert list(recovered.columns) == ["u", "x", "y", "prob"]
    np.testing.assert_allclose(recovered["prob"], _binary_toy_joint().table.reshape(-1), atol=1e-10)

    assert main(args + ["--data", "obs.csv"]) == 2
    assert main(["estimate", "--method", "adj_w", "--joint", str(joint)]) == 2
