import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import stats as st

from conftest import A3, chain_models, closed_form_transition
from fvspine.ctmc import (
    Path,
    as_distribution,
    expm_uniformized,
    lambda_t,
    load_model,
    qprocess_generator,
    qsd,
    simulate_path,
    simulate_qprocess,
    stationary_distribution,
    survival_conditioned_dist,
    transition_matrix,
    validate_model,
)
from fvspine.errors import ModelFileError, ModelValidationError, NegativeTimeError, SingularSystem


def taylor_expm(G, t, terms=40):
    """Scaling-and-squaring Taylor series, independent of uniformization."""
    A = np.asarray(G, dtype=float) * t
    s = max(0, int(math.ceil(math.log2(max(np.abs(A).sum(axis=1).max(), 1e-300)))) + 1)
    A = A / 2**s
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


# ----------------------------------------------------------------------------
# validation


def test_example_model_is_valid(model3):
    assert model3.n == 2
    assert np.array_equal(model3.killing_rates, [4.0, 1.0])
    assert np.array_equal(model3.Q_F, [[-6.0, 2.0], [6.0, -7.0]])


def test_smallest_chain():
    m = validate_model([[0, 0], [1, -1]])
    assert m.n == 1


def test_unreachable_cemetery():
    with pytest.raises(ModelValidationError) as exc:
        validate_model([[0, 0, 0], [0, -2, 2], [0, 2, -2]])
    assert exc.value.codes == ["CemeteryUnreachable"]


def test_reached_through_other_state():
    validate_model([[0, 0, 0], [4, -6, 2], [0, 7, -7]])


@pytest.mark.parametrize(
    "Q, code",
    [
        ([[0, 0, 0], [4, -6, 2], [1, 6, -6]], "NonZeroRowSum"),
        ([[0, 0, 0], [4, -2, -2], [1, 6, -7]], "NegativeOffDiagonal"),
        ([[-1, 1, 0], [4, -6, 2], [1, 6, -7]], "CemeteryNotAbsorbing"),
        ([[0, 0, 0], [1, -1, 0], [1, 0, -1]], "InteriorNotCommunicating"),
        ([[0, 0], [1, -1], [0, 0]], "NotSquare"),
        ([[0]], "TooSmall"),
        ([[0, 0], [np.nan, 0]], "NonFinite"),
    ],
)
def test_validation_codes(Q, code):
    with pytest.raises(ModelValidationError) as exc:
        validate_model(Q)
    assert code in exc.value.codes


def test_validation_reports_indices():
    with pytest.raises(ModelValidationError) as exc:
        validate_model([[0, 0, 0], [4, -2, -2], [1, 6, -7]])
    assert "Q[1][2]" in str(exc.value)


def test_model_is_read_only(model3):
    with pytest.raises(ValueError):
        model3.Q[1, 1] = 0.0


def test_load_model_roundtrip(tmp_path, model3):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"states": 3, "Q": A3.tolist()}))
    assert np.array_equal(load_model(p).Q, model3.Q)


def test_load_model_parse_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"states": 3,\n "Q": [[0, 0, 0]\n')
    with pytest.raises(ModelFileError, match=r"bad.json:3:1"):
        load_model(p)


def test_load_model_state_count_mismatch(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"states": 4, "Q": A3.tolist()}))
    with pytest.raises(ModelFileError):
        load_model(p)


# ----------------------------------------------------------------------------
# paths


def test_path_invariants():
    with pytest.raises(ValueError):
        Path([0.0, 0.0], [1, 2], 1.0)
    with pytest.raises(ValueError):
        Path([0.0, 0.5, 0.7], [1, 0, 2], 1.0)
    p = Path([0.0, 0.5], [1, 2], 2.0)
    assert p.state_at(0.5) == 2 and p.state_at(0.49) == 1
    assert np.allclose(p.occupancy(3), [0.0, 0.5, 1.5])
    assert p.restrict(0.2, 1.0) == Path([0.2, 0.5], [1, 2], 1.0)


# ----------------------------------------------------------------------------
# transition matrices


@pytest.mark.parametrize("t", [0.1, 0.3, 1.0, 5.0])
def test_transition_matrix_closed_form(model3, t):
    assert np.max(np.abs(transition_matrix(model3, t) - closed_form_transition(t))) < 1e-9


def test_transition_entry_value(model3):
    assert abs(transition_matrix(model3, 1.0)[1, 1] - (4 / 7 * math.exp(-3) + 3 / 7 * math.exp(-10))) < 1e-12
    assert abs(transition_matrix(model3, 1.0)[1, 1] - 0.0284692105) < 1e-9


def test_transition_matrix_taylor_oracle(model3):
    assert np.max(np.abs(transition_matrix(model3, 0.3) - taylor_expm(model3.Q, 0.3))) < 1e-9


def test_transition_at_zero_is_identity(model3):
    assert np.array_equal(transition_matrix(model3, 0.0), np.eye(3))


def test_negative_time(model3):
    with pytest.raises(NegativeTimeError):
        transition_matrix(model3, -1.0)


def test_large_time_uses_squaring(model3):
    P = transition_matrix(model3, 40.0)
    assert np.max(np.abs(P - closed_form_transition(40.0))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(chain_models())
def test_semigroup_and_rows(m):
    P1, P2, P3 = (transition_matrix(m, t) for t in (0.3, 0.7, 1.0))
    assert np.max(np.abs(P1 @ P2 - P3)) < 1e-9
    assert np.max(np.abs(P3.sum(axis=1) - 1)) < 1e-12
    assert np.max(np.abs(P3 - taylor_expm(m.Q, 1.0))) < 1e-9


# ----------------------------------------------------------------------------
# conditioned laws, QSD and the Q-process


def test_survival_conditioned_values(model3):
    d = survival_conditioned_dist(model3, [1, 0], 0.5)
    a, b = math.exp(-1.5), math.exp(-5)
    assert abs(d[0] - (4 / 7 * a + 3 / 7 * b) / (6 / 7 * a + 1 / 7 * b)) < 1e-9
    assert abs(d[0] - 0.678351) < 1e-6
    assert abs(survival_conditioned_dist(model3, [1, 0], 5.0)[0] - 2 / 3) < 1e-6
    assert np.array_equal(survival_conditioned_dist(model3, [0.3, 0.7], 0.0), [0.3, 0.7])


def test_survival_conditioned_general_start(model3):
    mu = np.array([0.25, 0.75])
    t = 0.8
    p = mu @ closed_form_transition(t)[1:, 1:]
    assert np.max(np.abs(survival_conditioned_dist(model3, mu, t) - p / p.sum())) < 1e-12


def test_conditioned_law_contracts(model3):
    nu = qsd(model3).nu
    tv = lambda t: 0.5 * np.abs(survival_conditioned_dist(model3, [1, 0], t) - nu).sum()
    assert tv(10.0) < tv(1.0)


def test_qsd_example(model3):
    r = qsd(model3)
    assert np.max(np.abs(r.nu - [2 / 3, 1 / 3])) < 1e-10
    assert abs(r.lambda_inf - 3) < 1e-10
    # right vector by elimination: (Q_F + 3 I) phi = 0 with phi_2 = 1 gives -3 phi_1 + 2 = 0
    assert np.max(np.abs(r.phi - [2 / 3, 1.0])) < 1e-10


def test_qsd_single_state():
    r = qsd(validate_model([[0, 0], [2.5, -2.5]]))
    assert r.nu.tolist() == [1.0] and r.lambda_inf == 2.5


@settings(max_examples=40, deadline=None)
@given(chain_models())
def test_qsd_eigen_relations(m):
    r = qsd(m)
    assert np.max(np.abs(r.nu @ m.Q_F + r.lambda_inf * r.nu)) < 1e-9
    assert np.max(np.abs(m.Q_F @ r.phi + r.lambda_inf * r.phi)) < 1e-9
    assert np.all(r.nu > 0) and np.all(r.phi > 0) and r.phi.max() == 1.0
    # Perron root is the eigenvalue of Q_F with the largest real part
    assert abs(-r.lambda_inf - np.linalg.eigvals(m.Q_F).real.max()) < 1e-8


def test_lambda_t(model3):
    nu = qsd(model3).nu
    for t in (0.0, 0.5, 3.0, 10.0):
        assert abs(lambda_t(model3, nu, t) - 3.0) < 1e-8
    assert lambda_t(model3, [1, 0], 0.0) == 4.0
    assert abs(lambda_t(model3, [1, 0], 5.0) - 3.0) < 1e-5


def test_qprocess_example(model3):
    qp = qprocess_generator(model3)
    assert np.max(np.abs(qp.generator - [[-3, 3], [4, -4]])) < 1e-9
    assert np.max(np.abs(qp.stationary - [4 / 7, 3 / 7])) < 1e-10


def test_qprocess_uniform_killing():
    c = 1.5
    Q = np.array([[0, 0, 0], [c, -c - 2, 2], [c, 1, -c - 1]])
    m = validate_model(Q)
    assert np.max(np.abs(qprocess_generator(m).generator - (m.Q_F + c * np.eye(2)))) < 1e-9


@settings(max_examples=30, deadline=None)
@given(chain_models())
def test_qprocess_is_generator(m):
    G = qprocess_generator(m).generator
    assert np.max(np.abs(G.sum(axis=1))) < 1e-9
    assert np.all(G[~np.eye(m.n, dtype=bool)] >= 0)


def test_stationary_distribution_errors():
    assert np.allclose(stationary_distribution([[-1, 1], [1, -1]]), [0.5, 0.5])
    with pytest.raises(SingularSystem):
        stationary_distribution([[-1, 1, 0], [0, 0, 0], [0, 0, 0]])


def test_as_distribution():
    with pytest.raises(ValueError):
        as_distribution([0.5, 0.6], 2)
    with pytest.raises(ValueError):
        as_distribution([1.0], 2)


# ----------------------------------------------------------------------------
# path simulation


def test_simulate_path_zero_horizon(model3):
    p = simulate_path(model3, 2, 0.0, 1)
    assert p.segments == [(0.0, 2)] and p.end_time == 0.0


def test_simulate_path_deterministic(model3):
    assert simulate_path(model3, 1, 10.0, 5) == simulate_path(model3, 1, 10.0, 5)


def test_holding_time_state1(model3):
    rng = np.random.default_rng(11)
    hold = []
    while len(hold) < 100_000:
        p = simulate_path(model3, 1, 50.0, rng)
        d = p.durations()
        hold.extend(d[(p.states == 1) & (np.arange(len(p)) < len(p) - 1)].tolist())
    hold = np.array(hold[:100_000])
    assert abs(hold.mean() - 1 / 6) < 3 * hold.std() / math.sqrt(hold.size)


def test_absorption_law(model3):
    rng = np.random.default_rng(12)
    T = np.array([simulate_path(model3, 1, 1e9, rng).absorption_time for _ in range(100_000)])
    p_abs = 1 - 6 / 7 * math.exp(-3) - 1 / 7 * math.exp(-10)
    frac = np.mean(T <= 1.0)
    assert abs(frac - p_abs) < 3 * math.sqrt(p_abs * (1 - p_abs) / T.size)

    def cdf(t):
        return np.array([transition_matrix(model3, float(s))[1, 0] for s in np.atleast_1d(t)])

    grid = np.linspace(0, 6, 601)
    F = cdf(grid)
    ks = st.kstest(T, lambda x: np.interp(x, grid, F))
    assert ks.pvalue > 0.01


def test_qprocess_occupancy(model3):
    p = simulate_qprocess(model3, 1, 1e5, 3)
    occ = p.occupancy(3)[1:] / 1e5
    # batch means for the standard error
    edges = np.linspace(0, 1e5, 101)
    fr = np.array([p.restrict(a, b).occupancy(3)[1] / (b - a) for a, b in zip(edges[:-1], edges[1:])])
    assert abs(occ[0] - 4 / 7) < 3 * fr.std(ddof=1) / 10
    assert not p.absorbed


def test_qprocess_transition(model3):
    G = qprocess_generator(model3).generator
    exact = expm_uniformized(G, 0.4)[1, 0]
    rng = np.random.default_rng(4)
    hits = np.array([simulate_qprocess(model3, 2, 0.4, rng).final_state == 1 for _ in range(100_000)])
    assert abs(hits.mean() - exact) < 3 * math.sqrt(exact * (1 - exact) / hits.size)


def test_qprocess_zero_horizon(model3):
    p = simulate_qprocess(model3, 2, 0.0, 0)
    assert p.segments == [(0.0, 2)]
