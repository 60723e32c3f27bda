import numpy as np
import pytest

from prunet import cells, statespace, tasks, verification
from prunet.errors import ShapeError


def passthrough_system():
    return statespace.TypeISystem(
        state_dim=2, input_dim=2, output_dim=2,
        transition=lambda x, s: s,
        output=lambda x, s: x,
    )


def accumulator_system():
    return statespace.TypeIISystem(
        state_dim=1, input_dim=1, output_dim=1,
        transition=lambda x, s: s + x,
        output=lambda s: s,
    )


class TestRun:
    def test_passthrough(self):
        rng = np.random.default_rng(0)
        xs = [rng.normal(size=2) for _ in range(6)]
        ys = statespace.run(passthrough_system(), xs)
        for x, y in zip(xs, ys):
            assert np.array_equal(x, y)

    def test_accumulator_prefix_sums(self):
        xs = [np.array([v]) for v in (1.0, 2.5, -3.0, 4.0)]
        ys = statespace.run(accumulator_system(), xs)
        assert [y[0] for y in ys] == [1.0, 3.5, 0.5, 4.5]

    def test_pru_wrapped_as_type2_matches_unroll(self):
        rng = np.random.default_rng(1)
        k, m, l = 3, 2, 2
        params = cells.PruParams(
            u_s=rng.normal(size=(k, k)), u_x=rng.normal(size=(k, m)),
            b_u=rng.normal(size=k),
            c_s=rng.normal(size=(k, k)), c_x=rng.normal(size=(k, m)),
            b_c=rng.normal(size=k),
        )
        readout = cells.ReadoutParams(w=rng.normal(size=(l, k)),
                                      b=rng.normal(size=l), h="tanh")
        system = statespace.TypeIISystem(
            state_dim=k, input_dim=m, output_dim=l,
            transition=lambda x, s: cells.pru_step(params, s, x)[0],
            output=lambda s: cells.readout(readout, s),
        )
        xs = [rng.normal(size=m) for _ in range(7)]
        ys = statespace.run(system, xs)
        _, outputs, _ = cells.unroll("PRU", params, readout, xs, emit="every_step")
        for a, b in zip(ys, outputs):
            assert np.array_equal(a, b)

    def test_dimension_error_reports_time(self):
        xs = [np.zeros(2), np.zeros(3)]
        with pytest.raises(ShapeError, match="time step 2"):
            statespace.run(passthrough_system(), xs)

    def test_causal_prefix_property(self):
        rng = np.random.default_rng(2)
        system = verification.random_type1_system(rng)
        xs = [rng.normal(size=system.input_dim) for _ in range(8)]
        full = statespace.run(system, xs)
        for cut in (1, 3, 8):
            prefix = statespace.run(system, xs[:cut])
            for a, b in zip(prefix, full[:cut]):
                assert np.array_equal(a, b)


class TestConvert:
    def test_passthrough_stays_equivalent(self):
        sys1 = passthrough_system()
        sys2 = statespace.convert_to_type2(sys1)
        rng = np.random.default_rng(3)
        ok, _ = statespace.equivalent(sys1, sys2, trials=50, t_max=8, rng=rng)
        assert ok

    def test_state_dim_is_sum(self):
        sys2 = statespace.convert_to_type2(passthrough_system())
        assert sys2.state_dim == 4
        rng = np.random.default_rng(4)
        sys1 = verification.random_type1_system(rng)
        assert statespace.convert_to_type2(sys1).state_dim == (
            sys1.input_dim + sys1.state_dim
        )

    def test_random_mlp_systems_equivalent(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            sys1 = verification.random_type1_system(rng)
            sys2 = statespace.convert_to_type2(sys1)
            ok, counterexample = statespace.equivalent(
                sys1, sys2, trials=100, t_max=10, rng=rng, tol=1e-12
            )
            assert ok, f"diverged on prefix of length {len(counterexample)}"


class TestEquivalent:
    def test_reflexive(self):
        system = accumulator_system()
        rng = np.random.default_rng(6)
        ok, cex = statespace.equivalent(system, system, trials=20, t_max=6, rng=rng)
        assert ok and cex is None

    def test_accumulator_vs_passthrough(self):
        acc = accumulator_system()
        pas = statespace.TypeISystem(
            state_dim=1, input_dim=1, output_dim=1,
            transition=lambda x, s: s,
            output=lambda x, s: x,
        )
        rng = np.random.default_rng(7)
        ok, cex = statespace.equivalent(acc, pas, trials=50, t_max=6, rng=rng)
        assert not ok
        # y_1 always agrees; y_2 differs whenever x_1 != 0
        assert len(cex) == 2

    def test_dim_mismatch(self):
        rng = np.random.default_rng(8)
        with pytest.raises(ShapeError, match="not comparable"):
            statespace.equivalent(accumulator_system(), passthrough_system(),
                                  trials=5, t_max=3, rng=rng)


def test_lemma1_suite_small():
    results = verification.run_lemma1(n_systems=8, trials=30, seed=9, verbose=False)
    assert all(ok for _, ok, _, _ in results)
    for _, _, k1, k2 in results:
        assert k2 > k1
