"""Taint lattice: propagation rules, registry, split/reevaluate, serialization."""

import random

import pytest

from dooly.errors import MixValueConflict, UnknownComponent
from dooly.taint import (
    BOT,
    Base,
    Mix,
    MODEL_CONFIG,
    NUM_REQS,
    NUM_TOKS,
    TaintRegistry,
    combine,
    mix_from,
    reevaluate,
    split,
    taint_from_str,
    taint_to_str,
)

MC, NT, NR = MODEL_CONFIG, NUM_TOKS, NUM_REQS


class TestCombineRules:
    def test_absorption(self):
        assert combine(BOT, Base(NT)) == Base(NT)
        assert combine(Base(NT), BOT) == Base(NT)
        assert combine(BOT, BOT) == BOT

    def test_preservation(self):
        assert combine(Base(MC), Base(MC)) == Base(MC)
        mix = mix_from({40: MC, 269: NT})
        assert combine(mix, mix) == mix

    def test_conflict_records_both_values(self):
        # 269 tokens merged with a 40-head dimension: the worked flatten case.
        result = combine(Base(NT), Base(MC), v1=269, v2=40)
        assert result == mix_from({40: MC, 269: NT})

    def test_extend(self):
        mix = mix_from({8: NR, 128: MC})
        result = combine(mix, Base(NT), v2=64)
        assert result == mix_from({8: NR, 64: NT, 128: MC})

    def test_merge(self):
        m1 = mix_from({8: NR, 128: MC})
        m2 = mix_from({64: NT, 40: MC})
        assert combine(m1, m2) == mix_from({8: NR, 40: MC, 64: NT, 128: MC})

    def test_conflict_requires_values(self):
        with pytest.raises(ValueError):
            combine(Base(NT), Base(MC))

    def test_same_value_two_labels_rejected(self):
        with pytest.raises(MixValueConflict):
            combine(Base(NT), Base(MC), v1=8, v2=8)
        with pytest.raises(MixValueConflict):
            combine(mix_from({8: NR, 128: MC}), Base(NT), v2=8)


class TestRegistry:
    def test_insert_lookup_roundtrip(self):
        reg = TaintRegistry()
        assert reg.register(4096, Base(MC)) is False
        assert reg.lookup(4096) == Base(MC)

    def test_idempotent_reregister(self):
        reg = TaintRegistry()
        reg.register(4096, Base(MC))
        assert reg.register(4096, Base(MC)) is False
        assert reg.lookup(4096) == Base(MC)
        assert reg.collisions == frozenset()

    def test_collision_moves_value_out_of_entries(self):
        # A batch of 8 requests colliding with an 8-KV-head dimension.
        reg = TaintRegistry()
        reg.register(8, Base(MC))
        assert reg.register(8, Base(NR)) is True
        assert reg.lookup(8) is None
        assert 8 in reg.collisions
        # Later registrations of a collided value stay collided.
        assert reg.register(8, Base(MC)) is True

    def test_lookup_unknown(self):
        assert TaintRegistry().lookup(7) is None

    def test_bot_never_registered(self):
        with pytest.raises(ValueError):
            TaintRegistry().register(4, BOT)


class TestSplit:
    def test_two_way(self):
        mix = mix_from({40: MC, 269: NT})
        component, residual = split(mix, 40)
        assert component == Base(MC)
        assert residual == Base(NT)

    def test_three_way_residual(self):
        mix = mix_from({2: NR, 40: MC, 269: NT})
        component, residual = split(mix, 269)
        assert component == Base(NT)
        assert residual == mix_from({2: NR, 40: MC})

    def test_absent_key(self):
        with pytest.raises(UnknownComponent):
            split(mix_from({40: MC, 269: NT}), 7)


class TestReevaluate:
    def test_worked_flatten_example(self):
        # 269 x 40 = 10760 re-sized at one token: 1 x 40 = 40.
        size, taint = reevaluate(mix_from({40: MC, 269: NT}), {NT: 1})
        assert size == 40
        # The size-1 workload component normalizes away, leaving the base.
        assert taint == Base(MC)

    def test_large_substitution(self):
        size, taint = reevaluate(mix_from({40: MC, 269: NT}), {NT: 2048})
        assert size == 81920
        assert taint == mix_from({40: MC, 2048: NT})

    def test_request_substitution(self):
        size, _ = reevaluate(mix_from({128: MC, 8: NR}), {NR: 64})
        assert size == 8192

    def test_identity_substitution_preserves_size(self):
        mix = mix_from({40: MC, 269: NT})
        size, taint = reevaluate(mix, {NT: 269})
        assert size == 40 * 269
        assert taint == mix

    def test_rejects_model_config_substitution(self):
        with pytest.raises(ValueError):
            reevaluate(mix_from({40: MC, 269: NT}), {MC: 2})


class TestSerialization:
    @pytest.mark.parametrize(
        "text",
        ["BOT", "MC", "NT", "NR", "MIX{40:MC,269:NT}", "MIX{2:NR,40:MC,269:NT}"],
    )
    def test_roundtrip(self, text):
        assert taint_to_str(taint_from_str(text)) == text

    def test_canonical_order_enforced(self):
        with pytest.raises(ValueError):
            taint_from_str("MIX{269:NT,40:MC}")

    def test_malformed(self):
        for bad in ("", "mc", "MIX{}", "MIX{40:XX}", "MIX{40:MC}"):
            with pytest.raises(ValueError):
                taint_from_str(bad)


def _random_annotated(rng, assignment):
    """A (taint, value) pair drawn from a collision-free value->label table."""
    kind = rng.randrange(3)
    values = sorted(assignment)
    if kind == 0:
        return BOT, None
    if kind == 1:
        v = rng.choice(values)
        return Base(assignment[v]), v
    picked = rng.sample(values, k=rng.randrange(2, 5))
    mix = mix_from({v: assignment[v] for v in picked})
    if not isinstance(mix, Mix):  # pragma: no cover - sample size >= 2
        return Base(assignment[picked[0]]), picked[0]
    product = 1
    for v in picked:
        product *= v
    return mix, product


def _combine_annotated(a, b):
    (t1, v1), (t2, v2) = a, b
    result = combine(t1, t2, v1=v1, v2=v2)
    value = None
    if v1 is not None and v2 is not None:
        value = v1 * v2
    elif v1 is not None or v2 is not None:
        value = v1 if v1 is not None else v2
    return result, value


class TestAlgebraLaws:
    """Randomized law checks; the acceptance suite reruns these at 10k cases."""

    CASES = 2000

    def setup_method(self):
        self.rng = random.Random(0xD001)

    def _assignment(self):
        values = self.rng.sample(range(2, 100000), k=8)
        labels = [MC, NT, NR]
        return {v: self.rng.choice(labels) for v in values}

    def test_commutative(self):
        for _ in range(self.CASES):
            table = self._assignment()
            a = _random_annotated(self.rng, table)
            b = _random_annotated(self.rng, table)
            r1, _ = _combine_annotated(a, b)
            r2, _ = _combine_annotated(b, a)
            assert r1 == r2

    def test_associative_on_lattice(self):
        # H records concrete factorizations, which depend on grouping; the
        # label-set projection is what the lattice guarantees.
        for _ in range(self.CASES):
            table = self._assignment()
            a = _random_annotated(self.rng, table)
            b = _random_annotated(self.rng, table)
            c = _random_annotated(self.rng, table)
            left, _ = _combine_annotated(_combine_annotated(a, b), c)
            right, _ = _combine_annotated(a, _combine_annotated(b, c))
            assert left.labels() == right.labels()
            assert left.is_bot() == right.is_bot()

    def test_idempotent(self):
        for _ in range(self.CASES):
            table = self._assignment()
            t, v = _random_annotated(self.rng, table)
            assert combine(t, t, v1=v, v2=v) == t

    def test_bot_identity(self):
        for _ in range(self.CASES):
            table = self._assignment()
            t, v = _random_annotated(self.rng, table)
            assert combine(BOT, t, v2=v) == t
            assert combine(t, BOT, v1=v) == t

    def test_split_combine_roundtrip(self):
        for _ in range(self.CASES):
            table = self._assignment()
            values = self.rng.sample(sorted(table), k=self.rng.randrange(2, 6))
            taint: object = Base(table[values[0]])
            acc = values[0]
            for v in values[1:]:
                taint, _ = _combine_annotated((taint, acc), (Base(table[v]), v))
                acc *= v
            if not isinstance(taint, Mix):
                continue  # all labels equal: preservation collapsed the chain
            remaining = taint
            for v in sorted(values[:-1]):
                if not isinstance(remaining, Mix):
                    break
                if v not in remaining.component_map():
                    continue
                component, remaining = split(remaining, v)
                assert component == Base(table[v])
            assert remaining.labels() <= taint.labels()
