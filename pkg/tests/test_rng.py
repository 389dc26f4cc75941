import pytest
from hypothesis import given
from hypothesis import strategies as st

from ircur.rng import SplitMix64, choose, sample_indices, shuffled


class TestSplitMix64:
    def test_reference_vectors_seed_zero(self):
        # first outputs of the widely published SplitMix64 stream for seed 0
        r = SplitMix64(0)
        assert r.next_u64() == 0xE220A8397B1DCDAF
        assert r.next_u64() == 0x6E789E6AA1B965F4
        assert r.next_u64() == 0x06C45D188009454F

    def test_reference_vectors_seed_1234567(self):
        r = SplitMix64(1234567)
        assert r.next_u64() == 6457827717110365317
        assert r.next_u64() == 3203168211198807973
        assert r.next_u64() == 9817491932198370423

    def test_negative_and_huge_seeds_wrap(self):
        assert SplitMix64(-1).next_u64() == SplitMix64(2**64 - 1).next_u64()
        assert SplitMix64(2**64).next_u64() == SplitMix64(0).next_u64()

    @given(st.integers(0, 2**64 - 1), st.integers(1, 10**9))
    def test_below_in_range(self, seed, n):
        r = SplitMix64(seed)
        for _ in range(5):
            assert 0 <= r.below(n) < n

    def test_below_one_is_zero(self):
        r = SplitMix64(99)
        assert all(r.below(1) == 0 for _ in range(10))

    def test_below_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            SplitMix64(0).below(0)

    def test_below_small_range_covers_all_values(self):
        r = SplitMix64(7)
        seen = {r.below(3) for _ in range(100)}
        assert seen == {0, 1, 2}


class TestShuffled:
    def test_is_permutation_and_deterministic(self):
        items = list(range(20))
        a = shuffled(items, SplitMix64(42))
        b = shuffled(items, SplitMix64(42))
        assert a == b
        assert sorted(a) == items
        assert items == list(range(20))

    def test_different_seeds_differ(self):
        items = list(range(20))
        assert shuffled(items, SplitMix64(1)) != shuffled(items, SplitMix64(2))

    def test_singleton_and_empty(self):
        assert shuffled([], SplitMix64(0)) == []
        assert shuffled(["x"], SplitMix64(0)) == ["x"]

    def test_uniform_over_small_permutations(self):
        # all 6 orders of 3 items should appear over many seeds
        counts = {}
        for seed in range(600):
            key = tuple(shuffled([0, 1, 2], SplitMix64(seed)))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        assert min(counts.values()) > 60


class TestSampling:
    def test_sample_indices_sorted_unique(self):
        r = SplitMix64(5)
        got = sample_indices(10, 4, r)
        assert got == sorted(got)
        assert len(set(got)) == 4
        assert all(0 <= i < 10 for i in got)

    def test_sample_indices_full_takes_everything(self):
        assert sample_indices(5, 5, SplitMix64(0)) == [0, 1, 2, 3, 4]

    def test_sample_indices_bounds_checked(self):
        with pytest.raises(ValueError):
            sample_indices(3, 4, SplitMix64(0))

    def test_choose_subset(self):
        items = list("abcdef")
        got = choose(items, 3, SplitMix64(11))
        assert len(got) == 3
        assert len(set(got)) == 3
        assert set(got) <= set(items)

    def test_choose_deterministic(self):
        items = list("abcdef")
        assert choose(items, 3, SplitMix64(8)) == choose(items, 3, SplitMix64(8))
