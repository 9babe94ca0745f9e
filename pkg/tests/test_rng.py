import numpy as np
import pytest

from stablesheets.rng import label_key, stream


class TestStream:
    def test_reproducible(self):
        assert np.array_equal(stream(5, "a", 3).random(10), stream(5, "a", 3).random(10))

    def test_order_insensitive(self):
        # replicate 7 does not depend on whether replicates 0..6 were drawn first
        for i in range(7):
            stream(5, "a", i).random(100)
        assert np.array_equal(stream(5, "a", 7).random(4), stream(5, "a", 7).random(4))

    @pytest.mark.parametrize("other", [(6, "a", 0), (5, "b", 0), (5, "a", 1)])
    def test_distinct(self, other):
        assert not np.array_equal(stream(5, "a", 0).random(4), stream(*other).random(4))

    def test_label_key_is_crc32(self):
        assert label_key("") == 0
        # standard CRC-32 check value
        assert label_key("123456789") == 0xCBF43926

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            stream(-1)
