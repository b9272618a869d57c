import numpy as np

from pocmab.streams import RandomStream


def test_same_path_same_numbers():
    a = RandomStream(5).substream(2).substream("contexts").standard_normal(4)
    b = RandomStream(5).substream(2).substream("contexts").standard_normal(4)
    np.testing.assert_array_equal(a, b)


def test_substreams_do_not_consume_parent():
    parent = RandomStream(5)
    parent.substream("x").standard_normal(100)
    np.testing.assert_array_equal(parent.standard_normal(3), RandomStream(5).standard_normal(3))


def test_labels_give_distinct_streams():
    root = RandomStream(9)
    draws = [root.substream(lbl).standard_normal(8) for lbl in (0, 1, "a", "b")]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])


def test_labeled_streams_uncorrelated():
    root = RandomStream(3)
    a = root.substream("policy:thompson").standard_normal(200_000)
    b = root.substream("policy:random").standard_normal(200_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(200_000)
