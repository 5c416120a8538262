import numpy as np

from src.core.rng import (
    STREAM_DATA,
    STREAM_INIT,
    SymmetricStream,
    make_generator,
    normalize_seed,
    spawn_seeds,
)


def test_same_seed_and_path_gives_same_stream():
    a = make_generator(11, STREAM_INIT, 3).standard_normal(16)
    b = make_generator(11, STREAM_INIT, 3).standard_normal(16)
    np.testing.assert_array_equal(a, b)


def test_paths_are_independent_streams():
    a = make_generator(11, STREAM_INIT).random(8)
    b = make_generator(11, STREAM_DATA).random(8)
    assert not np.array_equal(a, b)


def test_negative_and_large_seeds_are_accepted():
    assert normalize_seed(-1) == (1 << 64) - 1
    make_generator(-5).random()
    make_generator(1 << 70).random()


def test_flipped_stream_negates_every_draw():
    plain = SymmetricStream.from_seed(4, STREAM_INIT)
    flipped = SymmetricStream.from_seed(4, STREAM_INIT, flip=True)
    np.testing.assert_array_equal(plain.normal(0.5, (3, 4)), -flipped.normal(0.5, (3, 4)))
    np.testing.assert_array_equal(plain.uniform(2.0, (5,)), -flipped.uniform(2.0, (5,)))
    np.testing.assert_array_equal(plain.rademacher(1.5, (7,)), -flipped.rademacher(1.5, (7,)))


def test_rademacher_takes_two_values():
    values = SymmetricStream.from_seed(0).rademacher(0.25, (1000,))
    assert set(np.unique(values)) == {-0.25, 0.25}


def test_spawn_seeds_is_deterministic_and_distinct():
    seeds = spawn_seeds(7, 50, 8)
    assert seeds == spawn_seeds(7, 50, 8)
    assert len(set(seeds)) == 50
    assert spawn_seeds(8, 50, 8) != seeds
