import pytest

from termforge.baseline import (Cluster, LeaderParams, cluster_set_stats,
                                leader_cluster, load_clusters,
                                validate_partition, write_clusters)
from termforge.corpus import Segment
from termforge.seqmatch import normalized_levenshtein
from termforge.synthgen import SynthConfig, generate, gold_segment_label
from termforge.seqmatch import AlignScoring, discover_segments


def seg(seg_id, symbols):
    return Segment(seg_id, "u0", seg_id * 100, seg_id * 100 + 2 * len(symbols),
                   tuple(symbols))


def test_identical_strings_one_cluster():
    segments = [seg(i, [1, 2, 3, 4]) for i in range(6)]
    clusters = leader_cluster(segments, LeaderParams())
    assert len(clusters) == 1
    assert sorted(clusters[0].members) == list(range(6))
    assert clusters[0].leader == 0


def test_two_groups_at_distance_one():
    segments = [seg(0, [1, 2, 3]), seg(1, [1, 2, 3]),
                seg(2, [4, 5, 6]), seg(3, [4, 5, 6])]
    clusters = leader_cluster(segments, LeaderParams(T=0.4, a=1.8))
    assert len(clusters) == 2
    assert sorted(sorted(c.members) for c in clusters) == [[0, 1], [2, 3]]


def test_short_segments_filtered():
    segments = [seg(0, [1, 2]), seg(1, [1, 2, 3, 4])]
    clusters = leader_cluster(segments, LeaderParams(R=3))
    assert len(clusters) == 1
    assert clusters[0].members == [1]


def test_nearest_assignment_flagged():
    # distance 0.5 from the leader: outside T=0.4, inside a*T=0.72
    segments = [seg(0, [1, 2, 3, 4]), seg(1, [1, 2, 5, 6])]
    clusters = leader_cluster(segments, LeaderParams(T=0.4, a=1.8))
    assert len(clusters) == 1
    assert clusters[0].nearest_assigned == {1}


def test_drop_policy_discards_ambiguous():
    segments = [seg(0, [1, 2, 3, 4]), seg(1, [1, 2, 5, 6])]
    clusters = leader_cluster(segments, LeaderParams(ambiguous_policy="drop"))
    assert len(clusters) == 1
    assert clusters[0].members == [0]


def test_five_word_zero_noise_corpus_matches_gold():
    config = SynthConfig(vocabulary_size=5, word_length_range=(4, 6),
                         occurrences_per_word=8, words_per_utterance=1,
                         min_word_separation=0.75, seed=11)
    corpus, gold = generate(config)
    segments = discover_segments(corpus, AlignScoring())
    clusters = leader_cluster(segments, LeaderParams())
    assert len(clusters) == 5
    by_id = {s.id: s for s in segments}
    for cluster in clusters:
        labels = {gold_segment_label(gold, by_id[m]) for m in cluster.members}
        assert len(labels) == 1 and None not in labels


def test_partition_property(rng):
    segments = [seg(i, list(rng.integers(0, 6, size=int(rng.integers(3, 8)))))
                for i in range(60)]
    params = LeaderParams(T=0.4, a=1.8, R=3)
    clusters = leader_cluster(segments, params)
    validate_partition(clusters)
    clustered = {m for c in clusters for m in c.members}
    assert clustered == {s.id for s in segments if len(s.symbols) >= params.R}


def test_membership_radius_or_flag(rng):
    segments = [seg(i, list(rng.integers(0, 5, size=int(rng.integers(3, 9)))))
                for i in range(80)]
    params = LeaderParams()
    clusters = leader_cluster(segments, params)
    by_id = {s.id: s for s in segments}
    for cluster in clusters:
        leader_syms = by_id[cluster.leader].symbols
        for member in cluster.members:
            dist = normalized_levenshtein(by_id[member].symbols, leader_syms)
            assert dist <= params.T or member in cluster.nearest_assigned


def test_leader_separation(rng):
    segments = [seg(i, list(rng.integers(0, 5, size=int(rng.integers(3, 9)))))
                for i in range(80)]
    params = LeaderParams()
    clusters = leader_cluster(segments, params)
    by_id = {s.id: s for s in segments}
    leaders = [by_id[c.leader].symbols for c in clusters]
    for i in range(len(leaders)):
        for j in range(i + 1, len(leaders)):
            assert normalized_levenshtein(leaders[i], leaders[j]) >= params.a * params.T


def test_stats_empty():
    assert cluster_set_stats([]) == {
        "count": 0, "total_members": 0, "size_histogram": {}, "mean_len": {}}


def test_stats_mean_len():
    segments = [seg(0, [1, 2, 3]), seg(1, [1, 2, 3, 4]), seg(2, [1, 2, 3, 4, 5])]
    clusters = leader_cluster(segments, LeaderParams(T=1.0))
    stats = cluster_set_stats(clusters)
    assert stats["count"] == 1
    assert stats["mean_len"][0] == pytest.approx(4.0)


def test_stats_match_recount(rng):
    segments = [seg(i, list(rng.integers(0, 6, size=int(rng.integers(3, 7)))))
                for i in range(40)]
    clusters = leader_cluster(segments, LeaderParams())
    stats = cluster_set_stats(clusters)
    assert stats["count"] == len(clusters)
    assert stats["total_members"] == sum(len(c.members) for c in clusters)
    histogram = {}
    for c in clusters:
        histogram[len(c.members)] = histogram.get(len(c.members), 0) + 1
    assert stats["size_histogram"] == histogram
    by_id = {s.id: s for s in segments}
    for c in clusters:
        expected = sum(len(by_id[m].symbols) for m in c.members) / len(c.members)
        assert stats["mean_len"][c.id] == pytest.approx(expected)


def test_cluster_json_round_trip(tmp_path):
    segments = [seg(i, [1, 2, 3]) for i in range(3)]
    clusters = leader_cluster(segments, LeaderParams())
    path = tmp_path / "clusters.json"
    write_clusters(path, clusters)
    restored = load_clusters(path)
    assert [(c.id, c.leader, sorted(c.members)) for c in restored] \
        == [(c.id, c.leader, sorted(c.members)) for c in clusters]
