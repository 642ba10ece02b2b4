import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from shotorder.dataforge.loader import SceneBank, build_batch
from shotorder.dataforge.meta import (
    LabelProvision,
    MetaRecord,
    genre_shot_histogram,
    genre_vector,
    read_meta,
    write_meta,
)
from shotorder.dataforge.records import (
    SceneRecord,
    Shot,
    clean_shots,
    derive_seed,
    format_shot_boundaries,
    ingest_shot_boundaries,
    parse_shot_boundaries,
)
from shotorder.dataforge.sequences import (
    SequenceSample,
    make_sequences,
    read_manifest,
    restored_order,
    shuffle_augment,
    split_scenes,
    write_manifest,
)
from shotorder.dataforge.synth import SynthParams, grammar_class_distribution, synth_scene
from shotorder.dataforge.tsn import segment_bounds, tsn_sample
from shotorder.errors import ContractError, DataFormatError, UnusableScene
from shotorder.nn import ModelConfig
from shotorder.permlab import Permutation, rank


def scene_of(*ranges, sid="v"):
    return SceneRecord(sid, tuple(Shot(a, b) for a, b in ranges))


# -- boundary files -------------------------------------------------------

def test_parse_boundaries():
    sc = parse_shot_boundaries("0 48\n48 120\n120 300\n", "v1")
    assert [(s.frame_start, s.frame_end) for s in sc.shots] == [(0, 48), (48, 120), (120, 300)]
    assert sc.num_frames == 300 and sc.source == "ingested"


@pytest.mark.parametrize("text, line", [("0 48\n40 120\n", 2), ("0 10\nabc 20\n", 2), ("5 5\n", 1), ("0 1 2\n", 1)])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(DataFormatError) as info:
        parse_shot_boundaries(text, "v", path="b.txt")
    assert info.value.line == line
    assert f"b.txt:{line}:" in str(info.value)


def test_empty_boundary_file():
    with pytest.raises(DataFormatError):
        parse_shot_boundaries("\n\n", "v")


def test_boundary_round_trip(tmp_path):
    text = "0 48\n48 120\n130 300\n"
    p = tmp_path / "abc.txt"
    p.write_text(text)
    sc = ingest_shot_boundaries(p)
    assert sc.scene_id == "abc"
    assert format_shot_boundaries(sc) == text


def test_scene_record_rejects_overlap():
    with pytest.raises(ContractError):
        scene_of((0, 10), (5, 20))
    with pytest.raises(ContractError):
        Shot(4, 4)


def test_derive_seed_stable():
    assert derive_seed("a", 1) == derive_seed("a", 1)
    assert derive_seed("a", 1) != derive_seed("a", 2)
    assert derive_seed(1, "a") != derive_seed("1a")
    assert 0 <= derive_seed("x") < 2 ** 63


# -- cleaning -------------------------------------------------------------

def test_short_shot_dropped():
    sc = scene_of((0, 20), (20, 23), (23, 40), (40, 60))
    out = clean_shots(sc)
    assert [s.frame_start for s in out.shots] == [0, 23, 40]


def test_clean_keeps_valid_scene():
    sc = scene_of((0, 10), (10, 20), (20, 30))
    assert clean_shots(sc) is sc


def test_clean_unusable():
    with pytest.raises(UnusableScene):
        clean_shots(scene_of((0, 10), (10, 13), (13, 30)))


def test_black_shots_dropped():
    frames = np.full((40, 4, 4, 1), 100, dtype=np.uint8)
    frames[10:17] = 0  # 7 of 10 frames black in the second shot
    sc = scene_of((0, 10), (10, 20), (20, 30), (30, 40))
    out = clean_shots(sc, frames=frames)
    assert [s.frame_start for s in out.shots] == [0, 20, 30]
    # half black is still allowed
    frames[10:17] = 100
    frames[10:15] = 0
    assert len(clean_shots(sc, frames=frames).shots) == 4


# -- sequences ------------------------------------------------------------

def test_sample_label_matches_order():
    shots = (Shot(0, 10), Shot(10, 20), Shot(20, 30))
    s = SequenceSample("v", shots, (0, 1, 2), 0)
    assert s.presented_shots == list(shots)
    s = SequenceSample("v", shots, (1, 2, 0), 3)
    assert s.presented_shots == [shots[1], shots[2], shots[0]]
    with pytest.raises(ContractError):
        SequenceSample("v", shots, (1, 2, 0), 2)
    with pytest.raises(ContractError):
        SequenceSample("v", shots, (0, 1, 2), 0, split="dev")


def test_make_sequences_windows_and_determinism():
    sc = scene_of(*[(10 * i, 10 * i + 10) for i in range(6)])
    a = make_sequences(sc, 3, seed=7)
    assert len(a) == 4
    assert [s.shots[0].frame_start for s in a] == [0, 10, 20, 30]
    assert a == make_sequences(sc, 3, seed=7)
    assert make_sequences(sc, 3, count=9, seed=7)[:4] == a
    with pytest.raises(ContractError):
        make_sequences(scene_of((0, 5), (5, 10)), 3)


def test_restored_order_is_temporal():
    for i in range(30):
        sc = scene_of(*[(10 * j, 10 * j + 10) for j in range(3 + i % 3)], sid=f"s{i}")
        for s in make_sequences(sc, 3, seed=i):
            assert restored_order(s) == list(s.shots)


def test_split_ratios_and_determinism():
    ids = [f"s{i}" for i in range(10)]
    a = split_scenes(ids, seed=3)
    counts = {name: sum(v == name for v in a.values()) for name in ("train", "val", "test")}
    assert counts == {"train": 7, "val": 1, "test": 2}
    assert a == split_scenes(list(reversed(ids)), seed=3)
    assert set(a) == set(ids)
    with pytest.raises(ContractError):
        split_scenes(ids, (0.5, 0.5, 0.5))
    with pytest.raises(ContractError):
        split_scenes(["a", "b"])


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 300), st.integers(0, 1000))
def test_split_counts_property(n, seed):
    a = split_scenes([f"x{i}" for i in range(n)], seed=seed)
    counts = [sum(v == name for v in a.values()) for name in ("train", "val", "test")]
    assert sum(counts) == n
    assert min(counts) >= 1
    if n >= 10:
        for c, r in zip(counts, (0.7, 0.1, 0.2)):
            assert abs(c - r * n) < 1


def test_three_scenes_fill_three_splits():
    assert sorted(split_scenes(["a", "b", "c"]).values()) == ["test", "train", "val"]


def test_shuffle_augment():
    sc = scene_of((0, 10), (10, 20), (20, 30))
    s = make_sequences(sc)[0]
    rng = np.random.default_rng(0)
    labels = [shuffle_augment(s, rng).label for _ in range(6000)]
    counts = np.bincount(labels, minlength=6)
    assert stats.chisquare(counts).pvalue > 0.01
    from dataclasses import replace
    with pytest.raises(ContractError):
        shuffle_augment(replace(s, split="test"), rng)


def test_manifest_round_trip_is_byte_identical(tmp_path, tiny_ramp):
    _, _, samples = tiny_ramp
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_manifest(samples, a, {"seed": 0, "k": 3})
    header, back = read_manifest(a)
    assert back == samples and header["k"] == 3
    write_manifest(back, b, {k: v for k, v in header.items() if k not in ("kind", "schema_version")})
    assert a.read_bytes() == b.read_bytes()


def test_manifest_errors(tmp_path, tiny_ramp):
    good = tiny_ramp[2][0].to_dict()
    p = tmp_path / "m.jsonl"
    p.write_text('{"kind":"header"}\n{not json\n')
    with pytest.raises(DataFormatError) as info:
        read_manifest(p)
    assert info.value.line == 2
    p.write_text(json.dumps({**good, "schema_version": 99}) + "\n")
    with pytest.raises(DataFormatError):
        read_manifest(p)
    p.write_text(json.dumps({**good, "k": 4}) + "\n")
    with pytest.raises(DataFormatError):
        read_manifest(p)
    p.write_text(json.dumps({**good, "label": (good["label"] + 1) % 6}) + "\n")
    with pytest.raises(DataFormatError):
        read_manifest(p)


# -- segment sampling -----------------------------------------------------

def test_tsn_test_mode():
    assert tsn_sample(80, 8).tolist() == [5, 15, 25, 35, 45, 55, 65, 75]
    assert tsn_sample(8, 8).tolist() == list(range(8))
    assert tsn_sample(3, 8).tolist() == [0, 1, 2, 2, 2, 2, 2, 2]


def test_tsn_train_mode_stays_in_segment():
    rng = np.random.default_rng(0)
    bounds = segment_bounds(80, 8)
    seen = set()
    for _ in range(10_000):
        offs = tsn_sample(80, 8, "train", rng)
        for o, (lo, hi) in zip(offs, bounds):
            assert lo <= o < hi
        seen.add(int(offs[0]))
    assert seen == set(range(10))


def test_tsn_contract():
    with pytest.raises(ContractError):
        tsn_sample(0, 8)
    with pytest.raises(ContractError):
        tsn_sample(10, 8, "train")
    with pytest.raises(ContractError):
        tsn_sample(10, 8, "val")


@given(st.integers(1, 500), st.integers(1, 16))
def test_tsn_property(length, segments):
    offs = tsn_sample(length, segments)
    assert len(offs) == segments
    assert np.all(offs >= 0) and np.all(offs < length)
    assert np.all(np.diff(offs) >= 0)


# -- metadata and labels --------------------------------------------------

def test_meta_round_trip(tmp_path):
    recs = [MetaRecord("a", genres=["Drama", "Crime"], release_year=1999), MetaRecord("b", title="x")]
    p = tmp_path / "meta.jsonl"
    write_meta(recs, p)
    back = read_meta(p)
    assert back == {"a": recs[0], "b": recs[1]}


def test_meta_bad_line(tmp_path):
    p = tmp_path / "meta.jsonl"
    p.write_text('{"scene_id": "a"}\n{"scene_id": ""}\n')
    with pytest.raises(DataFormatError) as info:
        read_meta(p)
    assert info.value.line == 2


def test_genre_vector():
    np.testing.assert_allclose(genre_vector(["Drama", "Crime"], ("Drama", "Crime", "Action")), [0.5, 0.5, 0])
    np.testing.assert_allclose(genre_vector(["Drama", "Crime"], ("Drama", "Crime"), primary_only=True), [1, 0])
    np.testing.assert_allclose(genre_vector([], ("a", "b")), [0.5, 0.5])
    with pytest.raises(DataFormatError):
        genre_vector(["Nope"], ("a",))


def one_hot_labels(classes, cards=(5, 5, 6, 7)):
    return [np.eye(c)[v] for v, c in zip(classes, cards)]


def test_label_csv_round_trip(tmp_path):
    prov = LabelProvision(provider="clip")
    prov.set("a", 0, one_hot_labels([0, 1, 2, 3]))
    prov.set("a", 1, [np.full(c, 1 / c) for c in (5, 5, 6, 7)])
    text = prov.to_csv()
    assert text.startswith("# provider: clip\n# cardinalities: shot_size=5,")
    back = LabelProvision.from_csv(text)
    assert back.provider == "clip" and back.cardinalities == (5, 5, 6, 7)
    for idx in (0, 1):
        for x, y in zip(back.get("a", idx), prov.get("a", idx)):
            np.testing.assert_array_equal(x, y)
    p = tmp_path / "l.csv"
    back.write(p)
    assert p.read_text() == text


def test_label_errors():
    prov = LabelProvision()
    with pytest.raises(ContractError):
        prov.set("a", 0, one_hot_labels([0, 0, 0, 0], (4, 5, 6, 7)))
    with pytest.raises(DataFormatError):
        prov.get("a", 0)
    assert LabelProvision(provider="uniform").get("a", 0)[3].tolist() == [1 / 7] * 7
    text = prov.to_csv() + "a,0,shot_size,0.5,0.5,0,0,x\n"
    # first row lands on line 4; all four categories are missing from the others
    with pytest.raises(DataFormatError):
        LabelProvision.from_csv(text)
    with pytest.raises(DataFormatError) as info:
        LabelProvision.from_csv(prov.to_csv() + "a,zero,shot_size\n", path="l.csv")
    assert info.value.line == 4
    with pytest.raises(DataFormatError):
        LabelProvision.from_csv("scene_id,shot_index\n")


def test_histogram_rows_sum_to_one():
    meta = {"a": MetaRecord("a", genres=["Drama"]), "b": MetaRecord("b", genres=["Drama", "Comedy"])}
    prov = LabelProvision()
    prov.set("a", 0, one_hot_labels([0, 0, 0, 0]))
    prov.set("a", 1, one_hot_labels([1, 0, 0, 0]))
    prov.set("b", 0, one_hot_labels([1, 2, 3, 4]))
    rows = genre_shot_histogram(meta, prov)
    sums = {}
    for g, cat, _, f in rows:
        sums[g, cat] = sums.get((g, cat), 0.0) + f
    assert all(abs(v - 1) < 1e-12 for v in sums.values())
    freq = {(g, cat, c): f for g, cat, c, f in rows}
    # Comedy sees only scene b: its single shot-size class gets all the mass
    assert freq["Comedy", "shot_size", 1] == 1.0
    assert freq["Drama", "shot_size", 1] == pytest.approx(2 / 3)


def test_histogram_without_overlap():
    prov = LabelProvision()
    prov.set("a", 0, one_hot_labels([0, 0, 0, 0]))
    with pytest.raises(DataFormatError):
        genre_shot_histogram({"b": MetaRecord("b")}, prov)


# -- synthetic generator --------------------------------------------------

def frame_means(sc):
    return sc.frames.reshape(len(sc.frames), -1).mean(axis=1)


def check_ramp(sc):
    assert np.all(np.diff(frame_means(sc)) > 0)


def check_grammar(sc, params):
    gi = params.genres.index(sc.genre)
    for c in range(4):
        col = sc.shot_classes[:, c]
        steps = np.diff(col)
        assert np.all(steps == steps[0]) and abs(steps[0]) == 1
        assert (steps[0] > 0) == (c == 0 or (gi + c) % 2 == 0)
    for t, labels in enumerate(sc.shot_labels):
        assert [int(v.argmax()) for v in labels] == sc.shot_classes[t].tolist()


@pytest.mark.parametrize("seed", range(20))
def test_ramp_means_strictly_increase(seed):
    check_ramp(synth_scene("ramp", seed=seed))


@pytest.mark.parametrize("seed", range(20))
def test_grammar_structure(seed):
    check_grammar(synth_scene("grammar", seed=seed), SynthParams())


@pytest.mark.parametrize("seed", range(10))
def test_mixed_passes_both_checks(seed):
    params = SynthParams(pixel_noise=20)
    sc = synth_scene("mixed", params, seed=seed)
    check_ramp(sc)
    check_grammar(sc, params)


def test_synth_is_deterministic():
    for fam in ("ramp", "grammar", "mixed"):
        a, b = synth_scene(fam, seed=11), synth_scene(fam, seed=11)
        assert np.array_equal(a.frames, b.frames)
        assert np.array_equal(a.shot_classes, b.shot_classes)
        assert a.record == b.record and a.meta == b.meta
        assert not np.array_equal(a.frames, synth_scene(fam, seed=12).frames) or a.record != synth_scene(fam, seed=12).record


def test_synth_params_validation():
    with pytest.raises(ContractError):
        SynthParams(max_shots=6)
    with pytest.raises(ContractError):
        SynthParams(pixel_noise=100)
    with pytest.raises(ContractError):
        synth_scene("other")


def test_grammar_distribution_is_a_distribution():
    params = SynthParams(label_noise=0.2)
    for gi in range(params.num_genres):
        for c in range(4):
            d = grammar_class_distribution(params, gi, c)
            assert d.shape == (params.cardinalities[c],)
            assert abs(d.sum() - 1) < 1e-12 and d.min() > 0


def plugin_mi(x, y, nx=6, ny=6):
    joint = np.zeros((nx, ny))
    np.add.at(joint, (x, y), 1)
    joint /= joint.sum()
    px, py = joint.sum(1, keepdims=True), joint.sum(0, keepdims=True)
    nz = joint > 0
    return float((joint[nz] * np.log(joint[nz] / (px @ py)[nz])).sum())


def test_grammar_order_lives_in_labels_not_pixels():
    scenes = [synth_scene("grammar", seed=i, scene_id=f"g{i}") for i in range(1000)]
    truth, from_pixels, from_labels = [], [], []
    for sc in scenes:
        s = make_sequences(sc.record, 3, 1, seed=0)[0]
        truth.append(s.label)
        pos = [sc.record.shots.index(shot) for shot in s.presented_shots]
        means = [sc.frames[sh.frame_start:sh.frame_end].mean() for sh in s.presented_shots]
        sizes = [sc.shot_classes[i, 0] for i in pos]
        # the ordering that sorting each cue would suggest
        from_pixels.append(rank(Permutation(tuple(np.argsort(np.argsort(means))))).class_index)
        from_labels.append(rank(Permutation(tuple(np.argsort(np.argsort(sizes))))).class_index)
    truth = np.array(truth)
    assert plugin_mi(np.array(from_pixels), truth) < 0.05
    assert plugin_mi(np.array(from_labels), truth) == pytest.approx(plugin_mi(truth, truth))
    assert np.array_equal(from_labels, truth)


# -- batches --------------------------------------------------------------

def test_build_batch_independent_of_assembly(tiny_grammar):
    _, bank, samples = tiny_grammar
    cfg = ModelConfig(segments_per_shot=2)
    train = samples[:8]
    full = build_batch(train, bank, cfg, "train", seed=3, epoch=1, augment=True)
    idx = list(range(8))
    order = [5, 2, 7, 0, 1, 6, 3, 4]
    part = build_batch([train[i] for i in order], bank, cfg, "train", seed=3, epoch=1,
                       indices=[idx[i] for i in order], augment=True)
    for j, i in enumerate(order):
        assert np.array_equal(part[0][j], full[0][i])
        assert part[2][j] == full[2][i]


def test_batch_cinematology_follows_presentation(tiny_grammar):
    scenes, bank, samples = tiny_grammar
    cfg = ModelConfig(segments_per_shot=2)
    frames, cine, labels, used = build_batch(samples[:4], bank, cfg)
    assert frames.shape == (4, 3, 2, 32, 32, 1)
    by_id = {sc.record.scene_id: sc for sc in scenes}
    for b, s in enumerate(used):
        sc = by_id[s.scene_id]
        for slot, shot in enumerate(s.presented_shots):
            t = sc.record.shots.index(shot)
            assert int(cine[0][0][b, slot].argmax()) == sc.shot_classes[t, 0]


def test_bank_from_manifest_uses_shot_index(tmp_path):
    sc = synth_scene("grammar", seed=1, scene_id="g")
    np.save(tmp_path / "g.npy", sc.frames)
    s = make_sequences(sc.record, 3, 1)[0]
    prov = LabelProvision()
    for t, lab in enumerate(sc.shot_labels):
        prov.set("g", t, lab)
    index = {"g": {str(shot.frame_start): t for t, shot in enumerate(sc.record.shots)}}
    bank = SceneBank.from_manifest([s], tmp_path, prov, {"g": sc.meta}, tmp_path, shot_index=index)
    first = sc.record.shots.index(s.shots[0])
    assert bank.scenes["g"].labels[0] is prov.get("g", first)
    with pytest.raises(DataFormatError):
        SceneBank.from_manifest([s], tmp_path, prov, shot_index={"g": {}}, frames_dir=tmp_path)
    with pytest.raises(DataFormatError):
        SceneBank.from_manifest([s], tmp_path / "nowhere")
